"""Counter-based per-site random streams.

Each lattice site owns a Philox stream whose 128-bit key is derived from the
global seed, the site coordinates and an optional salt.  Site randomness is
therefore independent of event interleaving and of the enclosing window, which
is what makes replica reproducibility and the dependence-cone checks possible.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    """splitmix64 finalizer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix64(*parts) -> int:
    """Deterministically hash a sequence of ints (or short str tags) to 64 bits."""
    z = 0x243F6A8885A308D3
    for v in parts:
        if isinstance(v, str):
            v = int.from_bytes(v.encode(), "little")
        z = _mix(((z ^ (int(v) & _MASK)) + _GOLDEN) & _MASK)
    return z


def philox_key(seed: int, coords: tuple[int, ...], salt: int = 0) -> int:
    k0 = mix64(seed, salt, 1, *coords)
    k1 = mix64(seed, salt, 2, *coords)
    return k0 | (k1 << 64)


def site_generator(seed: int, coords: tuple[int, ...], salt: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=philox_key(seed, coords, salt)))


def derive_seed(seed: int, *parts: int) -> int:
    """A 64-bit child seed for a named sub-stream (replica index etc.)."""
    return mix64(seed, *parts)


def derived_generator(seed: int, *parts: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *parts)))
