"""Event-driven realization of the East dynamics from per-site clocks and bits.

Each window site rings at rate 1; every ring draws an independent Bernoulli(p)
bit.  The spin is replaced by the bit iff some neighbor x - e_i carries spin 0
at that instant (frozen exterior spins where neighbors leave the window).  The
full ring history (legal and illegal) is kept in an EventLog.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

import numpy as np

from .lattice import (
    Configuration,
    LatticeError,
    ModelParams,
    Region,
    Site,
    Window,
    site_sub_e,
)
from .streams import site_generator

MAX_HORIZON = 1e9


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class RingRecord:
    site: Site
    time: float
    bit: int
    legal: bool
    spin_after: int


def _poisson_times(rng: np.random.Generator, horizon: float) -> np.ndarray:
    """Ring times of a rate-1 Poisson process on (0, horizon]."""
    if horizon <= 0:
        return np.empty(0)
    chunk = max(8, int(horizon + 4.0 * math.sqrt(horizon) + 8))
    gaps = rng.standard_exponential(chunk)
    total = gaps.sum()
    parts = [gaps]
    while total <= horizon:
        more = rng.standard_exponential(chunk)
        parts.append(more)
        total += more.sum()
    times = np.cumsum(np.concatenate(parts) if len(parts) > 1 else parts[0])
    return times[times <= horizon]


class EventLog:
    """Immutable record of one realized trajectory up to a horizon.

    Ring data is held in parallel numpy arrays sorted by time; ``records``
    materializes them as RingRecord objects.
    """

    def __init__(
        self,
        params: ModelParams,
        initial: Configuration,
        horizon: float,
        seed: int,
        site_idx: np.ndarray,
        times: np.ndarray,
        bits: np.ndarray,
        legal: np.ndarray,
        spin_after: np.ndarray,
    ):
        self.params = params
        self.window = initial.window
        self.initial = initial
        self.horizon = float(horizon)
        self.seed = int(seed)
        self._site_idx = site_idx
        self._times = times
        self._bits = bits
        self._legal = legal
        self._spin_after = spin_after

    @property
    def records(self) -> list[RingRecord]:
        sites = self.window.sites
        return [
            RingRecord(sites[s], float(t), int(b), bool(l), int(a))
            for s, t, b, l, a in zip(
                self._site_idx, self._times, self._bits, self._legal, self._spin_after
            )
        ]

    def __len__(self) -> int:
        return self._times.size

    def n_legal(self) -> int:
        return int(self._legal.sum())

    def _events_at(self, x: Site) -> np.ndarray:
        return np.nonzero(self._site_idx == self.window.index(x))[0]

    def spin_at_time(self, x: Site, s: float) -> int:
        """Spin of x at time s: initial spin modified by legal rings up to s."""
        if x not in self.window:
            raise SimulationError(f"site {x} outside window")
        if not (0 <= s <= self.horizon):
            raise SimulationError(f"time {s} outside [0, horizon]")
        idx = self._events_at(x)
        idx = idx[self._legal[idx] & (self._times[idx] <= s)]
        if idx.size == 0:
            return self.initial.spin_at(x)
        return int(self._spin_after[idx[-1]])

    def occupation_time(self, x: Site, t: float) -> float:
        """Lebesgue time in [0, t] during which x has spin 0."""
        if t > self.horizon:
            raise SimulationError(f"time {t} beyond horizon")
        if x not in self.window:
            raise SimulationError(f"site {x} outside window")
        idx = self._events_at(x)
        idx = idx[self._legal[idx] & (self._times[idx] <= t)]
        acc = 0.0
        last = 0.0
        cur = self.initial.spin_at(x)
        for k in idx:
            tm = float(self._times[k])
            if cur == 0:
                acc += tm - last
            cur = int(self._spin_after[k])
            last = tm
        if cur == 0:
            acc += t - last
        return acc

    def first_update_time(self, x: Site) -> Optional[float]:
        """Time of the first legal ring at x, or None."""
        if x not in self.window:
            raise SimulationError(f"site {x} outside window")
        idx = self._events_at(x)
        idx = idx[self._legal[idx]]
        if idx.size == 0:
            return None
        return float(self._times[idx[0]])

    def updated_set(self, region: Region, deadline: float) -> set[Site]:
        """Region sites with at least one legal ring at time <= deadline."""
        if deadline > self.horizon:
            raise SimulationError("deadline beyond horizon")
        mask = self._legal & (self._times <= deadline)
        hit = set(np.unique(self._site_idx[mask]).tolist())
        sites = self.window.sites
        return {x for x in region.sites if x in self.window and self.window.index(x) in hit}

    def final_spins(self) -> tuple[int, ...]:
        spins = list(self.initial.spins)
        for k in np.nonzero(self._legal)[0]:
            spins[self._site_idx[k]] = int(self._spin_after[k])
        return tuple(spins)

    # --- serialization ----------------------------------------------------

    def to_csv(self) -> str:
        manifest = {
            "d": self.params.d,
            "p": self.params.p,
            "seed": self.seed,
            "horizon": self.horizon,
            "window_lower": list(self.window.lower),
            "window_upper": list(self.window.upper),
            "exterior": self.initial.exterior,
            "initial_spins": "".join(str(s) for s in self.initial.spins),
            "exterior_overrides": [
                [list(x), s] for x, s in sorted(self.initial.exterior_overrides.items())
            ],
        }
        lines = ["# " + json.dumps(manifest, sort_keys=True)]
        lines.append("site_coords,time,bit,legal,spin_after")
        sites = self.window.sites
        for s, t, b, l, a in zip(
            self._site_idx, self._times, self._bits, self._legal, self._spin_after
        ):
            coords = ";".join(str(c) for c in sites[s])
            lines.append(f"{coords},{t:.17g},{int(b)},{int(l)},{int(a)}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "EventLog":
        lines = text.splitlines()
        manifest = json.loads(lines[0].lstrip("# "))
        params = ModelParams(manifest["d"], manifest["p"])
        window = Window(tuple(manifest["window_lower"]), tuple(manifest["window_upper"]))
        overrides = {tuple(x): s for x, s in manifest["exterior_overrides"]}
        initial = Configuration(
            window,
            tuple(int(c) for c in manifest["initial_spins"]),
            manifest["exterior"],
            overrides,
        )
        site_idx, times, bits, legal, after = [], [], [], [], []
        for ln in lines[2:]:
            if not ln.strip():
                continue
            coords, t, b, l, a = ln.split(",")
            x = tuple(int(c) for c in coords.split(";"))
            site_idx.append(window.index(x))
            times.append(float(t))
            bits.append(int(b))
            legal.append(bool(int(l)))
            after.append(int(a))
        return EventLog(
            params,
            initial,
            manifest["horizon"],
            manifest["seed"],
            np.asarray(site_idx, dtype=np.int64),
            np.asarray(times, dtype=np.float64),
            np.asarray(bits, dtype=np.int8),
            np.asarray(legal, dtype=bool),
            np.asarray(after, dtype=np.int8),
        )


def simulate(
    params: ModelParams,
    initial: Configuration,
    horizon: float,
    seed: int,
    stream_salts: Optional[Mapping[Site, int]] = None,
) -> EventLog:
    """Run the graphical construction; deterministic in (params, initial, horizon, seed).

    ``stream_salts`` re-keys the clock/bit streams of selected sites (used by
    the dependence-cone diagnostics); unlisted sites are unaffected.
    """
    if horizon < 0:
        raise SimulationError("horizon must be >= 0")
    if horizon > MAX_HORIZON:
        raise SimulationError(f"horizon capped at {MAX_HORIZON:g}")
    window = initial.window
    if window.d != params.d:
        raise SimulationError("window dimension does not match params.d")
    sites = window.sites
    n = len(sites)
    index = {x: i for i, x in enumerate(sites)}

    # neighbor slot table; slot n holds the frozen exterior spin, slots beyond
    # it hold exterior override spins
    extra_spins: list[int] = []
    override_slot: dict[Site, int] = {}
    nbrs: list[tuple[int, ...]] = []
    for x in sites:
        row = []
        for i in range(params.d):
            y = site_sub_e(x, i)
            j = index.get(y)
            if j is None:
                if y in initial.exterior_overrides:
                    if y not in override_slot:
                        override_slot[y] = n + 1 + len(extra_spins)
                        extra_spins.append(initial.exterior_overrides[y])
                    j = override_slot[y]
                else:
                    j = n
            row.append(j)
        nbrs.append(tuple(row))

    times_parts, site_parts, bit_parts = [], [], []
    p = params.p
    for i, x in enumerate(sites):
        salt = stream_salts.get(x, 0) if stream_salts else 0
        rng = site_generator(seed, x, salt)
        t_i = _poisson_times(rng, horizon)
        b_i = (rng.random(t_i.size) < p).astype(np.int8)
        times_parts.append(t_i)
        site_parts.append(np.full(t_i.size, i, dtype=np.int64))
        bit_parts.append(b_i)

    times = np.concatenate(times_parts) if times_parts else np.empty(0)
    order = np.argsort(times, kind="stable")  # ties (never seen) break by site order
    times = times[order]
    ev_site = np.concatenate(site_parts)[order]
    ev_bit = np.concatenate(bit_parts)[order]

    m = times.size
    spins = list(initial.spins) + [initial.exterior] + extra_spins
    legal_l: list[bool] = []
    after_l: list[int] = []
    site_l = ev_site.tolist()
    bit_l = ev_bit.tolist()
    for k in range(m):
        si = site_l[k]
        ok = False
        for j in nbrs[si]:
            if spins[j] == 0:
                ok = True
                break
        if ok:
            spins[si] = bit_l[k]
        legal_l.append(ok)
        after_l.append(spins[si])

    return EventLog(
        params,
        initial,
        horizon,
        seed,
        ev_site,
        times,
        ev_bit,
        np.asarray(legal_l, dtype=bool),
        np.asarray(after_l, dtype=np.int8),
    )


# thin functional aliases matching the operation names
def spin_at_time(log: EventLog, x: Site, s: float) -> int:
    return log.spin_at_time(x, s)


def occupation_time(log: EventLog, x: Site, t: float) -> float:
    return log.occupation_time(x, t)


def first_update_time(log: EventLog, x: Site) -> Optional[float]:
    return log.first_update_time(x)


def updated_set(log: EventLog, region: Region, deadline: float) -> set[Site]:
    return log.updated_set(region, deadline)
