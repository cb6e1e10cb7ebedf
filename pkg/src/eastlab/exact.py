"""Exact finite-state treatment of the East dynamics on small regions.

States are bitmasks over the region's sites in lexicographic coordinate order
(bit i = spin of the i-th site).  Rates follow detailed balance with respect to
the product Bernoulli(p) measure: a constrained site flips to 1 at rate p and
to 0 at rate 1-p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import poisson

from .lattice import Region, Site, site_sub_e

MAX_REGION_SITES = 20
DENSE_EIG_SITES = 12  # 4096x4096 dense solves; sparse shift-invert beyond


class ExactEngineError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumResult:
    gap: float
    eigenvalue_count_at_zero: int


class Generator:
    """Exact rate matrix of the East dynamics on a region with frozen boundary."""

    def __init__(self, region: Region, boundary: Mapping[Site, int], p: float):
        if not (0.0 < p < 1.0):
            raise ExactEngineError(f"p must lie in (0,1), got {p}")
        sites = tuple(sorted(region.sites))
        if not sites:
            raise ExactEngineError("region is empty")
        if len(sites) > MAX_REGION_SITES:
            raise ExactEngineError(f"region capped at {MAX_REGION_SITES} sites")
        self.region = region
        self.sites = sites
        self.boundary = dict(boundary)
        self.p = p
        self.d = len(sites[0])
        self.n = len(sites)
        self.dim = 1 << self.n
        self.rates = self._build()

    def _build(self) -> sp.csr_matrix:
        index = {x: i for i, x in enumerate(self.sites)}
        states = np.arange(self.dim, dtype=np.int64)
        rows, cols, vals = [], [], []
        diag = np.zeros(self.dim)
        for i, x in enumerate(self.sites):
            cons = np.zeros(self.dim, dtype=bool)
            for j in range(self.d):
                y = site_sub_e(x, j)
                if y in index:
                    cons |= ((states >> index[y]) & 1) == 0
                elif y in self.boundary:
                    if self.boundary[y] == 0:
                        cons[:] = True
                else:
                    raise ExactEngineError(f"missing boundary assignment for {y}")
            bit = (states >> i) & 1
            rate = np.where(bit == 0, self.p, 1.0 - self.p)
            rows.append(states[cons])
            cols.append(states[cons] ^ (1 << i))
            vals.append(rate[cons])
            diag[cons] -= rate[cons]
        rows.append(states)
        cols.append(states)
        vals.append(diag)
        Q = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim),
        )
        return Q.tocsr()

    def mu(self) -> np.ndarray:
        """Product Bernoulli(p) weights indexed by bitmask state."""
        pop = np.zeros(self.dim, dtype=np.int64)
        for s in range(1, self.dim):
            pop[s] = pop[s >> 1] + (s & 1)
        return self.p**pop * (1.0 - self.p) ** (self.n - pop)

    def to_triplet_text(self) -> str:
        lines = [
            f"# region {self.region.descriptor} sites {list(self.sites)}",
            f"# boundary {sorted(self.boundary.items())}",
            f"# p {self.p!r}",
        ]
        coo = self.rates.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            lines.append(f"{r},{c},{v:.17g}")
        return "\n".join(lines) + "\n"


def build_generator(region: Region, boundary: Mapping[Site, int], p: float) -> Generator:
    return Generator(region, boundary, p)


def evolve_expectation(
    gen: Generator,
    initial: Union[int, np.ndarray],
    f: Union[Callable[[int], float], np.ndarray],
    t: float,
    tol: float = 1e-10,
) -> float:
    """E_initial[f(state at time t)] by uniformization with truncation error < tol.

    ``initial`` is a bitmask state or a distribution vector over states.
    """
    if t < 0:
        raise ExactEngineError("t must be >= 0")
    if tol <= 0:
        raise ExactEngineError("tol must be > 0")
    fvec = np.asarray(
        f if isinstance(f, np.ndarray) else [f(s) for s in range(gen.dim)], dtype=float
    )
    if isinstance(initial, (int, np.integer)):
        dist = np.zeros(gen.dim)
        dist[initial] = 1.0
    else:
        dist = np.asarray(initial, dtype=float)
    if t == 0:
        return float(dist @ fvec)
    lam = float(gen.n)  # uniformization rate: each of n sites rings at rate 1
    mu_poiss = lam * t
    fnorm = float(np.max(np.abs(fvec))) or 1.0
    K = int(poisson.isf(min(1.0, tol / fnorm), mu_poiss)) + 1
    weights = poisson.pmf(np.arange(K + 1), mu_poiss)
    P = sp.identity(gen.dim, format="csr") + gen.rates / lam
    acc = 0.0
    v = dist
    for k in range(K + 1):
        acc += weights[k] * float(v @ fvec)
        if k < K:
            v = v @ P
    return acc


def _symmetrized(gen: Generator) -> sp.csr_matrix:
    sq = np.sqrt(gen.mu())
    S = sp.diags(sq) @ gen.rates @ sp.diags(1.0 / sq)
    return ((S + S.T) * 0.5).tocsr()


def spectral_gap(gen: Generator) -> SpectrumResult:
    """Gap and zero-eigenvalue multiplicity of the symmetrized generator."""
    S = _symmetrized(gen)
    scale = float(np.max(np.abs(gen.rates.diagonal()))) if gen.dim > 1 else 0.0
    zero_tol = max(scale, 1.0) * 1e-10
    if gen.n <= DENSE_EIG_SITES:
        rates = -np.linalg.eigvalsh(S.toarray())  # >= 0 up to rounding
        nonzero = rates[rates > zero_tol]
        gap = float(nonzero.min()) if nonzero.size else 0.0
        count0 = int((rates <= zero_tol).sum())
        return SpectrumResult(gap, count0)
    A = (-S).tocsc()
    k = 8
    while True:
        w = spla.eigsh(A, k=k, sigma=-zero_tol, which="LM", return_eigenvectors=False)
        w = np.sort(w)
        nonzero = w[w > zero_tol]
        count0 = int((w <= zero_tol).sum())
        if nonzero.size or k >= min(64, gen.dim - 1):
            gap = float(nonzero.min()) if nonzero.size else 0.0
            return SpectrumResult(gap, count0)
        k = min(2 * k, gen.dim - 1)


def east1d_gap(p: float, N: int) -> float:
    """Gap of the 1-D East dynamics on {1..N} with site 0 frozen at zero."""
    if not (1 <= N <= MAX_REGION_SITES):
        raise ExactEngineError(f"N must lie in 1..{MAX_REGION_SITES}, got {N}")
    region = Region(frozenset((i,) for i in range(1, N + 1)), f"East1D({N})")
    gen = build_generator(region, {(0,): 0}, p)
    return spectral_gap(gen).gap


def mu_expectation(f: Union[Callable[[int], float], np.ndarray], region: Region, p: float) -> float:
    """Expectation of f under product Bernoulli(p) on the region, by enumeration."""
    n = len(region.sites)
    if n > MAX_REGION_SITES:
        raise ExactEngineError(f"region capped at {MAX_REGION_SITES} sites")
    dim = 1 << n
    pop = np.zeros(dim, dtype=np.int64)
    for s in range(1, dim):
        pop[s] = pop[s >> 1] + (s & 1)
    mu = p**pop * (1.0 - p) ** (n - pop)
    fvec = np.asarray(f if isinstance(f, np.ndarray) else [f(s) for s in range(dim)], dtype=float)
    return float(mu @ fvec)
