import math
from itertools import product

import numpy as np
import pytest
from scipy.linalg import expm

from eastlab.exact import (
    ExactEngineError,
    build_generator,
    east1d_gap,
    evolve_expectation,
    mu_expectation,
    spectral_gap,
)
from eastlab.lattice import Region


def region_1d(sites):
    return Region(frozenset((i,) for i in sites))


class TestBuildGenerator:
    def test_single_unconstrained_site(self):
        gen = build_generator(region_1d([1]), {(0,): 0}, 0.3)
        Q = gen.rates.toarray()
        assert np.allclose(Q, [[-0.3, 0.3], [0.7, -0.7]])

    def test_single_blocked_site(self):
        gen = build_generator(region_1d([1]), {(0,): 1}, 0.3)
        assert np.allclose(gen.rates.toarray(), 0.0)

    def test_two_sites_state_11_single_legal_flip(self):
        # frozen zero at 0: in state (1,1) only site 1 may flip (site 2's
        # left neighbor carries spin 1)
        gen = build_generator(region_1d([1, 2]), {(0,): 0}, 0.4)
        Q = gen.rates.toarray()
        s11 = 0b11
        offdiag = [(t, Q[s11, t]) for t in range(4) if t != s11 and Q[s11, t] != 0]
        assert offdiag == [(0b10, pytest.approx(0.6))]

    def test_missing_boundary(self):
        with pytest.raises(ExactEngineError):
            build_generator(region_1d([1, 3]), {(0,): 0}, 0.5)

    def test_row_sums_zero(self):
        gen = build_generator(region_1d([1, 2, 3]), {(0,): 0}, 0.7)
        rows = np.asarray(gen.rates.sum(axis=1)).ravel()
        assert np.max(np.abs(rows)) < 1e-12

    @pytest.mark.parametrize("trial", range(20))
    def test_detailed_balance_random_regions(self, trial):
        rng = np.random.default_rng(trial)
        d = int(rng.integers(1, 3))
        n_target = int(rng.integers(1, 7))
        box = list(product(range(3), repeat=d))
        rng.shuffle(box)
        sites = frozenset(tuple(s) for s in box[:n_target])
        region = Region(sites)
        boundary = {}
        for x in sites:
            for i in range(d):
                y = x[:i] + (x[i] - 1,) + x[i + 1 :]
                if y not in sites:
                    boundary[y] = int(rng.integers(0, 2))
        p = float(rng.uniform(0.05, 0.95))
        gen = build_generator(region, boundary, p)
        Q = gen.rates.toarray()
        mu = gen.mu()
        resid = mu[:, None] * Q - (mu[:, None] * Q).T
        assert np.max(np.abs(resid)) < 1e-12
        rows = np.asarray(gen.rates.sum(axis=1)).ravel()
        assert np.max(np.abs(rows)) < 1e-12


class TestEvolveExpectation:
    def test_t_zero(self):
        gen = build_generator(region_1d([1]), {(0,): 0}, 0.3)
        assert evolve_expectation(gen, 1, lambda s: float(s), 0.0) == 1.0

    @pytest.mark.parametrize("eta0", [0, 1])
    @pytest.mark.parametrize("t", [0.2, 1.0, 3.0])
    def test_single_site_closed_form(self, eta0, t):
        # two-state master equation: E[spin] = p + (eta0 - p) e^{-t}
        p = 0.3
        gen = build_generator(region_1d([1]), {(0,): 0}, p)
        got = evolve_expectation(gen, eta0, lambda s: float(s), t, tol=1e-12)
        assert got == pytest.approx(p + (eta0 - p) * math.exp(-t), abs=1e-10)

    def test_matches_matrix_exponential(self):
        # independent oracle: dense expm of the same rate matrix
        gen = build_generator(region_1d([1, 2, 3]), {(0,): 0}, 0.35)
        Q = gen.rates.toarray()
        f = np.array([float((s >> 2) & 1) for s in range(8)])
        for t in (0.5, 1.0, 2.0):
            want = float((expm(Q * t) @ f)[0b111])
            got = evolve_expectation(gen, 0b111, f, t, tol=1e-12)
            assert got == pytest.approx(want, abs=1e-9)

    def test_long_time_reaches_mu(self):
        gen = build_generator(region_1d([1, 2, 3]), {(0,): 0}, 0.5)
        f = np.array([float(s & 1) for s in range(8)])
        tol = 1e-10
        got = evolve_expectation(gen, 0b111, f, 1000.0, tol=tol)
        want = mu_expectation(f, region_1d([1, 2, 3]), 0.5)
        assert abs(got - want) < 10 * tol

    def test_stationarity_of_mu_mixture(self):
        gen = build_generator(region_1d([1, 2]), {(0,): 0}, 0.3)
        f = np.array([float(s & 1) for s in range(4)])
        mu = gen.mu()
        want = float(mu @ f)
        for t in (0.1, 1.0, 10.0):
            got = evolve_expectation(gen, mu, f, t, tol=1e-12)
            assert got == pytest.approx(want, abs=1e-10)


class TestSpectralGap:
    def test_single_unconstrained_site(self):
        for p in (0.1, 0.5, 0.9):
            res = spectral_gap(build_generator(region_1d([1]), {(0,): 0}, p))
            assert res.gap == pytest.approx(1.0, abs=1e-12)
            assert res.eigenvalue_count_at_zero == 1

    def test_blocked_site(self):
        res = spectral_gap(build_generator(region_1d([1]), {(0,): 1}, 0.5))
        assert res.gap == 0.0
        assert res.eigenvalue_count_at_zero == 2

    def test_two_site_hand_built(self):
        # independent 4x4 symmetric eigenproblem built from scratch
        p = 0.5
        Q = np.zeros((4, 4))
        for s in range(4):
            for i, legal in ((0, True), (1, (s & 1) == 0)):
                if not legal:
                    continue
                t = s ^ (1 << i)
                rate = p if (s >> i) & 1 == 0 else 1 - p
                Q[s, t] = rate
                Q[s, s] -= rate
        mu = np.array([(p if (s >> 0) & 1 else 1 - p) * (p if (s >> 1) & 1 else 1 - p) for s in range(4)])
        S = np.diag(np.sqrt(mu)) @ Q @ np.diag(1 / np.sqrt(mu))
        want = sorted(-np.linalg.eigvalsh((S + S.T) / 2))[1]
        assert east1d_gap(p, 2) == pytest.approx(want, abs=1e-12)

    def test_gap_decreasing_in_n(self):
        p = 0.5
        gaps = [east1d_gap(p, N) for N in range(1, 9)]
        assert all(a >= b - 1e-12 for a, b in zip(gaps, gaps[1:]))
        assert all(g > 0 for g in gaps)

    def test_sparse_path_matches_dense(self):
        # force the iterative eigensolver and compare with the dense answer
        import eastlab.exact as ex

        gen = build_generator(region_1d(range(1, 8)), {(0,): 0}, 0.4)
        dense = spectral_gap(gen)
        old = ex.DENSE_EIG_SITES
        ex.DENSE_EIG_SITES = 3
        try:
            sparse = spectral_gap(gen)
        finally:
            ex.DENSE_EIG_SITES = old
        assert sparse.gap == pytest.approx(dense.gap, abs=1e-8)
        assert sparse.eigenvalue_count_at_zero == dense.eigenvalue_count_at_zero

    def test_east1d_gap_range(self):
        with pytest.raises(ExactEngineError):
            east1d_gap(0.5, 0)
        with pytest.raises(ExactEngineError):
            east1d_gap(0.5, 21)


class TestMuExpectation:
    def test_single_spin(self):
        f = lambda s: float(s & 1)
        assert mu_expectation(f, region_1d([1, 2]), 0.3) == pytest.approx(0.3)

    def test_all_ones_indicator(self):
        region = region_1d([1, 2, 3])
        f = lambda s: float(s == 0b111)
        assert mu_expectation(f, region, 0.4) == pytest.approx(0.4**3)

    def test_product_of_two_spins(self):
        region = region_1d([1, 2])
        f = lambda s: float((s & 1) and (s >> 1) & 1)
        assert mu_expectation(f, region, 0.6) == pytest.approx(0.36)


class TestExport:
    def test_triplet_text(self):
        gen = build_generator(region_1d([1]), {(0,): 0}, 0.3)
        text = gen.to_triplet_text()
        lines = text.splitlines()
        assert lines[0].startswith("#")
        data = [ln for ln in lines if not ln.startswith("#")]
        trip = {(int(r), int(c)): float(v) for r, c, v in (ln.split(",") for ln in data)}
        assert trip[(0, 1)] == pytest.approx(0.3)
        assert trip[(1, 0)] == pytest.approx(0.7)
