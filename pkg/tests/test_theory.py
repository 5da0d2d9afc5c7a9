import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mgrit_advection.circulant import CirculantOperator
from mgrit_advection.discretization import SchemeSpec, build_phi
from mgrit_advection.optimizer import psi_from_rediscretization
from mgrit_advection.theory import (
    BoundProfile,
    WeightingSpec,
    error_bound,
    geometric_factor,
    scalar_mode_oracle,
    weight_vector,
)


def polar(r, phase):
    return r * np.exp(1j * phase)


modes = st.tuples(st.floats(0.0, 0.99), st.floats(-np.pi, np.pi))


class TestErrorBound:
    def test_ideal_is_zero(self):
        lam = polar(np.linspace(0.1, 1.0, 9), np.linspace(0, 3, 9))
        prof = error_bound(lam, lam ** 4, 4, 64)
        assert prof.max_bound == 0.0
        assert np.all(prof.bounds == 0)

    def test_hand_value(self):
        ref = np.sqrt(2) * 0.25 * abs(0.25 - 0.3) / 0.7 * (1 - 0.3 ** 3)
        got = error_bound([0.5], [0.3], 2, 8).bounds[0]
        assert got == pytest.approx(ref, rel=1e-14)
        assert got == pytest.approx(0.02457, abs=1e-5)
        assert scalar_mode_oracle(0.5, 0.3, 2, 8) <= got + 1e-12

    def test_unit_coarse_mode_is_finite(self):
        # |mu| = 1: the geometric sum has n_t/m - 1 terms of 1
        prof = error_bound([0.5], [1.0], 2, 8)
        assert prof.bounds[0] == pytest.approx(np.sqrt(2) * 0.25 * 0.75 * 3)
        assert not prof.any_unstable

    def test_unstable_modes_flagged(self):
        prof = error_bound([0.5, 0.5], [0.3, 1.2], 2, 64)
        assert prof.unstable.tolist() == [False, True]
        assert prof.bounds[1] == pytest.approx(np.sqrt(2) * 0.25 * 0.95 * (1.2 ** 31 - 1) / 0.2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            error_bound(np.ones(3), np.ones(4), 2, 8)
        with pytest.raises(ValueError):
            error_bound(np.ones(3), np.ones(3), 3, 8)

    def test_profile_symmetry(self):
        spec = SchemeSpec.sdirk(2, 64)
        phi = build_phi(spec)
        psi = psi_from_rediscretization(spec, 4)
        b = error_bound(phi.spectrum, psi.spectrum, 4, spec.n_t).bounds
        np.testing.assert_allclose(b[1:], b[:0:-1], atol=1e-10)

    def test_csv(self, tmp_path):
        prof = error_bound([0.5, 0.2], [0.3, 0.1], 2, 8)
        data = np.loadtxt(prof.to_csv(tmp_path / "b.csv"), delimiter=",", skiprows=1)
        np.testing.assert_allclose(data[:, 1], prof.bounds)
        assert isinstance(prof, BoundProfile) and prof.n_x == 2


class TestGeometricFactor:
    @given(st.floats(0.0, 2.0), st.integers(0, 40))
    def test_matches_direct_sum(self, a, count):
        ref = sum(a ** j for j in range(count))
        assert geometric_factor(np.array([a]), count)[0] == pytest.approx(ref, rel=1e-10, abs=1e-12)

    def test_continuous_at_one(self):
        vals = geometric_factor(np.array([1 - 1e-12, 1.0, 1 + 1e-12]), 50)
        np.testing.assert_allclose(vals, 50, rtol=1e-8)


class TestOracle:
    def test_ideal_is_zero(self):
        lam = 0.8 * np.exp(0.4j)
        assert scalar_mode_oracle(lam, lam ** 4, 4, 32) < 1e-14

    def test_upper_bound_example(self):
        assert scalar_mode_oracle(0.9, 0.7, 4, 64) <= error_bound([0.9], [0.7], 4, 64).bounds[0]

    def test_gap_shrinks(self):
        gaps = []
        for n_t in (64, 256, 1024):
            b = error_bound([0.9], [0.7], 4, n_t).bounds[0]
            gaps.append((b - scalar_mode_oracle(0.9, 0.7, 4, n_t)) / b)
        assert gaps[2] < gaps[1] < gaps[0]

    def test_dense_propagator_oracle(self):
        # build the full fine-grid propagator by brute force from the recurrences
        lam, mu, m, n_t = 0.8 * np.exp(0.3j), 0.5 * np.exp(1.0j), 2, 8
        cols = []
        for j in range(1, n_t // m + 1):
            e = np.zeros(n_t + 1, dtype=complex)
            e[j * m] = 1.0
            cols.append(_one_iteration(e, lam, mu, m)[1:])
        brute = np.linalg.norm(np.array(cols).T, 2)
        assert scalar_mode_oracle(lam, mu, m, n_t) == pytest.approx(brute, rel=1e-12)

    def test_indivisible(self):
        with pytest.raises(ValueError):
            scalar_mode_oracle(0.5, 0.3, 3, 8)

    @settings(max_examples=1000, deadline=None)
    @given(modes, modes, st.sampled_from([2, 4, 8]), st.sampled_from([16, 64, 256]))
    def test_dominance(self, a, b, m, n_t):
        lam, mu = polar(*a), polar(*b)
        bound = error_bound([lam], [mu], m, n_t).bounds[0]
        assert scalar_mode_oracle(lam, mu, m, n_t) <= bound + 1e-10


def _one_iteration(e, lam, mu, m):
    """FCF then coarse correction with ideal interpolation, on fine errors."""
    n_t = e.shape[0] - 1
    e = e.copy()

    def f_relax(e):
        for c in range(0, n_t, m):
            for k in range(1, m):
                e[c + k] = lam * e[c + k - 1]

    f_relax(e)
    for c in range(m, n_t + 1, m):
        e[c] = lam * e[c - 1]
    f_relax(e)
    # coarse residual r_j = lam^m e_{j-1} - e_j, coarse error solve, correction
    ec = e[::m].copy()
    r = np.zeros_like(ec)
    r[1:] = lam ** m * ec[:-1] - ec[1:]
    v = np.zeros_like(ec)
    for j in range(1, len(ec)):
        v[j] = mu * v[j - 1] + r[j]
    e[::m] += v
    f_relax(e)
    return e


class TestWeights:
    def test_zero(self):
        assert weight_vector([0.0])[0] == pytest.approx(1 / (1 + 1e-6) ** 2)

    def test_one(self):
        assert weight_vector([1.0])[0] == pytest.approx(1e12)

    def test_eps_validation(self):
        with pytest.raises(ValueError):
            WeightingSpec(0.0)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_monotone(self, a, b):
        w = WeightingSpec()
        lo, hi = sorted((a, b))
        assert 0 < w(lo) <= w(hi)

    @given(st.integers(0, 2 ** 31), st.sampled_from([8, 16, 64]))
    def test_even_symmetry(self, seed, n):
        col = np.random.default_rng(seed).standard_normal(n)
        w = weight_vector(CirculantOperator(col / np.abs(np.fft.fft(col)).max()).spectrum)
        np.testing.assert_allclose(w[1:], w[:0:-1], rtol=1e-9)
