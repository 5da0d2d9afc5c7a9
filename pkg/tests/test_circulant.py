import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mgrit_advection.circulant import (
    CirculantOperator,
    ImaginaryResidue,
    RationalStepper,
    SingularOperator,
    apply,
    eigenvalues,
    export_dense,
    multiply,
    power,
    rational_first_column_power,
    real_ifft,
    solve,
)
from mgrit_advection.discretization import SchemeSpec, build_L, build_phi, sdirk_tableau, stability_function


def dense(col):
    """Independent dense circulant: entry (i, j) = col[(i - j) mod n]."""
    n = len(col)
    i, j = np.indices((n, n))
    return np.asarray(col)[(i - j) % n]


def dft(col):
    # direct O(n^2) sum, sign convention exp(-i theta_k j)
    n = len(col)
    k, j = np.indices((n, n))
    return np.exp(-2j * np.pi * k * j / n) @ np.asarray(col)


finite = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)
sizes = st.sampled_from([4, 8, 16, 64])


@st.composite
def column_pairs(draw):
    n = draw(sizes)
    a = draw(arrays(np.float64, n, elements=finite))
    b = draw(arrays(np.float64, n, elements=finite))
    return a, b


class TestEigenvalues:
    def test_identity(self):
        np.testing.assert_array_equal(eigenvalues(CirculantOperator.identity(8)).values, np.ones(8))

    def test_shift(self):
        vals = eigenvalues(CirculantOperator([0, 1, 0, 0])).values
        np.testing.assert_allclose(vals, np.exp(-1j * np.pi * np.arange(4) / 2), atol=1e-15)

    def test_erk1_symbol(self):
        n, c = 32, 0.85
        phi = CirculantOperator.from_offsets({0: 1 - c, 1: c}, n)
        theta = 2 * np.pi * np.arange(n) / n
        np.testing.assert_allclose(phi.spectrum, 1 - c * (1 - np.exp(-1j * theta)), atol=1e-14)
        assert phi.spectrum[0] == pytest.approx(1.0)

    def test_frequencies(self):
        sd = eigenvalues(CirculantOperator.identity(8))
        np.testing.assert_allclose(sd.frequencies, 2 * np.pi * np.arange(8) / 8)

    @given(arrays(np.float64, 16, elements=finite))
    def test_matches_direct_dft(self, col):
        np.testing.assert_allclose(CirculantOperator(col).spectrum, dft(col), atol=1e-11)

    @given(arrays(np.float64, st.sampled_from([4, 8, 16, 64]), elements=finite))
    def test_round_trip_and_conjugate_symmetry(self, col):
        op = CirculantOperator(col)
        back, residue = real_ifft(op.spectrum)
        np.testing.assert_allclose(back, col, atol=1e-12)
        assert residue < 1e-12
        mag = np.abs(op.spectrum)
        np.testing.assert_allclose(mag[1:], mag[:0:-1], rtol=1e-12, atol=1e-12)


class TestMultiply:
    def test_identity(self):
        x = CirculantOperator(np.arange(1.0, 9.0))
        assert multiply(CirculantOperator.identity(8), x) == x

    def test_double_shift(self):
        s = CirculantOperator.shift(4)
        np.testing.assert_array_equal(multiply(s, s).first_column, [0, 0, 1, 0])

    def test_dense_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal(16), rng.standard_normal(16)
        got = multiply(CirculantOperator(a), CirculantOperator(b)).first_column
        np.testing.assert_allclose(got, (dense(a) @ dense(b))[:, 0], atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            multiply(CirculantOperator.identity(4), CirculantOperator.identity(8))

    @given(column_pairs())
    def test_spectral_homomorphism(self, pair):
        a, b = (CirculantOperator(c) for c in pair)
        lhs = multiply(a, b).spectrum
        rhs = a.spectrum * b.spectrum
        scale = max(1.0, np.max(np.abs(rhs)))
        np.testing.assert_allclose(lhs, rhs, atol=1e-11 * scale)


class TestPower:
    def test_power_one(self):
        x = CirculantOperator([0.2, 0.5, 0.3, 0.0])
        assert power(x, 1) == x

    def test_full_cycle(self):
        np.testing.assert_allclose(power(CirculantOperator.shift(8), 8).first_column, np.eye(8)[0])

    def test_erk1_dense(self):
        c = 0.85
        phi = CirculantOperator.from_offsets({0: 1 - c, 1: c}, 32)
        ref = np.linalg.matrix_power(dense(phi.first_column), 4)[:, 0]
        np.testing.assert_allclose(power(phi, 4).first_column, ref, atol=1e-14)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            power(CirculantOperator.identity(4), 0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 64), st.sampled_from([8, 32, 256]), st.integers(0, 2**31))
    def test_equals_repeated_multiply(self, m, n, seed):
        rng = np.random.default_rng(seed)
        col = rng.standard_normal(n)
        op = CirculantOperator(col / np.max(np.abs(np.fft.fft(col))))
        ref = op
        for _ in range(m - 1):
            ref = multiply(ref, op)
        np.testing.assert_allclose(power(op, m).first_column, ref.first_column, atol=1e-10)

    def test_direct_and_spectral_paths_agree(self):
        spec = SchemeSpec.erk(3, 64)
        phi = build_phi(spec)
        # 8 takes the convolution path, 9 the spectral one
        a = multiply(power(phi, 8), phi)
        b = power(phi, 9)
        np.testing.assert_allclose(a.first_column, b.first_column, atol=1e-10)


class TestApplySolve:
    def test_apply_identity(self):
        u = np.arange(5.0)
        np.testing.assert_array_equal(apply(CirculantOperator.identity(5), u), u)

    def test_apply_shift(self):
        np.testing.assert_allclose(apply(CirculantOperator.shift(4), [1, 0, 0, 0]), [0, 1, 0, 0])

    def test_apply_preserves_constants_erk1(self):
        c = 0.85
        phi = CirculantOperator.from_offsets({0: 1 - c, 1: c}, 16)
        np.testing.assert_allclose(apply(phi, np.ones(16)), np.ones(16), atol=1e-15)

    @given(arrays(np.float64, 16, elements=finite), arrays(np.float64, 16, elements=finite))
    def test_apply_matches_dense(self, col, u):
        got = apply(CirculantOperator(col), u)
        ref = dense(col) @ u
        np.testing.assert_allclose(got, ref, atol=1e-12 * max(1.0, np.abs(ref).max()))

    def test_apply_wrong_length(self):
        with pytest.raises(ValueError):
            apply(CirculantOperator.identity(4), np.ones(5))

    def test_solve_identity_and_scaled(self):
        b = np.array([1.0, -2.0, 3.0, 4.0])
        np.testing.assert_allclose(solve(CirculantOperator.identity(4), b), b)
        np.testing.assert_allclose(solve(CirculantOperator.identity(4) * 2.0, b), b / 2)

    def test_solve_sdirk2_denominator(self):
        spec = SchemeSpec.sdirk(2, 64)
        q = build_phi(spec).denominator
        b = np.random.default_rng(3).standard_normal(64)
        x = solve(q, b)
        assert np.linalg.norm(q.apply(x) - b) / np.linalg.norm(b) < 1e-10

    def test_solve_singular(self):
        with pytest.raises(SingularOperator):
            solve(CirculantOperator([1.0, -1.0, 0.0, 0.0]), np.ones(4))


class TestRational:
    def test_p_equals_q(self):
        p = CirculantOperator([2.0, 0.5, 0.0, 0.5])
        col, res = rational_first_column_power(RationalStepper(p, p), 1)
        np.testing.assert_allclose(col, np.eye(4)[0], atol=1e-15)
        assert res < 1e-15

    def test_singular_denominator(self):
        with pytest.raises(SingularOperator):
            RationalStepper(CirculantOperator.identity(4), CirculantOperator([1.0, -1.0, 0, 0]))

    def test_sdirk1_column_sum(self):
        col, _ = rational_first_column_power(build_phi(SchemeSpec.sdirk(1, 64)), 2)
        assert col.sum() == pytest.approx(1.0, abs=1e-10)

    def test_sdirk1_matches_backward_euler_dense(self):
        spec = SchemeSpec.sdirk(1, 32)
        L = dense(build_L(1, 32, spec.dx).first_column)
        ref = np.linalg.matrix_power(np.linalg.inv(np.eye(32) - spec.dt * L), 3)[:, 0]
        col, _ = rational_first_column_power(build_phi(spec), 3)
        np.testing.assert_allclose(col, ref, atol=1e-12)

    def test_sdirk3_peak_near_characteristic(self):
        spec = SchemeSpec.sdirk(3, 1024)
        col, _ = rational_first_column_power(build_phi(spec), 16)
        j = int(np.argmax(np.abs(col)))
        offset = -j if j <= 512 else 1024 - j
        assert abs(offset - (-16 * 4)) <= 8

    def test_stability_sdirk2_tableau_consistency(self):
        R = stability_function(sdirk_tableau(2))
        assert R(0.0) == pytest.approx(1.0)

    def test_imaginary_residue_flagged(self):
        spectrum = np.ones(8, dtype=complex)
        spectrum[1] = 1j  # breaks conjugate symmetry
        with pytest.raises(ImaginaryResidue):
            real_ifft(spectrum)


def test_dense_export(tmp_path):
    path = export_dense(CirculantOperator.shift(4), tmp_path / "s.csv")
    rows = np.loadtxt(path, delimiter=",")
    np.testing.assert_array_equal(rows, dense([0, 1, 0, 0]))
    with pytest.raises(RuntimeError):
        export_dense(CirculantOperator.shift(4), tmp_path / "x.csv", enabled=False)


def test_dense_export_refuses_large(tmp_path):
    with pytest.raises(ValueError):
        export_dense(CirculantOperator.identity(4097), tmp_path / "big.csv")
