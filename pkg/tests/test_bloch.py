import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from noisyqfi import bloch
from noisyqfi.bloch import (
    BlochChannel,
    DomainError,
    Unitality,
    apply_bloch,
    builtin,
    classify_unitality,
    family_from_callables,
    fd_derivative,
    svd3,
    validate,
)

from support import random_unit


def _channel(M, d, dM=None, dd=None):
    return BlochChannel(M, d,
                        np.zeros((3, 3)) if dM is None else dM,
                        np.zeros(3) if dd is None else dd)


ALL_BUILTINS = [
    builtin("phase_shift"),
    builtin("phase_flip"),
    builtin("depolarizing"),
    builtin("gad", p=1.0),
    builtin("gad", p=0.3),
    builtin("gad", p=0.5),
    builtin("pauli", lam_on="z", px=0.05, py=0.1),
    builtin("custom_diag", mx="1-2*l", my="1-2*l", mz="1"),
]


class TestValidate:
    def test_boundary_shift_with_zero_matrix_passes(self):
        report = validate(_channel(np.zeros((3, 3)), [0, 0, 1]))
        assert report.passed and not report.failures

    def test_unit_shift_with_nonzero_matrix_fails(self):
        report = validate(_channel(np.eye(3), [0, 0, 1]))
        assert not report.passed
        names = [name for name, _ in report.failures]
        assert any("M = 0" in name for name in names)

    def test_identity_channel_passes(self):
        assert validate(_channel(np.eye(3), [0, 0, 0])).passed

    def test_long_shift_fails_with_magnitude(self):
        report = validate(_channel(np.zeros((3, 3)), [0, 0, 1.5]))
        assert not report.passed
        name, magnitude = report.failures[0]
        assert magnitude == pytest.approx(0.5)

    def test_nonfinite_entries_fail(self):
        report = validate(_channel(np.full((3, 3), np.nan), [0, 0, 0]))
        assert not report.passed


class TestApplyBloch:
    def test_phase_flip_example(self):
        ch = builtin("phase_flip").eval(0.25)
        np.testing.assert_allclose(apply_bloch(ch, 1.0, [1, 0, 0]), [0.5, 0, 0], atol=1e-15)

    def test_zero_purity_unital(self):
        ch = builtin("depolarizing").eval(0.7)
        np.testing.assert_allclose(apply_bloch(ch, 0.0, [0, 1, 0]), np.zeros(3), atol=1e-15)

    def test_gad_zero_purity_shows_shift(self):
        ch = builtin("gad", p=1.0).eval(0.5)
        np.testing.assert_allclose(apply_bloch(ch, 0.0, [1, 0, 0]), [0, 0, 0.5], atol=1e-15)

    def test_non_unit_direction_rejected(self):
        ch = builtin("depolarizing").eval(0.5)
        with pytest.raises(ValueError):
            apply_bloch(ch, 0.5, [1, 1, 0])

    def test_contraction_over_builtins(self):
        rng = np.random.default_rng(11)
        for fam in ALL_BUILTINS:
            lo, hi = fam.domain
            lam = 0.5 * (lo + hi)
            ch = fam.eval(lam)
            for _ in range(125):
                out = apply_bloch(ch, 1.0, random_unit(rng))
                assert np.linalg.norm(out) <= 1.0 + 1e-9


class TestBuiltins:
    def test_depolarizing_values(self):
        ch = builtin("depolarizing").eval(0.3)
        np.testing.assert_allclose(ch.M, 0.3 * np.eye(3))
        np.testing.assert_allclose(ch.d, np.zeros(3))
        np.testing.assert_allclose(ch.dM, np.eye(3))

    def test_phase_shift_at_zero(self):
        ch = builtin("phase_shift").eval(0.0)
        np.testing.assert_allclose(ch.M, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(ch.dM, [[0, -1, 0], [1, 0, 0], [0, 0, 0]], atol=1e-15)

    def test_gad_balanced_is_unital(self):
        fam = builtin("gad", p=0.5)
        assert fam.unitality is Unitality.UNITAL
        for lam in np.linspace(0, 0.9, 10):
            np.testing.assert_allclose(fam.eval(lam).d, np.zeros(3), atol=1e-15)

    def test_gad_carries_p(self):
        fam = builtin("gad", p=0.8)
        assert fam.params == {"p": 0.8}
        ch = fam.eval(0.5)
        np.testing.assert_allclose(ch.d, [0, 0, 0.5 * 0.6])
        np.testing.assert_allclose(ch.dd, [0, 0, 0.6])

    def test_pauli_reduces_to_phase_flip(self):
        fam = builtin("pauli", lam_on="z")
        ch = fam.eval(0.25)
        np.testing.assert_allclose(ch.M, np.diag([0.5, 0.5, 1.0]))
        np.testing.assert_allclose(ch.dM, np.diag([-2.0, -2.0, 0.0]))

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown channel"):
            builtin("amplitude_rectifier")

    def test_unexpected_params(self):
        with pytest.raises(ValueError):
            builtin("phase_flip", p=0.2)

    def test_domain_enforced(self):
        fam = builtin("phase_flip")
        with pytest.raises(DomainError):
            fam.eval(1.5)

    def test_all_builtins_validate_on_random_grid(self):
        rng = np.random.default_rng(23)
        for fam in ALL_BUILTINS:
            lo, hi = fam.domain
            pad = max(2 * fam.fd_step, (hi - lo) * 1e-9)
            for lam in rng.uniform(lo + pad, hi - pad, size=100):
                report = validate(fam.eval(lam))
                assert report.passed, (fam.name, lam, report.failures)

    def test_unitality_flags_consistent(self):
        for fam in ALL_BUILTINS:
            lo, hi = fam.domain
            lam = lo + 0.37 * (hi - lo)
            assert classify_unitality(fam.eval(lam)) is fam.unitality, fam.name


class TestCustomDiag:
    def test_rank_one_family(self):
        fam = builtin("custom_diag", mx="0", my="0", mz="1-2*l")
        ch = fam.eval(0.4)
        np.testing.assert_allclose(ch.M, np.diag([0.0, 0.0, 0.2]), atol=1e-12)
        np.testing.assert_allclose(ch.dM, np.diag([0.0, 0.0, -2.0]), atol=1e-8)
        assert fam.unitality is Unitality.UNITAL

    def test_expression_domain(self):
        fam = builtin("custom_diag", mx="sqrt(1-l)", my="sqrt(1-l)", mz="1-l",
                      domain=(0.0, 0.99))
        ch = fam.eval(0.19)
        assert ch.M[0, 0] == pytest.approx(0.9)
        with pytest.raises(DomainError):
            fam.eval(1.5)


class TestFdDerivative:
    def test_linear_family_is_exact(self):
        fam = builtin("depolarizing")
        dM, dd = fd_derivative(fam.value, 0.5, h=1e-5)
        np.testing.assert_allclose(dM, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(dd, np.zeros(3), atol=1e-12)

    def test_phase_flip(self):
        fam = builtin("phase_flip")
        dM, _ = fd_derivative(fam.value, 0.3, h=1e-5)
        np.testing.assert_allclose(dM, np.diag([-2.0, -2.0, 0.0]), atol=1e-8)

    def test_constant_family(self):
        def value(lam):
            return np.diag([0.3, 0.2, 0.1]), np.array([0.0, 0.0, 0.4])

        dM, dd = fd_derivative(value, 0.5, h=1e-6)
        np.testing.assert_allclose(dM, np.zeros((3, 3)), atol=1e-12)
        np.testing.assert_allclose(dd, np.zeros(3), atol=1e-12)

    def test_domain_violation(self):
        fam = builtin("phase_flip")
        with pytest.raises(DomainError):
            fd_derivative(fam.value, 0.0, h=1e-3, domain=fam.domain)

    def test_agrees_with_analytic_builtins(self):
        h = 1e-6
        for fam in ALL_BUILTINS:
            if fam.deriv is None:
                continue
            lo, hi = fam.domain
            for lam in np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 7):
                dM_fd, dd_fd = fd_derivative(fam.value, lam, h=h)
                dM, dd = fam.deriv(lam)
                scale = max(np.linalg.norm(dM), 1.0)
                assert np.linalg.norm(dM_fd - dM) <= 10 * h ** 2 * scale + 1e-9
                assert np.linalg.norm(dd_fd - dd) <= 10 * h ** 2 + 1e-9


class TestSvd3:
    def test_phase_flip_derivative(self):
        dec = svd3(np.diag([-2.0, -2.0, 0.0]))
        np.testing.assert_allclose(dec.S, [2.0, 2.0, 0.0], atol=1e-14)

    def test_identity(self):
        dec = svd3(np.eye(3))
        np.testing.assert_allclose(dec.S, [1.0, 1.0, 1.0])

    def test_rank_one_axis(self):
        dec = svd3(np.diag([0.0, 0.0, -2.0]))
        np.testing.assert_allclose(dec.S, [2.0, 0.0, 0.0], atol=1e-14)
        assert abs(dec.B[0] @ np.array([0.0, 0.0, 1.0])) == pytest.approx(1.0)

    def test_reconstruction_batch(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            M = rng.uniform(-3.0, 3.0, size=(3, 3))
            dec = svd3(M)
            assert np.linalg.norm(dec.reconstruct() - M) < 1e-12
            assert dec.S[0] >= dec.S[1] >= dec.S[2] >= 0.0

    def test_deterministic(self):
        M = np.array([[0.3, -1.2, 0.7], [2.0, 0.1, -0.4], [0.9, 0.9, 0.9]])
        a = svd3(M)
        b = svd3(M.copy())
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.S, b.S)
        np.testing.assert_array_equal(a.B, b.B)

    def test_sign_convention(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            dec = svd3(rng.normal(size=(3, 3)))
            for row in dec.B:
                assert row[np.argmax(np.abs(row))] > 0.0

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (3, 3), elements=st.floats(-3, 3)))
    def test_orthogonality(self, M):
        dec = svd3(M)
        np.testing.assert_allclose(dec.A.T @ dec.A, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(dec.B.T @ dec.B, np.eye(3), atol=1e-12)


class TestFamilyFromCallables:
    def test_infers_constant_shift(self):
        def value(lam):
            return lam * np.eye(3) * 0.5, np.array([0.0, 0.0, 0.5])

        fam = family_from_callables("shifted", value, domain=(0.0, 1.0))
        assert fam.unitality is Unitality.NONUNITAL_CONST_SHIFT

    def test_infers_unital(self):
        def value(lam):
            return np.diag([lam, lam, 1.0]), np.zeros(3)

        fam = family_from_callables("diagish", value, domain=(0.0, 1.0))
        assert fam.unitality is Unitality.UNITAL

    def test_infers_param_shift(self):
        def value(lam):
            return 0.1 * np.eye(3), np.array([0.0, 0.0, 0.5 * lam])

        fam = family_from_callables("drift", value, domain=(0.0, 1.0))
        assert fam.unitality is Unitality.NONUNITAL_PARAM_SHIFT

    def test_fd_fallback_matches_hand_derivative(self):
        def value(lam):
            return np.diag([np.cos(lam), np.cos(lam), 1.0]), np.zeros(3)

        fam = family_from_callables("cosine", value, domain=(0.0, 1.0))
        ch = fam.eval(0.5)
        np.testing.assert_allclose(ch.dM, np.diag([-np.sin(0.5), -np.sin(0.5), 0.0]),
                                   atol=1e-9)


def test_channel_arrays_are_immutable():
    ch = builtin("phase_flip").eval(0.3)
    with pytest.raises(ValueError):
        ch.M[0, 0] = 5.0
