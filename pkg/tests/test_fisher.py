import numpy as np
import pytest

from noisyqfi import builtin
from noisyqfi.fisher import (
    ProbModel,
    cfi,
    qfi_exact,
    qfi_numeric_derivative,
    sld_exact,
    sld_eigen_measurement,
)
from noisyqfi.protocols import build_state, sqsc

from support import PAULI, random_state, sigma


def phase_flip_state(lam: float, r: float, r0=(1.0, 0.0, 0.0)):
    spec = sqsc(builtin("phase_flip"), lam, r, np.asarray(r0))
    prep = build_state(spec, max_order=0)
    return prep.rho, prep.drho


class TestSldExact:
    def test_no_information(self):
        rho = np.eye(4) / 4.0
        res = sld_exact(rho, np.zeros((4, 4)))
        assert res.qfi == 0.0
        np.testing.assert_allclose(res.L, np.zeros((4, 4)), atol=1e-15)

    def test_phase_flip_closed_form(self):
        for lam in (0.1, 0.35, 0.8):
            for r in (0.2, 0.6, 0.95):
                rho, drho = phase_flip_state(lam, r)
                want = 4.0 * r ** 2 / (1.0 - (1.0 - 2.0 * lam) ** 2 * r ** 2)
                assert qfi_exact(rho, drho) == pytest.approx(want, rel=1e-10)

    def test_pure_state_phase_shift(self):
        # rotation about z on |+><+|: unit information at every angle
        lam = 0.42
        spec = sqsc(builtin("phase_shift"), lam, 1.0, [1, 0, 0])
        prep = build_state(spec, max_order=0)
        assert qfi_exact(prep.rho, prep.drho) == pytest.approx(1.0, rel=1e-8)

    def test_result_invariants(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            n = int(rng.integers(1, 3))
            rho = random_state(rng, n)
            H = rng.normal(size=rho.shape) + 1j * rng.normal(size=rho.shape)
            drho = (H + H.conj().T) / 2.0
            drho -= np.trace(drho) * np.eye(rho.shape[0]) / rho.shape[0]
            res = sld_exact(rho, drho)
            assert np.max(np.abs(res.L - res.L.conj().T)) < 1e-10
            assert res.qfi >= -1e-10
            assert abs(np.trace(rho @ res.L).real) < 1e-8
            # defining equation on the support
            residual = drho - 0.5 * (res.L @ rho + rho @ res.L)
            assert np.max(np.abs(residual)) < 1e-8

    def test_dropped_pairs_counted(self):
        rho = np.diag([1.0, 0.0]).astype(complex)
        drho = 0.5 * PAULI["Z"]
        res = sld_exact(rho, drho)
        assert res.dropped_pairs == 1  # the (0, 0) null pair

    def test_rejects_invalid_inputs(self):
        with pytest.raises(ValueError, match="positive semidefinite"):
            sld_exact(np.diag([1.5, -0.5]).astype(complex), np.zeros((2, 2)))
        with pytest.raises(ValueError, match="unit trace"):
            sld_exact(np.eye(2, dtype=complex), np.zeros((2, 2)))
        with pytest.raises(ValueError, match="traceless"):
            sld_exact(np.eye(2, dtype=complex) / 2.0, np.eye(2, dtype=complex))
        with pytest.raises(ValueError, match="Hermitian"):
            sld_exact(np.array([[0.5, 0.3], [0.0, 0.5]]), np.zeros((2, 2)))

    def test_unitary_invariance(self):
        # conjugating the whole family by a fixed unitary leaves the QFI alone
        rng = np.random.default_rng(32)
        for _ in range(20):
            rho = random_state(rng, 2)
            H = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            drho = (H + H.conj().T) / 2.0
            drho -= np.trace(drho) * np.eye(4) / 4.0
            G = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            U = np.linalg.qr(G)[0]
            base = qfi_exact(rho, drho)
            moved = qfi_exact(U @ rho @ U.conj().T, U @ drho @ U.conj().T)
            assert moved == pytest.approx(base, rel=1e-9)


class TestNumericDerivative:
    def test_linear_family(self):
        def state_at(lam):
            return 0.5 * (PAULI["I"] + lam * PAULI["Z"])

        got = qfi_numeric_derivative(state_at, 0.2, h=1e-5)
        want = qfi_exact(state_at(0.2), 0.5 * PAULI["Z"])
        assert got == pytest.approx(want, rel=1e-7)

    def test_constant_family(self):
        assert qfi_numeric_derivative(lambda lam: np.eye(2) / 2.0, 0.5, h=1e-5) == 0.0

    def test_phase_flip_family(self):
        r, r0 = 0.4, np.array([1.0, 0.0, 0.0])
        fam = builtin("phase_flip")

        def state_at(lam):
            spec = sqsc(fam, lam, r, r0)
            return build_state(spec, max_order=0).rho

        lam = 0.3
        want = 4.0 * r ** 2 / (1.0 - (1.0 - 2.0 * lam) ** 2 * r ** 2)
        assert qfi_numeric_derivative(state_at, lam, h=1e-5) == pytest.approx(want, rel=1e-6)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            qfi_numeric_derivative(lambda lam: np.eye(2) / 2.0, 0.5, h=0.0)


class TestCfi:
    def test_binary_coin(self):
        lam = 0.3
        model = ProbModel([lam, 1.0 - lam], [1.0, -1.0])
        assert cfi(model) == pytest.approx(1.0 / (lam * (1.0 - lam)))

    def test_constant_distribution(self):
        model = ProbModel([0.25] * 4, [0.0] * 4)
        assert cfi(model) == 0.0

    def test_skips_null_outcomes(self):
        model = ProbModel([0.5, 0.5, 0.0], [0.3, -0.3, 0.0])
        assert np.isfinite(cfi(model))

    def test_invariant_violations(self):
        with pytest.raises(ValueError):
            cfi(ProbModel([0.7, 0.7], [0.0, 0.0]))
        with pytest.raises(ValueError):
            cfi(ProbModel([0.5, 0.5], [0.5, 0.1]))
        with pytest.raises(ValueError):
            cfi(ProbModel([1.1, -0.1], [1.0, -1.0]))

    def test_quantum_bound_random_measurements(self):
        # classical information from any projective measurement stays below the QFI
        rng = np.random.default_rng(33)
        for _ in range(30):
            n = int(rng.integers(1, 3))
            dim = 2 ** n
            rho = random_state(rng, n)
            H = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            drho = (H + H.conj().T) / 2.0
            drho -= np.trace(drho) * np.eye(dim) / dim
            G = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            U = np.linalg.qr(G)[0]
            p = np.array([ (U[:, k].conj() @ rho @ U[:, k]).real for k in range(dim) ])
            dp = np.array([ (U[:, k].conj() @ drho @ U[:, k]).real for k in range(dim) ])
            model = ProbModel(p / p.sum(), dp - dp.sum() / dim)
            assert cfi(model) <= qfi_exact(rho, drho) + 1e-8

    def test_sld_measurement_saturates_full_rank(self):
        rng = np.random.default_rng(34)
        for _ in range(20):
            n = int(rng.integers(1, 3))
            dim = 2 ** n
            rho = random_state(rng, n)
            H = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            drho = (H + H.conj().T) / 2.0
            drho -= np.trace(drho) * np.eye(dim) / dim
            res = sld_exact(rho, drho)
            projs = sld_eigen_measurement(res)
            p = np.array([np.trace(P @ rho).real for P in projs])
            dp = np.array([np.trace(P @ drho).real for P in projs])
            got = cfi(ProbModel(p, dp))
            assert got == pytest.approx(res.qfi, rel=1e-7)


class TestSldMeasurement:
    def test_sigma_z_projectors(self):
        res = sld_exact(0.5 * (PAULI["I"] + 0.3 * PAULI["Z"]), 0.5 * PAULI["Z"])
        projs = sld_eigen_measurement(res)
        assert len(projs) == 2
        np.testing.assert_allclose(sum(projs), np.eye(2), atol=1e-12)
        for P in projs:
            np.testing.assert_allclose(P @ P, P, atol=1e-12)
        basis = {np.argmax(np.abs(np.diag(P))) for P in projs}
        assert basis == {0, 1}
        for P in projs:
            np.testing.assert_allclose(P - np.diag(np.diag(P)), 0.0, atol=1e-12)

    def test_degenerate_zero_operator(self):
        res = sld_exact(np.eye(4, dtype=complex) / 4.0, np.zeros((4, 4)))
        projs = sld_eigen_measurement(res)
        np.testing.assert_allclose(sum(projs), np.eye(4), atol=1e-10)

    def test_phase_flip_optimal_measurement_is_along_r0(self):
        # optimal single-qubit protocol: projectors along the input direction,
        # independent of the parameter value
        r0 = np.array([1.0, 0.0, 0.0])
        expected = [0.5 * (PAULI["I"] + sigma(r0)), 0.5 * (PAULI["I"] - sigma(r0))]
        for lam in (0.2, 0.7):
            rho, drho = phase_flip_state(lam, 0.5, r0)
            projs = sld_eigen_measurement(sld_exact(rho, drho))
            match = [min(np.max(np.abs(P - E)) for P in projs) for E in expected]
            assert max(match) < 1e-10
