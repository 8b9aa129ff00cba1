"""Shared helpers for the test suite: random geometry, Kraus oracles, fits."""

from __future__ import annotations

import numpy as np

from noisyqfi import bloch, builtin
from noisyqfi.bloch import ChannelFamily, Unitality
from noisyqfi.protocols import build_state, correlated, sqsc
from noisyqfi.fisher import qfi_exact
from noisyqfi.series import fit_qfi_orders

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def sigma(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v[0] * PAULI["X"] + v[1] * PAULI["Y"] + v[2] * PAULI["Z"]


def random_unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def perpendicular_pair(rng) -> tuple[np.ndarray, np.ndarray]:
    c = random_unit(rng)
    t = rng.normal(size=3)
    t -= (t @ c) * c
    return c, t / np.linalg.norm(t)


def random_rotation(rng) -> np.ndarray:
    A = rng.normal(size=(3, 3))
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0.0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_unital_family(rng, name: str = "rotated") -> ChannelFamily:
    """Random unital family: fixed rotations around a builtin unital channel."""
    base = builtin(["phase_flip", "depolarizing", "phase_shift"][int(rng.integers(3))])
    A0 = random_rotation(rng)
    B0 = random_rotation(rng)

    def value(lam, A0=A0, B0=B0, base=base):
        M, _ = base.value(lam)
        return A0 @ M @ B0, np.zeros(3)

    def deriv(lam, A0=A0, B0=B0, base=base):
        dM, _ = base.deriv(lam)
        return A0 @ dM @ B0, np.zeros(3)

    return ChannelFamily(name, Unitality.UNITAL, base.domain, value, deriv)


def random_state(rng, n: int) -> np.ndarray:
    """Random full-rank density matrix."""
    dim = 2 ** n
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = A @ A.conj().T + 0.05 * np.eye(dim)
    return rho / np.trace(rho).real


# Kraus sets for the channels with textbook representations.

def kraus_phase_flip(lam: float) -> list[np.ndarray]:
    return [np.sqrt(1.0 - lam) * PAULI["I"], np.sqrt(lam) * PAULI["Z"]]


def kraus_depolarizing(lam: float) -> list[np.ndarray]:
    return [np.sqrt((1.0 + 3.0 * lam) / 4.0) * PAULI["I"],
            np.sqrt((1.0 - lam) / 4.0) * PAULI["X"],
            np.sqrt((1.0 - lam) / 4.0) * PAULI["Y"],
            np.sqrt((1.0 - lam) / 4.0) * PAULI["Z"]]


def kraus_gad(lam: float, p: float) -> list[np.ndarray]:
    return [
        np.sqrt(p) * np.array([[1, 0], [0, np.sqrt(1 - lam)]], dtype=complex),
        np.sqrt(p) * np.array([[0, np.sqrt(lam)], [0, 0]], dtype=complex),
        np.sqrt(1 - p) * np.array([[np.sqrt(1 - lam), 0], [0, 1]], dtype=complex),
        np.sqrt(1 - p) * np.array([[0, 0], [np.sqrt(lam), 0]], dtype=complex),
    ]


def kraus_apply(rho: np.ndarray, ks: list[np.ndarray], n: int, qubit: int) -> np.ndarray:
    out = np.zeros_like(rho)
    for K in ks:
        full = np.array([[1.0]], dtype=complex)
        for slot in range(n):
            full = np.kron(full, K if slot == qubit else np.eye(2))
        out += full @ rho @ full.conj().T
    return out


def exact_qfi_of_spec(spec) -> float:
    prep = build_state(spec, max_order=0)
    return qfi_exact(prep.rho, prep.drho)


def fit_exact_orders(family, lam, n, c, r0, rs, orders=(2, 3, 4)):
    """Fit the exact QFI of a correlated (or single-qubit) run in powers of r."""
    qs = []
    for r in rs:
        spec = sqsc(family, lam, r, r0) if n == 1 else correlated(family, lam, n, r, c, r0)
        qs.append(exact_qfi_of_spec(spec))
    return fit_qfi_orders(np.asarray(rs), np.asarray(qs), orders=orders)
