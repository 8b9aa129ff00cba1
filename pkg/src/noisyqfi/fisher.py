"""Exact SLD, quantum Fisher information, and classical Fisher information.

Everything here works on dense Hermitian matrices and serves as the
brute-force oracle for the series machinery: the SLD L solves
drho = (L rho + rho L)/2 and is built from the eigendecomposition
rho = sum_j p_j |j><j| as

    L = 2 sum_{j,k} <j|drho|k> / (p_j + p_k) |j><k|

restricted to pairs with p_j + p_k above a cutoff; the QFI is Tr[drho L].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SldResult",
    "ProbModel",
    "sld_exact",
    "qfi_exact",
    "qfi_numeric_derivative",
    "cfi",
    "sld_eigen_measurement",
]

_HERM_TOL = 1e-8
_PSD_TOL = 1e-9


def _check_hermitian(mat: np.ndarray, name: str, tol: float = _HERM_TOL) -> np.ndarray:
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    worst = float(np.max(np.abs(mat - mat.conj().T))) if mat.size else 0.0
    if worst > tol:
        raise ValueError(f"{name} is not Hermitian: max asymmetry {worst:.3e}")
    return mat


@dataclass(frozen=True)
class SldResult:
    """SLD operator with the eigensystem it was built from."""

    L: np.ndarray
    qfi: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    dropped_pairs: int


def sld_exact(rho: np.ndarray, drho: np.ndarray, eps: float | None = None) -> SldResult:
    """SLD and QFI of a state family from (rho, drho) at one parameter value.

    eps is the null-pair cutoff: eigenvalue pairs with p_j + p_k <= eps are
    skipped (default 1e-12 times the largest eigenvalue).  Eigenvalues in
    [-1e-9, 0) are clamped to zero; anything more negative is rejected as an
    invalid state.
    """
    rho = _check_hermitian(rho, "rho")
    drho = _check_hermitian(drho, "drho")
    if rho.shape != drho.shape:
        raise ValueError("rho and drho must have matching shapes")
    if abs(np.trace(rho).real - 1.0) > _HERM_TOL:
        raise ValueError(f"rho must have unit trace, got {np.trace(rho).real}")
    if abs(np.trace(drho)) > _HERM_TOL:
        raise ValueError(f"drho must be traceless, got trace {np.trace(drho)}")

    p, V = np.linalg.eigh(rho)
    if p[0] < -_PSD_TOL:
        raise ValueError(f"rho is not positive semidefinite: eigenvalue {p[0]:.3e}")
    p = np.clip(p, 0.0, None)
    if eps is None:
        eps = 1e-12 * float(p[-1])

    G = V.conj().T @ drho @ V
    denom = p[:, None] + p[None, :]
    keep = denom > eps
    ratio = np.zeros_like(G)
    np.divide(G, denom, out=ratio, where=keep)
    qfi = float(np.sum(2.0 * (np.abs(G) ** 2)[keep] / denom[keep]))
    L = V @ (2.0 * ratio * keep) @ V.conj().T
    return SldResult(
        L=L,
        qfi=qfi,
        eigenvalues=p,
        eigenvectors=V,
        dropped_pairs=int(np.count_nonzero(~keep)),
    )


def qfi_exact(rho: np.ndarray, drho: np.ndarray, eps: float | None = None) -> float:
    return sld_exact(rho, drho, eps).qfi


def qfi_numeric_derivative(state_at, lam0: float, h: float = 1e-6,
                           eps: float | None = None) -> float:
    """QFI with drho built by central difference from a lam -> rho map."""
    if h <= 0.0:
        raise ValueError("fd step must be positive")
    rho = np.asarray(state_at(lam0), dtype=complex)
    drho = (np.asarray(state_at(lam0 + h), dtype=complex)
            - np.asarray(state_at(lam0 - h), dtype=complex)) / (2.0 * h)
    return qfi_exact(rho, drho, eps)


@dataclass(frozen=True)
class ProbModel:
    """Outcome probabilities and their parameter derivatives."""

    p: np.ndarray
    dp: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        dp = np.asarray(self.dp, dtype=float)
        if p.shape != dp.shape or p.ndim != 1:
            raise ValueError("p and dp must be 1-d arrays of equal length")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "dp", dp)

    def validate(self) -> None:
        if abs(float(np.sum(self.p)) - 1.0) > 1e-10:
            raise ValueError(f"probabilities must sum to 1, got {np.sum(self.p)}")
        if abs(float(np.sum(self.dp))) > 1e-8:
            raise ValueError(f"probability derivatives must sum to 0, got {np.sum(self.dp)}")
        if float(np.min(self.p)) < -1e-12:
            raise ValueError(f"negative probability {np.min(self.p)}")


def cfi(model: ProbModel, eps: float = 1e-14) -> float:
    """Classical Fisher information sum_x dp_x^2 / p_x, skipping p_x < eps."""
    model.validate()
    keep = model.p >= eps
    return float(np.sum(model.dp[keep] ** 2 / model.p[keep]))


def sld_eigen_measurement(sld: SldResult) -> list[np.ndarray]:
    """Rank-one projectors onto the SLD eigenbasis (a QCRB-saturating measurement).

    Degenerate eigenspaces are resolved by the deterministic ordering of the
    eigensolver, so repeated calls on identical input give identical projectors.
    """
    _, vecs = np.linalg.eigh(sld.L)
    return [np.outer(vecs[:, k], vecs[:, k].conj()) for k in range(vecs.shape[1])]
