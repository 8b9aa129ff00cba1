"""Bloch-sphere representation of single-qubit channels.

A qubit state is (I + r * u.sigma)/2 with purity r and unit direction u;
a channel acts affinely on the Bloch vector, u -> r*M@u + d, where M is a
real 3x3 matrix and d a real shift vector.  A channel family maps a scalar
parameter to (M, d) together with the parameter derivatives (dM, dd).

Physicality constraints enforced here: |d| <= 1, and |d| = 1 forces M = 0.
Complete positivity of user-supplied families is NOT checked; that guarantee
is the caller's.  Builtin families are completely positive by construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .expr import compile_expr

__all__ = [
    "Unitality",
    "BlochChannel",
    "ValidationReport",
    "SvdDecomp",
    "ChannelFamily",
    "DomainError",
    "validate",
    "apply_bloch",
    "svd3",
    "fd_derivative",
    "builtin",
    "family_from_callables",
    "classify_unitality",
    "BUILTIN_NAMES",
]

DEFAULT_TOL = 1e-9
_FLAG_TOL = 1e-12  # numerical threshold for "identically zero" d / dd


class DomainError(ValueError):
    """Parameter value outside a channel family's domain."""


class Unitality(enum.Enum):
    UNITAL = "unital"
    NONUNITAL_PARAM_SHIFT = "nonunital_param_shift"
    NONUNITAL_CONST_SHIFT = "nonunital_const_shift"


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3, got shape {a.shape}")
    a.flags.writeable = False
    return a


def _as_vector(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {a.shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BlochChannel:
    """A single-qubit channel at one parameter value, plus derivatives."""

    M: np.ndarray
    d: np.ndarray
    dM: np.ndarray
    dd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "M", _as_matrix(self.M, "M"))
        object.__setattr__(self, "d", _as_vector(self.d, "d"))
        object.__setattr__(self, "dM", _as_matrix(self.dM, "dM"))
        object.__setattr__(self, "dd", _as_vector(self.dd, "dd"))


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    failures: tuple[tuple[str, float], ...]

    def __bool__(self) -> bool:
        return self.passed


def validate(channel: BlochChannel, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check the physicality constraints on a Bloch channel.

    Reports (never raises): |d| <= 1 + tol, the implication |d| = 1 => M = 0,
    and finiteness of all entries.  Each violated constraint is listed with
    the magnitude of the violation.
    """
    failures: list[tuple[str, float]] = []
    for name, arr in (("M", channel.M), ("d", channel.d),
                      ("dM", channel.dM), ("dd", channel.dd)):
        if not np.all(np.isfinite(arr)):
            failures.append((f"{name} finite", float(np.sum(~np.isfinite(arr)))))
    if not failures:
        dnorm = float(np.linalg.norm(channel.d))
        if dnorm > 1.0 + tol:
            failures.append(("|d| <= 1", dnorm - 1.0))
        elif dnorm > 1.0 - tol:
            mmax = float(np.max(np.abs(channel.M)))
            if mmax > tol:
                failures.append(("|d| = 1 requires M = 0", mmax))
    return ValidationReport(passed=not failures, failures=tuple(failures))


def apply_bloch(channel: BlochChannel, r: float, r_i: np.ndarray) -> np.ndarray:
    """Map a Bloch vector of purity r and unit direction r_i through the channel."""
    r_i = np.asarray(r_i, dtype=float)
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"purity must lie in [0, 1], got {r}")
    if abs(np.linalg.norm(r_i) - 1.0) > DEFAULT_TOL:
        raise ValueError(f"r_i must be a unit vector, |r_i| = {np.linalg.norm(r_i)}")
    return r * (channel.M @ r_i) + channel.d


@dataclass(frozen=True)
class SvdDecomp:
    """Deterministic SVD of a real 3x3 matrix, input = A @ diag(S) @ B.

    S is sorted descending; the sign ambiguity is resolved by forcing the
    largest-magnitude entry of each right-singular vector (row of B) to be
    positive.  e1, e2, e3 are the canonical axes carrying s1, s2, s3 in the
    diagonal frame, so the principal input direction for s1 is B.T @ e1 and
    the corresponding output direction is A @ e1.
    """

    A: np.ndarray
    S: np.ndarray
    B: np.ndarray
    e1: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    e2: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    e3: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def reconstruct(self) -> np.ndarray:
        return self.A @ np.diag(self.S) @ self.B


def svd3(M: np.ndarray) -> SvdDecomp:
    """SVD of a real 3x3 matrix with a fixed sign/ordering convention."""
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3) or not np.all(np.isfinite(M)):
        raise ValueError("svd3 requires a finite 3x3 real matrix")
    U, s, Vh = np.linalg.svd(M)
    for i in range(3):
        j = int(np.argmax(np.abs(Vh[i])))
        if Vh[i, j] < 0.0:
            Vh[i] = -Vh[i]
            U[:, i] = -U[:, i]
    for a in (U, s, Vh):
        a.flags.writeable = False
    return SvdDecomp(A=U, S=s, B=Vh)


def fd_derivative(
    value: Callable[[float], tuple[np.ndarray, np.ndarray]],
    lam0: float,
    h: float = 1e-6,
    domain: tuple[float, float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference derivative of a (M, d) family at lam0."""
    if h <= 0.0:
        raise ValueError("fd step must be positive")
    if domain is not None:
        lo, hi = domain
        if lam0 - h < lo - 1e-12 or lam0 + h > hi + 1e-12:
            raise DomainError(
                f"central difference at {lam0} with h={h} leaves domain [{lo}, {hi}]"
            )
    Mp, dp = value(lam0 + h)
    Mm, dm = value(lam0 - h)
    dM = (np.asarray(Mp, dtype=float) - np.asarray(Mm, dtype=float)) / (2.0 * h)
    dd = (np.asarray(dp, dtype=float) - np.asarray(dm, dtype=float)) / (2.0 * h)
    return dM, dd


def classify_unitality(channel: BlochChannel, tol: float = _FLAG_TOL) -> Unitality:
    """Classify one channel evaluation by the magnitudes of d and dd."""
    if np.linalg.norm(channel.d) < tol and np.linalg.norm(channel.dd) < tol:
        return Unitality.UNITAL
    if np.linalg.norm(channel.dd) < tol:
        return Unitality.NONUNITAL_CONST_SHIFT
    return Unitality.NONUNITAL_PARAM_SHIFT


@dataclass(frozen=True)
class ChannelFamily:
    """A parameterized channel: lam -> BlochChannel over a closed domain."""

    name: str
    unitality: Unitality
    domain: tuple[float, float]
    value: Callable[[float], tuple[np.ndarray, np.ndarray]]
    deriv: Callable[[float], tuple[np.ndarray, np.ndarray]] | None = None
    fd_step: float = 1e-6
    params: dict = field(default_factory=dict)

    def contains(self, lam: float) -> bool:
        lo, hi = self.domain
        return lo - 1e-12 <= lam <= hi + 1e-12

    def eval(self, lam: float) -> BlochChannel:
        if not self.contains(lam):
            raise DomainError(
                f"lambda={lam} outside domain {list(self.domain)} of channel {self.name!r}"
            )
        M, d = self.value(lam)
        if self.deriv is not None:
            dM, dd = self.deriv(lam)
        else:
            dM, dd = fd_derivative(self.value, lam, self.fd_step, domain=self.domain)
        return BlochChannel(M, d, dM, dd)


def _phase_shift_family() -> ChannelFamily:
    def value(lam):
        c, s = math.cos(lam), math.sin(lam)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), np.zeros(3)

    def deriv(lam):
        c, s = math.cos(lam), math.sin(lam)
        return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]]), np.zeros(3)

    return ChannelFamily("phase_shift", Unitality.UNITAL, (-2.0 * math.pi, 2.0 * math.pi),
                         value, deriv)


def _phase_flip_family() -> ChannelFamily:
    def value(lam):
        return np.diag([1.0 - 2.0 * lam, 1.0 - 2.0 * lam, 1.0]), np.zeros(3)

    def deriv(lam):
        return np.diag([-2.0, -2.0, 0.0]), np.zeros(3)

    return ChannelFamily("phase_flip", Unitality.UNITAL, (0.0, 1.0), value, deriv)


def _depolarizing_family() -> ChannelFamily:
    def value(lam):
        return lam * np.eye(3), np.zeros(3)

    def deriv(lam):
        return np.eye(3), np.zeros(3)

    return ChannelFamily("depolarizing", Unitality.UNITAL, (0.0, 1.0), value, deriv)


# Keep the gad parameter strictly below 1 so dM stays finite on the domain.
_GAD_LAM_MAX = 1.0 - 1e-6


def _gad_family(p: float) -> ChannelFamily:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"gad excitation probability p must lie in [0, 1], got {p}")
    shift = 2.0 * p - 1.0

    def value(lam):
        root = math.sqrt(1.0 - lam)
        return (np.diag([root, root, 1.0 - lam]),
                np.array([0.0, 0.0, lam * shift]))

    def deriv(lam):
        droot = -0.5 / math.sqrt(1.0 - lam)
        return (np.diag([droot, droot, -1.0]),
                np.array([0.0, 0.0, shift]))

    flag = Unitality.UNITAL if shift == 0.0 else Unitality.NONUNITAL_PARAM_SHIFT
    return ChannelFamily("gad", flag, (0.0, _GAD_LAM_MAX), value, deriv, params={"p": p})


def _pauli_family(lam_on: str, **fixed: float) -> ChannelFamily:
    """Pauli channel with one error probability designated as the parameter.

    The two remaining non-identity probabilities are fixed; the identity
    probability absorbs the rest.  Example: lam_on="z", px=0, py=0 is the
    phase-flip channel.
    """
    lam_on = lam_on.lower()
    if lam_on not in ("x", "y", "z"):
        raise ValueError(f"pauli lam_on must be one of x, y, z, got {lam_on!r}")
    others = [a for a in ("x", "y", "z") if a != lam_on]
    probs = {a: float(fixed.pop(f"p{a}", 0.0)) for a in others}
    if fixed:
        raise ValueError(f"unknown pauli parameters: {sorted(fixed)}")
    if any(v < 0.0 for v in probs.values()) or sum(probs.values()) > 1.0:
        raise ValueError(f"fixed pauli probabilities invalid: {probs}")

    def value(lam):
        p = dict(probs)
        p[lam_on] = lam
        m = np.diag([1.0 - 2.0 * (p["y"] + p["z"]),
                     1.0 - 2.0 * (p["x"] + p["z"]),
                     1.0 - 2.0 * (p["x"] + p["y"])])
        return m, np.zeros(3)

    def deriv(lam):
        dm = np.diag([0.0 if lam_on == "x" else -2.0,
                      0.0 if lam_on == "y" else -2.0,
                      0.0 if lam_on == "z" else -2.0])
        return dm, np.zeros(3)

    hi = 1.0 - sum(probs.values())
    return ChannelFamily("pauli", Unitality.UNITAL, (0.0, hi), value, deriv,
                         params={"lam_on": lam_on, **{f"p{a}": probs[a] for a in others}})


def _custom_diag_family(mx: str, my: str, mz: str,
                        domain: tuple[float, float] = (0.0, 1.0),
                        fd_step: float = 1e-6) -> ChannelFamily:
    """Unital diagonal family from three expressions in the parameter.

    Only the Bloch constraints are checked at evaluation time; complete
    positivity is the caller's responsibility.
    """
    fns = [compile_expr(src) for src in (mx, my, mz)]

    def value(lam):
        return np.diag([fn(lam) for fn in fns]), np.zeros(3)

    return ChannelFamily("custom_diag", Unitality.UNITAL, tuple(domain), value,
                         deriv=None, fd_step=fd_step,
                         params={"mx": mx, "my": my, "mz": mz})


BUILTIN_NAMES = ("phase_shift", "phase_flip", "depolarizing", "gad", "pauli",
                 "custom_diag")


def builtin(name: str, **params) -> ChannelFamily:
    """Construct a builtin channel family by name.

    phase_shift     rotation about z through the parameter angle
    phase_flip      M = diag(1-2*lam, 1-2*lam, 1)
    depolarizing    M = lam * I
    gad             generalized amplitude damping; takes p (excitation prob.)
    pauli           takes lam_on plus fixed probabilities for the other two
    custom_diag     takes mx, my, mz expressions and optional domain, fd_step
    """
    if name == "pauli":
        return _pauli_family(params.pop("lam_on", "z"), **params)
    if name == "custom_diag":
        return _custom_diag_family(**params)
    if name == "phase_shift":
        fam = _phase_shift_family()
    elif name == "phase_flip":
        fam = _phase_flip_family()
    elif name == "depolarizing":
        fam = _depolarizing_family()
    elif name == "gad":
        fam = _gad_family(float(params.pop("p", 1.0)))
    else:
        raise ValueError(f"unknown channel name {name!r}; choose from {BUILTIN_NAMES}")
    if params:
        raise ValueError(f"unexpected parameters for {name}: {sorted(params)}")
    return fam


def family_from_callables(
    name: str,
    value: Callable[[float], tuple[np.ndarray, np.ndarray]],
    domain: tuple[float, float],
    deriv: Callable[[float], tuple[np.ndarray, np.ndarray]] | None = None,
    unitality: Unitality | None = None,
    fd_step: float = 1e-6,
) -> ChannelFamily:
    """Wrap user callables as a channel family.

    Derivatives default to central differences with the given step.  If the
    unitality flag is not supplied it is inferred by probing the family at a
    handful of interior points.
    """
    fam = ChannelFamily(name, Unitality.UNITAL, tuple(domain), value, deriv,
                        fd_step=fd_step)
    if unitality is None:
        lo, hi = fam.domain
        pad = max(fd_step * 2.0, (hi - lo) * 1e-6)
        samples = np.linspace(lo + pad, hi - pad, 7)
        flags = {classify_unitality(fam.eval(lam)) for lam in samples}
        if flags == {Unitality.UNITAL}:
            unitality = Unitality.UNITAL
        elif Unitality.NONUNITAL_PARAM_SHIFT in flags:
            unitality = Unitality.NONUNITAL_PARAM_SHIFT
        else:
            unitality = Unitality.NONUNITAL_CONST_SHIFT
    return ChannelFamily(name, unitality, fam.domain, value, deriv, fd_step=fd_step)
