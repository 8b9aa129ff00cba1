"""End-to-end estimation protocols and their comparison.

Two protocol shapes are supported:

* single qubit, single channel invocation (the baseline), and
* the symmetric pairwise correlated protocol: n qubits in the same product
  state, the pairwise preparation gate applied to every qubit pair, then one
  channel invocation on qubit 0.

Each protocol yields the pre-measurement state both numerically (dense, at
fixed purity) and as purity orders, so the exact eigendecomposition QFI and
the series coefficients come from the same construction.  The local
measurement scheme re-applies the preparation after the channel and measures
every qubit along the initial direction; outcomes are grouped by the sign of
qubit 0 and the number of + results among the rest, which is lossless
because the state is symmetric under any permutation of qubits 1..n-1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import BlochChannel, ChannelFamily, Unitality, svd3
from .fisher import ProbModel, cfi, qfi_exact
from .mstate import (
    PauliState,
    _check_dense_cap,
    apply_channel,
    apply_channel_derivative,
    initial_state,
    initial_state_orders,
    prep_conjugate,
    to_dense,
)
from .series import (
    BranchError,
    DEFAULT_MAX_ORDER,
    QfiSeries,
    StateOrders,
    channel_output_orders,
    qfi_orders,
    require_unital,
    sld_orders,
    sqsc_nonunital_h0,
    verify_family_flag,
)

__all__ = [
    "ProtocolSpec",
    "sqsc",
    "correlated",
    "PreparedState",
    "build_state",
    "ProtocolQfi",
    "protocol_qfi",
    "MeasurementRecord",
    "local_measurement_sim",
    "local_measurement_cfi_ungrouped",
    "measurement_cfi_lowest_order",
    "measurement_cfi_lowest_order_general",
    "GainReport",
    "compare",
    "EscherRow",
    "escher_phase_flip_demo",
    "NoGainReport",
    "nonunital_corr_equals_sqsc_check",
]


def _unit(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError(f"{name} must be a unit 3-vector")
    v = v.copy()
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class ProtocolSpec:
    """Everything needed to build one pre-measurement state."""

    kind: str
    family: ChannelFamily
    lam: float
    n: int
    r: float
    r0: np.ndarray
    c: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("sqsc", "correlated"):
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if self.kind == "sqsc" and self.n != 1:
            raise ValueError("single-qubit protocol requires n = 1")
        if self.kind == "correlated" and self.n < 2:
            raise ValueError("correlated protocol requires n >= 2")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"purity must lie in [0, 1], got {self.r}")
        object.__setattr__(self, "r0", _unit(self.r0, "r0"))
        if self.kind == "correlated":
            if self.c is None:
                raise ValueError("correlated protocol requires a control direction c")
            object.__setattr__(self, "c", _unit(self.c, "c"))
        elif self.c is not None:
            raise ValueError("single-qubit protocol takes no control direction")


def sqsc(family: ChannelFamily, lam: float, r: float, r0) -> ProtocolSpec:
    return ProtocolSpec("sqsc", family, lam, 1, r, np.asarray(r0, dtype=float))


def correlated(family: ChannelFamily, lam: float, n: int, r: float, c, r0) -> ProtocolSpec:
    return ProtocolSpec("correlated", family, lam, n, r,
                        np.asarray(r0, dtype=float), np.asarray(c, dtype=float))


@dataclass(frozen=True)
class PreparedState:
    """Dense pre-measurement state, its derivative, and its purity orders."""

    channel: BlochChannel
    rho: np.ndarray
    drho: np.ndarray
    pauli: PauliState
    orders: StateOrders


def build_state(spec: ProtocolSpec, max_order: int | None = None) -> PreparedState:
    """Prepare the channel output for a protocol spec.

    Runs initial product state -> preparation (correlated only) -> channel on
    qubit 0, once at the spec's fixed purity and once per purity order.
    """
    if max_order is None:
        max_order = min(spec.n, DEFAULT_MAX_ORDER)
    _check_dense_cap(spec.n)  # fail before any large allocation
    ch = spec.family.eval(spec.lam)
    state = initial_state(spec.n, spec.r, spec.r0)
    ordered = initial_state_orders(spec.n, spec.r0, max_order=min(spec.n, max_order))
    if spec.kind == "correlated":
        state = prep_conjugate(state, spec.c)
        ordered = prep_conjugate(ordered, spec.c)
    final = apply_channel(state, ch, 0)
    dfinal = apply_channel_derivative(state, ch, 0)
    return PreparedState(
        channel=ch,
        rho=to_dense(final),
        drho=to_dense(dfinal),
        pauli=final,
        orders=channel_output_orders(ordered, ch, 0),
    )


@dataclass(frozen=True)
class ProtocolQfi:
    exact: float
    series_estimate: float
    series: QfiSeries


def protocol_qfi(spec: ProtocolSpec, K: int = DEFAULT_MAX_ORDER,
                 eps: float | None = None) -> ProtocolQfi:
    """Exact QFI (eigendecomposition oracle) and its purity-series estimate.

    Both numbers are per channel invocation; every protocol here invokes the
    channel exactly once.
    """
    prep = build_state(spec, max_order=min(spec.n, K))
    exact = qfi_exact(prep.rho, prep.drho, eps)
    series = qfi_orders(prep.orders, sld_orders(prep.orders, K), K)
    return ProtocolQfi(exact=exact, series_estimate=series.evaluate(spec.r),
                       series=series)


# ---------------------------------------------------------------------------
# local measurement scheme for the correlated protocol
# ---------------------------------------------------------------------------

def _measured_state(spec: ProtocolSpec, lam: float) -> PauliState:
    ch = spec.family.eval(lam)
    state = initial_state(spec.n, spec.r, spec.r0)
    state = prep_conjugate(state, spec.c)
    state = apply_channel(state, ch, 0)
    return prep_conjugate(state, spec.c)  # the preparation is self-inverse


def _outcome_tensor(state: PauliState, axis: np.ndarray) -> np.ndarray:
    """Joint probabilities of per-qubit projective measurements along axis."""
    W = np.array([[1.0, axis[0], axis[1], axis[2]],
                  [1.0, -axis[0], -axis[1], -axis[2]]])
    t = state.coeffs.reshape((4,) * state.n)
    for _ in range(state.n):
        t = np.tensordot(t, W, axes=([0], [1]))
    return t


def _grouped_probs(spec: ProtocolSpec, lam: float) -> tuple[np.ndarray, np.ndarray]:
    joint = _outcome_tensor(_measured_state(spec, lam), spec.r0)
    n = spec.n
    flat = joint.reshape(2, -1)
    rest = np.arange(flat.shape[1], dtype=np.uint64)
    k_plus = (n - 1) - np.bitwise_count(rest).astype(int)
    p_plus = np.bincount(k_plus, weights=flat[0], minlength=n)
    p_minus = np.bincount(k_plus, weights=flat[1], minlength=n)
    return p_plus, p_minus


@dataclass(frozen=True)
class MeasurementRecord:
    """Grouped outcome statistics p(sign, k) and the classical Fisher information.

    k counts + results among qubits 1..n-1; the sign is qubit 0's outcome.
    """

    p_plus: np.ndarray
    p_minus: np.ndarray
    dp_plus: np.ndarray
    dp_minus: np.ndarray
    cfi: float


def local_measurement_sim(spec: ProtocolSpec, h: float = 1e-5) -> MeasurementRecord:
    """Simulate the correlated protocol's local measurement scheme.

    After the channel the preparation is applied again and every qubit is
    measured along r0.  Outcome derivatives come from a central difference
    in the channel parameter.
    """
    if spec.kind != "correlated":
        raise ValueError("the local measurement scheme is defined for correlated specs")
    if h <= 0.0:
        raise ValueError("fd step must be positive")
    p_plus, p_minus = _grouped_probs(spec, spec.lam)
    pp_hi, pm_hi = _grouped_probs(spec, spec.lam + h)
    pp_lo, pm_lo = _grouped_probs(spec, spec.lam - h)
    dp_plus = (pp_hi - pp_lo) / (2.0 * h)
    dp_minus = (pm_hi - pm_lo) / (2.0 * h)
    model = ProbModel(np.concatenate([p_plus, p_minus]),
                      np.concatenate([dp_plus, dp_minus]))
    return MeasurementRecord(p_plus=p_plus, p_minus=p_minus,
                             dp_plus=dp_plus, dp_minus=dp_minus,
                             cfi=cfi(model))


def local_measurement_cfi_ungrouped(spec: ProtocolSpec, h: float = 1e-5) -> float:
    """CFI of the same scheme over all 2^n raw outcomes (no grouping)."""
    if spec.kind != "correlated":
        raise ValueError("the local measurement scheme is defined for correlated specs")
    p = _outcome_tensor(_measured_state(spec, spec.lam), spec.r0).reshape(-1)
    hi = _outcome_tensor(_measured_state(spec, spec.lam + h), spec.r0).reshape(-1)
    lo = _outcome_tensor(_measured_state(spec, spec.lam - h), spec.r0).reshape(-1)
    return cfi(ProbModel(p, (hi - lo) / (2.0 * h)))


def measurement_cfi_lowest_order(ch: BlochChannel, n: int, c, r0) -> float:
    """Lowest-order CFI coefficient (n-1)s1^2 + s2^2 for the canonical directions.

    Requires c = B^T e1 and r0 = B^T e2 (up to sign) from the SVD of dM;
    other directions should use the general form instead.
    """
    require_unital(ch)
    if n < 2:
        raise ValueError("correlated protocol needs n >= 2")
    c = _unit(c, "c")
    r0 = _unit(r0, "r0")
    dec = svd3(ch.dM)
    if abs(abs(float(c @ dec.B[0])) - 1.0) > 1e-9 or \
            abs(abs(float(r0 @ dec.B[1])) - 1.0) > 1e-9:
        raise ValueError("directions are not the canonical pair (B^T e1, B^T e2)")
    return float((n - 1) * dec.S[0] ** 2 + dec.S[1] ** 2)


def measurement_cfi_lowest_order_general(ch: BlochChannel, n: int, c, r0) -> float:
    """Lowest-order CFI coefficient (r0^T Mdot r0)^2 + (n-1)(c^T Mdot c)^2."""
    require_unital(ch)
    if n < 2:
        raise ValueError("correlated protocol needs n >= 2")
    c = _unit(c, "c")
    r0 = _unit(r0, "r0")
    return float((r0 @ ch.dM @ r0) ** 2 + (n - 1) * (c @ ch.dM @ c) ** 2)


# ---------------------------------------------------------------------------
# protocol comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GainReport:
    """Per-invocation QFI ratio of two protocols.

    ratio_exact comes from the eigendecomposition oracle at the specs' finite
    purity; ratio_series is the truncated-series counterpart and is only
    meaningful while n r^2 stays well below one.
    """

    status: str                      # "ok" or "undefined"
    ratio_exact: float | None
    ratio_series: float | None
    gain_lo: float | None
    gain_hi: float | None
    violations: tuple[str, ...]
    qfi_a: ProtocolQfi
    qfi_b: ProtocolQfi

    def as_dict(self) -> dict:
        """JSON-ready view (series coefficients flattened to plain lists)."""
        return {
            "status": self.status,
            "ratio_exact": self.ratio_exact,
            "ratio_series": self.ratio_series,
            "gain_lo": self.gain_lo,
            "gain_hi": self.gain_hi,
            "violations": list(self.violations),
            "qfi_a": {"exact": self.qfi_a.exact,
                      "series_estimate": self.qfi_a.series_estimate,
                      "orders": [float(h) for h in self.qfi_a.series.orders]},
            "qfi_b": {"exact": self.qfi_b.exact,
                      "series_estimate": self.qfi_b.series_estimate,
                      "orders": [float(h) for h in self.qfi_b.series.orders]},
        }


def _same_family(a: ProtocolSpec, b: ProtocolSpec) -> bool:
    fa, fb = a.family, b.family
    return fa is fb or (fa.name == fb.name and fa.params == fb.params)


def compare(spec_a: ProtocolSpec, spec_b: ProtocolSpec,
            K: int = DEFAULT_MAX_ORDER, margin: float = 0.02) -> GainReport:
    """Per-invocation QFI ratio of protocol A over protocol B.

    When A is correlated, B is the single-qubit baseline and the channel is
    unital, the ratio is checked against the lowest-order gain bounds
    [n - (1 - s2^2/s1^2), n]; excursions beyond the given relative margin
    are flagged.  A zero-information baseline yields an "undefined" status
    instead of a division by zero.
    """
    if not _same_family(spec_a, spec_b) or abs(spec_a.lam - spec_b.lam) > 1e-15:
        raise ValueError("compared specs must share the channel family and parameter")
    qa = protocol_qfi(spec_a, K)
    qb = protocol_qfi(spec_b, K)

    gain_lo = gain_hi = None
    if spec_a.kind == "correlated" and spec_b.kind == "sqsc" \
            and spec_a.family.unitality is Unitality.UNITAL:
        ch = spec_a.family.eval(spec_a.lam)
        s = svd3(ch.dM).S
        if s[0] > 0.0:
            gain_lo = spec_a.n - (1.0 - float(s[1] ** 2) / float(s[0] ** 2))
            gain_hi = float(spec_a.n)

    if qb.exact <= 1e-30:
        return GainReport("undefined", None, None, gain_lo, gain_hi, (),
                          qa, qb)

    ratio_exact = qa.exact / qb.exact
    ratio_series = (qa.series_estimate / qb.series_estimate
                    if abs(qb.series_estimate) > 1e-30 else None)
    violations = []
    if gain_lo is not None:
        if ratio_exact > gain_hi * (1.0 + margin):
            violations.append(
                f"exact ratio {ratio_exact:.6g} exceeds upper gain bound {gain_hi:.6g}")
        if ratio_exact < gain_lo * (1.0 - margin):
            violations.append(
                f"exact ratio {ratio_exact:.6g} below lower gain bound {gain_lo:.6g}")
    return GainReport("ok", ratio_exact, ratio_series, gain_lo, gain_hi,
                      tuple(violations), qa, qb)


# ---------------------------------------------------------------------------
# phase-flip bound demonstration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EscherRow:
    lam: float
    r: float
    bound: float
    exact: float
    slack: float


def escher_phase_flip_demo(lams, rs) -> tuple[EscherRow, ...]:
    """Kraus-representation upper bound vs exact phase-flip QFI.

    The natural Kraus choice for a phase flip acting on a depolarized pure
    state bounds the QFI by 1/[lam(1-lam)], independent of the purity, while
    the exact single-qubit value is 4r^2/[1-(1-2lam)^2 r^2]; the bound is
    strictly loose for every r < 1.
    """
    rows = []
    for lam in np.asarray(lams, dtype=float):
        if not 0.0 < lam < 1.0:
            raise ValueError(f"the bound needs lam strictly inside (0, 1), got {lam}")
        bound = 1.0 / (lam * (1.0 - lam))
        for r in np.asarray(rs, dtype=float):
            if not 0.0 <= r < 1.0:
                raise ValueError(f"purity must lie in [0, 1), got {r}")
            exact = 4.0 * r ** 2 / (1.0 - (1.0 - 2.0 * lam) ** 2 * r ** 2)
            slack = bound - exact
            if slack <= 0.0:
                raise RuntimeError(
                    f"bound is not loose at lam={lam}, r={r}: slack {slack}")
            rows.append(EscherRow(float(lam), float(r), bound, exact, slack))
    return tuple(rows)


# ---------------------------------------------------------------------------
# non-unital channels: nothing to gain at lowest order
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoGainReport:
    qfi_sqsc: float
    qfi_corr: float
    equal: bool
    h0_closed_form: float
    h0_matches: bool
    tol: float


def nonunital_corr_equals_sqsc_check(family: ChannelFamily, lam: float, n: int,
                                     tol: float = 1e-8) -> NoGainReport:
    """Check that correlating qubits buys nothing at zero purity.

    For a parameter-dependent shift vector the lowest QFI order is the
    zeroth one, which is blind to the preparation; the exact QFI at r = 0
    must therefore agree between the correlated protocol and the single
    qubit baseline, and both must match the closed form.
    """
    if family.unitality is not Unitality.NONUNITAL_PARAM_SHIFT:
        raise BranchError(
            f"channel {family.name!r} does not have a parameter-dependent shift")
    ch = family.eval(lam)
    verify_family_flag(family, ch)
    r0 = np.array([1.0, 0.0, 0.0])
    c = np.array([0.0, 0.0, 1.0])
    q_sqsc = protocol_qfi(sqsc(family, lam, 0.0, r0), K=0).exact
    q_corr = protocol_qfi(correlated(family, lam, n, 0.0, c, r0), K=0).exact
    h0 = sqsc_nonunital_h0(ch)
    scale = max(1.0, abs(q_sqsc))
    return NoGainReport(
        qfi_sqsc=q_sqsc,
        qfi_corr=q_corr,
        equal=abs(q_sqsc - q_corr) <= tol * scale,
        h0_closed_form=h0,
        h0_matches=abs(h0 - q_sqsc) <= max(tol, 1e-7) * scale,
        tol=tol,
    )
