"""Inequality audits between exponent estimates.

The exact pigeonhole check is a theorem at every finite height and is decided
with certified integer arithmetic; a failure there is a hard violation. The
remaining checks compare finite-height estimates, carry an additive slack and
can only ever be soft violations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

from dioph.core import MAX_PRECISION, PointSpec, Shift, coerce_shift
from dioph.errors import PrecisionError, PreconditionError
from dioph.exponents import (
    _Descriptors,
    _form_at,
    estimate_w0,
    estimate_w0_uniform,
    estimate_w_dual,
    estimate_w_dual_uniform,
)

ORDERING_SLACK = 0.05


class Verdict(enum.Enum):
    AllPass = "AllPass"
    SoftViolations = "SoftViolations"
    HardViolation = "HardViolation"


@dataclass(frozen=True)
class CheckResult:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    slack: float
    minimal_slack: float
    exact: bool = False
    skipped: str | None = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": _json_float(self.lhs),
            "rhs": _json_float(self.rhs),
            "satisfied_with_slack": self.satisfied,
            "slack": self.slack,
            "minimal_slack": _json_float(self.minimal_slack),
            "exact": self.exact,
            "skipped": self.skipped,
        }


def _json_float(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass(frozen=True)
class TransferenceReport:
    point: PointSpec
    shift: Shift
    height: int
    checks: tuple = field(default=())

    @property
    def verdict(self) -> Verdict:
        if any(c.exact and not c.satisfied and c.skipped is None for c in self.checks):
            return Verdict.HardViolation
        if any(not c.satisfied and c.skipped is None for c in self.checks):
            return Verdict.SoftViolations
        return Verdict.AllPass

    def merged(self, other: TransferenceReport) -> TransferenceReport:
        return TransferenceReport(self.point, self.shift, self.height, self.checks + other.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "point": self.point.token(),
            "shift": self.shift.token(),
            "height": self.height,
            "verdict": self.verdict.value,
            "checks": [c.as_dict() for c in self.checks],
        }


def _at_least(name: str, lhs: float, rhs: float, slack: float) -> CheckResult:
    """Soft check of ``lhs >= rhs`` with additive slack."""
    gap = rhs - lhs
    return CheckResult(name, lhs, rhs, gap <= slack, slack, max(0.0, gap))


def _skipped(name: str, reason: str, slack: float) -> CheckResult:
    return CheckResult(name, math.nan, math.nan, True, slack, math.nan, skipped=reason)


# ---------------------------------------------------------------------------
# Exact pigeonhole


@dataclass(frozen=True)
class DirichletWitness:
    q: int | None
    bound: int
    errors: tuple  # exact or certified upper bounds on ||q x_i||, as Fractions

    @property
    def holds(self) -> bool:
        return self.q is not None


def _certified_below(desc: _Descriptors, q: int, Q: int, bits: int, max_bits: int):
    """Decide ``||q z|| < 1/Q`` exactly; returns (decision, upper bound on the distance)."""
    coeffs = (q,)
    if desc.common_denominator is not None:
        v = _form_at(desc, coeffs, None)
        err = Fraction(v.dist, v.scale)
        return err * Q < 1, err
    while True:
        v = _form_at(desc, coeffs, bits)
        if (v.dist + v.noise) * Q <= v.scale:
            return True, Fraction(v.dist + v.noise, v.scale)
        if (v.dist - v.noise) * Q >= v.scale:
            return False, Fraction(v.dist + v.noise, v.scale)
        if bits >= max_bits:
            raise PrecisionError(f"cannot decide ||q x|| < 1/{Q} at q={q} within {max_bits} bits", q=q)
        bits = min(max_bits, 2 * bits)


def check_dirichlet_exact(x: PointSpec, Q: int, *, max_bits: int = MAX_PRECISION) -> DirichletWitness:
    """Smallest ``1 <= q <= Q**n`` with ``||q x_i|| < 1/Q`` for every coordinate."""
    if Q < 1:
        raise PreconditionError("check_dirichlet_exact needs Q >= 1")
    n = x.dimension
    bound = Q**n
    descs = [_Descriptors((c,)) for c in x.coordinates]
    bits = max(128, 4 * bound.bit_length() + 64)
    for q in range(1, bound + 1):
        errs = []
        for d in descs:
            ok, err = _certified_below(d, q, Q, bits, max_bits)
            if not ok:
                break
            errs.append(err)
        else:
            return DirichletWitness(q, bound, tuple(errs))
    return DirichletWitness(None, bound, ())


def dirichlet_report(x: PointSpec, Q: int) -> TransferenceReport:
    w = check_dirichlet_exact(x, Q)
    res = CheckResult(
        "dirichlet_pigeonhole",
        float(w.q) if w.holds else math.inf,
        float(w.bound),
        w.holds,
        0.0,
        0.0 if w.holds else math.inf,
        exact=True,
    )
    return TransferenceReport(x, Shift.zero(x.dimension), Q, (res,))


# ---------------------------------------------------------------------------
# Khintchine


def khintchine_bounds(w_dual: float, n: int) -> tuple[float, float]:
    """Lower and upper bounds on the simultaneous exponent implied by the dual one."""
    return w_dual / ((n - 1) * w_dual + n), (w_dual - n + 1) / n


def check_khintchine(x: PointSpec, Q: int, slack: float = 0.15) -> TransferenceReport:
    n = x.dimension
    if n < 2:
        raise PreconditionError("Khintchine transference needs n >= 2")
    zero = Shift.zero(n)
    sim = estimate_w0(x, zero, Q)
    dual = estimate_w_dual(x, None, Q)
    names = ("khintchine_lower", "khintchine_upper")
    if sim.rational_flag or dual.rational_flag:
        checks = tuple(_skipped(nm, "infinite exponent", slack) for nm in names)
    else:
        lower, upper = khintchine_bounds(dual.tail_sup, n)
        checks = (
            _at_least(names[0], sim.tail_sup, lower, slack),
            _at_least(names[1], upper, sim.tail_sup, slack),
        )
    return TransferenceReport(x, zero, Q, checks)


# ---------------------------------------------------------------------------
# Uniform-exponent transference


def check_theorem_C(x: PointSpec, theta, Q: int, slack: float = 0.15) -> TransferenceReport:
    """Both inhomogeneous lower bounds from the homogeneous dual exponents."""
    n = x.dimension
    theta = coerce_shift(theta, n)
    sim = estimate_w0(x, theta, Q)
    sim_u = estimate_w0_uniform(x, theta, Q)
    dual = estimate_w_dual(x, None, Q)
    dual_u = estimate_w_dual_uniform(x, None, Q)
    names = ("inhomogeneous_from_uniform_dual", "uniform_inhomogeneous_from_dual")
    if any(e.rational_flag for e in (sim, sim_u, dual, dual_u)):
        checks = tuple(_skipped(nm, "infinite exponent", slack) for nm in names)
    else:
        checks = (
            _at_least(names[0], sim.tail_sup, 1.0 / dual_u.tail_inf_uniform, slack),
            _at_least(names[1], sim_u.tail_inf_uniform, 1.0 / dual.tail_sup, slack),
        )
    return TransferenceReport(x, theta, Q, checks)


def check_orderings(x: PointSpec, theta, Q: int) -> TransferenceReport:
    """Finite-height reflection of ordinary >= uniform, simultaneous and dual."""
    n = x.dimension
    theta = coerce_shift(theta, n)
    checks = []
    sim, sim_u = estimate_w0(x, theta, Q), estimate_w0_uniform(x, theta, Q)
    if sim.rational_flag or sim_u.rational_flag:
        checks.append(_skipped("ordering_simultaneous", "infinite exponent", ORDERING_SLACK))
    else:
        checks.append(_at_least("ordering_simultaneous", sim.tail_sup, sim_u.tail_inf_uniform, ORDERING_SLACK))
    if n >= 2 and theta.is_homogeneous:
        dual, dual_u = estimate_w_dual(x, None, Q), estimate_w_dual_uniform(x, None, Q)
        if dual.rational_flag or dual_u.rational_flag:
            checks.append(_skipped("ordering_dual", "infinite exponent", ORDERING_SLACK))
        else:
            checks.append(_at_least("ordering_dual", dual.tail_sup, dual_u.tail_inf_uniform, ORDERING_SLACK))
    return TransferenceReport(x, theta, Q, tuple(checks))


# ---------------------------------------------------------------------------
# Almost-everywhere floor on a curve


@dataclass(frozen=True)
class FloorSurvey:
    fraction: float
    floor: float
    count: int
    values: tuple


def check_corollary3_floor(samples, Q: int, *, tolerance: float = 0.05, required: float = 0.9) -> TransferenceReport:
    """Fraction of ``(point, shift)`` samples whose simultaneous tail sup reaches ``1/n - tolerance``."""
    samples = list(samples)
    survey = floor_survey(samples, Q, tolerance)
    point, theta = samples[0]
    res = _at_least("curve_floor_fraction", survey.fraction, required, 0.0)
    return TransferenceReport(point, coerce_shift(theta, point.dimension), Q, (res,))


def floor_survey(samples, Q: int, tolerance: float = 0.05) -> FloorSurvey:
    samples = list(samples)
    if not samples:
        raise PreconditionError("a floor survey needs at least one sample")
    n = samples[0][0].dimension
    floor = 1.0 / n - tolerance
    values = tuple(
        math.inf if (e := estimate_w0(p, t, Q)).rational_flag else e.tail_sup for p, t in samples
    )
    return FloorSurvey(sum(v >= floor for v in values) / len(values), floor, len(values), values)


# ---------------------------------------------------------------------------


def transference_report(x: PointSpec, theta, Q: int, slack: float = 0.15) -> TransferenceReport:
    """Every applicable check for one point, shift and height."""
    n = x.dimension
    theta = coerce_shift(theta, n)
    dirichlet_height = max(1, int(round(Q ** (1.0 / n))))
    report = dirichlet_report(x, dirichlet_height)
    report = TransferenceReport(x, theta, Q, report.checks)
    if n >= 2:
        report = report.merged(check_khintchine(x, Q, slack))
    report = report.merged(check_theorem_C(x, theta, Q, slack))
    return report.merged(check_orderings(x, theta, Q))
