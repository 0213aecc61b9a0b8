"""Balls around shifted rational points, their traces on a curve, and the
dyadic disjoint / non-disjoint decomposition.

For ``q != 0``, ``p`` in Z^n and a shift ``theta`` the ball of parameter ``eps``
is ``{y : |q y + p + theta|_inf < |q|**(-1/n - eps)}``, i.e. the sup-norm ball
of radius ``|q|**(-1 - 1/n - eps)`` around ``-(p + theta)/q``. Its trace on a
Monge curve is the set of parameters ``x`` with ``f(x)`` in the ball. Traces
are computed from the exact first-coordinate interval, refined coordinate by
coordinate on monotone pieces by bisection to floating-point resolution.

Families use ``q > 0`` by default, matching the limsup set written as a
union over ``q >= s``; a ball with ``q < 0`` is the ``q > 0`` ball of the
shift ``-theta``. With ``signs="both"`` negative ``q`` are included too. The
labels ``(p, q)`` and ``(-p - 2 theta, -q)`` describe the same set when
``2 theta`` is an integer vector; such twins are merged and the ``q > 0``
label is kept.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from dioph.core import Shift, coerce_shift
from dioph.curves import CurvePatch, arc_measure_many
from dioph.errors import BudgetError, InvariantViolation, PreconditionError

QUAD_RTOL = 1e-8
BISECTION_STEPS = 64
CANDIDATE_BUDGET = 4 * 10**7

_FAULTS: set[str] = set()


@contextmanager
def inject_fault(name: str):
    """Test hook: corrupt one audit so that its failure path can be exercised."""
    _FAULTS.add(name)
    try:
        yield
    finally:
        _FAULTS.discard(name)


def set_fault(name: str | None):
    _FAULTS.clear()
    if name:
        _FAULTS.add(name)


class LemmaAuditError(InvariantViolation):
    pass


# ---------------------------------------------------------------------------
# Balls


def shift_floats(theta: Shift) -> np.ndarray:
    return np.array([float(c) for c in theta.coordinates])


def _twin_free(theta: Shift) -> bool:
    """True when ``2 theta`` is an integer vector, so that sign twins coincide."""
    for c in theta.coordinates:
        fr = c.as_fraction()
        if fr is None or (2 * fr).denominator != 1:
            return False
    return True


def ball_scale(q, n: int, eps: float):
    """``|q|**(-1/n - eps)``, the bound on ``|q y + p + theta|_inf``."""
    return np.abs(q) ** (-1.0 / n - eps)


@dataclass(frozen=True)
class ApproxBall:
    p: tuple
    q: int
    eps: float
    theta: Shift

    def __post_init__(self):
        if self.q == 0:
            raise PreconditionError("ball needs q != 0")
        if self.eps <= 0:
            raise PreconditionError("ball needs eps > 0")
        if len(self.p) != self.theta.dimension:
            raise PreconditionError("p and theta must have the same dimension")
        object.__setattr__(self, "p", tuple(int(v) for v in self.p))

    @property
    def dimension(self) -> int:
        return len(self.p)

    @property
    def scale(self) -> float:
        return float(ball_scale(self.q, self.dimension, self.eps))

    @property
    def radius(self) -> float:
        return abs(self.q) ** (-1.0 - 1.0 / self.dimension - self.eps)

    @property
    def center(self) -> np.ndarray:
        return -(np.array(self.p, dtype=float) + shift_floats(self.theta)) / self.q

    def residual(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        th = shift_floats(self.theta).reshape((-1,) + (1,) * (y.ndim - 1))
        pv = np.array(self.p, dtype=float).reshape(th.shape)
        return np.abs(self.q * y + pv + th).max(axis=0)

    def contains(self, y, factor: float = 1.0) -> np.ndarray:
        """``|q y + p + theta|_inf < factor * |q|**(-1/n - eps)``; ``y`` has shape (n, ...)."""
        return self.residual(y) < factor * self.scale

    def contains_by_center(self, y, factor: float = 1.0) -> np.ndarray:
        """Same set, via ``|y - center|_inf < factor * radius``."""
        y = np.asarray(y, dtype=float)
        c = self.center.reshape((-1,) + (1,) * (y.ndim - 1))
        return np.abs(y - c).max(axis=0) < factor * self.radius

    def with_eps(self, eps: float) -> ApproxBall:
        return ApproxBall(self.p, self.q, eps, self.theta)


# ---------------------------------------------------------------------------
# Traces


@dataclass
class TraceSet:
    """Flat list of open intervals ``(lo, hi)`` tagged by owning ball index."""

    owner: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))

    def for_owner(self, k: int) -> list[tuple[float, float]]:
        m = self.owner == k
        return list(zip(self.lo[m].tolist(), self.hi[m].tolist()))

    def nonempty(self, count: int) -> np.ndarray:
        out = np.zeros(count, dtype=bool)
        out[self.owner] = True
        return out

    def measures(self, curve: CurvePatch, count: int) -> np.ndarray:
        seg = arc_measure_many(curve, self.lo, self.hi)
        return np.bincount(self.owner, weights=seg, minlength=count)[:count]


def _bisect_level(fn, lo, hi, level):
    """Vectorised: the point in [lo, hi] where the increasing ``fn`` crosses ``level``."""
    a, b = lo.copy(), hi.copy()
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (a + b)
        below = fn(mid) < level
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


def _monotone_window(func, qv, cv, lo, hi, bound):
    """Vectorised ``{x in (lo, hi) : |q f(x) + c| < bound}`` for ``f`` monotone on each (lo, hi)."""
    g_lo = qv * func(lo) + cv
    g_hi = qv * func(hi) + cv
    sign = np.where(g_hi >= g_lo, 1.0, -1.0)
    G_lo, G_hi = sign * g_lo, sign * g_hi

    def G(x, idx):
        return sign[idx] * (qv[idx] * func(x) + cv[idx])

    new_lo, new_hi = lo.copy(), hi.copy()
    alive = (G_hi > -bound) & (G_lo < bound)
    need_left = alive & (G_lo <= -bound)
    idx = np.nonzero(need_left)[0]
    if idx.size:
        new_lo[idx] = _bisect_level(lambda x: G(x, idx), lo[idx], hi[idx], -bound[idx])
    need_right = alive & (G_hi >= bound)
    idx = np.nonzero(need_right)[0]
    if idx.size:
        new_hi[idx] = _bisect_level(lambda x: G(x, idx), lo[idx], hi[idx], bound[idx])
    alive &= new_lo < new_hi
    return alive, new_lo, new_hi


def compute_traces(curve: CurvePatch, q, c, bound) -> TraceSet:
    """Traces of the sets ``{x in I : |q f(x) + c|_inf < bound}``.

    ``q`` has shape (N,), ``c`` shape (N, n) (``p + theta`` per ball) and
    ``bound`` shape (N,). Returns the flat union-of-intervals description.
    """
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float).reshape(len(q), curve.dimension)
    bound = np.asarray(bound, dtype=float)
    a, b = float(curve.interval[0]), float(curve.interval[1])
    # First coordinate: f_1(x) = x, an explicit interval.
    centre = -c[:, 0] / q
    half = bound / np.abs(q)
    lo = np.maximum(centre - half, a)
    hi = np.minimum(centre + half, b)
    owner = np.arange(len(q))
    keep = lo < hi
    owner, lo, hi = owner[keep], lo[keep], hi[keep]
    for i in range(1, curve.dimension):
        func = curve.functions[i]
        crit = np.array(curve.critical_points(i, a, b), dtype=float)
        if crit.size:
            # Split at interior critical points so every piece is monotone.
            cuts = [lo] + [np.clip(np.full_like(lo, e), lo, hi) for e in np.sort(crit)] + [hi]
            pieces = [(k, cuts[k] < cuts[k + 1]) for k in range(len(cuts) - 1)]
            owner, lo, hi = (
                np.concatenate([owner[m] for _, m in pieces]),
                np.concatenate([cuts[k][m] for k, m in pieces]),
                np.concatenate([cuts[k + 1][m] for k, m in pieces]),
            )
        alive, lo, hi = _monotone_window(func, q[owner], c[owner, i], lo, hi, bound[owner])
        owner, lo, hi = owner[alive], lo[alive], hi[alive]
    order = np.lexsort((lo, owner))
    return TraceSet(owner[order], lo[order], hi[order])


def ball_trace(ball: ApproxBall, curve: CurvePatch, factor: float = 1.0) -> list[tuple[float, float]]:
    """Parameters ``x`` in I with ``f(x)`` in ``factor * ball``, as a list of open intervals."""
    if curve.dimension != ball.dimension:
        raise PreconditionError("ball and curve dimensions differ")
    c = np.array(ball.p, dtype=float) + shift_floats(ball.theta)
    ts = compute_traces(curve, np.array([ball.q]), c[None, :], np.array([factor * ball.scale]))
    return ts.for_owner(0)


def _measure_of(curve, intervals) -> float:
    if not intervals:
        return 0.0
    lo, hi = zip(*intervals)
    return float(arc_measure_many(curve, np.array(lo), np.array(hi)).sum())


# ---------------------------------------------------------------------------
# Trace-measure bounds


def lemma1_constants(curve: CurvePatch, q, eps: float):
    """Upper constant ``2nC r`` and lower constant ``min(1/C, |I|) r / 2`` with ``r = |q|**(-1-1/n-eps)``."""
    n = curve.dimension
    C = curve.derivative_bound
    r = np.abs(q) ** (-1.0 - 1.0 / n - eps)
    return 2 * n * C * r, 0.5 * min(1.0 / C, curve.length) * r


@dataclass(frozen=True)
class Lemma1Result:
    measure: float
    upper: float
    lower: float | None


def lemma1_bounds(ball: ApproxBall, curve: CurvePatch) -> Lemma1Result:
    """Trace measure with its two-sided bounds; raises when a bound fails."""
    trace = ball_trace(ball, curve)
    measure = _measure_of(curve, trace)
    if "lemma1" in _FAULTS:
        measure = measure * 1e6 + 1.0
    upper, lower = lemma1_constants(curve, ball.q, ball.eps)
    upper, lower = float(upper), float(lower)
    half_hit = bool(ball_trace(ball, curve, factor=0.5))
    if measure > upper * (1 + QUAD_RTOL):
        raise LemmaAuditError(f"trace measure {measure:.6e} exceeds upper bound {upper:.6e} for q={ball.q}, p={ball.p}")
    if half_hit and measure < lower * (1 - QUAD_RTOL):
        raise LemmaAuditError(f"trace measure {measure:.6e} below lower bound {lower:.6e} for q={ball.q}, p={ball.p}")
    return Lemma1Result(measure, upper, lower if half_hit else None)


# ---------------------------------------------------------------------------
# Enumeration


def _expand_ranges(starts, counts):
    """For each k, the integers ``starts[k] .. starts[k] + counts[k] - 1``; returns (index, value)."""
    counts = np.maximum(counts, 0)
    total = int(counts.sum())
    if total > CANDIDATE_BUDGET:
        raise BudgetError(f"enumeration needs {total} candidates, above the budget {CANDIDATE_BUDGET}; use a smaller t")
    idx = np.repeat(np.arange(len(starts)), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return idx, starts[idx] + offs


def _range_over(func, crit, lo, hi):
    vlo, vhi = func(lo), func(hi)
    m, M = np.minimum(vlo, vhi), np.maximum(vlo, vhi)
    for cp in crit:
        inside = (lo < cp) & (cp < hi)
        if inside.any():
            v = float(func(np.array(cp)))
            m = np.where(inside, np.minimum(m, v), m)
            M = np.where(inside, np.maximum(M, v), M)
    return m, M


def enumerate_labels(curve: CurvePatch, qs: np.ndarray, th: np.ndarray, bound_of_q) -> tuple[np.ndarray, np.ndarray]:
    """All ``p`` with possibly nonempty trace ``|q f(x) + p + th| < bound`` for positive ``qs``."""
    n = curve.dimension
    a, b = float(curve.interval[0]), float(curve.interval[1])
    qf = qs.astype(float)
    R = bound_of_q(qf)
    pad = 1e-9
    p1_min = np.floor(-qf * b - th[0] - R - pad).astype(np.int64)
    p1_max = np.ceil(-qf * a - th[0] + R + pad).astype(np.int64)
    k, p1 = _expand_ranges(p1_min, p1_max - p1_min + 1)
    qk, Rk = qf[k], R[k]
    centre = -(p1 + th[0]) / qk
    lo = np.maximum(centre - Rk / qk, a)
    hi = np.minimum(centre + Rk / qk, b)
    keep = lo < hi
    k, p1, lo, hi = k[keep], p1[keep], lo[keep], hi[keep]
    cols = [p1]
    for i in range(1, n):
        func = curve.functions[i]
        crit = curve.critical_points(i, a, b)
        m, M = _range_over(func, crit, lo, hi)
        qk, Rk = qf[k], R[k]
        pmin = np.floor(-qk * M - th[i] - Rk - pad).astype(np.int64) + 1
        pmax = np.ceil(-qk * m - th[i] + Rk + pad).astype(np.int64) - 1
        j, pi = _expand_ranges(pmin, pmax - pmin + 1)
        k, lo, hi = k[j], lo[j], hi[j]
        cols = [col[j] for col in cols] + [pi]
    return qs[k], np.stack(cols, axis=1) if cols else np.zeros((0, n), dtype=np.int64)


def _signed_labels(curve, theta: Shift, t: int, bound_of_q, signs: str = "positive"):
    """Labels (q, p) in the block, optionally over both signs with twins merged."""
    th = shift_floats(theta)
    qs = np.arange(1 << t, 1 << (t + 1), dtype=np.int64)
    q_pos, p_pos = enumerate_labels(curve, qs, th, bound_of_q)
    if signs == "positive" or _twin_free(theta):
        return q_pos, p_pos
    # |(-q) y + p + th| = |q y - p - th|: enumerate for -th and negate the labels.
    q_neg, p_neg = enumerate_labels(curve, qs, -th, bound_of_q)
    q_all = np.concatenate([q_pos, -q_neg])
    p_all = np.concatenate([p_pos, -p_neg])
    return q_all, p_all


# ---------------------------------------------------------------------------
# Dyadic families


@dataclass
class BallArrays:
    q: np.ndarray
    p: np.ndarray
    trace: TraceSet
    measure: np.ndarray


@dataclass
class DyadicBallFamily:
    """Balls of parameter ``eps`` with nonempty trace for ``2**t <= |q| < 2**(t+1)``.

    ``wide`` holds the same labels with parameter ``eps/2``; disjointness is
    decided between those wider traces.
    """

    curve: CurvePatch
    theta: Shift
    eps: float
    t: int
    q: np.ndarray
    p: np.ndarray
    trace: TraceSet
    measure: np.ndarray
    wide: BallArrays
    wide_index: np.ndarray  # position of each ball among the wide labels (identity)
    disjoint: np.ndarray
    partner: np.ndarray  # wide index of the witness partner, -1 when disjoint
    witness_x: np.ndarray  # parameter of the witness point, nan when disjoint
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.q)

    @property
    def n_disjoint(self) -> int:
        return int(self.disjoint.sum())

    @property
    def n_nondisjoint(self) -> int:
        return int((~self.disjoint).sum())

    def ball(self, k: int) -> ApproxBall:
        return ApproxBall(tuple(int(v) for v in self.p[k]), int(self.q[k]), self.eps, self.theta)

    def tag(self, k: int) -> str:
        return "disjoint" if self.disjoint[k] else "non-disjoint"

    def partner_label(self, k: int):
        j = int(self.partner[k])
        if j < 0:
            return None
        return tuple(int(v) for v in self.wide.p[j]), int(self.wide.q[j])

    def witness_point(self, k: int) -> np.ndarray | None:
        if self.disjoint[k]:
            return None
        return self.curve.evaluate(np.array([self.witness_x[k]]))[:, 0]


def _wide_overlaps(curve, wide: BallArrays, eps_half: float, theta_f: np.ndarray):
    """Best overlapping partner for each ball, with a witness parameter.

    Partners with a different ``q`` are preferred; among those the smallest
    ``|q - q'|`` wins, then the smaller index. The witness is the midpoint of
    the overlap, kept only if it passes both ball predicates.
    """
    ts = wide.trace
    N = len(wide.q)
    best = np.full(N, -1, dtype=np.int64)
    wit = np.full(N, np.nan)
    if len(ts.lo) < 2:
        return best, wit
    order = np.argsort(ts.lo, kind="stable")
    lo, hi, own = ts.lo[order], ts.hi[order], ts.owner[order]
    # Every pair (i, j), i < j in lo-order, with lo[j] < hi[i].
    end = np.searchsorted(lo, hi, side="left")
    counts = np.maximum(end - np.arange(len(lo)) - 1, 0)
    i, j = _expand_ranges(np.arange(len(lo)) + 1, counts)
    a_, b_ = own[i], own[j]
    keep = a_ != b_
    i, j, a_, b_ = i[keep], j[keep], a_[keep], b_[keep]
    x_mid = 0.5 * (lo[j] + np.minimum(hi[i], hi[j]))
    y = curve.evaluate(x_mid)
    qf = wide.q.astype(float)
    scale = ball_scale(qf, curve.dimension, eps_half)

    def inside(k):
        c = (wide.p[k] + theta_f).T
        return np.abs(qf[k] * y + c).max(axis=0) < scale[k]

    ok = inside(a_) & inside(b_)
    u = np.concatenate([a_[ok], b_[ok]])
    v = np.concatenate([b_[ok], a_[ok]])
    xw = np.concatenate([x_mid[ok], x_mid[ok]])
    dq = np.abs(wide.q[u] - wide.q[v])
    rank = np.lexsort((v, dq, dq == 0, u))
    u, v, xw = u[rank], v[rank], xw[rank]
    first = np.ones(len(u), dtype=bool)
    first[1:] = u[1:] != u[:-1]
    best[u[first]] = v[first]
    wit[u[first]] = xw[first]
    return best, wit


def enumerate_family(curve: CurvePatch, theta, eps: float, t: int, signs: str = "positive") -> DyadicBallFamily:
    """All balls of the dyadic block ``t`` meeting the curve, tagged disjoint or not.

    A ball is non-disjoint when its ``eps/2`` trace meets the ``eps/2`` trace
    of another ball of the family.
    """
    if t < 0:
        raise PreconditionError("dyadic level t must be >= 0")
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    if signs not in ("positive", "both"):
        raise PreconditionError("signs must be 'positive' or 'both'")
    n = curve.dimension
    theta = coerce_shift(theta, n)
    theta_f = shift_floats(theta)

    q, p = _signed_labels(curve, theta, t, lambda qf: ball_scale(qf, n, eps), signs)
    qf = q.astype(float)
    trace = compute_traces(curve, qf, p + theta_f, ball_scale(qf, n, eps))
    hit = trace.nonempty(len(q))
    remap = np.cumsum(hit) - 1
    q, p, qf = q[hit], p[hit], qf[hit]
    trace = TraceSet(remap[trace.owner], trace.lo, trace.hi)

    wide_trace = compute_traces(curve, qf, p + theta_f, ball_scale(qf, n, eps / 2))
    wide = BallArrays(q, p, wide_trace, wide_trace.measures(curve, len(q)))
    partner, wit = _wide_overlaps(curve, wide, eps / 2, theta_f)
    family = DyadicBallFamily(
        curve=curve,
        theta=theta,
        eps=eps,
        t=t,
        q=q,
        p=p,
        trace=trace,
        measure=trace.measures(curve, len(q)),
        wide=wide,
        wide_index=np.arange(len(q)),
        disjoint=partner < 0,
        partner=partner,
        witness_x=wit,
    )
    family.stats = {"balls": len(q)}
    return family


# ---------------------------------------------------------------------------
# Audits


@dataclass(frozen=True)
class Lemma1Audit:
    t: int
    checked: int
    lower_checked: int
    upper: np.ndarray
    lower: np.ndarray  # nan where the half-ball trace is empty
    violations: tuple  # (index, kind, measure, bound)

    @property
    def ok(self) -> bool:
        return not self.violations


def lemma1_audit(family: DyadicBallFamily, raise_on_violation: bool = False) -> Lemma1Audit:
    curve, n = family.curve, family.curve.dimension
    qf = family.q.astype(float)
    upper, lower = lemma1_constants(curve, qf, family.eps)
    scale = ball_scale(qf, n, family.eps)
    half_trace = compute_traces(curve, qf, family.p + shift_floats(family.theta), 0.5 * scale)
    half_hit = half_trace.nonempty(len(qf))
    measure = family.measure * (1e6 if "lemma1" in _FAULTS else 1.0) + (1.0 if "lemma1" in _FAULTS else 0.0)
    viol = []
    for k in np.nonzero(measure > upper * (1 + QUAD_RTOL))[0]:
        viol.append((int(k), "upper", float(measure[k]), float(upper[k])))
    for k in np.nonzero(half_hit & (measure < lower * (1 - QUAD_RTOL)))[0]:
        viol.append((int(k), "lower", float(measure[k]), float(lower[k])))
    audit = Lemma1Audit(
        family.t, len(qf), int(half_hit.sum()), upper, np.where(half_hit, lower, np.nan), tuple(viol)
    )
    if raise_on_violation and viol:
        k, kind, m, bnd = viol[0]
        raise LemmaAuditError(
            f"{len(viol)} trace-measure bound violations at t={family.t}; first: q={int(family.q[k])}, "
            f"p={family.p[k].tolist()}, {kind} bound {bnd:.6e}, measure {m:.6e}"
        )
    return audit


def lemma2_constant(curve: CurvePatch) -> float:
    C = curve.derivative_bound
    return 4 * curve.dimension * C / min(1.0 / C, curve.length)


@dataclass(frozen=True)
class Lemma2Audit:
    t: int
    checked: int
    containment_failures: tuple  # q values whose eps-trace is not inside the half eps/2-trace
    measure_failures: tuple
    containment_height: float  # |q| from which ball containment holds: 2**(2/eps)

    @property
    def ok(self) -> bool:
        return not self.containment_failures and not self.measure_failures


def _contained(inner: list, outer: list, tol: float = 1e-15) -> bool:
    for lo, hi in inner:
        if not any(o_lo - tol <= lo and hi <= o_hi + tol for o_lo, o_hi in outer):
            return False
    return True


def lemma2_audit(family: DyadicBallFamily, height_threshold: float | None = None) -> Lemma2Audit:
    """Containment of each eps-trace in the half-size eps/2-trace, and the measure comparison.

    Only balls with ``|q| > height_threshold`` (default ``2/eps``) are checked.
    """
    curve, n, eps = family.curve, family.curve.dimension, family.eps
    thr = 2.0 / eps if height_threshold is None else height_threshold
    sel = np.nonzero(np.abs(family.q) > thr)[0]
    qf = family.q[sel].astype(float)
    c = family.p[sel] + shift_floats(family.theta)
    half_wide = compute_traces(curve, qf, c, 0.5 * ball_scale(qf, n, eps / 2))
    K = lemma2_constant(curve)
    wide_measure = family.wide.measure[family.wide_index[sel]]
    bad_contain, bad_measure = [], []
    outer_by = {}
    for o, lo, hi in zip(half_wide.owner.tolist(), half_wide.lo.tolist(), half_wide.hi.tolist()):
        outer_by.setdefault(o, []).append((lo, hi))
    inner_by = {}
    sel_pos = {int(k): i for i, k in enumerate(sel)}
    for o, lo, hi in zip(family.trace.owner.tolist(), family.trace.lo.tolist(), family.trace.hi.tolist()):
        if o in sel_pos:
            inner_by.setdefault(sel_pos[o], []).append((lo, hi))
    for i, k in enumerate(sel):
        if not _contained(inner_by.get(i, []), outer_by.get(i, [])):
            bad_contain.append(int(family.q[k]))
        m_e = family.measure[k]
        if wide_measure[i] > 0 and m_e > K * abs(qf[i]) ** (-eps / 2) * wide_measure[i] * (1 + QUAD_RTOL):
            bad_measure.append(int(family.q[k]))
    return Lemma2Audit(family.t, len(sel), tuple(bad_contain), tuple(bad_measure), 2.0 ** (2.0 / eps))


# ---------------------------------------------------------------------------
# Disjoint-sum decay


@dataclass(frozen=True)
class DecayRow:
    t: int
    total: float
    bound: float
    n_disjoint: int
    n_nondisjoint: int

    @property
    def within_bound(self) -> bool:
        return self.total <= self.bound


@dataclass(frozen=True)
class DecayResult:
    rows: tuple
    slope: float
    constant: float
    eps: float

    @property
    def all_within_bound(self) -> bool:
        return all(r.within_bound for r in self.rows)


def decay_constant(curve: CurvePatch) -> float:
    """``4nC / min(1/C, |I|)`` times the arc measure of the whole curve."""
    from dioph.curves import arc_measure

    return lemma2_constant(curve) * arc_measure(curve)


def disjoint_sum(family: DyadicBallFamily) -> float:
    return float(family.measure[family.disjoint].sum())


def fit_slope(ts, values) -> float:
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(values, dtype=float)
    keep = vals > 0
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(ts[keep], np.log2(vals[keep]), 1)[0])


def disjoint_sum_decay(
    curve: CurvePatch, theta, eps: float, t_range, families=None, signs: str = "positive"
) -> DecayResult:
    """Per-level disjoint sums, the bound ``K 2**(-t eps/2)`` and the fitted log2-slope."""
    t_range = list(t_range)
    for t in t_range:
        if not 2**t > 2 / eps:
            raise PreconditionError(f"level t={t} does not satisfy 2^t > 2/eps")
    K = decay_constant(curve)
    rows = []
    for t in t_range:
        fam = families[t] if families is not None else enumerate_family(curve, theta, eps, t, signs)
        rows.append(DecayRow(t, disjoint_sum(fam), K * 2.0 ** (-t * eps / 2), fam.n_disjoint, fam.n_nondisjoint))
    slope = fit_slope([r.t for r in rows], [r.total for r in rows])
    return DecayResult(tuple(rows), slope, K, eps)


# ---------------------------------------------------------------------------
# Non-disjoint dichotomy


def crossover_level(n: int, eps: float) -> int:
    """Smallest t with ``2 * 2**(t(-1/n - eps/2)) < 2**((t+2)(-1/n - eps/3))``."""
    a, b = 1.0 / n + eps / 2, 1.0 / n + eps / 3
    t = math.floor((1 + 2 * b) / (a - b))
    while not (1 - t * a < -(t + 2) * b):
        t += 1
    while t > 0 and 1 - (t - 1) * a < -(t + 1) * b:
        t -= 1
    return t


@dataclass(frozen=True)
class DichotomyRecord:
    t: int
    q: int
    p: tuple
    partner_q: int
    partner_p: tuple
    q_diff: int
    p_diff: tuple
    witness: tuple
    combination: float
    combination_bound: float
    classified: bool
    branch: str | None  # "small-exponent" (lands in the eps/3 set) or "repeated-pair"

    @property
    def combination_ok(self) -> bool:
        return self.combination < self.combination_bound

    @property
    def height_ok(self) -> bool:
        return 0 < abs(self.q_diff) <= 2 ** (self.t + 2)

    def normalized_pair(self) -> tuple:
        """``(p'', q'')`` with ``q'' > 0``."""
        if self.q_diff < 0:
            return tuple(-v for v in self.p_diff), -self.q_diff
        return self.p_diff, self.q_diff


def nondisjoint_dichotomy(family: DyadicBallFamily) -> list[DichotomyRecord]:
    """Difference-vector records for every non-disjoint ball."""
    n, eps, t = family.curve.dimension, family.eps, family.t
    bound = 2.0 * 2.0 ** (t * (-1.0 / n - eps / 2))
    threshold = crossover_level(n, eps)
    out = []
    for k in np.nonzero(~family.disjoint)[0]:
        k = int(k)
        j = int(family.partner[k])
        q, qp = int(family.q[k]), int(family.wide.q[j])
        p = tuple(int(v) for v in family.p[k])
        pp = tuple(int(v) for v in family.wide.p[j])
        q2 = q - qp
        if q2 == 0:
            raise InvariantViolation(f"non-disjoint partner shares q={q} at t={t}")
        p2 = tuple(u - v for u, v in zip(p, pp))
        y = family.witness_point(k)
        combo = float(np.abs(q2 * y + np.array(p2, dtype=float)).max())
        classified = t >= threshold
        branch = None
        if classified:
            branch = "small-exponent" if combo < abs(q2) ** (-1.0 / n - eps / 3) else "repeated-pair"
        out.append(
            DichotomyRecord(t, q, p, qp, pp, q2, p2, tuple(float(v) for v in y), combo, bound, classified, branch)
        )
    return out


@dataclass(frozen=True)
class RepeatedPair:
    pair: tuple  # (p'', q'') with q'' > 0
    levels: tuple
    longest_run: int
    rational_point: tuple  # -p''/q'' as Fractions
    on_curve: bool | None


def _longest_run(levels) -> int:
    best = run = 0
    prev = None
    for t in levels:
        run = run + 1 if prev is not None and t == prev + 1 else 1
        best = max(best, run)
        prev = t
    return best


def repeated_pairs(records, curve: CurvePatch | None = None, min_run: int = 3) -> list[RepeatedPair]:
    """Difference pairs recurring over at least ``min_run`` consecutive levels.

    A pair ``(p'', q'')`` that keeps satisfying the combination bound as t grows
    forces ``q'' y + p'' = 0``, i.e. a rational point ``-p''/q''``; when a curve
    with polynomial coordinates is given, membership of that point on the
    curve is decided exactly.
    """
    levels: dict = {}
    for r in records:
        levels.setdefault(r.normalized_pair(), set()).add(r.t)
    out = []
    for pair, ts in sorted(levels.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        ts = sorted(ts)
        run = _longest_run(ts)
        if run < min_run:
            continue
        p2, q2 = pair
        point = tuple(Fraction(-v, q2) for v in p2)
        on_curve = None
        if curve is not None:
            vals = curve.exact_point(point[0])
            if vals is not None:
                a, b = curve.interval
                on_curve = a <= point[0] <= b and tuple(vals) == point
        out.append(RepeatedPair(pair, tuple(ts), run, point, on_curve))
    return out


# ---------------------------------------------------------------------------
# Independent oracle for classification soundness


def grid_overlap_oracle(family: DyadicBallFamily, points: int = 200_000) -> set[int]:
    """Wide-ball indices whose eps/2 ball shares a dense-grid curve point with another wide ball.

    Works directly from the ball predicates at sampled curve points, not
    from computed traces.
    """
    curve, n = family.curve, family.curve.dimension
    a, b = float(curve.interval[0]), float(curve.interval[1])
    xs = np.linspace(a, b, points)
    ys = curve.evaluate(xs)
    th = shift_floats(family.theta)
    wide = family.wide
    scale = ball_scale(wide.q.astype(float), n, family.eps / 2)
    hits: dict[int, list[int]] = {}
    for k in range(len(wide.q)):
        # Candidate grid points from the first-coordinate window, checked by the full predicate.
        qk = float(wide.q[k])
        centre = -(wide.p[k][0] + th[0]) / qk
        half = scale[k] / abs(qk)
        i0 = max(0, int(np.searchsorted(xs, centre - half)) - 1)
        i1 = min(points, int(np.searchsorted(xs, centre + half)) + 1)
        if i0 >= i1:
            continue
        seg = ys[:, i0:i1]
        ok = np.abs(qk * seg + (wide.p[k] + th)[:, None]).max(axis=0) < scale[k]
        for i in (np.nonzero(ok)[0] + i0).tolist():
            hits.setdefault(i, []).append(k)
    shared = set()
    for owners in hits.values():
        if len(owners) > 1:
            shared.update(owners)
    return shared
