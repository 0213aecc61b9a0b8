"""Finite-height estimators for simultaneous and dual Diophantine exponents.

A scan evaluates ``max_i ||L_i(q)||`` for every integer multiplier ``q`` up to a
height ``Q``, where each ``L_i`` is an integer combination of exact coordinate
descriptors plus a shift. The bulk pass is fixed-point integer arithmetic on
numpy object arrays: a descriptor ``z`` is replaced by ``floor(z * 2**F)`` and
the rounding error of a combination with coefficients ``c`` is strictly below
``sum |c|`` units. Entries whose distance is not comfortably above that noise
are re-evaluated one by one at higher precision, or proven to be exact zeros
through descriptor arithmetic. When every descriptor is rational with a modest
common denominator the scan is exact and noise-free.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import gmpy2
import numpy as np

from dioph.core import (
    DEFAULT_PRECISION,
    MAX_PRECISION,
    ApproxRecord,
    PointSpec,
    RealScalar,
    Shift,
    coerce_shift,
    simultaneous_zero_set,
)
from dioph.errors import BudgetError, PrecisionError, PreconditionError

GUARD_BITS = 32
DUAL_BOX_LIMIT = 10**9
DUAL_VECTOR_BUDGET = 2 * 10**7
_CHUNK = 1 << 17
_LOG2 = np.frompyfunc(math.log2, 1, 1)


class ExponentKind(enum.Enum):
    SimOrdinary = "SimOrdinary"
    SimUniform = "SimUniform"
    DualOrdinary = "DualOrdinary"
    DualUniform = "DualUniform"

    @property
    def is_dual(self) -> bool:
        return self in (ExponentKind.DualOrdinary, ExponentKind.DualUniform)

    @property
    def is_uniform(self) -> bool:
        return self in (ExponentKind.SimUniform, ExponentKind.DualUniform)


@dataclass(frozen=True)
class ExponentEstimate:
    kind: ExponentKind
    shift: Shift
    height_max: int
    running_sup: float
    tail_sup: float
    tail_inf_uniform: float | None
    records: tuple
    rational_flag: bool
    dimension: int
    precision_bits: int
    uniform_profile: tuple = field(default=())

    @property
    def value(self) -> float:
        """The headline estimate: tail sup for ordinary kinds, tail inf for uniform ones."""
        if self.rational_flag:
            return math.inf
        return self.tail_inf_uniform if self.kind.is_uniform else self.tail_sup


# ---------------------------------------------------------------------------
# Exact evaluation of a single linear form


def _symbolic(coeffs, descriptors, nearest: int):
    """Exact residual ``sum c_j z_j - nearest`` as (rational part, {radicand: coeff})."""
    rat = Fraction(-nearest)
    irr: dict[int, Fraction] = {}
    for c, d in zip(coeffs, descriptors):
        r, s, rad = d.quadratic_parts()
        rat += c * r
        if s:
            irr[rad] = irr.get(rad, Fraction(0)) + c * s
    return rat, {k: v for k, v in irr.items() if v}


def _negate(sym):
    rat, irr = sym
    return -rat, {k: -v for k, v in irr.items()}


def _abs_equal(a, b) -> bool:
    return a == b or a == _negate(b)


class _Descriptors:
    """Cache of ``floor(z * 2**bits)`` for a tuple of descriptors."""

    def __init__(self, descriptors):
        self.items = tuple(descriptors)
        self._cache: dict[int, tuple] = {}
        fracs = [d.as_fraction() for d in self.items]
        self.common_denominator = None
        if all(f is not None for f in fracs):
            den = 1
            for f in fracs:
                den = den * f.denominator // math.gcd(den, f.denominator)
            self.common_denominator = den
            self._fracs = fracs

    def scaled(self, bits: int) -> tuple:
        got = self._cache.get(bits)
        if got is None:
            got = tuple(d.scaled_floor(bits) for d in self.items)
            self._cache[bits] = got
        return got

    def exact_numerators(self) -> tuple:
        den = self.common_denominator
        return tuple(f.numerator * (den // f.denominator) for f in self._fracs)


@dataclass
class _FormValue:
    """``|L(q)|`` to within ``noise / scale``, with ``nearest`` the integer attaining it."""

    dist: int
    noise: int
    scale: int
    nearest: int
    exact_zero: bool = False


def _form_at(desc: _Descriptors, coeffs, bits: int | None) -> _FormValue:
    """Evaluate one form; ``bits=None`` selects the exact rational path."""
    if bits is None:
        scale = desc.common_denominator
        total = sum(c * z for c, z in zip(coeffs, desc.exact_numerators()))
        noise = 0
    else:
        scale = 1 << bits
        total = sum(c * z for c, z in zip(coeffs, desc.scaled(bits)))
        noise = sum(abs(c) for c in coeffs)
    nearest = (2 * total + scale) // (2 * scale)
    dist = abs(total - nearest * scale)
    return _FormValue(dist, noise, scale, nearest, bits is None and dist == 0)


def _refine_form(desc: _Descriptors, coeffs, start_bits: int, max_bits: int, rel_bits: int, q_label) -> _FormValue:
    """Evaluate until ``noise <= dist * 2**-rel_bits`` or the form is proven zero."""
    if desc.common_denominator is not None and desc.common_denominator.bit_length() <= max_bits:
        return _form_at(desc, coeffs, None)
    bits = start_bits
    while True:
        v = _form_at(desc, coeffs, bits)
        if v.dist <= v.noise and _symbolic(coeffs, desc.items, v.nearest) == (Fraction(0), {}):
            v.exact_zero = True
            v.dist = 0
            v.noise = 0
            return v
        if v.dist > v.noise << rel_bits and v.scale - 2 * v.dist > 2 * v.noise:
            return v
        if bits >= max_bits:
            raise PrecisionError(
                f"resolving the approximation error at q={q_label} needs more than {max_bits} bits", q=q_label
            )
        need = v.noise.bit_length() + rel_bits + 2 - max(v.dist, 1).bit_length()
        bits = min(max_bits, bits + max(64, need))


# ---------------------------------------------------------------------------
# Scan plans


class _Plan:
    """An ordered family of multipliers and the forms they act on."""

    def __init__(self, forms: list[_Descriptors], heights: np.ndarray, dual: bool):
        self.forms = forms
        self.heights = heights
        self.dual = dual

    def __len__(self):
        return len(self.heights)

    def coeffs(self, k: int) -> list[tuple]:
        raise NotImplementedError

    def label(self, k: int):
        raise NotImplementedError

    def columns(self, start: int, stop: int) -> list:
        """Integer coefficient columns (object dtype) for items ``start:stop``, shift column excluded."""
        raise NotImplementedError


class _SimPlan(_Plan):
    def __init__(self, x: PointSpec, theta: Shift, Q: int):
        order = np.empty(2 * Q, dtype=np.int64)
        order[0::2] = np.arange(1, Q + 1)
        order[1::2] = -np.arange(1, Q + 1)
        self.order = order
        forms = [_Descriptors((xc, tc)) for xc, tc in zip(x.coordinates, theta.coordinates)]
        super().__init__(forms, np.abs(order), dual=False)
        self.zero_set = simultaneous_zero_set(x, theta)

    def coeffs(self, k):
        q = int(self.order[k])
        return [(q, 1)] * len(self.forms)

    def label(self, k):
        return int(self.order[k])

    def columns(self, start, stop):
        return [self.order[start:stop].astype(object)]

    def known_zero(self, k) -> bool:
        return int(self.order[k]) in self.zero_set


def dual_order(n: int, Q: int) -> np.ndarray:
    """Nonzero integer vectors with sup norm at most Q, by height then descending lexicographic order."""
    axes = np.arange(-Q, Q + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([axes] * n), indexing="ij"), axis=-1).reshape(-1, n)
    heights = np.abs(grid).max(axis=1)
    keys = tuple(-grid[:, j] for j in reversed(range(n))) + (heights,)
    grid = grid[np.lexsort(keys)]
    return grid[1:]


class _DualPlan(_Plan):
    def __init__(self, x: PointSpec, theta0, Q: int):
        n = x.dimension
        self.vectors = dual_order(n, Q)
        forms = [_Descriptors(tuple(x.coordinates) + (theta0,))]
        super().__init__(forms, np.abs(self.vectors).max(axis=1), dual=True)

    def coeffs(self, k):
        return [tuple(int(v) for v in self.vectors[k]) + (1,)]

    def label(self, k):
        return tuple(int(v) for v in self.vectors[k])

    def columns(self, start, stop):
        block = self.vectors[start:stop]
        return [block[:, j].astype(object) for j in range(block.shape[1])]

    def known_zero(self, k) -> bool:
        return False


# ---------------------------------------------------------------------------
# The scan


@dataclass
class _ScanResult:
    log_error: np.ndarray  # log2 of the error; -inf for exact zeros
    exact: bool
    bits: int


def _working_bits(precision_bits: int, Q: int, max_bits: int) -> int:
    bits = max(precision_bits, math.ceil(4 * math.log2(max(Q, 2))))
    if bits > max_bits:
        raise PrecisionError(f"height {Q} needs {bits} bits, above the maximum {max_bits}", q=Q)
    return bits


def _scan(plan: _Plan, bits: int, max_bits: int) -> _ScanResult:
    exact = all(
        f.common_denominator is not None and f.common_denominator.bit_length() <= bits for f in plan.forms
    )
    K = len(plan)
    log_error = np.empty(K, dtype=np.float64)
    if exact:
        scale = None
        for f in plan.forms:
            scale = f.common_denominator if scale is None else scale * f.common_denominator // math.gcd(
                scale, f.common_denominator
            )
        consts = []
        for f in plan.forms:
            mult = scale // f.common_denominator
            consts.append(tuple(z * mult % scale for z in f.exact_numerators()))
        log_scale = math.log2(scale)
    else:
        scale = 1 << bits
        consts = [tuple(z % scale for z in f.scaled(bits)) for f in plan.forms]
        log_scale = float(bits)

    for start in range(0, K, _CHUNK):
        stop = min(K, start + _CHUNK)
        cols = plan.columns(start, stop)
        worst = None
        for zs in consts:
            total = zs[-1]
            for col, z in zip(cols, zs[:-1]):
                total = col * z + total
            rem = total % scale
            dist = np.minimum(rem, scale - rem)
            worst = dist if worst is None else np.maximum(worst, dist)
        if exact:
            zero = worst == 0
            safe = np.where(zero, 1, worst)
            chunk = _LOG2(safe).astype(np.float64) - log_scale
            chunk[zero] = -np.inf
        else:
            noise = sum(np.abs(c) for c in cols) + 1
            chunk = np.full(stop - start, np.nan)
            ok = worst > (noise << GUARD_BITS)
            idx = np.nonzero(ok)[0]
            chunk[idx] = _LOG2(worst[idx]).astype(np.float64) - log_scale
            for i in np.nonzero(~ok)[0]:
                k = start + int(i)
                chunk[i] = _refined_log_error(plan, k, bits, max_bits)
        log_error[start:stop] = chunk
    return _ScanResult(log_error, exact, bits)


def _item_values(plan: _Plan, k: int, bits: int | None, max_bits: int, rel_bits: int) -> list[_FormValue]:
    coeffs = plan.coeffs(k)
    if bits is None:
        return [_form_at(f, c, None) for f, c in zip(plan.forms, coeffs)]
    return [
        _refine_form(f, c, bits, max_bits, rel_bits, plan.label(k)) for f, c in zip(plan.forms, coeffs)
    ]


def _log2_fraction(num: int, den: int) -> float:
    return math.log2(num) - math.log2(den)


def _refined_log_error(plan: _Plan, k: int, bits: int, max_bits: int) -> float:
    if not plan.dual and plan.known_zero(k):
        return -math.inf
    vals = _item_values(plan, k, bits, max_bits, GUARD_BITS)
    best = max(vals, key=lambda v: Fraction(v.dist, v.scale))
    if best.exact_zero:
        return -math.inf
    return _log2_fraction(best.dist, best.scale)


# ---------------------------------------------------------------------------
# Exact comparison of item errors (for the record list)


class _Comparator:
    def __init__(self, plan: _Plan, scan: _ScanResult, max_bits: int):
        self.plan = plan
        self.scan = scan
        self.max_bits = max_bits

    def _values(self, k: int, bits: int) -> list[_FormValue]:
        coeffs = self.plan.coeffs(k)
        if self.scan.exact:
            return [_form_at(f, c, None) for f, c in zip(self.plan.forms, coeffs)]
        out = []
        for f, c in zip(self.plan.forms, coeffs):
            v = _form_at(f, c, bits)
            if v.dist <= v.noise and _symbolic(c, f.items, v.nearest) == (Fraction(0), {}):
                v = _FormValue(0, 0, v.scale, v.nearest, True)
            out.append(v)
        return out

    def compare(self, a: int, b: int) -> int:
        """Sign of error(a) - error(b), exactly."""
        if math.isinf(self.scan.log_error[a]) and math.isinf(self.scan.log_error[b]):
            return 0
        bits = self.scan.bits
        while True:
            va, vb = self._values(a, bits), self._values(b, bits)
            if self.scan.exact:
                ea = max(Fraction(v.dist, v.scale) for v in va)
                eb = max(Fraction(v.dist, v.scale) for v in vb)
                return (ea > eb) - (ea < eb)
            da, na = max(v.dist for v in va), max(v.noise for v in va)
            db, nb = max(v.dist for v in vb), max(v.noise for v in vb)
            if da + na <= db - nb:
                return -1
            if db + nb <= da - na:
                return 1
            if self._symbolically_equal(a, va, b, vb):
                return 0
            if bits >= self.max_bits:
                raise PrecisionError(
                    f"cannot order the errors at q={self.plan.label(a)} and q={self.plan.label(b)} "
                    f"within {self.max_bits} bits",
                    q=self.plan.label(a),
                )
            bits = min(self.max_bits, bits * 2)

    def _maximisers(self, k, vals):
        top = max(v.dist for v in vals)
        return [i for i, v in enumerate(vals) if v.dist + 2 * v.noise >= top]

    def _symbolically_equal(self, a, va, b, vb) -> bool:
        ma, mb = self._maximisers(a, va), self._maximisers(b, vb)
        ca, cb = self.plan.coeffs(a), self.plan.coeffs(b)
        sa = [_symbolic(ca[i], self.plan.forms[i].items, va[i].nearest) for i in ma]
        sb = [_symbolic(cb[i], self.plan.forms[i].items, vb[i].nearest) for i in mb]
        if any(not _abs_equal(sa[0], s) for s in sa[1:]) or any(not _abs_equal(sb[0], s) for s in sb[1:]):
            return False
        return _abs_equal(sa[0], sb[0])


def _record_indices(plan: _Plan, scan: _ScanResult, max_bits: int) -> list[int]:
    le = scan.log_error
    prev_min = np.concatenate(([np.inf], np.minimum.accumulate(le)[:-1]))
    tol = 0.0 if scan.exact else 1e-9
    candidates = np.nonzero(le <= prev_min + tol)[0]
    cmp = _Comparator(plan, scan, max_bits)
    records: list[int] = []
    for k in candidates:
        k = int(k)
        if not records or cmp.compare(k, records[-1]) < 0:
            records.append(k)
    return records


# ---------------------------------------------------------------------------
# Assembling estimates


def _precise_exponent(log_err_num: int, log_err_den: int, height: int, bits: int) -> float:
    with gmpy2.context(gmpy2.get_context(), precision=max(bits, 128)):
        val = (gmpy2.log2(gmpy2.mpz(log_err_den)) - gmpy2.log2(gmpy2.mpz(log_err_num))) / gmpy2.log2(
            gmpy2.mpz(height)
        )
        return float(val)


def _make_record(plan: _Plan, k: int, scan: _ScanResult, precision_bits: int, max_bits: int) -> ApproxRecord:
    rel = precision_bits + 8
    vals = _item_values(plan, k, None if scan.exact else scan.bits, max_bits, rel)
    worst = max(vals, key=lambda v: Fraction(v.dist, v.scale))
    h = int(plan.heights[k])
    if worst.dist == 0:
        err = RealScalar.from_fraction(0, precision_bits)
    else:
        err = RealScalar.from_fraction(Fraction(worst.dist, worst.scale), precision_bits)
    expo = None
    if worst.dist > 0 and h >= 2:
        expo = _precise_exponent(worst.dist, worst.scale, h, precision_bits)
    label = plan.label(k)
    if plan.dual:
        p = -vals[0].nearest
    else:
        p = tuple(-v.nearest for v in vals)
    return ApproxRecord(label, p, err, expo)


def _refine_exponent(plan, k, scan, precision_bits, max_bits) -> float:
    h = int(plan.heights[k])
    vals = _item_values(plan, k, None if scan.exact else scan.bits, max_bits, 72)
    worst = max(vals, key=lambda v: Fraction(v.dist, v.scale))
    if worst.dist == 0:
        return math.inf
    return _precise_exponent(worst.dist, worst.scale, h, precision_bits)


def _sup_over(mask, plan, scan, exps, precision_bits, max_bits) -> float:
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return -math.inf
    sub = exps[idx]
    if np.isinf(sub).any():
        return math.inf
    top = float(sub.max())
    near = idx[sub >= top - 1e-9 * max(1.0, abs(top))][:64]
    best = -math.inf
    for k in near:
        best = max(best, _refine_exponent(plan, int(k), scan, precision_bits, max_bits))
    return best


def tail_window_start(Q: int) -> int:
    """Smallest integer ``h`` with ``h*h >= Q``."""
    lo = math.isqrt(Q)
    return lo if lo * lo >= Q else lo + 1


def dyadic_grid(Q: int) -> list[int]:
    grid, k = [], 4
    while (1 << k) <= Q:
        grid.append(1 << k)
        k += 1
    return grid


def _estimate(kind: ExponentKind, plan: _Plan, shift: Shift, Q: int, dimension: int,
              precision_bits: int, max_bits: int) -> ExponentEstimate:
    bits = _working_bits(precision_bits, Q, max_bits)
    scan = _scan(plan, bits, max_bits)
    le = scan.log_error
    heights = plan.heights
    rational_flag = bool(np.isneginf(le).any())

    with np.errstate(divide="ignore", invalid="ignore"):
        exps = np.where(heights >= 2, -le / np.log2(np.maximum(heights, 2)), -np.inf)
    scored = heights >= 2
    running = math.inf if rational_flag else _sup_over(scored, plan, scan, exps, precision_bits, max_bits)
    tail = _sup_over(heights >= tail_window_start(Q), plan, scan, exps, precision_bits, max_bits)

    uniform_inf, profile = None, ()
    if kind.is_uniform:
        prefix = np.minimum.accumulate(le)
        last_index = np.searchsorted(heights, np.array(dyadic_grid(Q)), side="right") - 1
        prof = []
        for Qp, idx in zip(dyadic_grid(Q), last_index):
            m = prefix[idx]
            prof.append((Qp, math.inf if np.isneginf(m) else float(-m / math.log2(Qp))))
        profile = tuple(prof)
        lo = tail_window_start(Q)
        uniform_inf = min(v for Qp, v in profile if Qp >= lo)

    records = tuple(_make_record(plan, k, scan, precision_bits, max_bits) for k in _record_indices(plan, scan, max_bits))
    return ExponentEstimate(
        kind=kind,
        shift=shift,
        height_max=Q,
        running_sup=running,
        tail_sup=tail,
        tail_inf_uniform=uniform_inf,
        records=records,
        rational_flag=rational_flag,
        dimension=dimension,
        precision_bits=precision_bits,
        uniform_profile=profile,
    )


def _check_precision(precision_bits, max_bits):
    if precision_bits < 64:
        raise PreconditionError("precision_bits must be >= 64")
    if max_bits < precision_bits:
        raise PreconditionError("max_bits must be >= precision_bits")


@lru_cache(maxsize=256)
def _cached_sim(x, theta, Q, uniform, precision_bits, max_bits):
    kind = ExponentKind.SimUniform if uniform else ExponentKind.SimOrdinary
    return _estimate(kind, _SimPlan(x, theta, Q), theta, Q, x.dimension, precision_bits, max_bits)


def _coerce_scalar_shift(theta0) -> Shift:
    sh = coerce_shift(theta0, 1)
    return sh


def _dual_budget(n: int, Q: int):
    if Q**n > DUAL_BOX_LIMIT:
        raise BudgetError(f"dual enumeration over |q| <= {Q} in dimension {n} exceeds {DUAL_BOX_LIMIT} vectors; use a smaller Q")
    if (2 * Q + 1) ** n > DUAL_VECTOR_BUDGET:
        raise BudgetError(
            f"dual enumeration needs {(2 * Q + 1) ** n} vectors, above the budget {DUAL_VECTOR_BUDGET}; use a smaller Q"
        )


@lru_cache(maxsize=256)
def _cached_dual(x, theta0, Q, uniform, precision_bits, max_bits):
    kind = ExponentKind.DualUniform if uniform else ExponentKind.DualOrdinary
    plan = _DualPlan(x, theta0.coordinates[0], Q)
    return _estimate(kind, plan, theta0, Q, x.dimension, precision_bits, max_bits)


def estimate_w0(x: PointSpec, theta=None, Q: int = 10**4, *, precision_bits: int = DEFAULT_PRECISION,
                max_bits: int = MAX_PRECISION) -> ExponentEstimate:
    """Simultaneous exponent estimate from a scan of ``0 < |q| <= Q``."""
    if Q < 4:
        raise PreconditionError("estimate_w0 needs Q >= 4")
    _check_precision(precision_bits, max_bits)
    return _cached_sim(x, coerce_shift(theta, x.dimension), int(Q), False, precision_bits, max_bits)


def estimate_w0_uniform(x: PointSpec, theta=None, Q: int = 1 << 10, *, precision_bits: int = DEFAULT_PRECISION,
                        max_bits: int = MAX_PRECISION) -> ExponentEstimate:
    """Uniform simultaneous exponent estimate on the dyadic grid ``16, 32, ... <= Q``."""
    if Q < 16:
        raise PreconditionError("estimate_w0_uniform needs Q >= 16")
    _check_precision(precision_bits, max_bits)
    return _cached_sim(x, coerce_shift(theta, x.dimension), int(Q), True, precision_bits, max_bits)


def estimate_w_dual(x: PointSpec, theta0=None, Q: int = 100, *, precision_bits: int = DEFAULT_PRECISION,
                    max_bits: int = MAX_PRECISION) -> ExponentEstimate:
    """Dual exponent estimate by exhaustive enumeration of ``0 < |q|_inf <= Q``."""
    if Q < 2:
        raise PreconditionError("estimate_w_dual needs Q >= 2")
    _check_precision(precision_bits, max_bits)
    _dual_budget(x.dimension, Q)
    return _cached_dual(x, _coerce_scalar_shift(theta0), int(Q), False, precision_bits, max_bits)


def estimate_w_dual_uniform(x: PointSpec, theta0=None, Q: int = 256, *, precision_bits: int = DEFAULT_PRECISION,
                            max_bits: int = MAX_PRECISION) -> ExponentEstimate:
    """Uniform dual exponent estimate on the dyadic grid ``16, 32, ... <= Q``."""
    if Q < 16:
        raise PreconditionError("estimate_w_dual_uniform needs Q >= 16")
    _check_precision(precision_bits, max_bits)
    _dual_budget(x.dimension, Q)
    return _cached_dual(x, _coerce_scalar_shift(theta0), int(Q), True, precision_bits, max_bits)


def estimate(kind: ExponentKind, x: PointSpec, theta=None, Q: int = 1000, **kw) -> ExponentEstimate:
    """Dispatch on ``kind``."""
    fn = {
        ExponentKind.SimOrdinary: estimate_w0,
        ExponentKind.SimUniform: estimate_w0_uniform,
        ExponentKind.DualOrdinary: estimate_w_dual,
        ExponentKind.DualUniform: estimate_w_dual_uniform,
    }[kind]
    return fn(x, theta, Q, **kw)
