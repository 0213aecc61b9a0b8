"""Monte Carlo estimate of the measure of truncated limsup sets on a curve.

A parameter ``x`` is a member for the window ``[s, Q]`` when some integer
``q`` with ``s <= q <= Q`` has ``||q f_i(x) + theta_i|| < q**(-1/n - eps)`` for
every coordinate; with ``signs="both"`` negative ``q`` with ``s <= |q| <= Q``
count as well. Fractional parts are held as 64-bit fixed point, so
``q y + theta`` mod 1 is computed with wrapping integer arithmetic; cells whose
distance lies within the rounding margin of the threshold are settled again
at high precision.

Sample ``i`` draws its parameter from a Philox stream keyed by the seed with
counter ``i``, so any subset of samples can be recomputed independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
import numpy as np

from dioph.core import Shift, coerce_shift
from dioph.curves import CurvePatch
from dioph.errors import PrecisionError, PreconditionError

FIXED_BITS = 64
_ONE = 1 << FIXED_BITS
_REFINE_BITS = 256
_BLOCK = 1 << 21  # sample x height cells per block


@dataclass(frozen=True)
class TruncatedLimsupConfig:
    curve: CurvePatch
    theta: Shift
    eps: float
    q_low: int
    q_high: int
    samples: int
    seed: int
    signs: str = "positive"

    def __post_init__(self):
        object.__setattr__(self, "theta", coerce_shift(self.theta, self.curve.dimension))
        if not self.eps > 0:
            raise PreconditionError("eps must be positive")
        if self.q_low < 1 or self.q_high < self.q_low:
            raise PreconditionError("need 1 <= s <= Q")
        if self.samples < 1:
            raise PreconditionError("need at least one sample")
        if not 0 <= self.seed < 2**64:
            raise PreconditionError("seed must be a 64-bit unsigned integer")
        if self.signs not in ("both", "positive"):
            raise PreconditionError("signs must be 'both' or 'positive'")

    @property
    def exponent(self) -> float:
        return 1.0 / self.curve.dimension + self.eps


# ---------------------------------------------------------------------------
# Sampling


def sample_unit(seed: int, index: int) -> int:
    """53-bit integer ``k``; the sample is ``a + (b - a) k / 2**53``."""
    bg = np.random.Philox(key=seed, counter=index)
    return int(bg.random_raw()) >> 11


def sample_parameter(curve: CurvePatch, seed: int, index: int) -> Fraction:
    a, b = curve.interval
    return a + (b - a) * Fraction(sample_unit(seed, index), 1 << 53)


def _frac_fixed(value) -> int:
    """``floor(frac(v) * 2**64)`` for a Fraction or an mpfr value."""
    if isinstance(value, Fraction):
        return ((value.numerator << FIXED_BITS) // value.denominator) % _ONE
    return int(gmpy2.floor(value * _ONE)) % _ONE


class _Point:
    """A curve point held exactly (Fractions) or at high precision (mpfr)."""

    def __init__(self, curve: CurvePatch, x: Fraction):
        self.x = x
        self.exact = curve.exact_point(x)
        self.approx = None if self.exact is not None else curve.mpfr_point(x, _REFINE_BITS + 64)

    def fixed(self) -> list[int]:
        vals = self.exact if self.exact is not None else self.approx
        return [_frac_fixed(v) for v in vals]

    def distances(self, q: int, theta_hi: list[int]):
        """High-precision ``||q y_i + theta_i||`` as mpfr values."""
        out = []
        with gmpy2.context(gmpy2.get_context(), precision=_REFINE_BITS + 64):
            for i, th in enumerate(theta_hi):
                if self.exact is not None:
                    v = q * self.exact[i] + Fraction(th, 1 << _REFINE_BITS)
                    v = gmpy2.mpfr(v - round(v))
                else:
                    v = q * self.approx[i] + gmpy2.mpfr(th) / (1 << _REFINE_BITS)
                    v = v - gmpy2.rint(v)
                out.append(abs(v))
        return out


def _theta_fixed(theta: Shift, bits: int) -> list[int]:
    return [c.scaled_floor(bits) % (1 << bits) for c in theta.coordinates]


# ---------------------------------------------------------------------------
# Hit heights


def _thresholds(heights: np.ndarray, exponent: float):
    """Fixed-point thresholds, an always-hit mask and the rounding margin per height."""
    thr = heights.astype(float) ** (-exponent)
    always = thr > 0.5
    scaled = np.where(always, 0.0, np.ldexp(thr, FIXED_BITS))
    T = scaled.astype(np.uint64)
    # Float error in the threshold plus truncation error in q*y + theta.
    margin = (np.ldexp(scaled, -48) + heights + 4).astype(np.uint64)
    return T, always, margin


@dataclass
class _HitTable:
    """Signed hit heights per sample, ordered as the witness search visits them."""

    heights: np.ndarray  # signed q in order 1, -1, 2, -2, ... (or positive only)
    hits: list  # per sample: sorted array of indices into ``heights``


def _signed_heights(q_high: int, signs: str) -> np.ndarray:
    q = np.arange(1, q_high + 1, dtype=np.int64)
    if signs == "positive":
        return q
    return np.stack([q, -q], axis=1).ravel()


def _hit_matrix(Y, theta_fx, heights, exponent):
    """Boolean (samples, heights) table plus the ambiguous cells to settle exactly."""
    qa = np.abs(heights).astype(np.uint64)
    neg = heights < 0
    T, always, margin = _thresholds(np.abs(heights), exponent)
    hit = np.ones((Y.shape[0], len(heights)), dtype=bool)
    amb = np.zeros_like(hit)
    for i in range(Y.shape[1]):
        prod = Y[:, i : i + 1] * qa[None, :]  # wraps mod 2**64
        prod = np.where(neg[None, :], np.uint64(0) - prod, prod)
        v = prod + np.uint64(theta_fx[i])
        d = np.minimum(v, np.uint64(0) - v)
        below = d < T[None, :]
        near = (d + margin[None, :] >= T[None, :]) & (d <= T[None, :] + margin[None, :])
        hit &= below | always[None, :]
        amb |= near & ~always[None, :]
    return hit, amb


def _exact_hit(point: _Point, q: int, theta_exact, exponent: float):
    """Decide a near-tie with rational arithmetic, or return None when that is not possible.

    Needs an exact point, a rational shift and an exponent ``a/b`` with a small
    denominator; then ``d < |q|**(-a/b)`` iff ``d**b * |q|**a < 1``.
    """
    if point.exact is None or theta_exact is None:
        return None
    e = Fraction(exponent).limit_denominator(1000)
    if float(e) != exponent or e <= 0:
        return None
    for y, th in zip(point.exact, theta_exact):
        v = q * y + th
        d = abs(v - round(v))
        if d != 0 and d**e.denominator * abs(q) ** e.numerator >= 1:
            return False
    return True


def _settle(points, theta_hi, theta_exact, heights, exponent, cells):
    """Exact hit decisions for the listed (sample, height-index) cells."""
    out = {}
    for si, hj in cells:
        q = int(heights[hj])
        with gmpy2.context(gmpy2.get_context(), precision=_REFINE_BITS + 64):
            thr = gmpy2.mpfr(abs(q)) ** gmpy2.mpfr(-exponent)
        dist = points[si].distances(q, theta_hi)
        gap = min(abs(dd - thr) for dd in dist)
        if gap < gmpy2.mpfr(2) ** (-(_REFINE_BITS - 64)):
            decided = _exact_hit(points[si], q, theta_exact, exponent)
            if decided is None:
                raise PrecisionError(f"membership undecided at q={q}", q=q)
            out[(si, hj)] = decided
            continue
        out[(si, hj)] = all(dd < thr for dd in dist)
    return out


def _hit_tables(curve, theta: Shift, exponent, params, q_high, signs):
    heights = _signed_heights(q_high, signs)
    points = [_Point(curve, x) for x in params]
    Y = np.array([p.fixed() for p in points], dtype=np.uint64).reshape(len(points), curve.dimension)
    theta_fx = _theta_fixed(theta, FIXED_BITS)
    theta_hi = _theta_fixed(theta, _REFINE_BITS)
    theta_exact = [c.as_fraction() for c in theta.coordinates]
    if any(v is None for v in theta_exact):
        theta_exact = None
    hits = []
    step = max(1, _BLOCK // len(heights))
    for start in range(0, len(points), step):
        block = slice(start, min(len(points), start + step))
        hit, amb = _hit_matrix(Y[block], theta_fx, heights, exponent)
        cells = [(start + int(r), int(c)) for r, c in zip(*np.nonzero(amb))]
        if cells:
            for (si, hj), val in _settle(points, theta_hi, theta_exact, heights, exponent, cells).items():
                hit[si - start, hj] = val
        hits.extend(np.nonzero(row)[0] for row in hit)
    return _HitTable(heights, hits)


# ---------------------------------------------------------------------------
# Public operations


@dataclass(frozen=True)
class Membership:
    member: bool
    witness: int | None


def membership(x, cfg: TruncatedLimsupConfig) -> Membership:
    """Membership of parameter ``x`` for the window ``[cfg.q_low, cfg.q_high]``.

    The witness is the first ``q`` in the order ``s, -s, s+1, -(s+1), ...``.
    """
    x = Fraction(x)
    a, b = cfg.curve.interval
    if not a <= x <= b:
        raise PreconditionError("x must lie in the curve interval")
    table = _hit_tables(cfg.curve, cfg.theta, cfg.exponent, [x], cfg.q_high, cfg.signs)
    for j in table.hits[0]:
        q = int(table.heights[j])
        if abs(q) >= cfg.q_low:
            return Membership(True, q)
    return Membership(False, None)


@dataclass(frozen=True)
class FractionRow:
    s: int
    qmax: int
    fraction: float
    stderr: float
    n_members: int

    def as_dict(self) -> dict:
        return {
            "s": self.s,
            "qmax": self.qmax,
            "fraction": self.fraction,
            "stderr_estimate": self.stderr,
            "n_members": self.n_members,
        }


@dataclass(frozen=True)
class TailFractionCurve:
    rows: tuple
    max_hit: np.ndarray = field(repr=False)  # largest |q| hit per sample, 0 if none
    weights: np.ndarray = field(repr=False)
    parameters: tuple = field(repr=False)

    @property
    def fractions(self) -> list[float]:
        return [r.fraction for r in self.rows]


def sample_parameters(cfg: TruncatedLimsupConfig) -> tuple:
    return tuple(sample_parameter(cfg.curve, cfg.seed, i) for i in range(cfg.samples))


def tail_fraction_curve(cfg: TruncatedLimsupConfig, s_grid) -> TailFractionCurve:
    """Weighted member fraction for each window ``[s, Q]``, ``s`` in ``s_grid``.

    Samples are x-uniform with weights ``|f'(x)|_2``, which reweights to the
    arc-length measure on the curve.
    """
    s_grid = sorted(int(s) for s in s_grid)
    if not s_grid or s_grid[0] < 1 or s_grid[-1] > cfg.q_high:
        raise PreconditionError("every s must satisfy 1 <= s <= Q")
    params = sample_parameters(cfg)
    table = _hit_tables(cfg.curve, cfg.theta, cfg.exponent, params, cfg.q_high, cfg.signs)
    abs_h = np.abs(table.heights)
    max_hit = np.array([int(abs_h[h].max()) if len(h) else 0 for h in table.hits], dtype=np.int64)
    weights = cfg.curve.speed(np.array([float(x) for x in params]))
    total = weights.sum()
    rows = []
    for s in s_grid:
        m = (max_hit >= s).astype(float)
        frac = float((weights * m).sum() / total)
        se = float(math.sqrt(((weights * (m - frac)) ** 2).sum()) / total)
        rows.append(FractionRow(s, cfg.q_high, frac, se, int(m.sum())))
    return TailFractionCurve(tuple(rows), max_hit, weights, params)


def member_parameters(curve_result: TailFractionCurve, s: int) -> list[Fraction]:
    return [x for x, h in zip(curve_result.parameters, curve_result.max_hit) if h >= s]
