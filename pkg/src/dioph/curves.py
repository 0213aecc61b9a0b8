"""Monge-form curve patches, surfaces sliced into curves, and arc measure.

Coordinate functions come from a closed family (rational polynomials, scaled
exponentials of an affine argument, scaled sines of an affine argument), so
suprema of |f| and |f'| can be certified analytically: polynomial suprema come
from exact endpoint values and isolated real roots of the derivative, and the
transcendental families are monotone or have closed-form extrema.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import gmpy2
import numpy as np
import sympy
from scipy import integrate
from sympy.parsing.sympy_parser import (
    convert_xor,
    implicit_multiplication_application,
    parse_expr,
    rationalize,
    standard_transformations,
)

from dioph.errors import DescriptorError, PreconditionError

_BITS = 160
_X, _Y = sympy.symbols("x y", real=True)


def _round_up(v: float) -> float:
    return math.nextafter(v, math.inf)


def _mpfr(v, bits=_BITS):
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        if isinstance(v, Fraction):
            return gmpy2.mpfr(gmpy2.mpq(v.numerator, v.denominator))
        return gmpy2.mpfr(v)


def _fmt(fr: Fraction) -> str:
    return str(fr.numerator) if fr.denominator == 1 else f"{fr.numerator}/{fr.denominator}"


# ---------------------------------------------------------------------------
# Univariate function family


@dataclass(frozen=True)
class Polynomial:
    """Sum of ``coeffs[k] * x**k`` with rational coefficients."""

    coeffs: tuple

    def __post_init__(self):
        cs = [Fraction(c) for c in self.coeffs]
        while len(cs) > 1 and cs[-1] == 0:
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs) if cs else (Fraction(0),))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @cached_property
    def _float_coeffs(self):
        return np.array([float(c) for c in reversed(self.coeffs)])

    def __call__(self, x):
        return np.polyval(self._float_coeffs, x)

    def exact(self, x: Fraction) -> Fraction:
        acc = Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def mpfr(self, x, bits=_BITS):
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            acc = gmpy2.mpfr(0)
            for c in reversed(self.coeffs):
                acc = acc * x + gmpy2.mpq(c.numerator, c.denominator)
            return acc

    def derivative(self) -> Polynomial:
        if self.degree == 0:
            return Polynomial((0,))
        return Polynomial(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0))

    def compose_affine(self, scale: Fraction, offset: Fraction) -> Polynomial:
        """The polynomial ``x -> self(scale * x + offset)``."""
        result = [Fraction(0)]
        power = [Fraction(1)]
        for c in self.coeffs:
            result = _poly_add(result, [c * v for v in power])
            power = _poly_mul(power, [offset, scale])
        return Polynomial(tuple(result))

    def _sympy(self):
        return sympy.Poly([sympy.Rational(c.numerator, c.denominator) for c in reversed(self.coeffs)], _X)

    def critical_points(self, lo: float, hi: float) -> list[float]:
        d = self.derivative()
        if d.degree == 0:
            return []
        roots = np.roots(d._float_coeffs)
        out = sorted(float(r.real) for r in roots if abs(r.imag) <= 1e-12 * max(1.0, abs(r)) and lo < r.real < hi)
        return out

    def sup_abs(self, a: Fraction, b: Fraction) -> float:
        """Certified upper bound on ``max |p|`` over ``[a, b]``."""
        best = max(abs(self.exact(a)), abs(self.exact(b)))
        bound = float(best)
        if float(bound) < best:
            bound = _round_up(bound)
        d = self.derivative()
        if d.degree >= 1:
            for root in sympy.Poly(d._sympy().as_expr(), _X).real_roots():
                r = sympy.Rational(0) + root
                if not (sympy.Rational(a.numerator, a.denominator) < r < sympy.Rational(b.numerator, b.denominator)):
                    continue
                val = abs(self._sympy().as_expr().subs(_X, r))
                approx = float(sympy.N(val, 40))
                bound = max(bound, _round_up(approx * (1 + 1e-15)))
        return bound

    def token(self) -> str:
        terms = []
        for k, c in enumerate(self.coeffs):
            if c == 0 and self.degree > 0:
                continue
            mono = "" if k == 0 else ("x" if k == 1 else f"x^{k}")
            coef = _fmt(c)
            if mono:
                coef = "" if c == 1 else ("-" if c == -1 else f"({coef})*")
            terms.append(f"{coef}{mono}")
        return "+".join(terms).replace("+-", "-") or "0"

    @property
    def is_identity(self) -> bool:
        return self.coeffs == (Fraction(0), Fraction(1))


def _poly_add(a, b):
    out = [Fraction(0)] * max(len(a), len(b))
    for i, v in enumerate(a):
        out[i] += v
    for i, v in enumerate(b):
        out[i] += v
    return out


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, u in enumerate(a):
        for j, v in enumerate(b):
            out[i + j] += u * v
    return out


@dataclass(frozen=True)
class ScaledExp:
    """``amplitude * exp(rate * x + shift)``."""

    amplitude: Fraction
    rate: Fraction
    shift: Fraction

    def __call__(self, x):
        return float(self.amplitude) * np.exp(float(self.rate) * np.asarray(x, dtype=float) + float(self.shift))

    def mpfr(self, x, bits=_BITS):
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            return _mpfr(self.amplitude, bits) * gmpy2.exp(_mpfr(self.rate, bits) * x + _mpfr(self.shift, bits))

    def exact(self, x):
        return None

    def derivative(self) -> ScaledExp:
        return ScaledExp(self.amplitude * self.rate, self.rate, self.shift)

    def critical_points(self, lo, hi):
        return []

    def sup_abs(self, a: Fraction, b: Fraction) -> float:
        # |A| e^{rx+s} is monotone, so the maximum sits at an endpoint.
        ends = [abs(self.mpfr(_mpfr(v))) for v in (a, b)]
        return _round_up(float(max(ends)) * (1 + 1e-15))

    def token(self) -> str:
        return f"({_fmt(self.amplitude)})*exp(({_fmt(self.rate)})*x+({_fmt(self.shift)}))"


@dataclass(frozen=True)
class ScaledSin:
    """``amplitude * sin(freq * x + phase + quarter_turns * pi/2)``."""

    amplitude: Fraction
    freq: Fraction
    phase: Fraction
    quarter_turns: int = 0

    def _arg(self, x, bits=_BITS):
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            return _mpfr(self.freq, bits) * x + _mpfr(self.phase, bits) + self.quarter_turns * gmpy2.const_pi() / 2

    def __call__(self, x):
        arg = float(self.freq) * np.asarray(x, dtype=float) + float(self.phase) + self.quarter_turns * math.pi / 2
        return float(self.amplitude) * np.sin(arg)

    def mpfr(self, x, bits=_BITS):
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            return _mpfr(self.amplitude, bits) * gmpy2.sin(self._arg(x, bits))

    def exact(self, x):
        return None

    def derivative(self) -> ScaledSin:
        return ScaledSin(self.amplitude * self.freq, self.freq, self.phase, (self.quarter_turns + 1) % 4)

    def _extremal_arguments(self, lo: float, hi: float) -> list[float]:
        """Parameters in (lo, hi) where the sine argument is pi/2 mod pi."""
        if self.freq == 0:
            return []
        f = float(self.freq)
        base = float(self.phase) + self.quarter_turns * math.pi / 2
        a0, a1 = sorted((f * lo + base, f * hi + base))
        k0 = math.ceil((a0 - math.pi / 2) / math.pi)
        k1 = math.floor((a1 - math.pi / 2) / math.pi)
        pts = [((math.pi / 2 + k * math.pi) - base) / f for k in range(k0, k1 + 1)]
        return sorted(p for p in pts if lo < p < hi)

    def critical_points(self, lo, hi):
        return self._extremal_arguments(lo, hi)

    def sup_abs(self, a: Fraction, b: Fraction) -> float:
        if self._extremal_arguments(float(a) - 1e-12, float(b) + 1e-12):
            return _round_up(float(abs(self.amplitude)))
        ends = [abs(self.mpfr(_mpfr(v))) for v in (a, b)]
        return min(_round_up(float(abs(self.amplitude))), _round_up(float(max(ends)) * (1 + 1e-15)))

    def token(self) -> str:
        fn = ("sin", "cos", "-sin", "-cos")[self.quarter_turns % 4]
        return f"({_fmt(self.amplitude)})*{fn}(({_fmt(self.freq)})*x+({_fmt(self.phase)}))"


CurveFunction = (Polynomial, ScaledExp, ScaledSin)


# ---------------------------------------------------------------------------
# Curve patches


@dataclass(frozen=True)
class CurvePatch:
    """A Monge-form curve ``x -> (x, f_2(x), ..., f_n(x))`` on a closed interval."""

    functions: tuple
    interval: tuple

    def __post_init__(self):
        fns = tuple(self.functions)
        if not fns:
            raise PreconditionError("a curve needs at least one coordinate")
        if not (isinstance(fns[0], Polynomial) and fns[0].is_identity):
            raise PreconditionError("the first coordinate of a Monge-form curve must be x itself")
        for f in fns:
            if not isinstance(f, CurveFunction):
                raise PreconditionError(f"unsupported coordinate function {f!r}")
        a, b = (Fraction(v) for v in self.interval)
        if not a < b:
            raise PreconditionError("curve interval must satisfy a < b")
        object.__setattr__(self, "functions", fns)
        object.__setattr__(self, "interval", (a, b))

    @property
    def dimension(self) -> int:
        return len(self.functions)

    @property
    def length(self) -> float:
        a, b = self.interval
        return float(b - a)

    @cached_property
    def derivatives(self) -> tuple:
        return tuple(f.derivative() for f in self.functions)

    @cached_property
    def derivative_bound(self) -> float:
        """Certified ``sup_I |f'|_inf``; at least 1 because ``f_1' = 1``."""
        a, b = self.interval
        return max(d.sup_abs(a, b) for d in self.derivatives)

    @cached_property
    def value_bound(self) -> float:
        """Certified ``sup_I |f|_inf``."""
        a, b = self.interval
        return max(f.sup_abs(a, b) for f in self.functions)

    def evaluate(self, x) -> np.ndarray:
        """Array of shape ``(n,) + shape(x)``."""
        x = np.asarray(x, dtype=float)
        out = np.empty((self.dimension,) + x.shape)
        out[0] = x
        for i, f in enumerate(self.functions[1:], start=1):
            out[i] = f(x)
        return out

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty((self.dimension,) + x.shape)
        for i, d in enumerate(self.derivatives):
            out[i] = d(x) if not (isinstance(d, Polynomial) and d.degree == 0) else float(d.coeffs[0])
        return out

    def speed(self, x) -> np.ndarray:
        """Euclidean norm ``|f'(x)|_2``."""
        return np.sqrt((self.derivative(x) ** 2).sum(axis=0))

    def critical_points(self, i: int, lo: float, hi: float) -> list[float]:
        return self.functions[i].critical_points(lo, hi)

    def exact_point(self, x: Fraction):
        """Exact coordinates when every function is polynomial, else None."""
        vals = [f.exact(x) for f in self.functions]
        return None if any(v is None for v in vals) else vals

    def mpfr_point(self, x: Fraction, bits: int = _BITS):
        xm = _mpfr(x, bits)
        return [f.mpfr(xm, bits) for f in self.functions]

    def token(self) -> str:
        a, b = self.interval
        return f"curve:({', '.join(f.token() for f in self.functions)}):I=[{_fmt(a)},{_fmt(b)}]"


def veronese(n: int, interval=(0, 1)) -> CurvePatch:
    """The curve ``(x, x^2, ..., x^n)``."""
    if n < 1:
        raise PreconditionError("veronese needs n >= 1")
    fns = tuple(Polynomial(tuple([0] * k + [1])) for k in range(1, n + 1))
    return CurvePatch(fns, tuple(Fraction(v) for v in interval))


# ---------------------------------------------------------------------------
# Arc measure

ARC_RTOL = 1e-8
_GL8 = np.polynomial.legendre.leggauss(8)
_GL16 = np.polynomial.legendre.leggauss(16)


class QuadratureError(PreconditionError):
    pass


def arc_measure(curve: CurvePatch, lo=None, hi=None) -> float:
    """``integral_lo^hi |f'(x)|_2 dx`` by adaptive quadrature to relative tolerance 1e-8."""
    a, b = curve.interval
    lo = float(a) if lo is None else float(lo)
    hi = float(b) if hi is None else float(hi)
    if lo < float(a) - 1e-15 or hi > float(b) + 1e-15:
        raise PreconditionError("sub-interval must lie inside the curve interval")
    if hi <= lo:
        return 0.0
    pts = sorted({p for i in range(curve.dimension) for p in _speed_kinks(curve, i, lo, hi)})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(
            lambda t: float(curve.speed(t)), lo, hi, epsabs=0.0, epsrel=ARC_RTOL / 100,
            limit=200, points=pts or None, full_output=1,
        )[:3]
    if not err <= ARC_RTOL * abs(val):
        raise QuadratureError(f"arc-length quadrature reached only relative tolerance {err / max(abs(val), 1e-300):.2e}")
    return float(val)


def _speed_kinks(curve, i, lo, hi):
    return [p for p in curve.critical_points(i, lo, hi) if lo < p < hi] if i else []


def arc_measure_many(curve: CurvePatch, lows, highs) -> np.ndarray:
    """Vectorised arc measure of many short intervals.

    Gauss-Legendre rules of order 8 and 16 are compared per interval; any
    interval where they disagree beyond the tolerance goes through
    :func:`arc_measure` instead.
    """
    lows = np.asarray(lows, dtype=float)
    highs = np.asarray(highs, dtype=float)
    out = np.zeros(lows.shape)
    if lows.size == 0:
        return out
    half = (highs - lows) / 2
    mid = (highs + lows) / 2
    vals = []
    for nodes, weights in (_GL8, _GL16):
        xs = mid[:, None] + half[:, None] * nodes[None, :]
        vals.append((curve.speed(xs) * weights[None, :]).sum(axis=1) * half)
    coarse, fine = vals
    out = np.where(highs > lows, fine, 0.0)
    bad = np.nonzero((highs > lows) & (np.abs(coarse - fine) > 1e-3 * ARC_RTOL * np.abs(fine)))[0]
    for k in bad:
        out[k] = arc_measure(curve, lows[k], highs[k])
    return out


# ---------------------------------------------------------------------------
# Surfaces and slicing


@dataclass(frozen=True)
class BivariatePolynomial:
    """Sum of ``c * x**i * y**j`` over ``terms = ((i, j, c), ...)``."""

    terms: tuple

    def __post_init__(self):
        acc: dict = {}
        for i, j, c in self.terms:
            acc[(i, j)] = acc.get((i, j), Fraction(0)) + Fraction(c)
        object.__setattr__(self, "terms", tuple(sorted((i, j, c) for (i, j), c in acc.items() if c != 0)))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = np.zeros(np.broadcast(x, y).shape)
        for i, j, c in self.terms:
            total = total + float(c) * x**i * y**j
        return total

    def partial(self, var: int) -> BivariatePolynomial:
        out = []
        for i, j, c in self.terms:
            k = i if var == 0 else j
            if k:
                out.append((i - 1, j, c * k) if var == 0 else (i, j - 1, c * k))
        return BivariatePolynomial(tuple(out))

    def freeze_second(self, y0: Fraction) -> Polynomial:
        coeffs: dict = {}
        for i, j, c in self.terms:
            coeffs[i] = coeffs.get(i, Fraction(0)) + c * y0**j
        deg = max(coeffs, default=0)
        return Polynomial(tuple(coeffs.get(k, Fraction(0)) for k in range(deg + 1)))

    def token(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for i, j, c in self.terms:
            mono = "*".join(s for s in ((f"x^{i}" if i > 1 else "x" if i else ""), (f"y^{j}" if j > 1 else "y" if j else "")) if s)
            parts.append(f"({_fmt(c)})*{mono}" if mono else f"({_fmt(c)})")
        return "+".join(parts)


@dataclass(frozen=True)
class SurfacePatch2D:
    """A map ``(x, y) -> (g_1, ..., g_n)`` on the box ``U = [a, b] x [c, d]``."""

    functions: tuple
    domain: tuple

    def __post_init__(self):
        (a, b), (c, d) = self.domain
        a, b, c, d = (Fraction(v) for v in (a, b, c, d))
        if not (a < b and c < d):
            raise PreconditionError("surface domain must be a non-degenerate box")
        object.__setattr__(self, "domain", ((a, b), (c, d)))
        object.__setattr__(self, "functions", tuple(self.functions))

    @property
    def dimension(self) -> int:
        return len(self.functions)

    def area_element(self, x, y):
        gx = np.stack([g.partial(0)(x, y) for g in self.functions])
        gy = np.stack([g.partial(1)(x, y) for g in self.functions])
        # Gram determinant sqrt(|g_x|^2 |g_y|^2 - (g_x . g_y)^2).
        gram = (gx**2).sum(0) * (gy**2).sum(0) - (gx * gy).sum(0) ** 2
        return np.sqrt(np.maximum(gram, 0.0))

    def area(self) -> float:
        """Surface area by nested adaptive quadrature."""
        (a, b), (c, d) = self.domain
        val, _ = integrate.dblquad(
            lambda y, x: float(self.area_element(x, y)), float(a), float(b), float(c), float(d),
            epsabs=0.0, epsrel=1e-9,
        )
        return float(val)

    def slice_at(self, y0: Fraction) -> CurvePatch | None:
        """Freeze the second parameter and re-parameterise by the first coordinate.

        Only slices where the first coordinate is affine with nonzero slope in
        ``x`` are re-parameterised; anything else is rejected (returns None).
        """
        (a, b), _ = self.domain
        restricted = [g.freeze_second(Fraction(y0)) for g in self.functions]
        first = restricted[0]
        if first.degree != 1:
            return None
        beta, alpha = first.coeffs
        inv_scale, inv_offset = 1 / alpha, -beta / alpha
        fns = [Polynomial((0, 1))] + [g.compose_affine(inv_scale, inv_offset) for g in restricted[1:]]
        lo, hi = sorted((first.exact(a), first.exact(b)))
        return CurvePatch(tuple(fns), (lo, hi))

    def token(self) -> str:
        (a, b), (c, d) = self.domain
        return (
            f"surface:({', '.join(g.token() for g in self.functions)}):"
            f"U=[{_fmt(a)},{_fmt(b)}]x[{_fmt(c)},{_fmt(d)}]"
        )


@dataclass(frozen=True)
class SliceResult:
    accepted: tuple  # (y0, CurvePatch) pairs
    rejected: tuple  # y0 values
    spacing: Fraction

    def fubini_sum(self) -> float:
        """Sum over accepted slices of arc measure times slice spacing."""
        return float(self.spacing) * sum(arc_measure(c) for _, c in self.accepted)


def slice_surface(surface: SurfacePatch2D, count: int, second_range=None) -> SliceResult:
    """Freeze the second parameter at ``count`` midpoints of an equispaced partition."""
    if count < 1:
        raise PreconditionError("slice count must be >= 1")
    _, (c, d) = surface.domain
    if second_range is not None:
        lo, hi = (Fraction(v) for v in second_range)
        if lo < c or hi > d or not lo < hi:
            raise PreconditionError("slice range must lie inside the second coordinate range of U")
        c, d = lo, hi
    spacing = (d - c) / count
    accepted, rejected = [], []
    for k in range(count):
        y0 = c + (k + Fraction(1, 2)) * spacing
        patch = surface.slice_at(y0)
        if patch is None:
            rejected.append(y0)
        else:
            accepted.append((y0, patch))
    return SliceResult(tuple(accepted), tuple(rejected), spacing)


# ---------------------------------------------------------------------------
# Grammar


_TRANSFORMS = standard_transformations + (implicit_multiplication_application, convert_xor, rationalize)


def _sympy_parse(text: str, symbols: dict):
    try:
        return parse_expr(text, local_dict=symbols, transformations=_TRANSFORMS, evaluate=True)
    except Exception as exc:  # sympy raises a zoo of exception types
        raise DescriptorError(f"cannot parse function: {exc}", text) from None


def _rational(v, token) -> Fraction:
    v = sympy.nsimplify(v) if not v.is_Rational else v
    if not v.is_Rational:
        raise DescriptorError("coefficients must be rational", token)
    return Fraction(int(v.p), int(v.q))


def _affine_parts(arg, token):
    poly = sympy.Poly(arg, _X)
    if poly.degree() > 1:
        raise DescriptorError("exp/sin arguments must be affine in x", token)
    cs = poly.all_coeffs()
    rate, shift = (cs if len(cs) == 2 else [0, cs[0]])
    return _rational(sympy.sympify(rate), token), _rational(sympy.sympify(shift), token)


def function_from_text(text: str):
    expr = _sympy_parse(text, {"x": _X, "e": sympy.E, "pi": sympy.pi})
    if expr.free_symbols - {_X}:
        raise DescriptorError("curve functions may only use the variable x", text)
    if expr.is_polynomial(_X):
        poly = sympy.Poly(expr, _X)
        if not all(c.is_Rational for c in poly.all_coeffs()):
            raise DescriptorError("polynomial coefficients must be rational", text)
        return Polynomial(tuple(Fraction(int(c.p), int(c.q)) for c in reversed(poly.all_coeffs())))
    amp, core = expr.as_independent(_X, as_Add=False)
    amplitude = _rational(amp, text)
    if core.func is sympy.exp:
        rate, shift = _affine_parts(core.args[0], text)
        return ScaledExp(amplitude, rate, shift)
    if core.func in (sympy.sin, sympy.cos):
        freq, phase = _affine_parts(core.args[0], text)
        return ScaledSin(amplitude, freq, phase, 0 if core.func is sympy.sin else 1)
    raise DescriptorError("function outside the supported family (polynomial, c*exp(ax+b), c*sin(ax+b))", text)


def _bivariate_from_text(text: str) -> BivariatePolynomial:
    expr = _sympy_parse(text, {"x": _X, "y": _Y})
    if expr.free_symbols - {_X, _Y} or not expr.is_polynomial(_X, _Y):
        raise DescriptorError("surface functions must be polynomials in x and y", text)
    poly = sympy.Poly(expr, _X, _Y)
    terms = []
    for (i, j), c in poly.terms():
        if not c.is_Rational:
            raise DescriptorError("polynomial coefficients must be rational", text)
        terms.append((i, j, Fraction(int(c.p), int(c.q))))
    return BivariatePolynomial(tuple(terms))


def _interval(text: str, token: str) -> tuple:
    m = re.fullmatch(r"\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]", text.strip())
    if not m:
        raise DescriptorError("malformed interval", token)
    try:
        return Fraction(m.group(1).strip()), Fraction(m.group(2).strip())
    except (ValueError, ZeroDivisionError):
        raise DescriptorError("interval endpoints must be rational", token) from None


def _split_functions(body: str, token: str) -> list[str]:
    body = body.strip()
    if not (body.startswith("(") and body.endswith(")")):
        raise DescriptorError("function list must be parenthesised", token)
    from dioph.core import _split_top_level

    return [p for p in _split_top_level(body[1:-1])]


def parse_curve(text: str) -> CurvePatch:
    """``veronese:n=2:I=[0,1]``, ``poly:(x, x^2-0.5x):I=[0,1]`` or ``curve:(...):I=[a,b]``."""
    token = text.strip()
    kind, _, rest = token.partition(":")
    if kind == "veronese":
        m = re.fullmatch(r"n=(\d+)(?::I=(\[.*\]))?", rest.strip())
        if not m:
            raise DescriptorError("malformed veronese curve", token)
        interval = _interval(m.group(2), token) if m.group(2) else (Fraction(0), Fraction(1))
        try:
            return veronese(int(m.group(1)), interval)
        except PreconditionError as exc:
            raise DescriptorError(str(exc), token) from None
    if kind in ("poly", "curve"):
        body, sep, iv = rest.rpartition(":I=")
        if not sep:
            raise DescriptorError("curve needs an interval ':I=[a,b]'", token)
        fns = [function_from_text(p) for p in _split_functions(body, token)]
        if kind == "poly" and not all(isinstance(f, Polynomial) for f in fns):
            raise DescriptorError("poly curves take polynomial coordinates only", token)
        try:
            return CurvePatch(tuple(fns), _interval(iv, token))
        except PreconditionError as exc:
            raise DescriptorError(str(exc), token) from None
    raise DescriptorError("unknown curve kind", token)


def parse_surface(text: str) -> SurfacePatch2D:
    """``surface:(x,y,x^2+y^2):U=[0,1]x[0,1]``."""
    token = text.strip()
    kind, _, rest = token.partition(":")
    if kind != "surface":
        raise DescriptorError("unknown surface kind", token)
    body, sep, dom = rest.rpartition(":U=")
    if not sep:
        raise DescriptorError("surface needs a domain ':U=[a,b]x[c,d]'", token)
    m = re.fullmatch(r"(\[[^\]]*\])\s*x\s*(\[[^\]]*\])", dom.strip())
    if not m:
        raise DescriptorError("malformed surface domain", token)
    fns = tuple(_bivariate_from_text(p) for p in _split_functions(body, token))
    try:
        return SurfacePatch2D(fns, (_interval(m.group(1), token), _interval(m.group(2), token)))
    except PreconditionError as exc:
        raise DescriptorError(str(exc), token) from None
