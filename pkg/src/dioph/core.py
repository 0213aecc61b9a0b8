"""Shared vocabulary: precision-controlled scalars, coordinate descriptors,
points, shifts and approximation records.

Every coordinate is described symbolically by one of four closed forms so it
can be re-evaluated at any precision, and so that exact questions (is
``q*x + theta`` an integer vector?) are answered by descriptor arithmetic
rather than by comparing floats to zero.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Union

import gmpy2

from dioph.errors import DescriptorError, PreconditionError

MIN_PRECISION = 64
DEFAULT_PRECISION = 128
MAX_PRECISION = 4096
MAX_SERIES_ORDER = 10

_MPFR = type(gmpy2.mpfr(0))


def _context(bits: int):
    return gmpy2.context(gmpy2.get_context(), precision=bits)


def _to_mpfr(value, bits: int):
    if isinstance(value, Fraction):
        value = gmpy2.mpq(value.numerator, value.denominator)
    with _context(bits):
        return gmpy2.mpfr(value)


# ---------------------------------------------------------------------------
# RealScalar


@dataclass(frozen=True)
class RealScalar:
    """A real number held at a declared binary precision (>= 64 bits).

    Arithmetic between scalars of different precision is carried out at the
    lower precision and the result carries ``mixed_precision=True``.
    """

    value: object
    precision_bits: int
    mixed_precision: bool = False

    def __post_init__(self):
        bits = self.precision_bits
        if not isinstance(bits, int) or bits < MIN_PRECISION:
            raise PreconditionError(f"precision_bits must be an integer >= {MIN_PRECISION}, got {bits!r}")
        v = self.value
        if not (isinstance(v, _MPFR) and v.precision == bits):
            object.__setattr__(self, "value", _to_mpfr(v, bits))

    @classmethod
    def from_fraction(cls, value: Fraction | int, bits: int = DEFAULT_PRECISION) -> RealScalar:
        return cls(_to_mpfr(Fraction(value), bits), bits)

    @classmethod
    def from_scaled_int(cls, n: int, shift: int, bits: int) -> RealScalar:
        """The value ``n * 2**-shift`` rounded to ``bits``."""
        with _context(bits):
            v = gmpy2.mul_2exp(gmpy2.mpfr(n), -shift)
        return cls(v, bits)

    def _binary(self, other, op) -> RealScalar:
        if not isinstance(other, RealScalar):
            other = RealScalar(_to_mpfr(Fraction(other), self.precision_bits), self.precision_bits)
        bits = min(self.precision_bits, other.precision_bits)
        mixed = self.mixed_precision or other.mixed_precision or self.precision_bits != other.precision_bits
        with _context(bits):
            v = op(self.value, other.value)
        return RealScalar(v, bits, mixed)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __neg__(self):
        return RealScalar(-self.value, self.precision_bits, self.mixed_precision)

    def __abs__(self):
        return RealScalar(abs(self.value), self.precision_bits, self.mixed_precision)

    def _cmp_value(self, other):
        return other.value if isinstance(other, RealScalar) else other

    def __eq__(self, other):
        if isinstance(other, RealScalar):
            return self.value == other.value
        return self.value == other

    def __hash__(self):
        return hash((self.value, self.precision_bits))

    def __lt__(self, other):
        return self.value < self._cmp_value(other)

    def __le__(self, other):
        return self.value <= self._cmp_value(other)

    def __gt__(self, other):
        return self.value > self._cmp_value(other)

    def __ge__(self, other):
        return self.value >= self._cmp_value(other)

    def __float__(self):
        return float(self.value)

    def is_zero(self) -> bool:
        return gmpy2.is_zero(self.value)

    def __repr__(self):
        return f"RealScalar({self.value!s}, bits={self.precision_bits})"


def nearest_integer_distance(v: RealScalar) -> RealScalar:
    """Distance from ``v`` to the nearest integer, at ``v``'s precision.

    The subtraction of the nearest integer is exact, so the result is exact
    whenever ``v`` itself is.
    """
    with _context(v.precision_bits):
        d = abs(v.value - gmpy2.rint(v.value))
    return RealScalar(d, v.precision_bits, v.mixed_precision)


# ---------------------------------------------------------------------------
# Coordinate descriptors


def _is_squarefree(c: int) -> bool:
    if c < 2:
        return True
    k = 2
    while k * k <= c:
        if c % (k * k) == 0:
            return False
        k += 1
    return True


def _require_int(name, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise DescriptorError(f"{name} must be an integer", str(v))


def _floor_fraction_scaled(fr: Fraction, bits: int) -> int:
    return (fr.numerator << bits) // fr.denominator


def _evaluate_via_floor(scaled_floor, bits: int) -> RealScalar:
    # Pick a scale giving >= bits + 64 significant bits, then round once.
    k = bits + 64
    for _ in range(64):
        n = scaled_floor(k)
        if n == 0:
            k += bits
            continue
        missing = bits + 64 - abs(n).bit_length()
        if missing <= 0:
            return RealScalar.from_scaled_int(n, k, bits)
        k += missing
    return RealScalar.from_scaled_int(scaled_floor(k), k, bits)


class _RationalMixin:
    """Shared behaviour for descriptors whose value is an exact rational."""

    def as_fraction(self) -> Fraction:
        return self._fraction

    def quadratic_parts(self) -> tuple[Fraction, Fraction, int]:
        return self._fraction, Fraction(0), 1

    def scaled_floor(self, bits: int) -> int:
        """``floor(x * 2**bits)`` computed exactly."""
        return _floor_fraction_scaled(self._fraction, bits)

    def evaluate(self, bits: int = DEFAULT_PRECISION) -> RealScalar:
        return RealScalar.from_fraction(self._fraction, bits)

    def __float__(self):
        return float(self._fraction)


@dataclass(frozen=True)
class Rational(_RationalMixin):
    numerator: int
    denominator: int = 1

    def __post_init__(self):
        _require_int("numerator", self.numerator)
        _require_int("denominator", self.denominator)
        if self.denominator == 0:
            raise DescriptorError("rational denominator is zero", self.token())

    @cached_property
    def _fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def token(self) -> str:
        return f"rat:{self.numerator}/{self.denominator}"


_DECIMAL_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class DecimalLiteral(_RationalMixin):
    text: str

    def __post_init__(self):
        if not isinstance(self.text, str) or not _DECIMAL_RE.match(self.text):
            raise DescriptorError("malformed decimal literal", str(self.text))

    @cached_property
    def _fraction(self) -> Fraction:
        return Fraction(self.text)

    def token(self) -> str:
        return f"dec:{self.text}"


_SERIES_RE = re.compile(r"^liouville(\d+)$")


@dataclass(frozen=True)
class SeriesGenerator(_RationalMixin):
    """Truncated named series; ``liouvilleB`` is sum_{k=1..order} B**(-k!)."""

    name: str
    order: int

    def __post_init__(self):
        m = _SERIES_RE.match(self.name) if isinstance(self.name, str) else None
        if m is None or int(m.group(1)) < 2:
            raise DescriptorError("unknown series", str(self.name))
        _require_int("series order", self.order)
        if not 1 <= self.order <= MAX_SERIES_ORDER:
            raise DescriptorError(f"series order must be in [1, {MAX_SERIES_ORDER}]", str(self.order))

    @property
    def base(self) -> int:
        return int(_SERIES_RE.match(self.name).group(1))

    @cached_property
    def _fraction(self) -> Fraction:
        top = math.factorial(self.order)
        den = self.base**top
        num = sum(self.base ** (top - math.factorial(k)) for k in range(1, self.order + 1))
        return Fraction(num, den)

    def token(self) -> str:
        return f"series:{self.name}:{self.order}"


@dataclass(frozen=True)
class QuadraticSurd:
    """The number ``(a + b*sqrt(c)) / d`` with ``c`` square-free."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in "abcd":
            _require_int(name, getattr(self, name))
        if self.c < 0 or not _is_squarefree(self.c):
            raise DescriptorError("surd radicand must be a non-negative square-free integer", str(self.c))
        if self.d == 0:
            raise DescriptorError("surd denominator is zero", self.token())

    @property
    def is_rational(self) -> bool:
        return self.b == 0 or self.c in (0, 1)

    def as_fraction(self) -> Fraction | None:
        if not self.is_rational:
            return None
        root = 1 if self.c == 1 else 0
        return Fraction(self.a + self.b * root, self.d)

    def quadratic_parts(self) -> tuple[Fraction, Fraction, int]:
        if self.is_rational:
            return self.as_fraction(), Fraction(0), 1
        return Fraction(self.a, self.d), Fraction(self.b, self.d), self.c

    def scaled_floor(self, bits: int) -> int:
        """``floor(x * 2**bits)`` computed exactly with integer square roots."""
        if self.is_rational:
            return _floor_fraction_scaled(self.as_fraction(), bits)
        a, b, d = (self.a, self.b, self.d) if self.d > 0 else (-self.a, -self.b, -self.d)
        s = math.isqrt(b * b * self.c << (2 * bits))
        # |b| sqrt(c) 2^bits is irrational, so it lies strictly inside (s, s + 1).
        low = (a << bits) + s if b > 0 else (a << bits) - s - 1
        return low // d

    def evaluate(self, bits: int = DEFAULT_PRECISION) -> RealScalar:
        if self.is_rational:
            return RealScalar.from_fraction(self.as_fraction(), bits)
        return _evaluate_via_floor(self.scaled_floor, bits)

    def __float__(self):
        return float(self.evaluate(MIN_PRECISION))

    def token(self) -> str:
        return f"surd:({self.a}{self.b:+d}*sqrt{self.c})/{self.d}"


Coordinate = Union[Rational, QuadraticSurd, DecimalLiteral, SeriesGenerator]
_COORD_TYPES = (Rational, QuadraticSurd, DecimalLiteral, SeriesGenerator)


def exact_fraction(coord: Coordinate) -> Fraction | None:
    """Exact rational value of a descriptor, or None when irrational."""
    return coord.as_fraction()


# ---------------------------------------------------------------------------
# Points and shifts


@dataclass(frozen=True)
class PointSpec:
    """A point of R^n given by exact coordinate descriptors."""

    coordinates: tuple

    def __post_init__(self):
        coords = tuple(self.coordinates)
        if not coords:
            raise DescriptorError("a point needs at least one coordinate", "")
        for c in coords:
            if not isinstance(c, _COORD_TYPES):
                raise DescriptorError("unsupported coordinate descriptor", repr(c))
        object.__setattr__(self, "coordinates", coords)

    @property
    def dimension(self) -> int:
        return len(self.coordinates)

    def evaluate(self, precision_bits: int = DEFAULT_PRECISION) -> list[RealScalar]:
        return evaluate_point(self, precision_bits)

    def is_rational(self) -> bool:
        return all(c.as_fraction() is not None for c in self.coordinates)

    def to_floats(self) -> list[float]:
        return [float(c) for c in self.coordinates]

    def token(self) -> str:
        return ",".join(c.token() for c in self.coordinates)

    @classmethod
    def from_fractions(cls, values) -> PointSpec:
        return cls(tuple(Rational(Fraction(v).numerator, Fraction(v).denominator) for v in values))


@dataclass(frozen=True)
class Shift(PointSpec):
    """An inhomogeneous shift theta; same descriptor forms as a point."""

    @classmethod
    def zero(cls, n: int) -> Shift:
        return cls(tuple(Rational(0) for _ in range(n)))

    @property
    def is_homogeneous(self) -> bool:
        """True when every coordinate is exactly an integer (theta = 0 mod 1)."""
        for c in self.coordinates:
            fr = c.as_fraction()
            if fr is None or fr.denominator != 1:
                return False
        return True


def evaluate_point(spec: PointSpec, precision_bits: int = DEFAULT_PRECISION) -> list[RealScalar]:
    """Evaluate every coordinate to ``precision_bits``; deterministic."""
    if precision_bits < MIN_PRECISION:
        raise PreconditionError(f"precision_bits must be >= {MIN_PRECISION}")
    return [c.evaluate(precision_bits) for c in spec.coordinates]


def coerce_shift(theta, n: int) -> Shift:
    """Accept None, a Shift, a PointSpec, a descriptor or a grammar string."""
    if theta is None:
        return Shift.zero(n)
    if isinstance(theta, str):
        theta = parse_shift(theta, n)
    elif isinstance(theta, _COORD_TYPES):
        theta = Shift((theta,))
    elif not isinstance(theta, Shift):
        theta = Shift(tuple(theta.coordinates))
    if theta.dimension != n:
        raise PreconditionError(f"shift has dimension {theta.dimension}, expected {n}")
    return theta


# ---------------------------------------------------------------------------
# Approximation records


@dataclass(frozen=True)
class ApproxRecord:
    """One approximation event.

    Simultaneous form: ``q`` is an int, ``p`` an integer tuple and
    ``error = max_i |q*x_i + p_i + theta_i|``. Dual form: ``q`` is an integer
    tuple, ``p`` an int and ``error = |q.x + p + theta|``. In both cases ``p``
    is the integer realising the distance to the nearest integer.
    """

    q: int | tuple
    p: tuple | int
    error: RealScalar
    local_exponent: float | None

    def __post_init__(self):
        if self.error < 0 or self.error > 0.5:
            raise ValueError(f"record error {self.error!r} outside [0, 1/2]")
        if self.local_exponent is not None and (self.error.is_zero() or self.height < 2):
            raise ValueError("local exponent is only defined for error > 0 and |q| >= 2")

    @property
    def height(self) -> int:
        if isinstance(self.q, tuple):
            return max(abs(v) for v in self.q)
        return abs(self.q)


# ---------------------------------------------------------------------------
# Exact zero sets: the integers q with q*x + theta in Z^n


@dataclass(frozen=True)
class IntegerSet:
    """Either all integers, none, a single integer, or a residue class."""

    kind: str
    residue: int = 0
    modulus: int = 1

    ALL = None  # populated below
    NONE = None

    def __contains__(self, q: int) -> bool:
        if self.kind == "all":
            return True
        if self.kind == "none":
            return False
        if self.kind == "point":
            return q == self.residue
        return (q - self.residue) % self.modulus == 0

    def intersect(self, other: IntegerSet) -> IntegerSet:
        if self.kind == "all":
            return other
        if other.kind == "all":
            return self
        if "none" in (self.kind, other.kind):
            return IntegerSet("none")
        if self.kind == "point":
            return self if self.residue in other else IntegerSet("none")
        if other.kind == "point":
            return other if other.residue in self else IntegerSet("none")
        r1, m1, r2, m2 = self.residue, self.modulus, other.residue, other.modulus
        g = math.gcd(m1, m2)
        if (r2 - r1) % g:
            return IntegerSet("none")
        lcm = m1 // g * m2
        k = ((r2 - r1) // g * pow(m1 // g, -1, m2 // g)) % (m2 // g) if m2 // g > 1 else 0
        return IntegerSet("class", (r1 + m1 * k) % lcm, lcm)

    def smallest_positive(self) -> int | None:
        if self.kind == "all":
            return 1
        if self.kind == "none":
            return None
        if self.kind == "point":
            return self.residue if self.residue > 0 else None
        r = self.residue % self.modulus
        return r if r > 0 else self.modulus


IntegerSet.ALL = IntegerSet("all")
IntegerSet.NONE = IntegerSet("none")


def _solve_linear_congruence(a: int, b: int, m: int) -> IntegerSet:
    """Integers q with a*q = b (mod m)."""
    if a % m == 0:
        return IntegerSet.ALL if b % m == 0 else IntegerSet.NONE
    g = math.gcd(a, m)
    if b % g:
        return IntegerSet.NONE
    m2 = m // g
    if m2 == 1:
        return IntegerSet.ALL
    return IntegerSet("class", (b // g) * pow(a // g, -1, m2) % m2, m2)


def _surd_parts(coord) -> tuple[Fraction, dict[int, Fraction]]:
    r, s, c = coord.quadratic_parts()
    return r, ({c: s} if s else {})


def simultaneous_zero_set(x: PointSpec, theta: Shift) -> IntegerSet:
    """The integers q (q = 0 included) with ``q*x + theta`` an integer vector.

    Exact: works on the descriptor's field representation, using linear
    independence of 1 and square roots of distinct square-free integers.
    """
    result = IntegerSet.ALL
    for xc, tc in zip(x.coordinates, theta.coordinates):
        xr, xs = _surd_parts(xc)
        tr, ts = _surd_parts(tc)
        for c in set(xs) | set(ts):
            sx, st = xs.get(c, Fraction(0)), ts.get(c, Fraction(0))
            if sx == 0:
                coord_set = IntegerSet.ALL if st == 0 else IntegerSet.NONE
            else:
                qv = -st / sx
                coord_set = IntegerSet("point", int(qv)) if qv.denominator == 1 else IntegerSet.NONE
            result = result.intersect(coord_set)
        lcm = xr.denominator * tr.denominator // math.gcd(xr.denominator, tr.denominator)
        a = xr.numerator * (lcm // xr.denominator)
        b = -tr.numerator * (lcm // tr.denominator)
        result = result.intersect(_solve_linear_congruence(a, b, lcm))
        if result.kind == "none":
            break
    return result


def dual_is_exact_zero(qvec, x: PointSpec, theta0) -> bool:
    """Exact test of ``q.x + theta0 in Z`` for an integer vector ``q``."""
    rat = Fraction(0)
    irr: dict[int, Fraction] = {}
    for qi, xc in zip(qvec, x.coordinates):
        r, parts = _surd_parts(xc)
        rat += qi * r
        for c, s in parts.items():
            irr[c] = irr.get(c, Fraction(0)) + qi * s
    r, parts = _surd_parts(theta0)
    rat += r
    for c, s in parts.items():
        irr[c] = irr.get(c, Fraction(0)) + s
    return rat.denominator == 1 and all(v == 0 for v in irr.values())


# ---------------------------------------------------------------------------
# Grammar: rat:1/3  surd:(-1+1*sqrt5)/2  dec:0.70710678  series:liouville10:4


def _split_top_level(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
            if depth < 0:
                raise DescriptorError("unbalanced parentheses", text)
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise DescriptorError("unbalanced parentheses", text)
    parts.append("".join(cur).strip())
    return parts


def _squarefree_split(c: int) -> tuple[int, int]:
    """Write c = k^2 * s with s square-free; return (k, s)."""
    k, s, f = 1, c, 2
    while f * f <= s:
        while s % (f * f) == 0:
            s //= f * f
            k *= f
        f += 1
    return k, s


_SURD_TERM_RE = re.compile(r"([+-]?)(\d*)(\*?)(sqrt\(?(\d+)\)?)?")


def _parse_surd(body: str, token: str) -> QuadraticSurd:
    s = body.replace(" ", "")
    den = 1
    m = re.fullmatch(r"\((.*)\)/([+-]?\d+)", s)
    if m:
        s, den = m.group(1), int(m.group(2))
    elif s.startswith("(") and s.endswith(")"):
        s = s[1:-1]
    if not s:
        raise DescriptorError("empty surd", token)
    a, b, radicand = 0, 0, None
    pos = 0
    while pos < len(s):
        m = _SURD_TERM_RE.match(s, pos)
        if m is None or m.end() == pos or (pos > 0 and not m.group(1)):
            raise DescriptorError("malformed surd", token)
        sign = -1 if m.group(1) == "-" else 1
        digits, star, root = m.group(2), m.group(3), m.group(4)
        if root:
            if star and not digits:
                raise DescriptorError("malformed surd", token)
            k, c = _squarefree_split(int(m.group(5)))
            coef = sign * (int(digits) if digits else 1) * k
            if c in (0, 1):
                a += coef * c
            else:
                if radicand not in (None, c):
                    raise DescriptorError("surd mixes different square roots", token)
                radicand = c
                b += coef
        else:
            if not digits or star:
                raise DescriptorError("malformed surd", token)
            a += sign * int(digits)
        pos = m.end()
    try:
        return QuadraticSurd(a, b, radicand or 0, den)
    except DescriptorError as exc:
        raise DescriptorError(str(exc).split(":")[0], token) from None


def parse_coordinate(token: str) -> Coordinate:
    """Parse one coordinate descriptor; bare numbers are read as ``dec:``/``rat:``."""
    tok = token.strip().replace("−", "-")
    if not tok:
        raise DescriptorError("empty coordinate", token)
    kind, _, body = tok.partition(":")
    if not _:
        if re.fullmatch(r"[+-]?\d+/[+-]?\d+", tok):
            kind, body = "rat", tok
        elif _DECIMAL_RE.match(tok):
            kind, body = "dec", tok
        else:
            raise DescriptorError("unknown coordinate descriptor", token)
    if kind == "rat":
        m = re.fullmatch(r"([+-]?\d+)(?:/([+-]?\d+))?", body)
        if not m:
            raise DescriptorError("malformed rational", token)
        return Rational(int(m.group(1)), int(m.group(2) or 1))
    if kind == "dec":
        return DecimalLiteral(body)
    if kind == "series":
        name, _, order = body.partition(":")
        if not re.fullmatch(r"\d+", order or ""):
            raise DescriptorError("malformed series", token)
        return SeriesGenerator(name, int(order))
    if kind == "surd":
        return _parse_surd(body, token)
    raise DescriptorError("unknown coordinate descriptor", token)


def parse_point(text: str) -> PointSpec:
    """Parse a comma-separated coordinate list, optionally wrapped in parentheses."""
    s = text.strip()
    if s.startswith("(") and s.endswith(")"):
        inner = s[1:-1]
        try:
            _split_top_level(inner)
            s = inner
        except DescriptorError:
            pass
    return PointSpec(tuple(parse_coordinate(t) for t in _split_top_level(s)))


def parse_shift(text: str | None, n: int | None = None) -> Shift:
    """Parse a shift; ``0``, ``zero`` or an empty string mean the zero shift."""
    if text is None or text.strip() in ("", "0", "zero"):
        if n is None:
            raise DescriptorError("zero shift needs a dimension", text or "")
        return Shift.zero(n)
    pt = parse_point(text)
    if n is not None and pt.dimension != n:
        raise DescriptorError(f"shift has dimension {pt.dimension}, expected {n}", text)
    return Shift(pt.coordinates)
