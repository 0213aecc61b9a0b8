"""Exact continued fractions of rationals and real quadratic surds.

Used as an independent oracle for best approximations: the record-breaking
denominators of ``||q x||`` are exactly the convergent denominators.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterator

from dioph.core import QuadraticSurd


def _rational_terms(fr: Fraction) -> Iterator[int]:
    num, den = fr.numerator, fr.denominator
    while den:
        a = num // den
        yield a
        num, den = den, num - a * den


def _surd_terms(x: QuadraticSurd) -> Iterator[int]:
    # Normalise to (P + sqrt(D)) / Q with Q | D - P^2.
    a, b, d = (x.a, x.b, x.d) if x.b > 0 else (-x.a, -x.b, -x.d)
    P, D, Q = a, b * b * x.c, d
    if (D - P * P) % Q:
        P, D, Q = P * abs(Q), D * Q * Q, Q * abs(Q)
    s = math.isqrt(D)
    while True:
        a_k = (P + s) // Q if Q > 0 else (P + s + 1) // Q
        yield a_k
        P = a_k * Q - P
        Q = (D - P * P) // Q


def continued_fraction(x, terms: int) -> list[int]:
    """First ``terms`` partial quotients of a descriptor (fewer if rational)."""
    fr = x.as_fraction()
    it = _rational_terms(fr) if fr is not None else _surd_terms(x)
    out = []
    for a in it:
        out.append(a)
        if len(out) >= terms:
            break
    return out


def convergents(x, max_denominator: int) -> list[tuple[int, int]]:
    """Convergents ``(p_k, q_k)`` with ``q_k <= max_denominator``."""
    out = []
    pm2, qm2, pm1, qm1 = 0, 1, 1, 0
    fr = x.as_fraction()
    it = _rational_terms(fr) if fr is not None else _surd_terms(x)
    for a in it:
        p, q = a * pm1 + pm2, a * qm1 + qm2
        if q > max_denominator:
            break
        out.append((p, q))
        pm2, qm2, pm1, qm1 = pm1, qm1, p, q
    return out


def best_approximation_denominators(x, max_denominator: int) -> list[int]:
    """Denominators ``q >= 1`` at which ``||q x||`` attains a new strict minimum.

    These are the convergent denominators, except that a leading convergent
    with ``q = 1`` appearing twice (when the first partial quotient is 1) is
    reported once, and ``q = 1`` is always the first record.
    """
    qs = []
    for _, q in convergents(x, max_denominator):
        if q >= 1 and (not qs or q > qs[-1]):
            qs.append(q)
    if not qs or qs[0] != 1:
        qs.insert(0, 1)
    return qs
