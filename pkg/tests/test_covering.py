import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dioph import covering as cov
from dioph.core import Shift, parse_shift
from dioph.curves import arc_measure, parse_curve, veronese
from dioph.errors import InvariantViolation, PreconditionError

ZERO2 = Shift.zero(2)
LINE = parse_curve("poly:(x):I=[0,1]")


@pytest.fixture(scope="module")
def families():
    cur = veronese(2)
    out = {}
    for th in ("0", "0.3,0.7"):
        for t in (4, 5, 6):
            out[th, t] = cov.enumerate_family(cur, parse_shift(th, 2), 0.4, t)
    return out


@given(
    st.integers(-40, 40).filter(bool),
    st.tuples(st.integers(-60, 60), st.integers(-60, 60)),
    st.floats(0.01, 1.0),
    st.lists(st.floats(-2, 2), min_size=2, max_size=2),
)
def test_ball_predicates_agree(q, p, eps, y):
    ball = cov.ApproxBall(p, q, eps, parse_shift("dec:0.3,dec:0.7", 2))
    y = np.array(y)
    r = ball.residual(y)
    if abs(r - ball.scale) > 1e-9 * ball.scale:
        assert ball.contains(y) == ball.contains_by_center(y)


def test_ball_radius_and_centre():
    b = cov.ApproxBall((-3, -1), 7, 0.1, ZERO2)
    assert b.radius == pytest.approx(7 ** -0.6 / 7)
    assert np.allclose(b.center, [3 / 7, 1 / 7])
    with pytest.raises(PreconditionError):
        cov.ApproxBall((0,), 0, 0.1, Shift.zero(1))


@given(st.integers(-30, 30).filter(bool), st.integers(-40, 40), st.floats(0.05, 1.0))
def test_one_dimensional_trace_is_the_explicit_interval(q, p, eps):
    ball = cov.ApproxBall((p,), q, eps, Shift.zero(1))
    r = abs(q) ** (-1 - eps)
    lo, hi = sorted(((-p - r) / q, (-p + r) / q))
    lo, hi = max(lo, 0.0), min(hi, 1.0)
    tr = cov.ball_trace(ball, LINE)
    if hi <= lo:
        assert tr == []
    else:
        assert len(tr) == 1
        assert tr[0][0] == pytest.approx(lo, abs=1e-14) and tr[0][1] == pytest.approx(hi, abs=1e-14)


def _sampled_trace(ball, curve, m=10_000):
    a, b = (float(v) for v in curve.interval)
    xs = np.linspace(a, b, m)
    return xs[ball.contains(curve.evaluate(xs))]


def test_trace_inside_first_coordinate_window_and_sampling():
    cur = veronese(2)
    b = cov.ApproxBall((-3, -1), 7, 0.1, ZERO2)
    tr = cov.ball_trace(b, cur)
    half = 7**-0.6 / 7
    for lo, hi in tr:
        assert 3 / 7 - half - 1e-15 <= lo <= hi <= 3 / 7 + half + 1e-15
    xs = _sampled_trace(b, cur)
    assert len(xs) > 0
    assert all(any(lo - 1e-12 <= x <= hi + 1e-12 for lo, hi in tr) for x in xs)


@settings(max_examples=40)
@given(st.integers(5, 200), st.floats(0, 1), st.sampled_from(["0", "0.3,0.7", "rat:1/2,rat:1/3"]), st.floats(0.05, 0.5))
def test_traces_match_dense_sampling(q, x0, th, eps):
    cur = parse_curve("curve:(x, x^3 - x/2, sin(4*x)):I=[0,1]")
    theta = parse_shift(th + (",0" if th.count(",") == 1 else ",0,0" if th == "0" else ""), 3)
    y = cur.evaluate(np.array([x0]))[:, 0]
    p = tuple(int(v) for v in np.round(-q * y - cov.shift_floats(theta)))
    ball = cov.ApproxBall(p, q, eps, theta)
    tr = cov.ball_trace(ball, cur)
    d = 2 * q ** (-1 - 1 / 3 - eps)
    for lo, hi in tr:
        assert hi - lo <= d * (1 + 1e-12)
    xs = np.linspace(0, 1, 20001)
    inside = ball.contains(cur.evaluate(xs))
    covered = np.zeros_like(inside)
    for lo, hi in tr:
        covered |= (xs > lo - 1e-12) & (xs < hi + 1e-12)
    assert not (inside & ~covered).any()
    # Interior points of each trace interval are in the ball.
    for lo, hi in tr:
        mids = np.linspace(lo, hi, 7)[1:-1]
        if hi - lo > 1e-10:
            assert ball.contains(cur.evaluate(mids)).all()


def test_lemma1_upper_example():
    cur = veronese(2)
    b = cov.ApproxBall((-3, -1), 100, 0.1, ZERO2)
    res = cov.lemma1_bounds(b, cur)
    assert res.measure <= res.upper
    up, low = cov.lemma1_constants(cur, 100, 0.1)
    assert up == pytest.approx(2 * 2 * 2 * 100 ** (-1 - 0.5 - 0.1))
    assert low == pytest.approx(0.5 * 0.5 * 100 ** (-1.6))


def test_lemma1_empty_trace_has_no_lower_bound():
    b = cov.ApproxBall((50, 50), 100, 0.1, ZERO2)
    res = cov.lemma1_bounds(b, veronese(2))
    assert res.measure == 0 and res.lower is None


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_lemma1_hitting_ball_from_grid_point(i):
    cur = veronese(2)
    x0 = i / 10_000
    q, eps = 100, 0.1
    p = tuple(int(v) for v in np.round(-q * cur.evaluate(np.array([x0]))[:, 0]))
    res = cov.lemma1_bounds(cov.ApproxBall(p, q, eps, ZERO2), cur)
    assert res.measure <= res.upper
    tr = cov.ball_trace(cov.ApproxBall(p, q, eps, ZERO2), cur)
    assert res.measure == pytest.approx(sum(arc_measure(cur, lo, hi) for lo, hi in tr), rel=1e-8, abs=1e-300)
    if res.lower is not None:
        assert res.measure >= res.lower


def test_fault_hook_breaks_lemma1():
    b = cov.ApproxBall((-3, -1), 7, 0.1, ZERO2)
    with cov.inject_fault("lemma1"):
        with pytest.raises(cov.LemmaAuditError):
            cov.lemma1_bounds(b, veronese(2))
    cov.lemma1_bounds(b, veronese(2))


def test_smallest_family_on_the_line():
    f = cov.enumerate_family(LINE, Shift.zero(1), 0.1, 0, signs="both")
    labels = {(int(q), int(p[0])) for q, p in zip(f.q, f.p)}
    brute = set()
    for q in (1, -1):
        for p in range(-3, 4):
            if cov.ball_trace(cov.ApproxBall((p,), q, 0.1, Shift.zero(1)), LINE):
                brute.add((q, p))
    # Twins (p, q) and (-p, -q) coincide when theta = 0; one label is kept per set.
    merged = {(q, p) if q > 0 else (-q, -p) for q, p in brute}
    assert labels == merged
    assert len(labels) >= 2


@pytest.mark.parametrize("th", ["0", "0.3,0.7"])
@pytest.mark.parametrize("t", [2, 3])
def test_enumeration_is_complete_against_a_p_box(th, t):
    cur = veronese(2)
    theta = parse_shift(th, 2)
    f = cov.enumerate_family(cur, theta, 0.4, t)
    got = {(int(q), tuple(int(v) for v in p)) for q, p in zip(f.q, f.p)}
    brute = set()
    for q in range(2**t, 2 ** (t + 1)):
        for p1 in range(-q - 2, 3):
            for p2 in range(-q - 2, 3):
                b = cov.ApproxBall((p1, p2), q, 0.4, theta)
                if cov.ball_trace(b, cur):
                    brute.add((q, (p1, p2)))
    assert got == brute


def test_both_signs_doubles_a_generic_shift():
    cur = veronese(2)
    th = parse_shift("0.3,0.7", 2)
    pos = cov.enumerate_family(cur, th, 0.4, 4)
    both = cov.enumerate_family(cur, th, 0.4, 4, signs="both")
    assert (pos.q > 0).all()
    assert (both.q < 0).any() and (both.q > 0).sum() == len(pos)


def test_twin_merge_for_half_integer_shift():
    cur = veronese(2)
    th = parse_shift("rat:1/2,0", 2)
    assert len(cov.enumerate_family(cur, th, 0.4, 4, signs="both")) == len(cov.enumerate_family(cur, th, 0.4, 4))


@pytest.mark.parametrize("key", [("0", 4), ("0", 5), ("0", 6), ("0.3,0.7", 4), ("0.3,0.7", 5), ("0.3,0.7", 6)])
def test_classification_matches_grid_oracle(families, key):
    f = families[key]
    shared = cov.grid_overlap_oracle(f)
    assert shared <= set(np.nonzero(~f.disjoint)[0].tolist())


def test_partner_relation_is_symmetric(families):
    for f in families.values():
        for k in np.nonzero(~f.disjoint)[0]:
            assert not f.disjoint[f.partner[k]]
            assert f.partner[k] != k


def test_every_ball_is_tagged_once(families):
    for f in families.values():
        assert f.n_disjoint + f.n_nondisjoint == len(f)
        assert {f.tag(k) for k in range(len(f))} <= {"disjoint", "non-disjoint"}
        assert ((f.partner < 0) == f.disjoint).all()


def test_witness_points_lie_in_both_wide_balls(families):
    f = families["0.3,0.7", 5]
    for k in np.nonzero(~f.disjoint)[0][:200]:
        y = f.witness_point(k)
        j = int(f.partner[k])
        a = cov.ApproxBall(tuple(f.p[k]), int(f.q[k]), f.eps / 2, f.theta)
        b = cov.ApproxBall(tuple(f.wide.p[j]), int(f.wide.q[j]), f.eps / 2, f.theta)
        assert a.contains(y) and b.contains(y)


def test_all_disjoint_for_large_eps_on_the_line():
    f = cov.enumerate_family(LINE, parse_shift("dec:0.37", 1), 3.0, 3)
    assert len(f) > 0 and f.n_nondisjoint == 0
    iv = sorted(iv for k in range(len(f.wide.q)) for iv in f.wide.trace.for_owner(k))
    assert all(a[1] <= b[0] for a, b in zip(iv, iv[1:]))


def test_lemma1_audit_is_clean(families):
    for f in families.values():
        a = cov.lemma1_audit(f)
        assert a.ok and a.checked == len(f)


def test_lemma1_audit_fault():
    f = cov.enumerate_family(veronese(2), ZERO2, 0.4, 4)
    with cov.inject_fault("lemma1"):
        assert not cov.lemma1_audit(f).ok
        with pytest.raises(cov.LemmaAuditError):
            cov.lemma1_audit(f, raise_on_violation=True)


def test_lemma2_containment_from_true_height(families):
    for (_, t), f in families.items():
        a = cov.lemma2_audit(f, height_threshold=2 ** (2 / f.eps))
        assert not a.containment_failures and not a.measure_failures


def test_decay_preconditions_and_bound():
    cur = veronese(2)
    with pytest.raises(PreconditionError):
        cov.disjoint_sum_decay(cur, ZERO2, 0.4, [2, 3])
    res = cov.disjoint_sum_decay(cur, ZERO2, 0.4, [4, 5, 6])
    assert res.all_within_bound
    assert res.constant == pytest.approx(4 * 2 * 2 / 0.5 * arc_measure(cur))


def test_empty_family_has_zero_sum():
    cur = parse_curve("poly:(x, 0):I=[0,1/1000]")
    f = cov.enumerate_family(cur, parse_shift("0,dec:0.5", 2), 0.4, 4)
    assert len(f) == 0 and cov.disjoint_sum(f) == 0.0


def test_fit_slope_on_exact_powers():
    assert cov.fit_slope([1, 2, 3], [2.0**-1, 2.0**-2, 2.0**-3]) == pytest.approx(-1.0)
    assert math.isnan(cov.fit_slope([1, 2], [0.0, 1.0]))


def test_crossover_level_definition():
    for n, eps in [(2, 0.4), (2, 0.1), (3, 0.5)]:
        t = cov.crossover_level(n, eps)
        a, b = 1 / n + eps / 2, 1 / n + eps / 3
        assert 1 - t * a < -(t + 2) * b
        assert not (1 - (t - 1) * a < -(t + 1) * b)
    assert cov.crossover_level(2, 0.4) == 35


def test_dichotomy_records_satisfy_bounds(families):
    for f in families.values():
        for r in cov.nondisjoint_dichotomy(f):
            assert r.combination_ok and r.height_ok
            assert not r.classified and r.branch is None


def test_planted_rational_point_repeats():
    cur = veronese(2)
    recs = []
    for t in range(4, 9):
        recs += cov.nondisjoint_dichotomy(cov.enumerate_family(cur, ZERO2, 0.4, t))
    reps = cov.repeated_pairs(recs, cur)
    planted = [r for r in reps if r.rational_point == (Fraction(1, 2), Fraction(1, 4))]
    assert planted and planted[0].longest_run >= 3 and planted[0].on_curve


def test_repeated_pair_run_length():
    assert cov._longest_run([1, 2, 4, 5, 6, 9]) == 3


def test_zero_difference_is_an_invariant_violation():
    f = cov.enumerate_family(veronese(2), ZERO2, 0.4, 4)
    k = int(np.nonzero(~f.disjoint)[0][0])
    f.partner[k] = k
    with pytest.raises(InvariantViolation):
        cov.nondisjoint_dichotomy(f)


@settings(max_examples=12)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.2, 1.0), st.integers(2, 5))
def test_disjoint_balls_have_separated_wide_traces(a, b, eps, t):
    cur = veronese(2)
    theta = parse_shift(f"dec:{a:.6f},dec:{b:.6f}", 2)
    f = cov.enumerate_family(cur, theta, eps, t)
    assert cov.grid_overlap_oracle(f, points=50_000) <= set(np.nonzero(~f.disjoint)[0].tolist())
    iv = sorted((lo, hi, k) for k in np.nonzero(f.disjoint)[0] for lo, hi in f.wide.trace.for_owner(int(k)))
    others = [(lo, hi, k) for k in range(len(f.wide.q)) for lo, hi in f.wide.trace.for_owner(k)]
    for lo, hi, k in iv:
        for lo2, hi2, k2 in others:
            if k2 != k:
                assert hi <= lo2 or hi2 <= lo
