import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergolab.dynamics import (
    MISIUREWICZ_A0,
    CircleAngle,
    CircleTimesD,
    CylinderPoint,
    FullShift,
    IntervalCoord,
    Quadratic,
    SymbolWord,
    Viana,
    orbit,
)
from ergolab.errors import ContractViolation, CriticalContact, RegionCollision
from ergolab.potentials import (
    Analytic,
    BumpRegion,
    Constant,
    CylinderSet,
    PrefixTable,
    ShiftBump,
    SineBump,
    TentBump,
    birkhoff,
    evaluate,
    make_bump_pair,
    orbit_values,
    sup_over_ball,
    verify_bounded,
)


@pytest.fixture(scope="module")
def circle_pair():
    return make_bump_pair(CircleTimesD(2), BumpRegion(0.3, 0.4), SineBump())


def _sin_bump(x, lo=0.3, hi=0.4):
    return math.sin(math.pi * (x - lo) / (hi - lo)) ** 2 if lo < x < hi else 0.0


def test_constant_and_examples(circle_pair):
    assert evaluate(Constant(0.7), CircleAngle(0.123)) == 0.7
    assert evaluate(circle_pair, CircleAngle(0.9)) == 0.0
    assert evaluate(circle_pair, CircleAngle(0.16)) == pytest.approx(-_sin_bump(0.32), abs=1e-15)
    assert evaluate(circle_pair, CircleAngle(0.35)) == pytest.approx(1.0, abs=1e-15)


def test_circle_pair_preimage(circle_pair):
    flat = [v for iv in circle_pair.preimage for v in iv]
    assert flat == pytest.approx([0.15, 0.2, 0.65, 0.7], abs=1e-15)
    with pytest.raises(RegionCollision):
        make_bump_pair(CircleTimesD(2), BumpRegion(0.3, 0.7))


def test_viana_pair_preimage():
    v = Viana(16, 1.7, 0.01)
    pair = make_bump_pair(v, BumpRegion(0.1, 0.2))
    assert pair.preimage[0] == pytest.approx(math.sqrt(1.7 - 0.01 - 0.2), abs=1e-6)
    assert pair.preimage[0] > 0.2


def test_quadratic_critical_contact():
    q = Quadratic(MISIUREWICZ_A0)
    with pytest.raises(CriticalContact):
        make_bump_pair(q, BumpRegion(1.4, 1.55))
    pair = make_bump_pair(q, BumpRegion(-0.5, -0.4))
    inner, outer = pair.preimage[1]
    assert inner == pytest.approx(math.sqrt(MISIUREWICZ_A0 + 0.4))


def test_bump_validation():
    with pytest.raises(ContractViolation):
        make_bump_pair(CircleTimesD(2), BumpRegion(0.3, 0.4), SineBump(-1.0))
    with pytest.raises(ContractViolation):
        BumpRegion(0.4, 0.3)


def test_birkhoff_examples(circle_pair):
    orb = orbit(CircleTimesD(2), CircleAngle(0.16), 5)
    assert birkhoff(circle_pair, orb, 2) == 0.0
    assert birkhoff(circle_pair, orb, 0) == 0.0
    assert birkhoff(Constant(0.25), orb, 4) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.integers(0, 100), st.integers(0, 100))
def test_cocycle_identity(theta, m, n):
    pair = make_bump_pair(CircleTimesD(2), BumpRegion(0.3, 0.4), TentBump())
    orb = orbit(CircleTimesD(2), CircleAngle(theta), m + n + 1)
    tail = orbit(CircleTimesD(2), orb.point(m), n + 1)
    lhs = birkhoff(pair, orb, m + n)
    rhs = birkhoff(pair, orb, m) + birkhoff(pair, tail, n)
    assert lhs == pytest.approx(rhs, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.integers(1, 3000))
def test_telescoping_bound_and_average(theta, n):
    pair = make_bump_pair(CircleTimesD(3), BumpRegion(0.55, 0.6), SineBump(0.7))
    vals = orbit_values(pair, orbit(CircleTimesD(3), CircleAngle(theta), n), n)
    sums = np.cumsum(vals)
    assert np.abs(sums).max() <= 0.7 + 1e-9
    assert abs(sums[-1]) / n <= 0.7 / n + 1e-12


def test_shift_bump_pair():
    k = FullShift(2)
    pair = make_bump_pair(k, CylinderSet((0, 1)), ShiftBump((0.5, 1.0)))
    assert pair.preimage == ((0, 0, 1), (1, 0, 1))
    assert pair.depth == 4
    assert evaluate(pair, SymbolWord(2, (0, 1, 1, 0))) == 1.0
    assert evaluate(pair, SymbolWord(2, (1, 0, 1, 0))) == -0.5
    assert evaluate(pair, SymbolWord(2, (1, 1, 1, 0))) == 0.0
    with pytest.raises(RegionCollision):
        make_bump_pair(k, CylinderSet((0, 0)), ShiftBump((1.0,)))
    word = tuple(np.random.default_rng(0).integers(0, 2, 400))
    orb = orbit(k, SymbolWord(2, word), 300)
    assert np.abs(np.cumsum(orbit_values(pair, orb, 300))).max() <= 1.0 + 1e-12


def test_sup_over_ball_examples(circle_pair):
    assert sup_over_ball(Constant(0.3), CircleTimesD(2), CircleAngle(0.1), 5, 0.1).value == pytest.approx(1.5)
    res = sup_over_ball(circle_pair, CircleTimesD(2), CircleAngle(0.16), 2, 0.01)
    assert 0.0 <= res.value <= 1.0
    # dense scan oracle over the dynamical ball (0.1575, 0.1625)
    ys = np.linspace(0.16 - 0.0025, 0.16 + 0.0025, 10_001)[1:-1]
    brute = max(sum(evaluate(circle_pair, CircleAngle(y * 2 ** i)) for i in range(2)) for y in ys[::10])
    assert res.value == pytest.approx(brute, abs=1e-3)
    assert res.value >= brute - 1e-3


def test_sup_over_ball_shift_cylinder():
    phi = PrefixTable(2, 1, (0.2, -0.4))
    x = SymbolWord(2, (0, 1, 1, 0, 1, 0))
    res = sup_over_ball(phi, FullShift(2), x, 4, 0.1)
    assert res.value == pytest.approx(0.2 - 0.4 - 0.4 + 0.2)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.integers(1, 8), st.floats(-2, 2))
def test_sup_linear_in_constants(theta, n, c):
    phi = Analytic("cos", 0.3)
    a = sup_over_ball(phi, CircleTimesD(2), CircleAngle(theta), n, 0.05).value
    b = sup_over_ball(phi + c, CircleTimesD(2), CircleAngle(theta), n, 0.05).value
    assert b == pytest.approx(a + n * c, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.integers(1, 6), st.sampled_from([16, 64, 256]))
def test_sup_monotone_in_resolution(theta, n, res):
    pair = make_bump_pair(CircleTimesD(2), BumpRegion(0.3, 0.4), SineBump())
    lo = sup_over_ball(pair, CircleTimesD(2), CircleAngle(theta), n, 0.08, resolution=res).value
    hi = sup_over_ball(pair, CircleTimesD(2), CircleAngle(theta), n, 0.08, resolution=2 * res).value
    assert hi >= lo


def test_verify_bounded_constant_zero():
    rep = verify_bounded(Constant(0.0), CircleTimesD(2), 50, 1000)
    assert rep.global_max == 0.0 and rep.passed


def test_verify_bounded_report_csv(circle_pair):
    rep = verify_bounded(circle_pair, CircleTimesD(2), 20, 2000, seed=1)
    assert rep.passed
    buf = io.StringIO()
    rep.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "seed,max_abs_Sn" and len(lines) == 21


@pytest.mark.slow
def test_bounded_sums_full_scale(circle_pair):
    rep = verify_bounded(circle_pair, CircleTimesD(2), 1000, 100_000, seed=9)
    assert rep.passed and rep.excluded == 0
    v = Viana(16, MISIUREWICZ_A0, 0.01)
    pair = make_bump_pair(v, BumpRegion(0.1, 0.2))
    rep = verify_bounded(pair, v, 1000, 100_000, seed=9)
    assert rep.passed and rep.excluded == 0


def test_viana_pair_telescopes():
    v = Viana()
    pair = make_bump_pair(v, BumpRegion(0.1, 0.2, 0.2, 0.4))
    rep = verify_bounded(pair, v, 200, 5000, seed=3)
    assert rep.passed
