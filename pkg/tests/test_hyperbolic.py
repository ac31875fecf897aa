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
    IntervalCoord,
    Orbit,
    Quadratic,
    Viana,
    orbit,
)
from ergolab.errors import ContractViolation, PreballNotHomeomorphic
from ergolab.hyperbolic import (
    DELTA_CAL,
    SIGMA_METRIC,
    HyperbolicTimeRecord,
    classify,
    cross_validate,
    detect_pliss,
    dynamical_ball_1d,
    frequency,
    preball,
    random_seeds,
    record_summary_csv,
    record_to_csv,
    slow_approx_average,
    slow_approx_ensemble,
    verify_metric_contraction,
)


def _fake_orbit(inv, crit=None):
    inv = np.asarray(inv, dtype=float)
    crit = np.full(inv.size, 1.0) if crit is None else np.asarray(crit, dtype=float)
    return Orbit(Quadratic(2.0), IntervalCoord(0.5), np.zeros(inv.size + 1), inv, crit)


def _pliss_bruteforce(inv, sigma):
    # n is a time iff prod_{j=n-k}^{n-1} inv_j <= sigma^k for every 1 <= k <= n
    out = []
    logs = [math.log(v) for v in inv]
    for n in range(1, len(inv) + 1):
        ok = True
        acc = 0.0
        for k in range(1, n + 1):
            acc += logs[n - k]
            if acc > k * math.log(sigma) + 1e-12:
                ok = False
                break
        if ok:
            out.append(n)
    return out


def test_pliss_examples():
    rec = detect_pliss(orbit(CircleTimesD(2), CircleAngle(0.3), 50), 0.5)
    assert list(rec.times) == list(range(1, 51))
    rec = detect_pliss(orbit(CircleTimesD(2), CircleAngle(0.3), 50), 0.4)
    assert rec.times.size == 0
    q = orbit(Quadratic(2.0), IntervalCoord(2.0), 5)
    assert list(q.inv_norms) == [0.25] * 5
    assert list(detect_pliss(q, 0.5).times) == [1, 2, 3, 4, 5]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.05, 3.0), min_size=1, max_size=60), st.floats(0.1, 0.95))
def test_pliss_matches_bruteforce(inv, sigma):
    rec = detect_pliss(_fake_orbit(inv), sigma)
    expect = _pliss_bruteforce(inv, sigma)
    # ties within 1e-12 may go either way
    assert set(rec.times) ^ set(expect) <= {
        n for n in range(1, len(inv) + 1)
        if min(abs(sum(math.log(v) for v in inv[n - k:n]) - k * math.log(sigma)) for k in range(1, n + 1)) < 1e-9
    }


def test_pliss_truncates_at_critical_hit():
    rec = detect_pliss(orbit(Quadratic(1.5625), IntervalCoord(1.25), 6), 0.5)
    assert rec.truncated and rec.truncated_at == 1
    assert rec.length == 1


def test_pliss_rejects_bad_sigma():
    with pytest.raises(ContractViolation):
        detect_pliss(orbit(CircleTimesD(2), CircleAngle(0.3), 5), 1.0)


def test_frequency_examples():
    full = HyperbolicTimeRecord("m", 100, 0.5, np.arange(1, 101))
    empty = HyperbolicTimeRecord("m", 100, 0.5, np.zeros(0, dtype=np.int64))
    even = HyperbolicTimeRecord("m", 100, 0.5, np.arange(2, 101, 2))
    assert frequency(full, 100) == 1.0
    assert frequency(empty, 100) == 0.0
    assert frequency(even, 100) == 0.5
    with pytest.raises(ContractViolation):
        frequency(full, 101)


@settings(max_examples=100, deadline=None)
@given(st.sets(st.integers(1, 200)), st.integers(1, 200))
def test_freq_table_is_counting(times, n):
    rec = HyperbolicTimeRecord("m", 200, 0.5, np.array(sorted(times), dtype=np.int64))
    assert frequency(rec, n) == sum(1 for t in times if t <= n) / n
    assert rec.freq_table()[n - 1] == frequency(rec, n)


def test_record_csv():
    rec = detect_pliss(orbit(CircleTimesD(2), CircleAngle(0.3), 3), 0.5)
    buf = io.StringIO()
    record_to_csv(rec, buf)
    assert buf.getvalue() == "n_hyperbolic\n1\n2\n3\n"
    buf = io.StringIO()
    record_summary_csv(rec, buf)
    assert buf.getvalue().splitlines()[0] == "sigma,horizon,frequency,truncated"


def test_preball_examples():
    pb = preball(CircleTimesD(2), CircleAngle(0.5), 2, 0.1)
    assert (pb.lo, pb.hi) == pytest.approx((0.475, 0.525), abs=1e-15)
    pb = preball(CircleTimesD(2), CircleAngle(0.5), 0, 0.1)
    assert (pb.lo, pb.hi) == pytest.approx((0.4, 0.6), abs=1e-15)
    pb = preball(Quadratic(2.0), IntervalCoord(-2.0), 1, 0.1)
    assert (pb.lo, pb.hi) == (-2.0, -math.sqrt(3.9))
    assert 2 - pb.hi ** 2 == pytest.approx(-1.9, abs=1e-14)


def test_preball_rejects_fold():
    with pytest.raises(PreballNotHomeomorphic):
        preball(Quadratic(2.0), IntervalCoord(0.05), 1, 0.1)
    with pytest.raises(PreballNotHomeomorphic):
        preball(CircleTimesD(2), CircleAngle(0.1), 1, 0.5)


def test_dynamical_ball_examples():
    assert dynamical_ball_1d(CircleTimesD(2), CircleAngle(0.5), 2, 0.1) == pytest.approx((0.475, 0.525), abs=1e-15)
    assert dynamical_ball_1d(Quadratic(1.7), IntervalCoord(0.3), 0, 0.1) == pytest.approx((0.2, 0.4), abs=1e-15)
    lo, hi = dynamical_ball_1d(CircleTimesD(2), CircleAngle(0.3), 0, 0.5)
    assert hi - lo == 1.0


def _ball_by_scan(system, x0, n, delta, half_width, m=20001):
    # independent route: test the defining condition on a dense grid around x0
    ys = x0 + np.linspace(-half_width, half_width, m)
    xs = np.array([x0])
    ok = np.ones(m, dtype=bool)
    for _ in range(n + 1):
        ok &= system.metric.states(ys - np.floor(ys) if isinstance(system, CircleTimesD) else ys, xs) < delta
        ys, xs = system.step_states(ys - np.floor(ys) if isinstance(system, CircleTimesD) else ys), system.step_states(xs)
    idx = np.flatnonzero(ok)
    c = m // 2
    # connected component containing the centre
    left = c
    while left - 1 >= 0 and ok[left - 1]:
        left -= 1
    right = c
    while right + 1 < m and ok[right + 1]:
        right += 1
    step = 2 * half_width / (m - 1)
    grid = x0 + np.linspace(-half_width, half_width, m)
    assert idx.size > 0
    return grid[left], grid[right], step


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 3]), st.floats(0, 1, exclude_max=True), st.integers(0, 10))
def test_preball_equals_scanned_dynamical_ball(d, theta, n):
    system = CircleTimesD(d)
    x = CircleAngle(theta)
    pb = preball(system, x, n, 0.05)
    lo, hi = dynamical_ball_1d(system, x, n, 0.05)
    assert abs(pb.lo - lo) <= 1e-10 and abs(pb.hi - hi) <= 1e-10
    half = 0.05 / d ** n
    slo, shi, step = _ball_by_scan(system, x.theta, n, 0.05, 1.5 * half)
    assert abs(slo - lo) <= 2 * step + 1e-12
    assert abs(shi - hi) <= 2 * step + 1e-12


def test_quadratic_ball_matches_scan():
    system = Quadratic(2.0)
    x = IntervalCoord(2.0)
    for n in (1, 2, 3):
        pb = preball(system, x, n, 0.05)
        slo, shi, step = _ball_by_scan(system, 2.0, n, 0.05, 0.05)
        # pre-ball is clipped to [-2, 2]; the scan lives on the same side
        assert abs(pb.lo - max(slo, -2.0)) <= 2 * step
        assert abs(pb.hi - min(shi, 2.0)) <= 2 * step


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([2, 3]), st.floats(0, 1, exclude_max=True), st.integers(0, 10),
       st.floats(0.001, 0.2), st.floats(0.05, 1.0))
def test_preball_monotone_in_delta(d, theta, n, delta, shrink):
    system = CircleTimesD(d)
    big = preball(system, CircleAngle(theta), n, delta)
    small = preball(system, CircleAngle(theta), n, delta * shrink)
    assert big.lo <= small.lo + 1e-12 and small.hi <= big.hi + 1e-12


def test_quadratic_preball_monotone_in_delta():
    system = Quadratic(MISIUREWICZ_A0)
    rng = np.random.default_rng(1)
    for x0 in rng.uniform(0.2, 1.4, 20):
        rec = detect_pliss(orbit(system, IntervalCoord(x0), 30), 0.9)
        for n in rec.times[:5]:
            try:
                big = preball(system, IntervalCoord(x0), int(n), 0.005)
            except PreballNotHomeomorphic:
                continue
            small = preball(system, IntervalCoord(x0), int(n), 0.001)
            assert big.lo <= small.lo + 1e-12 and small.hi <= big.hi + 1e-12


def test_metric_contraction_examples():
    rep = verify_metric_contraction(CircleTimesD(2), CircleAngle(0.3), 5, 0.5, 0.1)
    assert rep.passed and rep.worst_ratio == pytest.approx(1.0, abs=1e-12)
    rep = verify_metric_contraction(CircleTimesD(3), CircleAngle(0.3), 4, 0.5, 0.1)
    assert rep.passed and rep.worst_ratio <= 2 / 3 + 1e-12
    rep = verify_metric_contraction(Quadratic(2.0), IntervalCoord(2.0), 3, 0.5, 0.05)
    assert rep.passed


def test_quadratic_contraction_pair_grid():
    # brute force over a 10^3-point grid of the pre-ball, all pairs
    system = Quadratic(2.0)
    n, sigma = 3, 0.5
    pb = preball(system, IntervalCoord(2.0), n, 0.05)
    ys = np.linspace(pb.lo, pb.hi, 1000)[1:-1]
    orbs = [ys]
    for _ in range(n):
        orbs.append(system.step_states(orbs[-1]))
    dn = np.abs(orbs[n][:, None] - orbs[n][None, :])
    off = ~np.eye(ys.size, dtype=bool)
    for i in range(n):
        di = np.abs(orbs[i][:, None] - orbs[i][None, :])
        assert np.all(di[off] <= sigma ** (n - i) * dn[off] * (1 + 1e-9))


@pytest.mark.parametrize("family", ["quadratic", "viana"])
def test_cross_validation_at_calibrated_delta(family):
    system = Quadratic(MISIUREWICZ_A0) if family == "quadratic" else Viana()
    seeds = random_seeds(system, 10, 123)
    failed_total = checked_total = 0
    for s in seeds:
        orb = orbit(system, system.to_point(s), 60)
        checked, failed, _ = cross_validate(orb, 0.9, SIGMA_METRIC[family], DELTA_CAL[family], 100, 0, 40)
        checked_total += checked
        failed_total += failed
    assert checked_total > 50
    assert failed_total == 0


LADDER = (0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001)


def _corpus_failures(system, family, delta):
    seeds = random_seeds(system, 40, 0)
    failed = 0
    for s in seeds:
        orb = orbit(system, system.to_point(s), 60)
        failed += cross_validate(orb, 0.9, SIGMA_METRIC[family], delta, 100, 0, 40)[1]
    return failed


@pytest.mark.slow
@pytest.mark.parametrize("family", ["circle_times_d", "quadratic", "viana"])
def test_delta_calibration(family):
    system = {"circle_times_d": CircleTimesD(2), "quadratic": Quadratic(MISIUREWICZ_A0), "viana": Viana()}[family]
    cal = DELTA_CAL[family]
    assert _corpus_failures(system, family, cal) == 0
    bigger = [d for d in LADDER if d > cal]
    if bigger:
        # the next rung up is not clean, so cal is the largest passing value
        assert _corpus_failures(system, family, min(bigger)) > 0


def test_classify_examples():
    c2 = CircleTimesD(2)
    seeds = random_seeds(c2, 50, 0)
    cls = classify(c2, seeds, 0.6, 200, 0.05)
    assert cls.fraction_h == 1.0 and np.all(cls.freqs == 1.0)
    cls = classify(c2, seeds, 0.4, 200, 0.05)
    assert cls.fraction_h == 0.0 and np.all(cls.freqs == 0.0)


def test_classify_matches_detect_pliss():
    v = Viana()
    seeds = random_seeds(v, 5, 9)
    cls = classify(v, seeds, 0.9, 300, 0.05)
    for i, s in enumerate(seeds):
        rec = detect_pliss(orbit(v, v.to_point(s), 300), 0.9)
        assert cls.freqs[i] == frequency(rec, 300)


def test_viana_classification_baseline():
    v = Viana()
    cls = classify(v, random_seeds(v, 500, 10), 0.9, 5000, 0.05)
    assert cls.fraction_h >= 0.9
    # frozen regression values for master seed 10
    assert cls.fraction_h == 1.0
    assert float(np.nanmean(cls.freqs)) == pytest.approx(0.552062, abs=1e-12)
    assert int(cls.flagged.sum()) == 0


def test_slow_approx_examples():
    assert slow_approx_average(_fake_orbit(np.full(100, 0.5), np.full(100, 0.7)), 0.5) == (0.0, False)
    crit = np.full(100, 0.9)
    crit[17] = math.exp(-1.0)
    val, flag = slow_approx_average(_fake_orbit(np.full(100, 0.5), crit), 0.5)
    assert val == pytest.approx(0.01, abs=1e-15) and not flag
    crit[3] = 0.0
    assert slow_approx_average(_fake_orbit(np.full(100, 0.5), crit), 0.5) == (math.inf, True)


def test_slow_approx_ensemble_matches_single():
    v = Viana()
    seeds = random_seeds(v, 4, 2)
    ens = slow_approx_ensemble(v, seeds, 400, 0.01)
    for i, s in enumerate(seeds):
        val, _ = slow_approx_average(orbit(v, v.to_point(s), 400), 0.01)
        assert ens[i] == pytest.approx(val, rel=1e-12, abs=1e-15)


def test_viana_slow_approx_baseline():
    v = Viana()
    vals = slow_approx_ensemble(v, random_seeds(v, 500, 10), 10_000, 1e-3)
    assert float(np.nanmean(vals)) < 0.05
