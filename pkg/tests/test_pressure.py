import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from ergolab.acceptance import random_prefix_pair
from ergolab.dynamics import CircleTimesD, FullShift, Quadratic, Viana
from ergolab.errors import ContractViolation
from ergolab.hyperbolic import classify
from ergolab.potentials import Analytic, Constant, CylinderSet, PrefixTable, ShiftBump, make_bump_pair
from ergolab.pressure import (
    SubAlphabet,
    WholeSpace,
    build_separated,
    caratheodory_m,
    check_sup_decomposition,
    hyperbolicity_report,
    optimal_cover,
    pressure_separated,
    relative_pressure_shift,
)

LOG2 = math.log(2)


# ---------------------------------------------------------------------------
# Caratheodory cost on the shift

def test_cost_closed_form():
    assert caratheodory_m(2, Constant(0.0), WholeSpace(), 1, 0.8, 20) == pytest.approx(2 ** 20 * math.exp(-16), rel=1e-12)
    assert caratheodory_m(2, Constant(0.0), WholeSpace(), 1, LOG2, 20) == pytest.approx(1.0, abs=1e-12)
    for g in (0.1, 0.5, 2.0):
        got = caratheodory_m(2, Constant(0.0), SubAlphabet({0}), 1, g, 20)
        assert got == pytest.approx(math.exp(-g * 20), rel=1e-12)


def test_cost_requires_admissible_cover():
    with pytest.raises(ContractViolation, match="no admissible cover"):
        caratheodory_m(2, Constant(0.0), WholeSpace(), 30, 0.5, 24)


def _brute_cost(k, tab, N, gamma, n_max):
    # oracle: all cylinder covers, by choosing to stop or split at every node
    L = tab.length

    def R(word):
        best = -math.inf
        for ext in itertools.product(range(k), repeat=L - 1):
            w = word + ext
            best = max(best, sum(tab.table[int("".join(map(str, w[i:i + L])), k)] for i in range(len(word))))
        return best

    def rec(word):
        m = len(word)
        own = math.exp(R(word) - gamma * m) if m >= N else math.inf
        if m == n_max:
            return own
        return min(own, sum(rec(word + (a,)) for a in range(k)))

    return rec(())


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.floats(0.2, 1.5), st.integers(0, 2 ** 31))
def test_cost_matches_bruteforce(L, N, gamma, seed):
    rng = np.random.default_rng(seed)
    tab = PrefixTable(2, L, tuple(rng.uniform(-1, 1, 2 ** L)))
    n_max = 7
    got = caratheodory_m(2, tab, WholeSpace(), N, gamma, n_max)
    assert got == pytest.approx(_brute_cost(2, tab, N, gamma, n_max), rel=1e-10)
    m, cover = optimal_cover(2, tab, WholeSpace(), N, gamma, n_max)
    assert m == pytest.approx(got, rel=1e-10)
    assert cover.covers()
    assert all(len(w) >= N for w in cover.words)


# ---------------------------------------------------------------------------
# relative pressure on the shift

@pytest.mark.parametrize("k", [2, 3, 4])
def test_whole_shift(k):
    est = relative_pressure_shift(k, Constant(0.0), WholeSpace())
    assert abs(est.value - math.log(k)) <= 1e-6
    buf = io.StringIO()
    est.to_csv(buf)
    assert buf.getvalue().startswith("N,gamma,log_m")


def test_sub_alphabet():
    assert abs(relative_pressure_shift(3, Constant(0.0), SubAlphabet({0, 1})).value - LOG2) <= 1e-6
    assert abs(relative_pressure_shift(2, Constant(0.0), SubAlphabet({0})).value) <= 1e-6


@pytest.mark.parametrize("c", [-0.5, 0.3, 1.0])
def test_constant_shift_lemma_shift(c):
    tab = PrefixTable(2, 2, (0.1, -0.3, 0.7, 0.2))
    g0 = relative_pressure_shift(2, tab, WholeSpace()).value
    gc = relative_pressure_shift(2, tab + c, WholeSpace()).value
    assert abs(gc - g0 - c) <= 2e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_monotonicity_shift(seed):
    phi, psi = random_prefix_pair(np.random.default_rng(seed))
    gp = relative_pressure_shift(2, phi, WholeSpace(), trend=False).value
    gq = relative_pressure_shift(2, psi, WholeSpace(), trend=False).value
    assert gp <= gq + 2e-6


def test_prefix_pressure_matches_transfer_matrix():
    # independent route: log spectral radius of the weighted de Bruijn matrix
    rng = np.random.default_rng(4)
    tab = PrefixTable(2, 2, tuple(rng.uniform(-1, 1, 4)))
    M = np.zeros((2, 2))
    for a in range(2):
        for b in range(2):
            M[a, b] = math.exp(tab.table[2 * a + b])
    exact = math.log(max(abs(np.linalg.eigvals(M))))
    got = relative_pressure_shift(2, tab, WholeSpace(), n_max=400).value
    assert got == pytest.approx(exact, abs=1e-2)
    assert got >= exact - 1e-6


@pytest.mark.slow
def test_bump_pair_dominated_by_null_potential():
    pair = make_bump_pair(FullShift(2), CylinderSet((0, 1)), ShiftBump((1.0,)))
    g0 = relative_pressure_shift(2, Constant(0.0), WholeSpace(), trend=False).value
    # the sup-based cover cost carries an O(sup / n_max) bias, so use a deep tree
    g = relative_pressure_shift(2, pair, WholeSpace(), n_max=1_000_000, trend=False).value
    assert g <= g0 + 2e-6


def test_sup_decomposition():
    rep = check_sup_decomposition(3, Constant(0.0), {0, 1})
    assert rep.holds
    assert rep.gap == pytest.approx(math.log(1.5), abs=2e-6)
    rep = check_sup_decomposition(2, Constant(0.0), {0})
    assert rep.holds and abs(rep.p_lambda) <= 1e-6
    # the gap is invariant under adding a constant
    a = check_sup_decomposition(3, Constant(0.4), {0, 1})
    assert a.gap == pytest.approx(math.log(1.5), abs=4e-6)


# ---------------------------------------------------------------------------
# separated sets

def test_separated_examples():
    s = build_separated(CircleTimesD(2), 0, 0.26, 1000)
    assert len(s) == 3
    assert len(build_separated(CircleTimesD(2), 3, 0.6, 1000)) == 1
    with pytest.raises(ContractViolation):
        build_separated(CircleTimesD(2), 3, 0.01, 50)


def _separated_bruteforce(points, orbits, eps):
    # oracle: the same greedy rule (keep i when d_n >= eps to every kept point), all pairs
    chosen = []
    for i in range(len(points)):
        ok = True
        for j in chosen:
            d = np.abs(orbits[:, i] - orbits[:, j])
            d = np.minimum(d, 1 - d).max()
            if d < eps:
                ok = False
                break
        if ok:
            chosen.append(i)
    return chosen


@pytest.mark.parametrize("n,eps", [(0, 0.05), (2, 0.1), (4, 0.13)])
def test_greedy_matches_bruteforce(n, eps):
    cand = np.arange(400) / 400
    orb = np.stack([(cand * 2 ** i) % 1.0 for i in range(n + 1)])
    got = build_separated(CircleTimesD(2), n, eps, 400)
    assert list(got.indices) == _separated_bruteforce(cand, orb, eps)


def test_cardinality_doubles():
    # dyadic eps keeps the grid quantization exact, so card(n+1) / card(n) = 2
    cards = [len(build_separated(CircleTimesD(2), n, 2.0 ** -4, 2 ** 16)) for n in range(13)]
    ratios = np.array(cards[1:]) / np.array(cards[:-1])
    assert np.all((ratios >= 1.9) & (ratios <= 2.1))


@pytest.mark.parametrize("d", [2, 3])
def test_separated_entropy(d):
    est = pressure_separated(CircleTimesD(d), Constant(0.0), [0, 1, 2], [1e-3], 2 ** 16)
    rel = est.value / math.log(d) - 1
    if d == 2:
        assert abs(rel) <= 0.03
    # frozen regression values; d = 3 sits outside 3% because of grid quantization
    assert rel == pytest.approx({2: -0.0208, 3: -0.0392}[d], abs=5e-4)


def test_separated_constant_shift_exact():
    sets = {}
    system = CircleTimesD(3)
    phi = Analytic("cos", 0.2)
    p0 = pressure_separated(system, phi, [1, 2, 3], [1e-2], 2 ** 12, sets=sets).value
    for c in (-0.5, 0.3, 1.0):
        pc = pressure_separated(system, phi + c, [1, 2, 3], [1e-2], 2 ** 12, sets=sets).value
        assert abs(pc - p0 - c) <= 1e-9


def test_separated_monotone_on_fixed_sets():
    sets = {}
    system = CircleTimesD(2)
    lo = pressure_separated(system, Analytic("cos", 0.1), [2, 3, 4], [1e-2], 2 ** 12, sets=sets)
    hi = pressure_separated(system, Analytic("cos", 0.1) + 1e-3, [2, 3, 4], [1e-2], 2 ** 12, sets=sets)
    for a, b in zip(lo.table, hi.table):
        assert a["log_Z"] <= b["log_Z"]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=200))
def test_logsumexp_matches_naive(vals):
    naive = math.log(math.fsum(math.exp(v) for v in vals))
    assert float(logsumexp(vals)) == pytest.approx(naive, abs=1e-12)


def test_quadratic_separated_positive_entropy():
    est = pressure_separated(Quadratic(2.0), Constant(0.0), [2, 3, 4], [1e-2], 2 ** 14)
    assert 0.5 < est.value < 0.8


# ---------------------------------------------------------------------------
# heuristic hyperbolicity report

def test_hyperbolicity_report_all_h():
    c2 = CircleTimesD(2)
    cls = classify(c2, np.arange(2 ** 14) / 2 ** 14, 0.5, 50, 0.05)
    rep = hyperbolicity_report(c2, Constant(0.0), cls, [2, 3, 4], [1e-2])
    assert rep.side("Hc") == "insufficient sample"
    assert rep.label == "HEURISTIC"
    assert rep.h_value == pytest.approx(LOG2, abs=0.1)


@pytest.fixture(scope="module")
def viana_grid_classification():
    v = Viana()
    th = (np.arange(8192) + 0.5) / 8192
    xs = -v.beta + 2 * v.beta * (np.arange(32) + 0.5) / 32
    tt, xx = np.meshgrid(th, xs, indexing="ij")
    return v, classify(v, np.stack((tt.ravel(), xx.ravel()), axis=1), 0.9, 200, 0.05)


def test_viana_h_side_floor(viana_grid_classification):
    v, cls = viana_grid_classification
    rep = hyperbolicity_report(v, Constant(0.0), cls, [0, 1], [1e-2])
    assert rep.h_value >= math.log(16) * 0.9
    assert rep.h_value == pytest.approx(2.6237898574844714, abs=1e-9)


def test_viana_bump_pair_h_side(viana_grid_classification):
    from ergolab.potentials import BumpRegion

    v, cls = viana_grid_classification
    pair = make_bump_pair(v, BumpRegion(0.1, 0.2))
    a = hyperbolicity_report(v, Constant(0.0), cls, [0, 1], [1e-2]).h_value
    b = hyperbolicity_report(v, pair, cls, [0, 1], [1e-2]).h_value
    assert abs(a - b) <= pair.sup_bump
