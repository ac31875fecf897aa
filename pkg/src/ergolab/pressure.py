"""Topological and relative pressure estimators.

Two routes: separated sets for the smooth maps, and an exact minimum over
cylinder covers for full shifts, where dynamical balls are cylinders.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._kernels import cover_recursion, greedy_separated
from .dynamics import CircleTimesD, MapSystem, Quadratic, Viana, iterate_states
from .errors import ContractViolation
from .potentials import (
    BumpPair,
    Constant,
    Potential,
    PrefixTable,
    Shifted,
    all_words,
    word_index,
)

ZERO_THRESHOLD = 1.0  # log m < 0  <=>  m below 1


# ---------------------------------------------------------------------------
# Lambda descriptors

@dataclass(frozen=True)
class WholeSpace:
    pass


@dataclass(frozen=True)
class SubAlphabet:
    symbols: frozenset

    def __post_init__(self):
        syms = frozenset(int(s) for s in self.symbols)
        if not syms:
            raise ContractViolation("sub-alphabet must be non-empty")
        object.__setattr__(self, "symbols", syms)


@dataclass(frozen=True, eq=False)
class EmpiricalH:
    classification: object


@dataclass(frozen=True, eq=False)
class EmpiricalHc:
    classification: object


LambdaSpec = WholeSpace | SubAlphabet | EmpiricalH | EmpiricalHc


@dataclass(eq=False)
class PressureEstimate:
    value: float
    method: str
    table: list
    note: str = ""
    params: dict = field(default_factory=dict)

    def to_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        keys = list(self.table[0].keys()) if self.table else []
        w.writerow(keys)
        for row in self.table:
            w.writerow([_fmt(row[k]) for k in keys])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# separated sets

@dataclass(frozen=True, eq=False)
class SeparatedSet:
    map_id: str
    n: int
    eps: float
    points: np.ndarray
    resolution: int
    indices: np.ndarray

    def __len__(self):
        return len(self.indices)


def candidate_grid(system: MapSystem, resolution: int) -> np.ndarray:
    if isinstance(system, CircleTimesD):
        return np.arange(resolution) / resolution
    if isinstance(system, Quadratic):
        b = system.beta
        return -b + 2.0 * b * (np.arange(resolution) + 0.5) / resolution
    if isinstance(system, Viana):
        th = np.arange(resolution) / resolution
        xs = -system.beta + 2.0 * system.beta * (np.arange(resolution) + 0.5) / resolution
        tt, xx = np.meshgrid(th, xs, indexing="ij")
        return np.stack((tt.ravel(), xx.ravel()), axis=1)
    raise ContractViolation(f"separated sets need a 1D map or Viana, got {system.kind}")


def _geometry(system: MapSystem):
    if isinstance(system, CircleTimesD):
        return 0.0, 1.0, 0.0, 1.0, True, False
    if isinstance(system, Quadratic):
        return -system.beta, 2 * system.beta, 0.0, 1.0, False, False
    return 0.0, 1.0, -system.beta, 2 * system.beta, True, False


def _orbit_stack(system: MapSystem, cand: np.ndarray, n: int) -> np.ndarray:
    orb = iterate_states(system, cand, n, check_domain=False)
    if orb.ndim == 2:
        orb = orb[:, :, None]
    return np.ascontiguousarray(orb)


def _greedy(system, orb, eps):
    lo0, span0, lo1, span1, p0, p1 = _geometry(system)
    return greedy_separated(orb, float(eps), lo0, span0, lo1, span1, p0, p1)


def build_separated(
    system: MapSystem, n: int, eps: float, resolution: int, candidates: np.ndarray | None = None
) -> SeparatedSet:
    """Greedy maximal (n, eps)-separated subset of the candidate grid, scanned in index order.

    A candidate is kept when its d_n distance to every kept point is >= eps.
    """
    if eps <= 0:
        raise ContractViolation("eps must be positive")
    if n < 0:
        raise ContractViolation("n must be >= 0")
    if candidates is None:
        if resolution < 1.0 / eps:
            raise ContractViolation(f"resolution {resolution} too coarse for eps={eps} (need >= 1/eps)")
        candidates = candidate_grid(system, resolution)
    orb = _orbit_stack(system, candidates, n)
    idx = _greedy(system, orb, eps)
    return SeparatedSet(system.id, n, eps, candidates[idx], resolution, idx)


def _lsq_slope(ns, ys) -> float:
    ns = np.asarray(ns, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nc = ns - ns.mean()
    return float(np.dot(nc, ys - ys.mean()) / np.dot(nc, nc))


def pressure_separated(
    system: MapSystem,
    phi: Potential,
    n_list,
    eps_list,
    resolution: int,
    candidates: np.ndarray | None = None,
    sets: dict | None = None,
) -> PressureEstimate:
    """Z_n = sum over the separated set of exp(S_n phi); value is the least-squares
    slope of log Z_n against n over the three largest n at the smallest eps.

    ``sets`` caches separated-set indices keyed by (n, eps) so that different
    potentials can be evaluated on identical sets.
    """
    n_list = sorted(int(n) for n in n_list)
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if not n_list or not eps_list:
        raise ContractViolation("n_list and eps_list must be non-empty")
    if len(n_list) < 2:
        raise ContractViolation("the slope fit needs at least two values of n")
    if candidates is None:
        if resolution < 1.0 / min(eps_list):
            raise ContractViolation(f"resolution {resolution} too coarse for eps={min(eps_list)}")
        candidates = candidate_grid(system, resolution)
    nmax = n_list[-1]
    orb = _orbit_stack(system, candidates, nmax)
    # S_n along every candidate, n = 0..nmax
    phis = np.zeros((nmax + 1, orb.shape[1]))
    for i in range(nmax):
        st = orb[i, :, 0] if orb.shape[2] == 1 else orb[i]
        phis[i + 1] = phis[i] + phi.values(system, st)
    table = []
    logz = {}
    for eps in eps_list:
        for n in n_list:
            key = (n, eps)
            if sets is not None and key in sets:
                idx = sets[key]
            else:
                idx = _greedy(system, np.ascontiguousarray(orb[: n + 1]), eps)
                if sets is not None:
                    sets[key] = idx
            lz = float(logsumexp(phis[n][idx]))
            logz[key] = lz
            table.append({
                "n": n, "eps": eps, "card": int(len(idx)), "log_Z": lz,
                "rate": lz / n if n > 0 else float("nan"),
            })
    top = n_list[-3:]
    eps_min = eps_list[-1]
    value = _lsq_slope(top, [logz[(n, eps_min)] for n in top])
    note = f"least-squares slope of log Z_n over n={top} at eps={eps_min!r}"
    return PressureEstimate(value, "SeparatedSets", table, note,
                            {"map": system.id, "potential": phi.id, "resolution": resolution})


# ---------------------------------------------------------------------------
# cylinder covers on the full shift

def _as_table(phi: Potential, k: int) -> PrefixTable:
    if isinstance(phi, PrefixTable):
        if phi.k != k:
            raise ContractViolation("alphabet mismatch")
        return phi
    if isinstance(phi, Constant):
        return PrefixTable(k, 1, (float(phi.c),) * k)
    if isinstance(phi, Shifted):
        base = _as_table(phi.base, k)
        return PrefixTable(k, base.length, tuple(v + phi.c for v in base.table))
    if isinstance(phi, BumpPair):
        return phi.as_prefix_table()
    raise ContractViolation(f"{type(phi).__name__} is not a prefix-dependent shift potential")


def _allowed(lam, k: int) -> np.ndarray:
    if isinstance(lam, WholeSpace):
        return np.ones(k, dtype=np.bool_)
    if isinstance(lam, SubAlphabet):
        if any(s < 0 or s >= k for s in lam.symbols):
            raise ContractViolation("sub-alphabet symbols outside the alphabet")
        out = np.zeros(k, dtype=np.bool_)
        out[sorted(lam.symbols)] = True
        return out
    raise ContractViolation("shift covers need WholeSpace or SubAlphabet")


def _window_sum(tab: PrefixTable, word) -> float:
    L, k = tab.length, tab.k
    return math.fsum(tab.table[word_index(word[i:i + L], k)] for i in range(len(word) - L + 1))


def _R(tab: PrefixTable, word) -> float:
    """sup of S_n over the cylinder [word], n = len(word)."""
    n, L, k = len(word), tab.length, tab.k
    if n == 0:
        return 0.0
    best = -math.inf
    for ext in all_words(k, L - 1):
        w = tuple(word) + ext
        best = max(best, math.fsum(tab.table[word_index(w[i:i + L], k)] for i in range(n)))
    return best


def _tail(tab: PrefixTable) -> np.ndarray:
    """T(s): sup over continuations of the windows starting in the last L-1 slots."""
    L, k = tab.length, tab.k
    K = k ** (L - 1)
    out = np.zeros(K)
    if L == 1:
        return out
    for s in range(K):
        suffix = _digits(s, k, L - 1)
        best = -math.inf
        for ext in all_words(k, L - 1):
            w = suffix + ext
            best = max(best, math.fsum(tab.table[word_index(w[i:i + L], k)] for i in range(L - 1)))
        out[s] = best
    return out


def _digits(idx: int, k: int, length: int) -> tuple:
    out = []
    for _ in range(length):
        out.append(idx % k)
        idx //= k
    return tuple(reversed(out))


def _log_m(tab: PrefixTable, allowed: np.ndarray, N: int, gamma: float, n_max: int,
           tail: np.ndarray | None = None) -> float:
    k, L = tab.k, tab.length
    if tail is None:
        tail = _tail(tab)
    phi = tab.as_array()
    bottom = min(L - 1, n_max)
    hbar = cover_recursion(phi, tail, k, allowed, float(gamma), n_max, bottom, N)
    syms = [a for a in range(k) if allowed[a]]

    # levels below L-1 have incomplete suffix states: enumerate them
    def rec(word):
        m = len(word)
        if m == n_max:
            return _R(tab, word) - gamma * m
        if m == bottom:
            state = word_index(word[-(L - 1):], k) if L > 1 else 0
            return _window_sum(tab, word) + hbar[state] - gamma * m
        sub = float(logsumexp([rec(word + (a,)) for a in syms]))
        if m >= N and m > 0:
            return min(_R(tab, word) - gamma * m, sub)
        return sub

    return rec(())


def caratheodory_m(k: int, phi: Potential, lam, N: int, gamma: float, n_max: int, log: bool = False) -> float:
    """Minimum over covers of Lambda by cylinders of depth in [N, n_max] of
    sum exp(-gamma n + R_n phi); depth-n cylinders stand for time-n balls."""
    if N < 1 or N > n_max:
        raise ContractViolation(f"no admissible cover: need 1 <= N <= n_max (N={N}, n_max={n_max})")
    tab = _as_table(phi, k)
    lm = _log_m(tab, _allowed(lam, k), N, gamma, n_max)
    return lm if log else math.exp(lm)


def _sup_abs(tab: PrefixTable) -> float:
    return max(abs(v) for v in tab.table)


def relative_pressure_shift(
    k: int,
    phi: Potential,
    lam,
    N: int = 1,
    n_max: int = 24,
    gamma_tol: float = 1e-6,
    trend: bool = True,
) -> PressureEstimate:
    """Bisection for the gamma at which the cover minimum m drops below 1."""
    if N < 1 or N > n_max:
        raise ContractViolation(f"no admissible cover: need 1 <= N <= n_max (N={N}, n_max={n_max})")
    tab = _as_table(phi, k)
    allowed = _allowed(lam, k)
    tail = _tail(tab)
    sup = _sup_abs(tab)

    def f(g):
        return _log_m(tab, allowed, N, g, n_max, tail)

    lo, hi = -(sup + 1.0), math.log(k) + sup + 1.0
    widen = 0
    while not (f(lo) >= 0.0 and f(hi) < 0.0):
        widen += 1
        if widen > 60:
            raise ContractViolation("could not bracket the zero of log m")
        width = hi - lo
        if f(lo) < 0.0:
            lo -= width
        if f(hi) >= 0.0:
            hi += width
    evals = 0
    while hi - lo > gamma_tol:
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
        evals += 1
    value = 0.5 * (lo + hi)
    table = []
    if trend:
        Ns = sorted({1, *[2 ** j for j in range(0, 40) if 2 ** j <= n_max // 2], N})
        for n0 in Ns:
            if n0 > n_max:
                continue
            table.append({"N": n0, "gamma": value, "log_m": _log_m(tab, allowed, n0, value, n_max, tail)})
    note = (f"bisection on log m(gamma) = 0 (m < 1 counts as zero); bracket width {hi - lo:.3g}; "
            f"{evals} halvings; n_max={n_max}, N={N}")
    return PressureEstimate(value, "CylinderCaratheodory", table, note,
                            {"k": k, "N": N, "n_max": n_max, "gamma_tol": gamma_tol,
                             "lambda": _lam_id(lam), "potential": phi.id})


def _lam_id(lam) -> str:
    if isinstance(lam, SubAlphabet):
        return "sub_alphabet(" + "".join(str(s) for s in sorted(lam.symbols)) + ")"
    return "whole_space"


@dataclass(frozen=True)
class CylinderCover:
    k: int
    words: tuple  # tuples of symbols; word length n is the time index

    def covers(self, lam=WholeSpace()) -> bool:
        """Every admissible word of length max |w| has a prefix in the cover."""
        syms = sorted(np.flatnonzero(_allowed(lam, self.k)))
        depth = max(len(w) for w in self.words)
        pre = set(self.words)
        for w in itertools.product(syms, repeat=depth):
            if not any(w[:j] in pre for j in range(1, depth + 1)):
                return False
        return True


def optimal_cover(k: int, phi: Potential, lam, N: int, gamma: float, n_max: int):
    """Explicit minimizing cover by brute-force tree recursion (small n_max only)."""
    if n_max > 16:
        raise ContractViolation("explicit covers are limited to n_max <= 16")
    if N < 1 or N > n_max:
        raise ContractViolation(f"no admissible cover: need 1 <= N <= n_max (N={N}, n_max={n_max})")
    tab = _as_table(phi, k)
    syms = [a for a in range(k) if _allowed(lam, k)[a]]

    def rec(word):
        m = len(word)
        own = _R(tab, word) - gamma * m if m >= N else math.inf
        if m == n_max:
            return own, [word]
        parts = [rec(word + (a,)) for a in syms]
        sub = float(logsumexp([p[0] for p in parts]))
        if own <= sub:
            return own, [word]
        return sub, [w for p in parts for w in p[1]]

    lm, words = rec(())
    return math.exp(lm), CylinderCover(k, tuple(words))


@dataclass(frozen=True)
class DecompositionReport:
    p_whole: float
    p_lambda: float
    gap: float
    holds: bool


def check_sup_decomposition(k: int, phi: Potential, S, N: int = 1, n_max: int = 24,
                            gamma_tol: float = 1e-6) -> DecompositionReport:
    """P_M(phi) >= P_Lambda(phi) for Lambda = SubAlphabet(S); only this direction is tested."""
    lam = SubAlphabet(frozenset(S))
    if len(lam.symbols) >= k:
        raise ContractViolation("S must be a proper sub-alphabet")
    pm = relative_pressure_shift(k, phi, WholeSpace(), N, n_max, gamma_tol, trend=False).value
    pl = relative_pressure_shift(k, phi, lam, N, n_max, gamma_tol, trend=False).value
    return DecompositionReport(pm, pl, pm - pl, pm >= pl - 2 * gamma_tol)


# ---------------------------------------------------------------------------
# hyperbolicity (heuristic)

@dataclass(frozen=True)
class HyperbolicityReport:
    h_value: float | None
    hc_value: float | None
    h_count: int
    hc_count: int
    gap: float | None
    params: dict
    label: str = "HEURISTIC"

    def side(self, which: str) -> str:
        v = self.h_value if which == "H" else self.hc_value
        return "insufficient sample" if v is None else repr(v)


def hyperbolicity_report(
    system: MapSystem,
    phi: Potential,
    classification,
    n_list,
    eps_list,
    min_points: int = 2,
) -> HyperbolicityReport:
    """Separated-set pressure on the empirically-H and empirically-Hc candidates.

    HEURISTIC: H^c is typically of zero measure and under-sampled; nothing
    here estimates P_H or P_{H^c} with a guarantee.
    """
    pts = classification.points
    good = ~classification.flagged
    h_pts = pts[good & classification.labels]
    hc_pts = pts[good & ~classification.labels]
    vals = {}
    for name, cand in (("H", h_pts), ("Hc", hc_pts)):
        if len(cand) < min_points:
            vals[name] = None
            continue
        est = pressure_separated(system, phi, n_list, eps_list, resolution=len(cand), candidates=cand)
        vals[name] = est.value
    gap = None if vals["H"] is None or vals["Hc"] is None else vals["H"] - vals["Hc"]
    params = {"map": system.id, "potential": phi.id, "n_list": list(n_list), "eps_list": list(eps_list),
              "sigma": classification.sigma, "horizon": classification.horizon,
              "threshold": classification.threshold}
    return HyperbolicityReport(vals["H"], vals["Hc"], len(h_pts), len(hc_pts), gap, params)
