"""Hyperbolic times: Pliss detection, pre-balls, metric verification, H/Hc labels."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    CircleTimesD,
    FullShift,
    MapSystem,
    Orbit,
    PhasePoint,
    Quadratic,
    Viana,
    iterate_states,
    orbit as make_orbit,
)
from .errors import ContractViolation, DomainEscape, PreballNotHomeomorphic

# Largest delta in {0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001} for which
# every Pliss time (sigma 0.9) of the calibration corpus passes the metric
# check at SIGMA_METRIC; see tests/test_hyperbolic.py::test_delta_calibration.
DELTA_CAL = {"circle_times_d": 0.2, "quadratic": 0.005, "viana": 0.002}
SIGMA_METRIC = {"circle_times_d": 0.5, "quadratic": 0.99, "viana": 0.99}


@dataclass(frozen=True, eq=False)
class HyperbolicTimeRecord:
    map_id: str
    length: int
    sigma: float
    times: np.ndarray
    truncated: bool = False
    truncated_at: int | None = None

    def freq_table(self) -> np.ndarray:
        """freq(n) for n = 1..length."""
        hits = np.zeros(self.length + 1, dtype=np.int64)
        hits[self.times] = 1
        counts = np.cumsum(hits)[1:]
        return counts / np.arange(1, self.length + 1)


def _pliss_mask(inv: np.ndarray, sigma: float) -> np.ndarray:
    # n is hyperbolic iff P_n <= min_{m<n} P_m, P_n = sum_{j<n} (log inv_j - log sigma)
    c = np.log(inv) - math.log(sigma)
    partial = np.concatenate(([0.0], np.cumsum(c)))
    running_min = np.minimum.accumulate(partial)[:-1]
    return partial[1:] <= running_min


def detect_pliss(orbit: Orbit, sigma: float) -> HyperbolicTimeRecord:
    if not (0.0 < sigma < 1.0):
        raise ContractViolation("sigma must lie in (0, 1)")
    if isinstance(orbit.system, FullShift):
        raise ContractViolation("hyperbolic times need a differentiable map")
    inv = np.asarray(orbit.inv_norms, dtype=float)
    bad = np.flatnonzero(~np.isfinite(inv))
    truncated = bad.size > 0
    cut = int(bad[0]) if truncated else inv.size
    mask = _pliss_mask(inv[:cut], sigma)
    times = np.flatnonzero(mask) + 1
    return HyperbolicTimeRecord(
        orbit.system.id, cut, sigma, times.astype(np.int64), truncated, cut if truncated else None
    )


def frequency(record: HyperbolicTimeRecord, n: int) -> float:
    if n < 1 or n > record.length:
        raise ContractViolation(f"n must lie in 1..{record.length}")
    return int(np.count_nonzero(record.times <= n)) / n


# ---------------------------------------------------------------------------
# pre-balls and dynamical balls (1D)

@dataclass(frozen=True)
class PreBall:
    center: PhasePoint
    n: int
    delta: float
    lo: float
    hi: float
    itinerary: tuple = ()
    # Viana: conservative rectangle, x half-width `radius`, theta half-width `theta_radius`
    radius: float | None = None
    theta_radius: float | None = None

    def contains(self, y: float) -> bool:
        return self.lo < y < self.hi


def _orbit_states_1d(system: MapSystem, x: PhasePoint, n: int) -> np.ndarray:
    s = system.to_state(x)
    if not system.in_domain(s)[0]:
        raise DomainEscape(0, x)
    return iterate_states(system, s, n)[:, 0]


def _pull_back(system: MapSystem, xi: float, lo: float, hi: float, strict: bool):
    """Component containing ``xi`` of f^-1 of the target interval.

    Circle offsets are relative to the orbit point; quadratic endpoints are
    absolute and the target is clipped to the invariant interval first.
    """
    if isinstance(system, CircleTimesD):
        return lo / system.d, hi / system.d
    a, beta = system.a0, system.beta
    lo, hi = max(lo, -beta), min(hi, beta)
    if hi >= a:
        if strict:
            raise PreballNotHomeomorphic("pre-ball not homeomorphic: pull-back crosses the critical fold")
        r = math.sqrt(a - lo)
        return -r, r
    if xi == 0.0:
        raise PreballNotHomeomorphic("pre-ball not homeomorphic: orbit hits the critical point")
    inner, outer = math.sqrt(a - hi), math.sqrt(a - lo)
    return (inner, outer) if xi > 0 else (-outer, -inner)


def preball(system: MapSystem, x: PhasePoint, n: int, delta: float) -> PreBall:
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    if n < 0:
        raise ContractViolation("n must be >= 0")
    if not isinstance(system, (CircleTimesD, Quadratic)):
        raise ContractViolation(f"pre-balls need a 1D map, got {system.kind}")
    pts = _orbit_states_1d(system, x, n)
    if isinstance(system, CircleTimesD):
        if n > 0 and delta >= 0.5:
            raise PreballNotHomeomorphic("pre-ball not homeomorphic: ball covers the circle")
        off = delta / system.d ** n
        itin = tuple(min(int(math.floor(system.d * p)), system.d - 1) for p in pts[:-1])
        return PreBall(x, n, delta, float(pts[0]) - off, float(pts[0]) + off, itin)
    lo, hi = float(pts[n]) - delta, float(pts[n]) + delta
    for i in range(n - 1, -1, -1):
        lo, hi = _pull_back(system, float(pts[i]), lo, hi, strict=True)
    itin = tuple(1 if p >= 0 else 0 for p in pts[:-1])
    if n == 0:
        lo, hi = max(lo, -system.beta), min(hi, system.beta)
    return PreBall(x, n, delta, lo, hi, itin)


def viana_prerectangle(system: Viana, x: PhasePoint, n: int, delta: float, sigma: float) -> PreBall:
    # the base circle pulls back exactly by d^-n; the fibre radius is the
    # smaller of delta sigma^n and the linearized pull-back delta prod ||Df^-1||
    s = system.to_state(x)[0]
    states = iterate_states(system, s[None, :], n)[:-1, 0]
    lin = float(np.exp(np.sum(np.log(system.inv_norm_states(states)))))
    r = delta * min(sigma ** n, lin)
    rt = min(r, delta / float(system.d) ** n)
    return PreBall(x, n, delta, float(s[1]) - r, float(s[1]) + r, (), radius=r, theta_radius=rt)


def dynamical_ball_1d(system: MapSystem, x: PhasePoint, n: int, delta: float) -> tuple[float, float]:
    """Component containing x of {y : d(f^i x, f^i y) < delta, 0 <= i <= n}.

    Circle answers are lifted reals around the angle of x (the whole circle is
    returned as ``(x - 0.5, x + 0.5)``); quadratic answers are absolute.
    """
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    if not isinstance(system, (CircleTimesD, Quadratic)):
        raise ContractViolation(f"dynamical balls need a 1D map, got {system.kind}")
    pts = _orbit_states_1d(system, x, n)
    if isinstance(system, CircleTimesD):
        if delta >= 0.5:
            x0 = float(pts[0])
            return x0 - 0.5, x0 + 0.5
        lo, hi = -delta, delta
        for _ in range(n):
            lo, hi = max(lo / system.d, -delta), min(hi / system.d, delta)
        return float(pts[0]) + lo, float(pts[0]) + hi
    beta = system.beta
    lo, hi = float(pts[n]) - delta, float(pts[n]) + delta
    for i in range(n - 1, -1, -1):
        plo, phi = _pull_back(system, float(pts[i]), lo, hi, strict=False)
        lo, hi = max(plo, float(pts[i]) - delta), min(phi, float(pts[i]) + delta)
    return max(lo, -beta), min(hi, beta)


# ---------------------------------------------------------------------------
# metric verification

@dataclass(frozen=True)
class ContractionReport:
    passed: bool
    worst_ratio: float
    skipped: int
    pairs: int


def verify_metric_contraction(
    system: MapSystem,
    x: PhasePoint,
    n: int,
    sigma: float,
    delta: float,
    samples: int = 1000,
    seed: int = 0,
    tol: float = 1e-6,
) -> ContractionReport:
    """Sample pairs in the pre-ball and test d(f^i y, f^i z) <= sigma^(n-i) d(f^n y, f^n z)."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    if not (0.0 < sigma < 1.0):
        raise ContractViolation("sigma must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    if isinstance(system, Viana):
        pb = viana_prerectangle(system, x, n, delta, sigma)
        c = system.to_state(x)[0]
        y = np.empty((samples, 2))
        z = np.empty((samples, 2))
        for arr in (y, z):
            arr[:, 0] = c[0] + rng.uniform(-pb.theta_radius, pb.theta_radius, samples)
            arr[:, 1] = c[1] + rng.uniform(-pb.radius, pb.radius, samples)
            arr[:, 0] -= np.floor(arr[:, 0])
        keep = system.in_domain(y) & system.in_domain(z)
        y, z = y[keep], z[keep]
    elif isinstance(system, (CircleTimesD, Quadratic)):
        pb = preball(system, x, n, delta)
        y = rng.uniform(pb.lo, pb.hi, samples)
        z = rng.uniform(pb.lo, pb.hi, samples)
        if isinstance(system, CircleTimesD):
            y, z = y - np.floor(y), z - np.floor(z)
        keep = np.ones(samples, dtype=bool)
    else:
        raise ContractViolation(f"metric verification needs a 1D map or Viana, got {system.kind}")
    skipped = samples - int(keep.sum())
    ys = iterate_states(system, y, n, check_domain=False)
    zs = iterate_states(system, z, n, check_domain=False)
    ok = np.ones(ys.shape[1], dtype=bool)
    for i in range(1, n + 1):
        ok &= system.in_domain(ys[i]) & system.in_domain(zs[i])
    dist = system.metric.states
    dn = dist(ys[n], zs[n])
    ok &= dn > 0
    skipped += int((~ok).sum())
    worst = 0.0
    if ok.any():
        for i in range(n):
            ratio = dist(ys[i][ok], zs[i][ok]) / (sigma ** (n - i) * dn[ok])
            worst = max(worst, float(ratio.max()))
    used = int(ok.sum())
    return ContractionReport(used > 0 and worst <= 1.0 + tol, worst, skipped, used)


def cross_validate(
    orb: Orbit,
    sigma_pliss: float,
    sigma_metric: float,
    delta: float,
    samples: int = 200,
    seed: int = 0,
    max_time: int | None = None,
) -> tuple[int, int, float]:
    """Verify every Pliss time of ``orb``; returns (checked, failed, worst ratio)."""
    rec = detect_pliss(orb, sigma_pliss)
    checked = failed = 0
    worst = 0.0
    for n in rec.times:
        if max_time is not None and n > max_time:
            break
        checked += 1
        try:
            rep = verify_metric_contraction(orb.system, orb.initial, int(n), sigma_metric, delta, samples, seed)
        except PreballNotHomeomorphic:
            failed += 1
            worst = math.inf
            continue
        failed += not rep.passed
        worst = max(worst, rep.worst_ratio)
    return checked, failed, worst


# ---------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True, eq=False)
class HClassification:
    map_id: str
    sigma: float
    horizon: int
    threshold: float
    points: np.ndarray
    freqs: np.ndarray
    labels: np.ndarray  # True = H
    flagged: np.ndarray  # escape or critical hit; excluded from totals

    @property
    def fraction_h(self) -> float:
        good = ~self.flagged
        return float(self.labels[good].mean()) if good.any() else float("nan")

    def to_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "freq", "label"])
        for i in range(len(self.freqs)):
            label = "flagged" if self.flagged[i] else ("H" if self.labels[i] else "Hc")
            w.writerow([i, repr(float(self.freqs[i])), label])


def random_seeds(system: MapSystem, count: int, seed: int) -> np.ndarray:
    return system.random_states(np.random.default_rng(seed), count)


def _as_states(system: MapSystem, seeds) -> np.ndarray:
    if isinstance(seeds, np.ndarray):
        return np.asarray(seeds, dtype=float)
    return np.concatenate([system.to_state(p) for p in seeds])


def classify(
    system: MapSystem,
    seeds,
    sigma: float,
    horizon: int,
    threshold: float,
    chunk: int = 4096,
) -> HClassification:
    """Empirical hyperbolic-time frequency at ``horizon`` for every seed."""
    if not (0.0 < threshold < 1.0):
        raise ContractViolation("threshold must lie in (0, 1)")
    if not (0.0 < sigma < 1.0):
        raise ContractViolation("sigma must lie in (0, 1)")
    states = _as_states(system, seeds)
    total = states.shape[0]
    counts = np.zeros(total, dtype=np.int64)
    flagged = np.zeros(total, dtype=bool)
    log_sigma = math.log(sigma)
    for start in range(0, total, chunk):
        s = states[start:start + chunk].copy()
        m = s.shape[0]
        partial = np.zeros(m)
        running_min = np.zeros(m)
        cnt = np.zeros(m, dtype=np.int64)
        bad = ~system.in_domain(s)
        for _ in range(horizon):
            inv = system.inv_norm_states(s)
            bad |= ~np.isfinite(inv)
            with np.errstate(divide="ignore"):
                partial = partial + (np.log(inv) - log_sigma)
            cnt += partial <= running_min
            running_min = np.minimum(running_min, partial)
            s = system.step_states(s)
            bad |= ~system.in_domain(s)
        counts[start:start + m] = cnt
        flagged[start:start + m] = bad
    freqs = counts / horizon
    labels = freqs >= threshold
    freqs = np.where(flagged, np.nan, freqs)
    labels = labels & ~flagged
    return HClassification(system.id, sigma, horizon, threshold, states, freqs, labels, flagged)


def slow_approx_average(orb: Orbit, delta: float) -> tuple[float, bool]:
    """(1/n) sum_{i<n} -log dist_delta(f^i p, C); flag set on an exact critical hit."""
    if not isinstance(orb.system, (Quadratic, Viana)):
        raise ContractViolation("slow approximation needs a map with a critical set")
    return _slow_approx(np.asarray(orb.crit_dists, dtype=float), delta)


def _slow_approx(crit: np.ndarray, delta: float):
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    if np.any(crit == 0.0):
        return math.inf, True
    terms = np.where(crit < delta, -np.log(np.where(crit < delta, crit, 1.0)), 0.0)
    return float(terms.sum() / crit.size), False


def slow_approx_ensemble(system: MapSystem, seeds, n: int, delta: float) -> np.ndarray:
    """Per-seed slow-approximation averages over n steps (nan for escaping seeds)."""
    states = _as_states(system, seeds)
    acc = np.zeros(states.shape[0])
    bad = ~system.in_domain(states)
    s = states
    for _ in range(n):
        d = system.crit_dist_states(s)
        bad |= d == 0.0
        near = d < delta
        acc[near] -= np.log(np.where(d[near] > 0, d[near], 1.0))
        s = system.step_states(s)
        bad |= ~system.in_domain(s)
    out = acc / n
    out[bad] = np.nan
    return out


def record_to_csv(record: HyperbolicTimeRecord, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n_hyperbolic"])
    for t in record.times:
        w.writerow([int(t)])


def record_summary_csv(record: HyperbolicTimeRecord, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["sigma", "horizon", "frequency", "truncated"])
    freq = frequency(record, record.length) if record.length > 0 else 0.0
    w.writerow([repr(record.sigma), record.length, repr(freq), int(record.truncated)])


def hyperbolic_times(system: MapSystem, x: PhasePoint, n: int, sigma: float) -> HyperbolicTimeRecord:
    return detect_pliss(make_orbit(system, x, n), sigma)
