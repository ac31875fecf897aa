"""Potentials, Birkhoff sums, ball suprema and the B/V bump-pair construction."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    CircleAngle,
    CircleTimesD,
    CylinderPoint,
    FullShift,
    IntervalCoord,
    MapSystem,
    Orbit,
    PhasePoint,
    Quadratic,
    SymbolWord,
    Viana,
    iterate_states,
)
from .errors import ContractViolation, CriticalContact, RegionCollision
from .hyperbolic import dynamical_ball_1d

SHIFT_DELTA = 0.75  # any delta in (1/2, 1) makes B_delta(x, n) the (n+1)-cylinder


def word_index(word, k: int) -> int:
    idx = 0
    for s in word:
        idx = idx * k + int(s)
    return idx


def all_words(k: int, length: int):
    return itertools.product(range(k), repeat=length)


# ---------------------------------------------------------------------------
# bump descriptors

@dataclass(frozen=True)
class SineBump:
    """amp * sin^2(pi u) in the normalized coordinate u in [0, 1]."""

    amp: float = 1.0

    def profile(self, u):
        return self.amp * np.sin(np.pi * u) ** 2

    @property
    def sup(self) -> float:
        return self.amp


@dataclass(frozen=True)
class TentBump:
    amp: float = 1.0

    def profile(self, u):
        return self.amp * (1.0 - np.abs(2.0 * u - 1.0))

    @property
    def sup(self) -> float:
        return self.amp


@dataclass(frozen=True)
class ShiftBump:
    """Values on the extensions of the bump cylinder word; extension length
    is log_k(len(values))."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def sup(self) -> float:
        return max(self.values)


# ---------------------------------------------------------------------------
# regions

@dataclass(frozen=True)
class BumpRegion:
    """x-interval (lo, hi) for 1D maps; for Viana additionally an angular
    interval (theta_lo, theta_hi), with (0, 1) meaning the whole circle."""

    lo: float
    hi: float
    theta_lo: float = 0.0
    theta_hi: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ContractViolation("bump region must have positive length")
        if not (0.0 <= self.theta_lo < self.theta_hi <= 1.0):
            raise ContractViolation("angular interval must satisfy 0 <= lo < hi <= 1")

    @property
    def full_circle(self) -> bool:
        return self.theta_lo == 0.0 and self.theta_hi == 1.0


@dataclass(frozen=True)
class CylinderSet:
    word: tuple

    def __post_init__(self):
        if not self.word:
            raise ContractViolation("cylinder word must be non-empty")
        object.__setattr__(self, "word", tuple(int(s) for s in self.word))


# ---------------------------------------------------------------------------
# potentials

class Potential:
    def values(self, system: MapSystem, s: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on a state array."""
        raise NotImplementedError

    def word_value(self, word: tuple, k: int) -> float:
        raise ContractViolation(f"{type(self).__name__} is not defined on symbol words")

    @property
    def depth(self) -> int:
        """Number of leading symbols the value depends on (shift systems)."""
        return 0

    @property
    def id(self) -> str:
        raise NotImplementedError

    def __add__(self, c: float) -> "Potential":
        return Shifted(self, float(c))


@dataclass(frozen=True)
class Constant(Potential):
    c: float

    def values(self, system, s):
        return np.full(np.shape(s)[0], float(self.c))

    def word_value(self, word, k):
        return float(self.c)

    @property
    def id(self):
        return f"constant(c={self.c!r})"

    def __add__(self, c):
        return Constant(self.c + float(c))


@dataclass(frozen=True)
class Analytic(Potential):
    """family 'cos': t cos(2 pi theta); family 'x': t x."""

    family: str
    t: float

    def __post_init__(self):
        if self.family not in ("cos", "x"):
            raise ContractViolation(f"unknown analytic family {self.family!r}")

    def values(self, system, s):
        s = np.asarray(s, dtype=float)
        if isinstance(system, Viana):
            coord = s[:, 0] if self.family == "cos" else s[:, 1]
        elif isinstance(system, CircleTimesD) and self.family == "cos":
            coord = s
        elif isinstance(system, Quadratic) and self.family == "x":
            coord = s
        else:
            raise ContractViolation(f"analytic family {self.family!r} undefined on {system.kind}")
        if self.family == "cos":
            return self.t * np.cos(2.0 * np.pi * coord)
        return self.t * coord

    @property
    def id(self):
        return f"analytic({self.family},t={self.t!r})"


@dataclass(frozen=True)
class PrefixTable(Potential):
    """Shift potential depending on the first ``length`` symbols."""

    k: int
    length: int
    table: tuple

    def __post_init__(self):
        if self.length < 1:
            raise ContractViolation("prefix length must be >= 1")
        if len(self.table) != self.k ** self.length:
            raise ContractViolation(f"prefix table needs {self.k ** self.length} entries")
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))

    def word_value(self, word, k):
        if k != self.k:
            raise ContractViolation("alphabet mismatch")
        if len(word) < self.length:
            raise ContractViolation(f"word too short for a depth-{self.length} potential")
        return self.table[word_index(word[: self.length], self.k)]

    @property
    def depth(self):
        return self.length

    def as_array(self) -> np.ndarray:
        return np.asarray(self.table, dtype=float)

    @property
    def id(self):
        return f"prefix_table(k={self.k},L={self.length})"


@dataclass(frozen=True)
class Shifted(Potential):
    base: Potential
    c: float

    def values(self, system, s):
        return self.base.values(system, s) + self.c

    def word_value(self, word, k):
        return self.base.word_value(word, k) + self.c

    @property
    def depth(self):
        return self.base.depth

    @property
    def id(self):
        return f"{self.base.id}+{self.c!r}"

    def __add__(self, c):
        return Shifted(self.base, self.c + float(c))


@dataclass(frozen=True, eq=False)
class BumpPair(Potential):
    """phi_b on B, -phi_b(f x) on V = f^-1(B), zero elsewhere.

    V membership is decided by testing f(x) in B with the same floating-point
    step the orbits use, so Birkhoff sums telescope exactly.
    """

    system: MapSystem
    region: object  # BumpRegion or CylinderSet
    bump: object
    preimage: tuple = field(default=())  # description of V, see make_bump_pair

    def bump_values(self, s: np.ndarray) -> np.ndarray:
        """phi_b(s) on B, 0 off B."""
        r = self.region
        if isinstance(self.system, Viana):
            x = s[:, 1]
            th = s[:, 0]
            inside = (x > r.lo) & (x < r.hi)
            u = (x - r.lo) / (r.hi - r.lo)
            val = self.bump.profile(np.clip(u, 0.0, 1.0))
            if not r.full_circle:
                inside &= (th > r.theta_lo) & (th < r.theta_hi)
                ut = (th - r.theta_lo) / (r.theta_hi - r.theta_lo)
                val = val * np.sin(np.pi * np.clip(ut, 0.0, 1.0)) ** 2
            return np.where(inside, val, 0.0)
        inside = (s > r.lo) & (s < r.hi)
        u = (s - r.lo) / (r.hi - r.lo)
        return np.where(inside, self.bump.profile(np.clip(u, 0.0, 1.0)), 0.0)

    def values(self, system, s):
        s = np.asarray(s, dtype=float)
        here = self.bump_values(s)
        nxt = self.bump_values(self.system.step_states(s))
        # B and V are disjoint: at most one of the two terms is nonzero
        return np.where(here != 0.0, here, 0.0 - nxt)

    def _word_bump(self, word, k) -> float:
        w = self.region.word
        if tuple(word[: len(w)]) != w:
            return 0.0
        ext = len(self.bump.values)
        e = round(math.log(ext, k)) if ext > 1 else 0
        return self.bump.values[word_index(word[len(w): len(w) + e], k)]

    def word_value(self, word, k):
        if len(word) < self.depth:
            raise ContractViolation(f"word too short for a depth-{self.depth} potential")
        here = self._word_bump(word, k)
        if here != 0.0:
            return here
        return 0.0 - self._word_bump(word[1:], k)

    @property
    def bump_depth(self) -> int:
        k = self.system.k
        ext = len(self.bump.values)
        return len(self.region.word) + (round(math.log(ext, k)) if ext > 1 else 0)

    @property
    def depth(self):
        return self.bump_depth + 1 if isinstance(self.system, FullShift) else 0

    def as_prefix_table(self) -> PrefixTable:
        k, L = self.system.k, self.depth
        return PrefixTable(k, L, tuple(self.word_value(wd, k) for wd in all_words(k, L)))

    @property
    def sup_bump(self) -> float:
        return float(self.bump.sup)

    @property
    def id(self):
        return f"bump_pair({self.system.id})"


# ---------------------------------------------------------------------------
# construction

def _check_bump(bump):
    if isinstance(bump, ShiftBump):
        if min(bump.values) < 0:
            raise ContractViolation("bump values must be >= 0")
        return
    if bump.amp < 0:
        raise ContractViolation("bump amplitude must be >= 0 (nonnegative bumps only)")
    u = np.linspace(0.0, 1.0, 1001)
    if np.any(bump.profile(u) < 0):
        raise ContractViolation("bump must be nonnegative")
    edge = bump.profile(np.zeros(500)), bump.profile(np.ones(500))
    if max(np.abs(edge[0]).max(), np.abs(edge[1]).max()) > 1e-9:
        raise ContractViolation("bump must vanish on the boundary of B")


def _overlap(a, b) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def make_bump_pair(system: MapSystem, region, bump=None) -> BumpPair:
    """Validate B and compute V = f^-1(B); rejects V meeting B or the critical set."""
    if bump is None:
        bump = SineBump()
    _check_bump(bump)
    if isinstance(system, FullShift):
        if not isinstance(region, CylinderSet) or not isinstance(bump, ShiftBump):
            raise ContractViolation("shift bump pairs need a CylinderSet and a ShiftBump")
        w = region.word
        if any(s >= system.k for s in w):
            raise ContractViolation("cylinder word uses symbols outside the alphabet")
        ext = len(bump.values)
        e = round(math.log(ext, system.k)) if ext > 1 else 0
        if system.k ** e != ext:
            raise ContractViolation("shift bump needs k^e values")
        V = tuple((a,) + w for a in range(system.k))
        if any(v[: len(w)] == w for v in V):
            raise RegionCollision("regions collide: V meets B")
        return BumpPair(system, region, bump, V)
    if not isinstance(region, BumpRegion):
        raise ContractViolation("bump region must be a BumpRegion")
    if isinstance(system, CircleTimesD):
        if not (0.0 < region.lo and region.hi < 1.0):
            raise ContractViolation("B must lie strictly inside (0, 1)")
        V = tuple(((region.lo + j) / system.d, (region.hi + j) / system.d) for j in range(system.d))
        if any(_overlap(v, (region.lo, region.hi)) for v in V):
            raise RegionCollision("regions collide: V meets B")
        return BumpPair(system, region, bump, V)
    if isinstance(system, Quadratic):
        a, beta = system.a0, system.beta
        if not (-beta < region.lo and region.hi < beta):
            raise ContractViolation("B must lie strictly inside the invariant interval")
        if region.hi >= a:
            raise CriticalContact("preimage touches critical set")
        inner = math.sqrt(a - region.hi)
        outer = math.sqrt(a - max(region.lo, -beta))
        V = ((-outer, -inner), (inner, outer))
        if any(_overlap(v, (region.lo, region.hi)) for v in V):
            raise RegionCollision("regions collide: V meets B")
        return BumpPair(system, region, bump, V)
    if isinstance(system, Viana):
        if not (-system.beta < region.lo and region.hi < system.beta):
            raise ContractViolation("B must lie strictly inside S^1 x I")
        # theta-fibred bands |x| in [sqrt(a(t) - hi), sqrt(a(t) - lo)] over the d preimages
        th = np.arange(1024 * system.d) / (1024 * system.d)
        img = (system.d * th) % 1.0
        hit = np.ones_like(th, dtype=bool) if region.full_circle else (img >= region.theta_lo) & (img <= region.theta_hi)
        a = system.a_of(th[hit])
        if np.any(a - region.hi <= 0):
            raise CriticalContact("preimage touches critical set")
        inner = np.sqrt(a - region.hi)
        outer = np.sqrt(np.maximum(a - region.lo, 0.0))
        in_b = np.ones_like(inner, dtype=bool) if region.full_circle else (
            (th[hit] >= region.theta_lo) & (th[hit] <= region.theta_hi))
        for lo_band, hi_band in ((inner, outer), (-outer, -inner)):
            clash = (lo_band < region.hi) & (region.lo < hi_band) & in_b
            if np.any(clash):
                raise RegionCollision("regions collide: V meets B")
        V = (float(inner.min()), float(outer.max()))
        return BumpPair(system, region, bump, V)
    raise ContractViolation(f"bump pairs unsupported on {system.kind}")


# ---------------------------------------------------------------------------
# evaluation and sums

def evaluate(phi: Potential, p: PhasePoint, system: MapSystem | None = None) -> float:
    if isinstance(phi, Constant):
        return float(phi.c)
    if isinstance(p, SymbolWord):
        return phi.word_value(p.word, p.k)
    if isinstance(phi, BumpPair):
        system = phi.system
    elif isinstance(phi, Shifted) and isinstance(phi.base, BumpPair):
        system = phi.base.system
    if system is None:
        system = _default_system(p)
    return float(phi.values(system, system.to_state(p))[0])


def _default_system(p: PhasePoint) -> MapSystem:
    if isinstance(p, CircleAngle):
        return CircleTimesD(2)
    if isinstance(p, IntervalCoord):
        return Quadratic(2.0)
    if isinstance(p, CylinderPoint):
        return Viana()
    raise ContractViolation("cannot infer phase space")


def orbit_values(phi: Potential, orb: Orbit, n: int) -> np.ndarray:
    if n < 0 or n > orb.n:
        raise ContractViolation(f"n must lie in 0..{orb.n}")
    if n == 0:
        return np.zeros(0)
    if isinstance(orb.system, FullShift):
        last = orb.points[n - 1]
        if len(last.word) < phi.depth:
            raise ContractViolation("orbit word too short for this potential depth")
        return np.array([phi.word_value(orb.points[i].word, orb.system.k) for i in range(n)])
    return phi.values(orb.system, np.asarray(orb.points[:n]))


def birkhoff(phi: Potential, orb: Orbit, n: int) -> float:
    """S_n phi(x) = sum_{i<n} phi(f^i x), summed with math.fsum."""
    return math.fsum(orbit_values(phi, orb, n))


@dataclass(frozen=True)
class SupResult:
    value: float
    samples: int


def _sums_along(phi: Potential, system: MapSystem, s0: np.ndarray, n: int) -> np.ndarray:
    total = np.zeros(s0.shape[0])
    s = s0
    for _ in range(n):
        total = total + phi.values(system, s)
        s = system.step_states(s)
    return total


def sup_over_ball(
    phi: Potential,
    system: MapSystem,
    x: PhasePoint,
    n: int,
    delta: float,
    resolution: int = 1024,
    seed: int = 0,
    extra: int = 64,
) -> SupResult:
    """R_{n,delta} phi(x): max of S_n phi over sampled points of B_delta(x, n).

    Samples are the nested grid lo + (hi - lo) j / resolution (doubling the
    resolution keeps every old point), the center x, and ``extra`` seeded
    uniform points; exact enumeration for shifts.
    """
    if isinstance(phi, Constant):
        return SupResult(n * float(phi.c), 1)
    if isinstance(system, FullShift):
        return _sup_shift(phi, system, x, n)
    rng = np.random.default_rng(seed)
    if isinstance(system, (CircleTimesD, Quadratic)):
        lo, hi = dynamical_ball_1d(system, x, n, delta)
        j = np.arange(1, resolution)
        pts = np.concatenate((lo + (hi - lo) * j / resolution, [system.to_state(x)[0]],
                              rng.uniform(lo, hi, extra)))
        if isinstance(system, CircleTimesD):
            pts = pts - np.floor(pts)
        sums = _sums_along(phi, system, pts, n)
        return SupResult(float(sums.max()), pts.size)
    if isinstance(system, Viana):
        c = system.to_state(x)[0]
        rt = min(delta / float(system.d) ** n, 0.5)
        g = (np.arange(1, resolution) / resolution) * 2.0 - 1.0
        tt, xx = np.meshgrid(g, g, indexing="ij")
        grid = np.stack((c[0] + rt * tt.ravel(), c[1] + delta * xx.ravel()), axis=1)
        rnd = np.stack((c[0] + rng.uniform(-rt, rt, extra), c[1] + rng.uniform(-delta, delta, extra)), axis=1)
        pts = np.concatenate((grid, c[None, :], rnd))
        pts[:, 0] -= np.floor(pts[:, 0])
        pts = pts[system.in_domain(pts)]
        orbit_pts = iterate_states(system, pts, n, check_domain=False)
        xo = iterate_states(system, c[None, :], n, check_domain=False)
        inside = np.ones(pts.shape[0], dtype=bool)
        for i in range(n + 1):
            inside &= system.metric.states(orbit_pts[i], xo[i]) < delta
        pts = pts[inside]
        sums = _sums_along(phi, system, pts, n)
        return SupResult(float(sums.max()), pts.shape[0])
    raise ContractViolation(f"ball suprema unsupported on {system.kind}")


def _sup_shift(phi: Potential, system: FullShift, x: SymbolWord, n: int) -> SupResult:
    if len(x.word) < n + 1:
        raise ContractViolation("word shorter than the cylinder depth n + 1")
    need = n - 1 + max(phi.depth, 1)
    base = x.word[: n + 1]
    free = max(0, need - len(base))
    best = -math.inf
    count = 0
    for ext in all_words(system.k, free):
        w = base + ext
        s = math.fsum(phi.word_value(w[i:], system.k) for i in range(n))
        best = max(best, s)
        count += 1
    return SupResult(best if n > 0 else 0.0, count)


# ---------------------------------------------------------------------------
# bounded Birkhoff sums

@dataclass(frozen=True, eq=False)
class BirkhoffReport:
    potential_id: str
    map_id: str
    seeds: np.ndarray
    horizon: int
    max_abs: np.ndarray  # per seed; nan for excluded seeds
    global_max: float
    bound: float | None
    excluded: int
    tol: float = 1e-9

    @property
    def passed(self) -> bool | None:
        if self.bound is None:
            return None
        return bool(self.global_max <= self.bound + self.tol)

    def to_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "max_abs_Sn"])
        for i, v in enumerate(self.max_abs):
            w.writerow([i, repr(float(v))])


def _bound_for(phi: Potential) -> float | None:
    if isinstance(phi, BumpPair):
        return phi.sup_bump
    if isinstance(phi, Constant) and phi.c == 0.0:
        return 0.0
    return None


def verify_bounded(
    phi: Potential,
    system: MapSystem,
    seeds: int,
    N: int,
    seed: int = 0,
    tol: float = 1e-9,
) -> BirkhoffReport:
    """Track max_{n <= N} |S_n phi| along ``seeds`` random orbits."""
    if isinstance(system, FullShift):
        raise ContractViolation("verify_bounded runs on smooth maps")
    rng = np.random.default_rng(seed)
    s = system.random_states(rng, seeds)
    init = s.copy()
    total = np.zeros(seeds)
    worst = np.zeros(seeds)
    bad = ~system.in_domain(s)
    for _ in range(N):
        total = total + phi.values(system, s)
        np.maximum(worst, np.abs(total), out=worst)
        s = system.step_states(s)
        bad |= ~system.in_domain(s)
    worst = np.where(bad, np.nan, worst)
    gmax = float(np.nanmax(worst)) if (~bad).any() else float("nan")
    return BirkhoffReport(phi.id, system.id, init, N, worst, gmax, _bound_for(phi), int(bad.sum()), tol)
