"""Phase spaces, metrics and the map zoo.

Every map works on *state arrays*: shape ``(N,)`` for one-dimensional
systems (circle angle or interval coordinate) and ``(N, 2)`` with columns
``(theta, x)`` for the Viana skew product.  The scalar API (:func:`step`,
:func:`orbit`, ...) routes through the same vectorized kernels, so an
ensemble run and a single orbit produce bit-identical points.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import ContractViolation, DomainEscape, NotDifferentiable, OrbitExhausted

# Critical orbit 0 -> a -> a - a^2 lands on the positive fixed point after
# three steps.  Root of a - (a - a^2)^2 = (-1 + sqrt(1 + 4a)) / 2 in (1, 2);
# 40-digit value 1.543689012692076361570855971801747986525.
MISIUREWICZ_A0 = 1.5436890126920764


def reduce_angle(v):
    """Reduce into [0, 1) as ``v - floor(v)``; works on floats and arrays."""
    if isinstance(v, np.ndarray):
        r = v - np.floor(v)
        return np.where(r >= 1.0, 0.0, r)
    r = v - math.floor(v)
    return 0.0 if r >= 1.0 else r


# ---------------------------------------------------------------------------
# phase points

@dataclass(frozen=True)
class CircleAngle:
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", reduce_angle(float(self.theta)))


@dataclass(frozen=True)
class IntervalCoord:
    x: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))


@dataclass(frozen=True)
class CylinderPoint:
    theta: float
    x: float

    def __post_init__(self):
        object.__setattr__(self, "theta", reduce_angle(float(self.theta)))
        object.__setattr__(self, "x", float(self.x))


@dataclass(frozen=True)
class SymbolWord:
    k: int
    word: tuple

    def __post_init__(self):
        word = tuple(int(s) for s in self.word)
        if self.k < 2:
            raise ContractViolation("alphabet size must be >= 2")
        if not word:
            raise ContractViolation("symbol word must be non-empty")
        if any(s < 0 or s >= self.k for s in word):
            raise ContractViolation(f"symbols must lie in 0..{self.k - 1}")
        object.__setattr__(self, "word", word)

    @classmethod
    def parse(cls, k: int, text: str) -> "SymbolWord":
        return cls(k, tuple(int(c) for c in text))

    def __str__(self):
        return "".join(str(s) for s in self.word)


PhasePoint = Union[CircleAngle, IntervalCoord, CylinderPoint, SymbolWord]


# ---------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class CircleArc:
    def states(self, a, b):
        d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        d = d - np.floor(d)
        return np.minimum(d, 1.0 - d)

    def __call__(self, p: CircleAngle, q: CircleAngle) -> float:
        _check_type(p, q, CircleAngle)
        d = abs(p.theta - q.theta)
        return min(d, 1.0 - d)


@dataclass(frozen=True)
class Euclidean1D:
    def states(self, a, b):
        return np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))

    def __call__(self, p: IntervalCoord, q: IntervalCoord) -> float:
        _check_type(p, q, IntervalCoord)
        return abs(p.x - q.x)


@dataclass(frozen=True)
class CylinderMax:
    def states(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return np.maximum(CircleArc().states(a[..., 0], b[..., 0]), np.abs(a[..., 1] - b[..., 1]))

    def __call__(self, p: CylinderPoint, q: CylinderPoint) -> float:
        _check_type(p, q, CylinderPoint)
        d = abs(p.theta - q.theta)
        return max(min(d, 1.0 - d), abs(p.x - q.x))


@dataclass(frozen=True)
class WordMetric:
    """``2**-m`` with m the length of the longest common prefix; base 1/2."""

    def __call__(self, p: SymbolWord, q: SymbolWord) -> float:
        _check_type(p, q, SymbolWord)
        if p.k != q.k:
            raise ContractViolation("words over different alphabets")
        if p.word == q.word:
            return 0.0
        m = 0
        for s, t in zip(p.word, q.word):
            if s != t:
                break
            m += 1
        return 2.0 ** (-m)


Metric = Union[CircleArc, Euclidean1D, CylinderMax, WordMetric]


def _check_type(p, q, cls):
    if not (isinstance(p, cls) and isinstance(q, cls)):
        raise ContractViolation(f"expected two {cls.__name__} points, got {type(p).__name__} and {type(q).__name__}")


def distance(metric: Metric, p: PhasePoint, q: PhasePoint) -> float:
    return metric(p, q)


# ---------------------------------------------------------------------------
# Morse functions for the Viana fibre parameter a(theta) = a0 + alpha * b(theta)

@dataclass(frozen=True)
class SineMorse:
    def value(self, theta):
        return np.sin(2.0 * np.pi * theta)

    def deriv(self, theta):
        return 2.0 * np.pi * np.cos(2.0 * np.pi * theta)


@dataclass(frozen=True)
class TabulatedMorse:
    """Periodic cubic spline through ``values`` sampled at theta = j / len(values)."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 4:
            raise ContractViolation("tabulated Morse function needs at least 4 samples")
        if max(vals) == min(vals):
            raise ContractViolation("tabulated Morse function is constant")
        object.__setattr__(self, "values", vals)

    @cached_property
    def _spline(self):
        from scipy.interpolate import CubicSpline

        m = len(self.values)
        xs = np.arange(m + 1) / m
        ys = np.append(np.asarray(self.values), self.values[0])
        return CubicSpline(xs, ys, bc_type="periodic")

    def value(self, theta):
        return self._spline(theta)

    def deriv(self, theta):
        return self._spline(theta, 1)


# ---------------------------------------------------------------------------
# maps

class MapSystem:
    """Common interface of the map zoo (see subclasses)."""

    kind: str = ""
    dim: int = 1
    critical_set_empty: bool = True

    @property
    def id(self) -> str:
        raise NotImplementedError

    # vectorized kernels -----------------------------------------------------
    def step_states(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inv_norm_states(self, s: np.ndarray) -> np.ndarray:
        raise NotDifferentiable(f"{self.kind} is not differentiable")

    def crit_dist_states(self, s: np.ndarray) -> np.ndarray:
        return np.full(np.shape(s)[0], np.inf)

    def in_domain(self, s: np.ndarray) -> np.ndarray:
        return np.ones(np.shape(s)[0], dtype=bool)

    def jacobian_states(self, s: np.ndarray) -> np.ndarray:
        """|det Df| at each state."""
        raise NotDifferentiable(f"{self.kind} is not differentiable")

    # scalar adapters --------------------------------------------------------
    def to_state(self, p: PhasePoint) -> np.ndarray:
        raise NotImplementedError

    def to_point(self, s) -> PhasePoint:
        raise NotImplementedError

    def random_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class CircleTimesD(MapSystem):
    d: int

    kind = "circle_times_d"
    dim = 1
    metric = CircleArc()

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ContractViolation("degree must be >= 2")
        object.__setattr__(self, "d", int(self.d))

    @property
    def id(self):
        return f"circle_times_d(d={self.d})"

    def step_states(self, s):
        return reduce_angle(self.d * s)

    def inv_norm_states(self, s):
        return np.full(np.shape(s)[0], 1.0 / self.d)

    def jacobian_states(self, s):
        return np.full(np.shape(s)[0], float(self.d))

    def to_state(self, p):
        if not isinstance(p, CircleAngle):
            raise ContractViolation(f"{self.kind} acts on CircleAngle, got {type(p).__name__}")
        return np.array([p.theta])

    def to_point(self, s):
        return CircleAngle(float(s))

    def random_states(self, rng, n):
        return rng.random(n)


@dataclass(frozen=True)
class Quadratic(MapSystem):
    """Q(x) = a0 - x^2 on its invariant interval [-beta, beta]."""

    a0: float

    kind = "quadratic"
    dim = 1
    critical_set_empty = False
    metric = Euclidean1D()

    def __post_init__(self):
        if not (1.0 < self.a0 <= 2.0):
            raise ContractViolation("quadratic parameter a0 must lie in (1, 2]")
        object.__setattr__(self, "a0", float(self.a0))

    @property
    def id(self):
        return f"quadratic(a0={self.a0!r})"

    @property
    def beta(self) -> float:
        # |negative fixed point|; [-beta, beta] is forward invariant
        return (1.0 + math.sqrt(1.0 + 4.0 * self.a0)) / 2.0

    def step_states(self, s):
        return self.a0 - s * s

    def inv_norm_states(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, np.inf)
        nz = s != 0.0
        out[nz] = 1.0 / np.abs(2.0 * s[nz])
        return out

    def jacobian_states(self, s):
        return np.abs(2.0 * np.asarray(s, dtype=float))

    def crit_dist_states(self, s):
        return np.abs(np.asarray(s, dtype=float))

    def in_domain(self, s):
        return np.abs(s) <= self.beta + 1e-12

    def to_state(self, p):
        if not isinstance(p, IntervalCoord):
            raise ContractViolation(f"{self.kind} acts on IntervalCoord, got {type(p).__name__}")
        return np.array([p.x])

    def to_point(self, s):
        return IntervalCoord(float(s))

    def random_states(self, rng, n):
        return rng.uniform(-self.beta, self.beta, n)


@dataclass(frozen=True)
class Viana(MapSystem):
    """(theta, x) -> (d theta mod 1, a0 + alpha b(theta) - x^2) on S^1 x [-beta, beta]."""

    d: int = 16
    a0: float = MISIUREWICZ_A0
    alpha: float = 0.01
    b: object = field(default_factory=SineMorse)
    grid_bits: int = 14
    beta_step: float = 1e-3
    beta: float = field(init=False)

    kind = "viana"
    dim = 2
    critical_set_empty = False
    metric = CylinderMax()

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ContractViolation("degree must be >= 2")
        if not (1.0 < self.a0 < 2.0):
            raise ContractViolation("Viana parameter a0 must lie in (1, 2)")
        if self.alpha < 0:
            raise ContractViolation("alpha must be >= 0")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "beta", self._invariant_beta())

    def _invariant_beta(self) -> float:
        theta = np.arange(2 ** self.grid_bits) / 2 ** self.grid_bits
        a = self.a0 + self.alpha * self.b.value(theta)
        a_max, a_min = float(a.max()), float(a.min())
        # q(theta, [-b, b]) = [a - b^2, a]; strict inclusion in (-b, b)
        feasible = []
        j = 0
        while True:
            beta = 2.0 - j * self.beta_step
            if beta <= 0:
                break
            if a_max < beta and a_min - beta * beta > -beta:
                feasible.append(beta)
            elif feasible:
                break
            j += 1
        if not feasible:
            raise ContractViolation("no invariant interval [-beta, beta] found; alpha too large?")
        return feasible[-1]

    @property
    def id(self):
        return f"viana(d={self.d},a0={self.a0!r},alpha={self.alpha!r})"

    def a_of(self, theta):
        return self.a0 + self.alpha * self.b.value(theta)

    def step_states(self, s):
        th = s[:, 0]
        x = s[:, 1]
        out = np.empty_like(s)
        out[:, 0] = reduce_angle(self.d * th)
        out[:, 1] = self.a_of(th) - x * x
        return out

    def inv_norm_states(self, s):
        # Df = [[d, 0], [alpha b'(theta), -2x]];  ||Df^-1|| = s_max(Df) / |det Df|
        th = s[:, 0]
        x = s[:, 1]
        c = self.alpha * self.b.deriv(th)
        e = -2.0 * x
        frob = self.d * self.d + c * c + e * e
        det = np.abs(self.d * e)
        disc = np.sqrt(np.maximum(frob * frob - 4.0 * det * det, 0.0))
        smax = np.sqrt((frob + disc) / 2.0)
        out = np.full(th.shape, np.inf)
        nz = det != 0.0
        out[nz] = smax[nz] / det[nz]
        return out

    def jacobian_states(self, s):
        return np.abs(2.0 * self.d * s[:, 1])

    def crit_dist_states(self, s):
        return np.abs(s[:, 1])

    def in_domain(self, s):
        return np.abs(s[:, 1]) < self.beta

    def to_state(self, p):
        if not isinstance(p, CylinderPoint):
            raise ContractViolation(f"{self.kind} acts on CylinderPoint, got {type(p).__name__}")
        return np.array([[p.theta, p.x]])

    def to_point(self, s):
        return CylinderPoint(float(s[0]), float(s[1]))

    def random_states(self, rng, n):
        out = np.empty((n, 2))
        out[:, 0] = rng.random(n)
        out[:, 1] = rng.uniform(-self.beta, self.beta, n)
        return out


@dataclass(frozen=True)
class FullShift(MapSystem):
    k: int

    kind = "full_shift"
    dim = 0
    metric = WordMetric()

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ContractViolation("alphabet size must be >= 2")
        object.__setattr__(self, "k", int(self.k))

    @property
    def id(self):
        return f"full_shift(k={self.k})"


# ---------------------------------------------------------------------------
# operations

def _check_point(system: MapSystem, p: PhasePoint):
    if isinstance(system, FullShift):
        if not isinstance(p, SymbolWord):
            raise ContractViolation(f"full_shift acts on SymbolWord, got {type(p).__name__}")
        if p.k != system.k:
            raise ContractViolation("word alphabet does not match the shift")


def step(system: MapSystem, p: PhasePoint) -> PhasePoint:
    """One application of the map."""
    if isinstance(system, FullShift):
        _check_point(system, p)
        if len(p.word) < 2:
            raise OrbitExhausted("orbit exhausted: cannot shift a word of length 1")
        return SymbolWord(p.k, p.word[1:])
    s = system.to_state(p)
    if not system.in_domain(s)[0]:
        raise ContractViolation(f"point {p} outside the domain of {system.id}")
    return system.to_point(system.step_states(s)[0])


def iterate_states(system: MapSystem, s0: np.ndarray, n: int, check_domain: bool = True) -> np.ndarray:
    """Stack of states ``(n + 1, N[, 2])`` along the orbits of ``s0``."""
    s0 = np.asarray(s0, dtype=float)
    out = np.empty((n + 1,) + s0.shape)
    out[0] = s0
    s = s0
    for i in range(n):
        s = system.step_states(s)
        if check_domain and not np.all(system.in_domain(s)):
            raise DomainEscape(i + 1)
        out[i + 1] = s
    return out


@dataclass(frozen=True, eq=False)
class Orbit:
    system: MapSystem
    initial: PhasePoint
    points: object  # ndarray of states, or tuple of SymbolWord for shifts
    inv_norms: np.ndarray
    crit_dists: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points) - 1

    def point(self, i: int) -> PhasePoint:
        if isinstance(self.system, FullShift):
            return self.points[i]
        return self.system.to_point(self.points[i])

    def to_csv(self, fh):
        """Columns step,theta,x,inv_deriv_norm,crit_dist; last row has no derivative data."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "theta", "x", "inv_deriv_norm", "crit_dist"])
        for i in range(self.n + 1):
            theta = x = ""
            if isinstance(self.system, CircleTimesD):
                theta = repr(float(self.points[i]))
            elif isinstance(self.system, Quadratic):
                x = repr(float(self.points[i]))
            elif isinstance(self.system, Viana):
                theta, x = repr(float(self.points[i][0])), repr(float(self.points[i][1]))
            else:
                theta = str(self.points[i])
            inv = crit = ""
            if i < self.n:
                inv = repr(float(self.inv_norms[i]))
                crit = repr(float(self.crit_dists[i]))
            w.writerow([i, theta, x, inv, crit])


def orbit(system: MapSystem, p: PhasePoint, n: int) -> Orbit:
    if n < 1:
        raise ContractViolation("orbit length must be >= 1")
    if isinstance(system, FullShift):
        _check_point(system, p)
        if len(p.word) <= n:
            raise OrbitExhausted(f"word of length {len(p.word)} cannot be shifted {n} times")
        pts = tuple(SymbolWord(p.k, p.word[i:]) for i in range(n + 1))
        return Orbit(system, p, pts, np.full(n, np.nan), np.full(n, np.inf))
    s = system.to_state(p)
    if not system.in_domain(s)[0]:
        raise DomainEscape(0, p)
    states = iterate_states(system, s, n)[:, 0]
    head = states[:-1] if system.dim == 1 else states[:-1]
    inv = system.inv_norm_states(head)
    crit = system.crit_dist_states(head)
    return Orbit(system, p, states, inv, crit)


def inv_deriv_norm(system: MapSystem, p: PhasePoint) -> float:
    if isinstance(system, FullShift):
        raise NotDifferentiable("full_shift is not differentiable")
    return float(system.inv_norm_states(system.to_state(p))[0])


def dist_delta(system: MapSystem, p: PhasePoint, delta: float) -> float:
    """dist(p, C) when closer than ``delta`` to the critical set, else 1."""
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    if system.critical_set_empty:
        return 1.0
    dist = float(system.crit_dist_states(system.to_state(p))[0])
    return dist if dist < delta else 1.0


class Preimage(NamedTuple):
    point: PhasePoint
    itinerary: tuple


def inverse_branches(system: MapSystem, p: PhasePoint, n: int) -> list[Preimage]:
    """All y with f^n(y) = p; itinerary lists the branch used at each forward step."""
    if n < 0:
        raise ContractViolation("n must be >= 0")
    if isinstance(system, CircleTimesD):
        level = [(system.to_state(p)[0], ())]
        for _ in range(n):
            level = [((y + j) / system.d, (j,) + it) for y, it in level for j in range(system.d)]
        return sorted((Preimage(CircleAngle(y), it) for y, it in level), key=lambda b: b.itinerary)
    if isinstance(system, Quadratic):
        level = [(system.to_state(p)[0], ())]
        for _ in range(n):
            nxt = []
            for y, it in level:
                r2 = system.a0 - y
                if r2 < 0:
                    continue
                r = math.sqrt(r2)
                if r == 0.0:
                    nxt.append((0.0, (1,) + it))
                else:
                    nxt.append((-r, (0,) + it))
                    nxt.append((r, (1,) + it))
            level = nxt
        return [Preimage(IntervalCoord(y), it) for y, it in level]
    raise ContractViolation(f"inverse branches need a 1D map, got {system.kind}")


def branch_of(system: MapSystem, s: float) -> int:
    """Index of the monotone branch containing the 1D state ``s``."""
    if isinstance(system, CircleTimesD):
        return min(int(math.floor(system.d * s)), system.d - 1)
    if isinstance(system, Quadratic):
        return 1 if s >= 0 else 0
    raise ContractViolation(f"branch itineraries need a 1D map, got {system.kind}")


def misiurewicz_condition(a: float) -> float:
    """Q_a^3(0) minus the positive fixed point of Q_a."""
    return a - (a - a * a) ** 2 - (-1.0 + math.sqrt(1.0 + 4.0 * a)) / 2.0


def misiurewicz_a0() -> float:
    return MISIUREWICZ_A0


def itinerary_digits(system: CircleTimesD, states: Sequence[float]) -> list[int]:
    return [branch_of(system, float(s)) for s in states]
