"""Ulam discretization of the weighted transfer operator.

Entries follow the Ruelle (dual) convention

    L[i, j] = exp(phi(c_j)) * |f(cell j) ∩ cell i| / |cell i|,

counted with multiplicity, so that for phi = 0 the operator of the x d map
has row and column sums d and leading eigenvalue exactly d.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dynamics import CircleTimesD, MapSystem, Quadratic, Viana
from .errors import ContractViolation, ErgolabError
from .potentials import Constant, Potential
from .pressure import PressureEstimate


@dataclass(frozen=True)
class Grid1D:
    m: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.m < 1:
            raise ContractViolation("grid needs at least one cell")

    @property
    def size(self) -> int:
        return self.m

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.m

    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.m) + 0.5) * self.width

    def cell_of(self, x: np.ndarray) -> np.ndarray:
        idx = np.floor((x - self.lo) / self.width).astype(np.int64)
        return np.clip(idx, 0, self.m - 1)

    @property
    def cell_area(self) -> float:
        return self.width


@dataclass(frozen=True)
class Grid2D:
    m_theta: int
    m_x: int
    lo_x: float
    hi_x: float

    @property
    def size(self) -> int:
        return self.m_theta * self.m_x

    @property
    def cell_area(self) -> float:
        return (1.0 / self.m_theta) * (self.hi_x - self.lo_x) / self.m_x

    def centers(self) -> np.ndarray:
        th = (np.arange(self.m_theta) + 0.5) / self.m_theta
        wx = (self.hi_x - self.lo_x) / self.m_x
        xs = self.lo_x + (np.arange(self.m_x) + 0.5) * wx
        tt, xx = np.meshgrid(th, xs, indexing="ij")
        return np.stack((tt.ravel(), xx.ravel()), axis=1)

    def cell_of(self, s: np.ndarray) -> np.ndarray:
        it = np.clip(np.floor(s[:, 0] * self.m_theta).astype(np.int64), 0, self.m_theta - 1)
        wx = (self.hi_x - self.lo_x) / self.m_x
        ix = np.clip(np.floor((s[:, 1] - self.lo_x) / wx).astype(np.int64), 0, self.m_x - 1)
        return it * self.m_x + ix


def grid_for(system: MapSystem, m: int, m_x: int | None = None):
    if isinstance(system, CircleTimesD):
        return Grid1D(m, 0.0, 1.0)
    if isinstance(system, Quadratic):
        return Grid1D(m, -system.beta, system.beta)
    if isinstance(system, Viana):
        return Grid2D(m, m if m_x is None else m_x, -system.beta, system.beta)
    raise ContractViolation(f"no Ulam grid for {system.kind}")


@dataclass(frozen=True)
class ExactBranch:
    pass


@dataclass(frozen=True)
class MonteCarlo:
    seed: int = 0
    samples_per_cell: int = 64


@dataclass(frozen=True, eq=False)
class UlamOperator:
    grid: object
    potential_id: str
    mode: object
    matrix: sp.csr_matrix
    map_id: str = ""

    def to_triplets(self, fh):
        fh.write(f"# map {self.map_id}\n# grid {self.grid}\n# mode {self.mode}\n# potential {self.potential_id}\n")
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        fh.write("row col value\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")


def _weights(system, phi: Potential, centers) -> np.ndarray:
    return np.exp(phi.values(system, centers))


def _exact_circle(system: CircleTimesD, grid: Grid1D):
    # image of cell j is [d j, d j + d) in cell units: d whole cells, each covered once
    m, d = grid.m, system.d
    j = np.repeat(np.arange(m), d)
    i = (d * j + np.tile(np.arange(d), m)) % m
    return i, j, np.ones(m * d)


def _exact_quadratic(system: Quadratic, grid: Grid1D):
    a = system.a0
    edges = grid.lo + np.arange(grid.m + 1) * grid.width
    rows, cols, vals = [], [], []
    for j in range(grid.m):
        u, v = edges[j], edges[j + 1]
        pieces = [(u, 0.0), (0.0, v)] if u < 0.0 < v else [(u, v)]
        for p, q in pieces:
            y0, y1 = sorted((a - p * p, a - q * q))
            if y1 <= y0:
                continue
            first = max(int(math.floor((y0 - grid.lo) / grid.width)), 0)
            last = min(int(math.ceil((y1 - grid.lo) / grid.width)), grid.m)
            for i in range(first, last):
                ov = min(y1, edges[i + 1]) - max(y0, edges[i])
                if ov > 0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(ov / grid.width)
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals)


def _stratified(grid, rng, q):
    """q x q jittered samples per 2D cell (q per 1D cell), cell-major order."""
    if isinstance(grid, Grid1D):
        base = grid.lo + np.arange(grid.m)[:, None] * grid.width
        u = (np.arange(q)[None, :] + rng.random((grid.m, q))) / q
        return (base + u * grid.width).ravel(), q
    wx = (grid.hi_x - grid.lo_x) / grid.m_x
    c = grid.centers()
    sub = (np.arange(q) + 0.5) / q - 0.5
    st, sx = np.meshgrid(sub, sub, indexing="ij")
    n = grid.size
    jt = rng.random((n, q * q)) - 0.5
    jx = rng.random((n, q * q)) - 0.5
    th = c[:, 0:1] + (st.ravel()[None, :] + jt / q) / grid.m_theta
    xs = c[:, 1:2] + (sx.ravel()[None, :] + jx / q) * wx
    out = np.stack((th.ravel(), xs.ravel()), axis=1)
    out[:, 0] -= np.floor(out[:, 0])
    return out, q * q


def _monte_carlo(system: MapSystem, grid, mode: MonteCarlo):
    rng = np.random.default_rng(mode.seed)
    if isinstance(grid, Grid1D):
        q = mode.samples_per_cell
    else:
        q = int(round(math.sqrt(mode.samples_per_cell)))
        if q * q != mode.samples_per_cell:
            raise ContractViolation("2D Monte Carlo needs a square number of samples per cell")
    pts, per = _stratified(grid, rng, q)
    img = system.step_states(pts)
    jac = system.jacobian_states(pts)
    cols = np.repeat(np.arange(grid.size), per)
    keep = system.in_domain(img)
    rows = grid.cell_of(img[keep])
    # |f(J) ∩ I| / |I| estimated by the Jacobian-weighted sample mean over J
    return rows, cols[keep], jac[keep] / per


def build_ulam(system: MapSystem, grid, phi: Potential | None = None, mode=None) -> UlamOperator:
    phi = Constant(0.0) if phi is None else phi
    mode = ExactBranch() if mode is None else mode
    if isinstance(mode, ExactBranch):
        if isinstance(system, CircleTimesD):
            rows, cols, frac = _exact_circle(system, grid)
        elif isinstance(system, Quadratic):
            rows, cols, frac = _exact_quadratic(system, grid)
        else:
            raise ContractViolation(f"exact branch geometry unavailable for {system.kind}; use MonteCarlo mode")
    elif isinstance(mode, MonteCarlo):
        rows, cols, frac = _monte_carlo(system, grid, mode)
    else:
        raise ContractViolation(f"unknown Ulam mode {mode!r}")
    w = _weights(system, phi, grid.centers())
    vals = w[cols] * frac
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    mat.sum_duplicates()
    if not np.all(np.isfinite(mat.data)) or np.any(mat.data < 0):
        raise ErgolabError("operator entries must be finite and nonnegative")
    return UlamOperator(grid, phi.id, mode, mat, system.id)


@dataclass(frozen=True, eq=False)
class SpectralResult:
    eigenvalue: float
    vector: np.ndarray
    residual: float
    iterations: int
    converged: bool


def power_iterate(op: UlamOperator, tol: float = 1e-13, max_iter: int = 10000, side: str = "right") -> SpectralResult:
    """v <- L v / |L v|_1 from the uniform vector; lambda = |L v|_1."""
    if side not in ("right", "left"):
        raise ContractViolation("side must be 'right' or 'left'")
    mat = op.matrix if side == "right" else op.matrix.T.tocsr()
    colsum = np.asarray(abs(op.matrix).sum(axis=0)).ravel()
    if np.any(colsum == 0):
        raise ErgolabError(f"operator has a zero column (index {int(np.flatnonzero(colsum == 0)[0])})")
    n = mat.shape[0]
    v = np.full(n, 1.0 / n)
    lam_prev = math.nan
    lam = math.nan
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = mat @ v
        lam = float(w.sum())
        v = w / lam
        if abs(lam - lam_prev) < tol:
            converged = True
            break
        lam_prev = lam
    residual = float(np.abs(mat @ v - lam * v).sum())
    return SpectralResult(lam, v, residual, it, converged)


def pressure_ulam(system: MapSystem, phi: Potential, grid, mode=None, tol: float = 1e-13) -> PressureEstimate:
    op = build_ulam(system, grid, phi, mode)
    res = power_iterate(op, tol)
    note = f"log of the leading eigenvalue; {res.iterations} iterations, residual {res.residual:.3g}"
    if not res.converged:
        note += " (not converged)"
    table = [{"cells": grid.size, "eigenvalue": res.eigenvalue, "residual": res.residual,
              "iterations": res.iterations, "converged": int(res.converged)}]
    return PressureEstimate(math.log(res.eigenvalue), "Ulam", table, note,
                            {"map": system.id, "potential": phi.id, "grid": repr(grid), "mode": repr(mode)})


@dataclass(frozen=True, eq=False)
class DensityTable:
    grid: object
    centers: np.ndarray
    density: np.ndarray
    eigenvalue: float

    @property
    def mass(self) -> float:
        return float(math.fsum(self.density * self.grid.cell_area))

    def to_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        if self.centers.ndim == 1:
            w.writerow(["cell_index", "center", "density"])
            for i, (c, d) in enumerate(zip(self.centers, self.density)):
                w.writerow([i, repr(float(c)), repr(float(d))])
        else:
            w.writerow(["cell_index", "center_theta", "center_x", "density"])
            for i, (c, d) in enumerate(zip(self.centers, self.density)):
                w.writerow([i, repr(float(c[0])), repr(float(c[1])), repr(float(d))])


def mme_density(system: MapSystem, grid, mode=None, tol: float = 1e-13, max_iter: int = 10000) -> DensityTable:
    """Piecewise-constant density of the maximal-entropy measure estimate.

    Cell weights are the product of the left and right leading eigenvectors
    of the phi = 0 operator (Parry's construction), normalized to mass 1.
    """
    op = build_ulam(system, grid, Constant(0.0), mode)
    right = power_iterate(op, tol, max_iter, "right")
    left = power_iterate(op, tol, max_iter, "left")
    w = left.vector * right.vector
    w = w / math.fsum(w)
    dens = w / grid.cell_area
    return DensityTable(grid, grid.centers(), dens, right.eigenvalue)
