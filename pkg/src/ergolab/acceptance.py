"""The acceptance checks, shared by ``ergolab acceptance`` and the test suite.

Every check returns a :class:`CriterionResult` whose ``rows`` are written to
CSV by the CLI.  Rows and ``detail`` never contain timings, so two runs with
the same master seed produce identical bytes.
"""
from __future__ import annotations

import csv
import math
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import MISIUREWICZ_A0, CircleAngle, CircleTimesD, IntervalCoord, Quadratic, Viana, orbit
from .hyperbolic import (
    classify,
    detect_pliss,
    dynamical_ball_1d,
    preball,
    random_seeds,
    slow_approx_ensemble,
    verify_metric_contraction,
)
from .potentials import BumpRegion, Constant, Analytic, PrefixTable, SineBump, make_bump_pair, verify_bounded
from .pressure import SubAlphabet, WholeSpace, pressure_separated, relative_pressure_shift
from .transfer import build_ulam, grid_for, mme_density, power_iterate

TITLES = {
    1: "shift pressure oracle",
    2: "sub-alphabet relative pressure gap",
    3: "constant-shift lemma",
    4: "monotonicity lemma",
    5: "separated-set entropy",
    6: "Ulam spectral radius and uniform MME",
    7: "pre-ball equals dynamical ball",
    8: "hyperbolic-time cross-validation",
    9: "bump-pair bounded Birkhoff sums",
    10: "Viana expanding-set statistics",
    11: "determinism of the acceptance run",
}


@dataclass
class CriterionResult:
    number: int
    passed: bool
    detail: str
    rows: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def title(self) -> str:
        return TITLES[self.number]

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} ({self.title}): {self.detail} [{self.seconds:.1f}s]"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _budget(res: CriterionResult, limit: float) -> CriterionResult:
    if res.seconds > limit:
        res.passed = False
        res.detail += f"; runtime budget {limit:.0f}s exceeded"
    return res


@_timed
def _c1(seed):
    rows, ok = [], True
    for k in (2, 3, 4):
        g = relative_pressure_shift(k, Constant(0.0), WholeSpace(), N=1, n_max=24, gamma_tol=1e-6).value
        err = abs(g - math.log(k))
        ok &= err <= 1e-6
        rows.append({"k": k, "gamma_star": g, "log_k": math.log(k), "abs_err": err})
    worst = max(r["abs_err"] for r in rows)
    return CriterionResult(1, ok, f"max |gamma* - log k| = {worst:.2e} (tol 1e-06)", rows)


def criterion_1(seed: int = 0) -> CriterionResult:
    return _budget(_c1(seed), 60.0)


@_timed
def criterion_2(seed: int = 0) -> CriterionResult:
    sub = relative_pressure_shift(3, Constant(0.0), SubAlphabet({0, 1}), N=1, n_max=24).value
    full = relative_pressure_shift(3, Constant(0.0), WholeSpace(), N=1, n_max=24).value
    e1, e2 = abs(sub - math.log(2)), abs(full - math.log(3))
    gap = full - sub
    ok = e1 <= 1e-6 and e2 <= 1e-6 and gap > 0.4
    rows = [{"lambda": "sub_alphabet(01)", "gamma_star": sub, "exact": math.log(2), "abs_err": e1},
            {"lambda": "whole_space", "gamma_star": full, "exact": math.log(3), "abs_err": e2}]
    return CriterionResult(2, ok, f"errors {e1:.2e}, {e2:.2e}; gap {gap:.6f} (> 0.4)", rows)


@_timed
def criterion_3(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed + 3)
    base = PrefixTable(2, 2, tuple(rng.uniform(-1.0, 1.0, 4)))
    g0 = relative_pressure_shift(2, base, WholeSpace()).value
    rows, ok = [], True
    for c in (-0.5, 0.3, 1.0):
        gc = relative_pressure_shift(2, base + c, WholeSpace()).value
        err = abs(gc - g0 - c)
        ok &= err <= 2e-6
        rows.append({"route": "shift", "map": "full_shift(k=2)", "c": c, "difference": gc - g0, "abs_err": err})
    phi = Analytic("cos", 0.1)
    for d in (2, 3):
        system = CircleTimesD(d)
        sets: dict = {}
        p0 = pressure_separated(system, phi, [0, 1, 2], [1e-3], 2 ** 16, sets=sets).value
        for c in (-0.5, 0.3, 1.0):
            pc = pressure_separated(system, phi + c, [0, 1, 2], [1e-3], 2 ** 16, sets=sets).value
            err = abs(pc - p0 - c)
            ok &= err <= 1e-9
            rows.append({"route": "separated", "map": system.id, "c": c, "difference": pc - p0, "abs_err": err})
    worst_shift = max(r["abs_err"] for r in rows if r["route"] == "shift")
    worst_sep = max(r["abs_err"] for r in rows if r["route"] == "separated")
    return CriterionResult(3, ok, f"shift err {worst_shift:.2e} (tol 2e-06), separated err {worst_sep:.2e} (tol 1e-09)", rows)


def random_prefix_pair(rng: np.random.Generator, k: int = 2):
    """phi <= psi pointwise: psi adds a nonnegative table on the same prefix length."""
    L = int(rng.integers(1, 4))
    lo = rng.uniform(-1.0, 1.0, k ** L)
    bump = rng.uniform(0.0, 0.5, k ** L) * (rng.random(k ** L) < 0.7)
    return PrefixTable(k, L, tuple(lo)), PrefixTable(k, L, tuple(lo + bump))


@_timed
def criterion_4(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed + 4)
    rows, bad = [], 0
    for i in range(100):
        phi, psi = random_prefix_pair(rng)
        gp = relative_pressure_shift(2, phi, WholeSpace(), trend=False).value
        gq = relative_pressure_shift(2, psi, WholeSpace(), trend=False).value
        viol = gp > gq + 2e-6
        bad += viol
        rows.append({"pair": i, "L": phi.length, "gamma_phi": gp, "gamma_psi": gq, "violation": int(viol)})
    return CriterionResult(4, bad == 0, f"{bad} violations in 100 pairs", rows)


@_timed
def _c5(seed):
    rows, ok = [], True
    for d in (2, 3):
        est = pressure_separated(CircleTimesD(d), Constant(0.0), [0, 1, 2], [1e-3], 2 ** 16)
        rel = est.value / math.log(d) - 1.0
        ok &= abs(rel) <= 0.03
        cards = [r["card"] for r in est.table]
        rows.append({"d": d, "value": est.value, "log_d": math.log(d), "rel_err": rel,
                     "cards": " ".join(str(c) for c in cards)})
    det = ", ".join(f"d={r['d']}: {100 * r['rel_err']:+.2f}%" for r in rows)
    return CriterionResult(5, ok, f"relative errors {det} (tol 3%)", rows)


def criterion_5(seed: int = 0) -> CriterionResult:
    return _budget(_c5(seed), 300.0)


@_timed
def _c6(seed):
    rows, ok = [], True
    for d, m in ((2, 2 ** 12), (3, 3 ** 8)):
        system = CircleTimesD(d)
        grid = grid_for(system, m)
        res = power_iterate(build_ulam(system, grid))
        dens = mme_density(system, grid)
        dev = float(np.abs(dens.density - 1.0).max())
        err = abs(res.eigenvalue - d)
        ok &= err <= 1e-6 and dev <= 1e-8
        rows.append({"d": d, "cells": m, "eigenvalue": res.eigenvalue, "abs_err": err, "max_density_dev": dev})
    return CriterionResult(6, ok, "; ".join(f"d={r['d']}: |lambda-d|={r['abs_err']:.1e}, dev={r['max_density_dev']:.1e}"
                                            for r in rows), rows)


def criterion_6(seed: int = 0) -> CriterionResult:
    return _budget(_c6(seed), 60.0)


@_timed
def criterion_7(seed: int = 0) -> CriterionResult:
    rng = np.random.default_rng(seed + 7)
    rows, bad = [], 0
    for d in (2, 3):
        system = CircleTimesD(d)
        for _ in range(50):
            x = CircleAngle(float(rng.random()))
            n = int(rng.integers(0, 11))
            pb = preball(system, x, n, 0.05)
            lo, hi = dynamical_ball_1d(system, x, n, 0.05)
            err = max(abs(pb.lo - lo), abs(pb.hi - hi))
            bad += err > 1e-10
            rows.append({"d": d, "x": x.theta, "n": n, "max_endpoint_err": err})
    worst = max(r["max_endpoint_err"] for r in rows)
    return CriterionResult(7, bad == 0, f"{bad} failures in 100 cases, worst endpoint error {worst:.1e}", rows)


@_timed
def criterion_8(seed: int = 0) -> CriterionResult:
    rows, ok = [], True
    rng = np.random.default_rng(seed + 8)
    c2 = CircleTimesD(2)
    x = CircleAngle(float(rng.random()))
    rec = detect_pliss(orbit(c2, x, 20), 0.5)
    ok &= list(rec.times) == list(range(1, 21))
    worst_c = 0.0
    for n in range(1, 21):
        rep = verify_metric_contraction(c2, x, n, 0.5, 0.05, 1000, seed + n)
        dev = abs(rep.worst_ratio - 1.0)
        worst_c = max(worst_c, dev)
        ok &= rep.passed and dev <= 1e-12
        rows.append({"map": c2.id, "n": n, "worst_ratio": rep.worst_ratio, "skipped": rep.skipped})
    q = Quadratic(2.0)
    x2 = IntervalCoord(2.0)
    recq = detect_pliss(orbit(q, x2, 20), 0.5)
    worst_q = 0.0
    for n in recq.times:
        rep = verify_metric_contraction(q, x2, int(n), 0.5, 0.05, 1000, seed + int(n))
        worst_q = max(worst_q, rep.worst_ratio)
        ok &= rep.passed and rep.worst_ratio <= 1.0 + 1e-6
        rows.append({"map": q.id, "n": int(n), "worst_ratio": rep.worst_ratio, "skipped": rep.skipped})
    ok &= len(recq.times) > 0
    return CriterionResult(8, ok, f"x2: {len(rec.times)}/20 times, |worst-1| = {worst_c:.1e}; "
                                  f"quadratic: {len(recq.times)} times, worst ratio {worst_q:.6f}", rows)


@_timed
def _c9(seed):
    rows, ok = [], True
    c2 = CircleTimesD(2)
    v = Viana(16, MISIUREWICZ_A0, 0.01)
    cases = ((c2, make_bump_pair(c2, BumpRegion(0.3, 0.4), SineBump())),
             (v, make_bump_pair(v, BumpRegion(0.1, 0.2), SineBump())))
    for system, phi in cases:
        rep = verify_bounded(phi, system, 1000, 100_000, seed + 9)
        ok &= bool(rep.passed) and rep.excluded == 0
        rows.append({"map": system.id, "seeds": 1000, "N": 100_000, "global_max": rep.global_max,
                     "bound": rep.bound, "excluded": rep.excluded})
    return CriterionResult(9, ok, "; ".join(f"{r['map'].split('(')[0]}: max|S_n| = {r['global_max']:.12f} "
                                            f"<= {r['bound']} + 1e-9" for r in rows), rows)


def criterion_9(seed: int = 0) -> CriterionResult:
    return _budget(_c9(seed), 600.0)


@_timed
def criterion_10(seed: int = 0) -> CriterionResult:
    v = Viana(16, MISIUREWICZ_A0, 0.01)
    seeds = random_seeds(v, 500, seed + 10)
    cls = classify(v, seeds, 0.9, 5000, 0.05)
    slow = slow_approx_ensemble(v, seeds, 10_000, 1e-3)
    frac = cls.fraction_h
    mean_slow = float(np.nanmean(slow))
    ok = frac >= 0.9 and mean_slow < 0.05
    rows = [{"seed": i, "freq": float(cls.freqs[i]),
             "label": "flagged" if cls.flagged[i] else ("H" if cls.labels[i] else "Hc"),
             "slow_approx": float(slow[i])} for i in range(len(cls.freqs))]
    return CriterionResult(10, ok, f"H fraction {frac:.3f} (>= 0.9), flagged {int(cls.flagged.sum())}, "
                                   f"mean slow approximation {mean_slow:.6f} (< 0.05)", rows)


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def write_rows(fh, rows):
    if not rows:
        fh.write("empty\n")
        return
    cols = list(rows[0])
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (r[c] for c in cols)])


def csv_name(number: int) -> str:
    return f"criterion_{number:02d}.csv"


@_timed
def criterion_11(seed: int = 0, first_run: Path | None = None, only=None) -> CriterionResult:
    """Re-run the acceptance subcommand in a fresh process and compare CSV bytes."""
    if first_run is None:
        return CriterionResult(11, False, "no first run to compare against")
    numbers = sorted(only) if only else sorted(CRITERIA)
    with tempfile.TemporaryDirectory() as tmp:
        cmd = [sys.executable, "-m", "ergolab", "acceptance", "--seed", str(seed), "--out", tmp, "--no-rerun",
               "--reproducible"]
        if only:
            cmd += ["--only", ",".join(str(n) for n in numbers)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode not in (0, 1):
            return CriterionResult(11, False, f"re-run exited with code {proc.returncode}")
        rows, same = [], True
        for n in numbers:
            a = (Path(first_run) / csv_name(n)).read_bytes()
            b = (Path(tmp) / csv_name(n)).read_bytes()
            rows.append({"criterion": n, "identical": int(a == b)})
            same &= a == b
    differing = [r["criterion"] for r in rows if not r["identical"]]
    detail = f"{len(rows)} CSV files byte-identical" if same else f"CSV differs for criteria {differing}"
    return CriterionResult(11, same, detail, rows)
