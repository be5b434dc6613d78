"""Acceptance suite: one test per criterion, each recorded for the summary.

Every test records its outcome through the ``criterion`` fixture before
asserting, so ``pytest`` prints a PASS/FAIL line per criterion at the end of
the session.
"""

import math

import numpy as np
import pytest
from scipy import linalg, special

from brox.broximal import EXACT_PATHS, brox, brox_bruteforce, brox_frank_wolfe
from brox.certify import certify_trajectory, counterexample_trajectory, find_linf_distance_increase
from brox.cli import main
from brox.geometry import (
    Ball,
    NormDescriptor,
    design_ellipsoid,
    lmo,
    norm_value,
)
from brox.methods import RadiusSchedule, linearized_step, run_bpm, run_linearized
from brox.problems import Objective, make_logistic, make_quadratic

SWEEP_NORMS = ("l1", "l2", "linf", "ellipsoid")


def _ellipsoid(rng, d, shift):
    B = rng.standard_normal((d, d))
    return NormDescriptor.ellipsoid(B @ B.T + shift * np.eye(d))


def _six_norms(rng):
    """The six ball types in dimension 4 (spectral as 2x2 matrices)."""
    return [NormDescriptor.l1(4), NormDescriptor.l2(4), NormDescriptor.linf(4),
            NormDescriptor.lp(3.0, 4), _ellipsoid(rng, 4, 4.0), NormDescriptor.spectral(2, 2)]


def _one_step_instances(lo, hi):
    """50 seeded quadratics x six norms with ``t0 = U(lo, hi) * dist(x0, x*)``."""
    for seed in range(50):
        rng = np.random.default_rng(7000 + seed)
        q = make_quadratic(10.0 ** rng.uniform(0, 2, 4), seed, rng.standard_normal(4),
                           f_star=float(rng.normal()))
        x0 = q.x_star + 2.0 * rng.standard_normal(4)
        for norm in _six_norms(rng):
            t0 = float(rng.uniform(lo, hi)) * norm_value(norm, x0 - q.x_star)
            yield q, norm, x0, t0


def test_c01_one_step_convergence(criterion):
    worst_exact = worst_fw = 0.0
    fails = runs = 0
    for q, norm, x0, t0 in _one_step_instances(1.0, 1.5):
        traj = run_bpm(q, norm, x0, RadiusSchedule.constant(t0), iters=1)
        gap = (traj[1].f - q.f_star) / (1 + abs(q.f_star))
        if traj[0].brox_path in EXACT_PATHS:
            worst_exact = max(worst_exact, gap)
            fails += gap > 1e-8
        else:
            worst_fw = max(worst_fw, gap)
            fails += gap > 1e-5
        runs += 1
    ok = criterion(1, fails == 0 and runs == 300,
                   f"{runs} runs, {fails} failures, worst rel gap exact {worst_exact:.2e} "
                   f"(tol 1e-8), frank-wolfe {worst_fw:.2e} (tol 1e-5)")
    assert ok


def test_c02_boundary_law(criterion):
    worst = 0.0
    checked = fails = 0
    for q, norm, x0, t0 in _one_step_instances(0.2, 0.9):
        traj = run_bpm(q, norm, x0, RadiusSchedule.constant(t0), iters=1)
        if traj[0].brox_path not in EXACT_PATHS:
            continue
        rel = abs(norm_value(norm, traj[1].x - x0) - t0) / t0
        worst = max(worst, rel)
        fails += rel > 1e-6
        checked += 1
    ok = criterion(2, fails == 0 and checked == 200,
                   f"{checked} exact steps, {fails} failures, worst |step - t0|/t0 {worst:.2e} "
                   f"(tol 1e-6)")
    assert ok


def _sweep_run(seed):
    rng = np.random.default_rng(1000 + seed)
    d = int(rng.integers(2, 6))
    kind = SWEEP_NORMS[seed % 4]
    if seed < 50:
        f = make_quadratic(10.0 ** rng.uniform(0, 2, d), seed, rng.standard_normal(d))
    else:
        n = 30
        F = rng.standard_normal((n, d))
        labels = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        f = make_logistic(F + 0.7 * labels[:, None] * rng.standard_normal(d), labels, 0.1)
    norm = _ellipsoid(rng, d, d) if kind == "ellipsoid" else getattr(NormDescriptor, kind)(d)
    x0 = f.x_star + 3.0 * rng.standard_normal(d)
    t = float(rng.uniform(0.05, 0.5))
    traj = run_bpm(f, norm, x0, RadiusSchedule.constant(t), iters=30)
    return f, traj, certify_trajectory(traj, f.x_star, f.f_star)


_SWEEP = []


def sweep_results():
    """100 seeded runs (quadratics then logistic regressions, K = 30), computed once."""
    if not _SWEEP:
        _SWEEP.extend(_sweep_run(seed) for seed in range(100))
    return _SWEEP


def _summarize(sweep, name):
    certs = [report[name] for _, _, report in sweep]
    applied = [c for c in certs if c.applicable]
    failed = [c for c in applied if not c.passed]
    steps = sum(c.checked for c in applied)
    return len(applied), len(failed), steps


def test_c03_function_value_contraction(criterion):
    runs, failed, steps = _summarize(sweep_results(), "fval_rate")
    ok = criterion(3, runs == 100 and failed == 0,
                   f"{runs} runs, {steps} steps checked, {failed} failing runs")
    assert ok


def test_c04_gradient_monotone_and_average(criterion):
    runs_m, failed_m, steps = _summarize(sweep_results(), "gradient_monotone")
    runs_a, failed_a, _ = _summarize(sweep_results(), "gradient_average")
    ok = criterion(4, runs_m == runs_a == 100 and failed_m == failed_a == 0,
                   f"{runs_m} runs, {steps} monotonicity steps, {failed_m} monotone and "
                   f"{failed_a} averaged-bound failures")
    assert ok


def test_c05_distance_recursion(criterion):
    worst = -math.inf
    checked = fails = runs = 0
    for f, traj, _ in sweep_results():
        if traj.norm.kind not in ("l2", "ellipsoid"):
            continue
        runs += 1
        for rec, nxt in zip(traj.records, traj.records[1:]):
            d2 = norm_value(traj.norm, rec.x - f.x_star) ** 2
            if d2 <= rec.t**2:
                continue
            excess = norm_value(traj.norm, nxt.x - f.x_star) ** 2 - (d2 - rec.t**2)
            worst = max(worst, excess)
            fails += excess > 1e-6
            checked += 1

    iso = make_quadratic([1.0, 1.0], 0, [0.0, 0.0])
    traj = run_bpm(iso, NormDescriptor.l2(2), [3.0, 4.0], RadiusSchedule.constant(1.0),
                   iters=25, stop_tol=1e-10)
    reached = [r.k for r in traj.records if r.f - iso.f_star <= 1e-10]
    first = reached[0] if reached else None
    ok = criterion(5, fails == 0 and checked > 0 and first is not None and first <= 25,
                   f"{runs} runs, {checked} steps, worst excess {worst:.2e} (tol 1e-6); "
                   f"isotropic run optimal at step {first} (bound 25)")
    assert ok


def test_c06_linf_counterexample(criterion, tmp_path):
    code = main(["counterexample", "--out", str(tmp_path)])
    cx = find_linf_distance_increase()
    traj = counterexample_trajectory(cx)
    q = make_quadratic(cx.eigenvalues, cx.seed, cx.x_star)
    report = certify_trajectory(traj, q.x_star, q.f_star)
    names = ("boundary", "fval_rate", "gradient_monotone", "gradient_average")
    statuses = {n: report[n].status for n in names}
    files = (tmp_path / "counterexample.cfg").exists() and (tmp_path / "counterexample.csv").exists()
    ok = criterion(6, code == 0 and files and cx.ratio >= 1.01
                   and all(v == "pass" for v in statuses.values()),
                   f"seed {cx.seed}, ratio {cx.ratio:.4f} (need >= 1.01), exit {code}, "
                   f"certificates {statuses}")
    assert ok


def _closed_form(norm, x, g, t):
    """Per-norm update rules written independently of the library."""
    if norm.kind == "l1":
        i = int(np.argmax(np.abs(g)))
        e = np.zeros_like(x)
        e[i] = 1.0
        return x - t * np.sign(g[i]) * e
    if norm.kind == "l2":
        return x - t * g / math.sqrt(float(g @ g))
    if norm.kind == "linf":
        return x - t * np.sign(g)
    if norm.kind == "lp":
        q = norm.p / (norm.p - 1.0)
        scale = np.linalg.norm(g, ord=q) ** (q - 1.0)
        return x - t * np.sign(g) * np.abs(g) ** (q - 1.0) / scale
    # full-rank random matrices: the polar factor is U V^T
    u, _ = linalg.polar(g.reshape(norm.shape), side="right")
    return x - t * u.reshape(-1)


def _linear_objective(g):
    class Linear(Objective):
        def value(self, x):
            return float(g @ np.asarray(x, dtype=float))

        def gradient(self, x):
            return g.copy()

        def values(self, P):
            return P @ g

    return Linear(g.size, "linear")


def test_c07_linearized_equivalences(criterion):
    rng = np.random.default_rng(77)
    closed = [NormDescriptor.l1(5), NormDescriptor.l2(5), NormDescriptor.linf(5),
              NormDescriptor.lp(3.0, 5), NormDescriptor.lp(1.5, 5), NormDescriptor.spectral(2, 3)]
    lmo_norms = closed + [_ellipsoid(rng, 4, 1.0)]
    worst_closed = worst_lmo = 0.0
    for norm in lmo_norms:
        for _ in range(100):
            d = norm.dimension
            x, g = rng.standard_normal(d), rng.standard_normal(d)
            t = float(rng.uniform(0.1, 2.0))
            step = linearized_step(norm, x, g, t)
            worst_lmo = max(worst_lmo, float(np.abs(step - (x + t * lmo(norm, g))).max()))
            if norm in closed:
                worst_closed = max(worst_closed,
                                   float(np.abs(step - _closed_form(norm, x, g, t)).max()))

    worst_grid = 0.0
    planar = [NormDescriptor.l1(2), NormDescriptor.l2(2), NormDescriptor.linf(2),
              NormDescriptor.lp(3.0, 2), _ellipsoid(rng, 2, 1.0), NormDescriptor.spectral(1, 2)]
    for norm in planar:
        for _ in range(3):
            g = rng.standard_normal(2)
            ball = Ball(np.zeros(2), 1.0, norm)
            z = brox_bruteforce(_linear_objective(g), ball, 1e-3, refine=2)
            worst_grid = max(worst_grid, abs(float(g @ lmo(norm, g)) - float(g @ z)))
    ok = criterion(7, worst_closed <= 1e-12 and worst_lmo <= 1e-12 and worst_grid <= 1e-4,
                   f"closed forms {worst_closed:.1e}, x + t lmo {worst_lmo:.1e} (tol 1e-12); "
                   f"2-D grid value gap {worst_grid:.1e} (tol 1e-4)")
    assert ok


def _convex_instance(i):
    rng = np.random.default_rng(800 + i)
    d = int(rng.integers(2, 6))
    if i < 10:
        return make_quadratic(10.0 ** rng.uniform(0, 2, d), i, rng.standard_normal(d)), rng
    n = 40
    F = rng.standard_normal((n, d))
    labels = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return make_logistic(F + 0.7 * labels[:, None] * rng.standard_normal(d), labels, 0.1), rng


def test_c08_linearized_distance_recursion(criterion):
    worst = -math.inf
    checked = fails = 0
    for i in range(20):
        f, rng = _convex_instance(i)
        x0 = f.x_star + 3.0 * rng.standard_normal(f.dimension)
        traj = run_linearized(f, NormDescriptor.l2(f.dimension), x0, RadiusSchedule.polyak(),
                              iters=50)
        for rec, nxt in zip(traj.records, traj.records[1:]):
            d2 = float(np.sum((rec.x - f.x_star) ** 2))
            d2_next = float(np.sum((nxt.x - f.x_star) ** 2))
            excess = d2_next - (d2 - rec.t**2)
            worst = max(worst, excess)
            fails += excess > 1e-9
            checked += 1
    ok = criterion(8, fails == 0 and checked > 0,
                   f"20 instances, {checked} steps, worst excess {worst:.2e} (tol 1e-9)")
    assert ok


def test_c09_ellipsoid_design(criterion):
    rng = np.random.default_rng(99)
    worst_vol = worst_rad = worst_sym = 0.0
    for d in (2, 3, 5):
        unit = math.pi ** (d / 2) / special.gamma(d / 2 + 1)
        for _ in range(10):
            x0, x_star = rng.standard_normal(d), rng.standard_normal(d)
            V = 10.0 ** rng.uniform(-1, 1)
            X = design_ellipsoid(x0, x_star, V)
            r2 = float(np.linalg.norm(x0 - x_star))
            t0 = r2 * (V / (r2**d * unit)) ** (1.0 / (d - 1))
            radius = norm_value(NormDescriptor.ellipsoid(X), x0 - x_star)
            volume = unit * radius**d / math.sqrt(np.linalg.det(X))
            worst_vol = max(worst_vol, abs(volume - V) / V)
            worst_rad = max(worst_rad, abs(radius - t0) / t0)
            worst_sym = max(worst_sym, float(np.abs(X - X.T).max()))
    ok = criterion(9, worst_vol <= 1e-6 and worst_rad <= 1e-10 and worst_sym <= 1e-12,
                   f"30 designs, volume rel err {worst_vol:.1e} (tol 1e-6), "
                   f"radius rel err {worst_rad:.1e} (tol 1e-10)")
    assert ok


def _planar_norm(kind, rng):
    if kind == "ellipsoid":
        return _ellipsoid(rng, 2, 1.0)
    if kind == "lp":
        return NormDescriptor.lp(3.0, 2)
    if kind == "spectral":
        return NormDescriptor.spectral(1, 2)
    return getattr(NormDescriptor, kind)(2)


def test_c10_solver_cross_validation(criterion):
    worst = {}
    for kind in ("l1", "l2", "linf", "lp", "ellipsoid", "spectral"):
        worst[kind] = 0.0
        for i in range(20):
            rng = np.random.default_rng(500 + i)
            q = make_quadratic(rng.uniform(0.5, 3.0, 2), i, rng.standard_normal(2))
            norm = _planar_norm(kind, rng)
            ball = Ball(q.x_star + rng.standard_normal(2), float(rng.uniform(0.3, 1.0)), norm)
            points = [brox(q, ball).point,
                      brox_frank_wolfe(q, ball, 20000, 1e-12).point,
                      brox_bruteforce(q, ball, 1e-3, refine=2)]
            values = [q.value(p) for p in points]
            worst[kind] = max(worst[kind], max(values) - min(values))
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    ok = criterion(10, max(worst.values()) <= 1e-4,
                   f"worst f-value spread per ball: {detail} (tol 1e-4)")
    assert ok
