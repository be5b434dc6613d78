"""Runtime certificates: check convergence inequalities on recorded trajectories.

Each ``certify_*`` function is a pure function of a :class:`Trajectory` and the
known optimum.  A certificate passes when every checked step violates its
inequality by no more than the step's slack.  Slack scales with the inner
solver tolerance; Frank-Wolfe steps add their recorded duality gap because the
inequalities assume exact ball minimization.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .broximal import BroxConfig, brox_box_quadratic
from .exceptions import ArgumentError, SearchFailure
from .geometry import NormDescriptor, norm_value
from .methods import RadiusSchedule, Trajectory, run_bpm
from .problems import make_quadratic

__all__ = [
    "Certificate",
    "CertificateReport",
    "Counterexample",
    "certify_optimality",
    "certify_fval_rate",
    "certify_fval_rate_alt",
    "certify_descent",
    "certify_gradient",
    "certify_distance",
    "certify_boundary_and_kkt",
    "collinearity_residual",
    "certify_linearized_distance",
    "certify_trajectory",
    "distance_increases",
    "find_linf_distance_increase",
]

CSV_SCHEMA = "#schema=1"

OPTIMALITY_RTOL = 1e-8
OPTIMALITY_RTOL_FW = 1e-5
GRADIENT_RTOL = 1e-6
DISTANCE_RTOL = 1e-6
BOUNDARY_RTOL = 1e-6
BOUNDARY_RTOL_FW = 1e-3
KKT_RTOL = 1e-6
LINEARIZED_DISTANCE_ATOL = 1e-9
MEMBERSHIP_TOL = 1e-9


@dataclass
class Certificate:
    name: str
    applicable: bool = True
    passed: bool = True
    worst_violation: float = 0.0
    worst_step: int = -1
    slack_used: float = 0.0
    checked: int = 0
    skipped: int = 0
    note: str = ""

    def add(self, step, violation, slack):
        """Record one checked inequality (``violation`` already clipped at 0)."""
        violation = max(0.0, float(violation))
        self.checked += 1
        ok = violation <= slack
        margin = violation - slack
        if self.worst_step < 0 or margin > self.worst_violation - self.slack_used:
            self.worst_violation, self.slack_used, self.worst_step = violation, float(slack), step
        self.passed = self.passed and ok
        return ok

    @property
    def status(self):
        if not self.applicable:
            return "n/a"
        return "pass" if self.passed else "FAIL"


def _not_applicable(name, note):
    return Certificate(name, applicable=False, passed=True, note=note)


@dataclass
class CertificateReport:
    certificates: list
    label: str = ""
    norm: str = ""
    method: str = ""
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.certificates if c.applicable)

    def __getitem__(self, name):
        for c in self.certificates:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(CSV_SCHEMA + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["certificate", "pass", "worst_violation", "worst_step", "slack"])
        for c in self.certificates:
            w.writerow([c.name, c.status, f"{c.worst_violation:.17g}", c.worst_step,
                        f"{c.slack_used:.17g}"])
        return buf.getvalue()

    def to_text(self):
        lines = [f"certificates for {self.label} ({self.method}, norm {self.norm})"]
        for c in self.certificates:
            line = f"  [{c.status:>4}] {c.name:<22}"
            if c.applicable:
                line += (f" worst violation {c.worst_violation:.3e} at step {c.worst_step}"
                         f" (slack {c.slack_used:.3e}; {c.checked} checked, {c.skipped} skipped)")
            if c.note:
                line += f"  {c.note}"
            lines.append(line)
        lines.extend(f"  note: {n}" for n in self.notes)
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"


# -- helpers ---------------------------------------------------------------

def _tol(traj, tol):
    if tol is not None:
        return tol
    return traj.config.get("brox", {}).get("tol", BroxConfig().tol)


def _gap(rec):
    if rec.brox_path == "frank_wolfe":
        return float(rec.stationarity_residual or 0.0)
    return 0.0


def _is_fw(rec):
    return rec.brox_path == "frank_wolfe"


def _dist(traj, a, b):
    return norm_value(traj.norm, np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def _contains_opt(traj, rec, x_star):
    return _dist(traj, rec.x, x_star) <= rec.t + MEMBERSHIP_TOL * max(1.0, rec.t)


def _optimum(x_star, f_star, name):
    if x_star is None or f_star is None:
        return _not_applicable(name, "no known optimum")
    return None


def _bpm_only(traj, name):
    if traj.method != "bpm":
        return _not_applicable(name, "exact ball-proximal runs only")
    return None


# -- certificates ----------------------------------------------------------

def certify_optimality(traj: Trajectory, x_star, f_star) -> Certificate:
    """Whenever the ball around ``x_k`` contains ``x*``, ``x_{k+1}`` is optimal."""
    name = "one_step_optimality"
    na = _bpm_only(traj, name) or _optimum(x_star, f_star, name)
    if na:
        return na
    cert = Certificate(name)
    for rec, nxt in zip(traj.records, traj.records[1:]):
        if not _contains_opt(traj, rec, x_star):
            cert.skipped += 1
            continue
        rtol = OPTIMALITY_RTOL_FW if _is_fw(rec) else OPTIMALITY_RTOL
        cert.add(rec.k, nxt.f - f_star, rtol * (1 + abs(f_star)) + _gap(rec))
    return cert


def certify_fval_rate(traj: Trajectory, x_star, f_star, tol=None) -> Certificate:
    """``f_{k+1} - f* <= (1 + t_k / ||x_{k+1} - x*||)^{-1} (f_k - f*)`` at every step."""
    name = "fval_rate"
    na = _bpm_only(traj, name) or _optimum(x_star, f_star, name)
    if na:
        return na
    tol = _tol(traj, tol)
    cert = Certificate(name)
    for rec, nxt in zip(traj.records, traj.records[1:]):
        slack = 10 * tol * (1 + abs(rec.f)) + _gap(rec)
        d_next = _dist(traj, nxt.x, x_star)
        if d_next == 0.0:
            cert.add(rec.k, nxt.f - f_star, slack)
            continue
        bound = (rec.f - f_star) / (1.0 + rec.t / d_next)
        cert.add(rec.k, (nxt.f - f_star) - bound, slack)
    return cert


def certify_fval_rate_alt(traj: Trajectory, x_star, f_star, tol=None) -> Certificate:
    """``f_{k+1} - f* <= (1 - t_k / ||x_k - x*||) (f_k - f*)`` whenever ``t_k < ||x_k - x*||``."""
    name = "fval_rate_alt"
    na = _bpm_only(traj, name) or _optimum(x_star, f_star, name)
    if na:
        return na
    tol = _tol(traj, tol)
    cert = Certificate(name)
    for rec, nxt in zip(traj.records, traj.records[1:]):
        d = _dist(traj, rec.x, x_star)
        if not rec.t < d:
            cert.skipped += 1
            continue
        bound = (1.0 - rec.t / d) * (rec.f - f_star)
        cert.add(rec.k, (nxt.f - f_star) - bound, 10 * tol * (1 + abs(rec.f)) + _gap(rec))
    return cert


def certify_descent(traj: Trajectory, tol=None) -> Certificate:
    """``f(x_{k+1}) <= f(x_k)``: ``x_k`` is feasible for its own ball."""
    name = "monotone_descent"
    na = _bpm_only(traj, name)
    if na:
        return na
    tol = _tol(traj, tol)
    cert = Certificate(name)
    for rec, nxt in zip(traj.records, traj.records[1:]):
        cert.add(rec.k, nxt.f - rec.f, 10 * tol * (1 + abs(rec.f)) + _gap(rec))
    return cert


def certify_gradient(traj: Trajectory, f_star=None) -> list[Certificate]:
    """Dual gradient norms are nonincreasing, and their ``t``-weighted average is
    bounded by ``(f(x_0) - f*) / sum t_k``.

    Without a known ``f*`` the average is checked against ``f(x_0) - f(x_K)``,
    which the same argument bounds.
    """
    names = ("gradient_monotone", "gradient_average")
    if traj.method != "bpm":
        return [_not_applicable(n, "exact ball-proximal runs only") for n in names]
    mono, avg = Certificate(names[0]), Certificate(names[1])
    steps = list(zip(traj.records, traj.records[1:]))
    if not steps:
        avg.note = "no steps"
        return [mono, avg]
    for rec, nxt in steps:
        mono.add(rec.k, nxt.dual_grad_norm - rec.dual_grad_norm,
                 GRADIENT_RTOL * (1 + rec.dual_grad_norm) + _gap(rec))
    total_t = sum(rec.t for rec, _ in steps)
    lhs = sum(rec.t * nxt.dual_grad_norm for rec, nxt in steps) / total_t
    f0 = traj.records[0].f
    floor = f_star if f_star is not None else traj.records[-1].f
    rhs = (f0 - floor) / total_t
    slack = (GRADIENT_RTOL * (1 + abs(f0)) + sum(_gap(rec) for rec, _ in steps)) / total_t
    avg.add(-1, lhs - rhs, slack)
    return [mono, avg]


def certify_distance(traj: Trajectory, x_star, f_star=None) -> list[Certificate]:
    """Squared-distance recursion for inner-product norms, plus finite convergence.

    ``||x_{k+1} - x*||^2 <= ||x_k - x*||^2 - t_k^2`` at steps whose ball misses
    ``x*``; once ``sum t_k^2 >= ||x_0 - x*||^2`` the iterate must be optimal.
    """
    names = ("distance_recursion", "finite_convergence")
    if traj.method != "bpm":
        return [_not_applicable(n, "exact ball-proximal runs only") for n in names]
    if not traj.norm.inner_product:
        return [_not_applicable(n, f"norm {traj.norm} is not induced by an inner product")
                for n in names]
    if x_star is None:
        return [_not_applicable(n, "no known optimum") for n in names]
    rec_cert, fin = Certificate(names[0]), Certificate(names[1])
    for rec, nxt in zip(traj.records, traj.records[1:]):
        d2 = _dist(traj, rec.x, x_star) ** 2
        if _contains_opt(traj, rec, x_star):
            rec_cert.skipped += 1
            continue
        d2_next = _dist(traj, nxt.x, x_star) ** 2
        rec_cert.add(rec.k, d2_next - (d2 - rec.t**2),
                     DISTANCE_RTOL * (1 + d2) + _gap(rec))
    if f_star is None:
        fin.applicable, fin.note = False, "no known optimal value"
        return [rec_cert, fin]
    d0 = _dist(traj, traj.records[0].x, x_star) ** 2
    acc, target = 0.0, None
    for rec in traj.records[:-1]:
        acc += rec.t**2
        if acc >= d0:
            target = rec.k + 1
            break
    if target is None:
        last = traj.records[-1]
        if traj.steps == 0 or last.f - f_star <= OPTIMALITY_RTOL * (1 + abs(f_star)):
            # early stop at the optimum counts as the corollary's conclusion
            target = last.k
        else:
            fin.applicable, fin.note = False, "sum of t_k^2 never reaches dist^2(x_0, x*)"
            return [rec_cert, fin]
    rec = traj.records[target]
    gap = sum(_gap(r) for r in traj.records[:target])
    fin.add(target, rec.f - f_star, OPTIMALITY_RTOL * (1 + abs(f_star)) + gap)
    fin.note = f"guaranteed optimal by step {target}"
    return [rec_cert, fin]


def collinearity_residual(norm: NormDescriptor, center, point, grad) -> float:
    """Distance between the unit directions of ``grad`` and ``X (center - point)``.

    Both are measured in whitened coordinates (``L^{-1} grad`` and
    ``L^T (center - point)`` with ``X = L L^T``), so the residual is zero
    exactly when ``grad = c X (center - point)`` with ``c >= 0``.  A zero
    gradient counts as collinear.
    """
    g_hat = linalg.solve_triangular(norm.cholesky, grad, lower=True)
    w_hat = norm.cholesky.T @ (np.asarray(center) - np.asarray(point))
    gn, wn = np.linalg.norm(g_hat), np.linalg.norm(w_hat)
    if gn == 0.0:
        return 0.0
    if wn == 0.0:
        return 1.0
    return float(np.linalg.norm(g_hat / gn - w_hat / wn))


def certify_boundary_and_kkt(traj: Trajectory, x_star) -> list[Certificate]:
    """When ``x*`` is outside the ball the step lands on the boundary and
    ``<-grad f(x_{k+1}), x_{k+1} - x_k> = ||grad f(x_{k+1})||_* ||x_{k+1} - x_k||``.

    Ellipsoid runs also check ``grad f(x_{k+1}) = c X (x_k - x_{k+1})`` with
    ``c >= 0``.
    """
    names = ("boundary", "alignment", "collinearity")
    if traj.method != "bpm":
        return [_not_applicable(n, "exact ball-proximal runs only") for n in names]
    if x_star is None:
        return [_not_applicable(n, "no known optimum") for n in names]
    bnd, ali = Certificate(names[0]), Certificate(names[1])
    ell = traj.norm.kind == "ellipsoid"
    col = Certificate(names[2]) if ell else _not_applicable(names[2], "ellipsoid norms only")
    for rec, nxt in zip(traj.records, traj.records[1:]):
        if _contains_opt(traj, rec, x_star):
            for c in (bnd, ali, col):
                c.skipped += 1
            continue
        rtol = BOUNDARY_RTOL_FW if _is_fw(rec) else BOUNDARY_RTOL
        bnd.add(rec.k, abs(rec.step_length - rec.t), rtol * rec.t)
        step = nxt.x - rec.x
        lhs = float(-nxt.grad @ step)
        rhs = nxt.dual_grad_norm * rec.step_length
        ali.add(rec.k, abs(lhs - rhs), KKT_RTOL * (1 + nxt.dual_grad_norm) + _gap(rec))
        if ell:
            resid = collinearity_residual(traj.norm, rec.x, nxt.x, nxt.grad)
            slack = KKT_RTOL
            if _is_fw(rec) and nxt.dual_grad_norm > 0:
                # chord between unit directions <= sqrt(2 gap / (t ||g||_*))
                slack += math.sqrt(2.0 * _gap(rec) / (rec.t * nxt.dual_grad_norm))
            col.add(rec.k, resid, slack)
    return [bnd, ali, col]


def certify_linearized_distance(traj: Trajectory, x_star) -> Certificate:
    """Normalized gradient descent with ``t_k <= <g, x_k - x*> / ||g||_2`` satisfies
    ``||x_{k+1} - x*||^2 <= ||x_k - x*||^2 - t_k^2``.

    Steps whose radius exceeds that bound are skipped.
    """
    name = "linearized_distance"
    if traj.method != "linearized":
        return _not_applicable(name, "linearized runs only")
    if traj.norm.kind != "l2":
        return _not_applicable(name, "l2 norm only")
    if x_star is None:
        return _not_applicable(name, "no known optimum")
    cert = Certificate(name)
    for rec, nxt in zip(traj.records, traj.records[1:]):
        gn = float(np.linalg.norm(rec.grad))
        if gn == 0.0 or rec.t > float(rec.grad @ (rec.x - x_star)) / gn:
            cert.skipped += 1
            continue
        d2 = float(np.sum((rec.x - x_star) ** 2))
        d2_next = float(np.sum((nxt.x - x_star) ** 2))
        cert.add(rec.k, d2_next - (d2 - rec.t**2), LINEARIZED_DISTANCE_ATOL)
    return cert


def distance_increases(traj: Trajectory, x_star):
    """Steps where the distance to ``x*`` in the run's norm went up."""
    out = []
    for rec, nxt in zip(traj.records, traj.records[1:]):
        a, b = _dist(traj, rec.x, x_star), _dist(traj, nxt.x, x_star)
        if b > a * (1 + 1e-12):
            out.append((rec.k, a, b))
    return out


def certify_trajectory(traj: Trajectory, x_star=None, f_star=None, tol=None) -> CertificateReport:
    """Run every certificate that applies to ``traj``."""
    certs = [
        certify_optimality(traj, x_star, f_star),
        certify_fval_rate(traj, x_star, f_star, tol),
        certify_fval_rate_alt(traj, x_star, f_star, tol),
        certify_descent(traj, tol),
        *certify_gradient(traj, f_star),
        *certify_distance(traj, x_star, f_star),
        *certify_boundary_and_kkt(traj, x_star),
        certify_linearized_distance(traj, x_star),
    ]
    report = CertificateReport(certs, traj.label, str(traj.norm), traj.method)
    if x_star is not None:
        for k, a, b in distance_increases(traj, x_star):
            report.notes.append(
                f"distance to x* in {traj.norm} increased at step {k}: {a:.6g} -> {b:.6g}")
    return report


# -- counterexample search -------------------------------------------------

@dataclass
class Counterexample:
    """An exact l-infinity ball step that moves away from the minimizer."""

    seed: int
    eigenvalues: np.ndarray
    x_star: np.ndarray
    A: np.ndarray
    x0: np.ndarray
    t: float
    x1: np.ndarray
    dist0: float
    dist1: float

    @property
    def ratio(self):
        return self.dist1 / self.dist0


def _candidate(seed, dim):
    rng = np.random.default_rng(seed)
    cond = 10.0 ** rng.uniform(0.5, 2.5)
    eigenvalues = np.sort(np.concatenate([[1.0], rng.uniform(1.0, cond, dim - 1)]))
    eigenvalues[-1] = cond
    x0 = rng.uniform(-1.0, 1.0, dim)
    x0 /= np.abs(x0).max()
    t = float(rng.uniform(0.05, 0.9))
    return eigenvalues, x0, t


def find_linf_distance_increase(seed_range=range(1000), dim=2, margin=0.01, tol=1e-12):
    """Search seeded rotated quadratics for an exact l-infinity ball step with
    ``||x_1 - x*||_inf >= (1 + margin) ||x_0 - x*||_inf``.

    The minimizer is the origin and ``||x_0||_inf = 1``, so ``x*`` always lies
    outside the ball.  Returns the first hit as a :class:`Counterexample`.
    """
    if dim < 2:
        raise ArgumentError("the search needs dimension >= 2")
    x_star = np.zeros(dim)
    for seed in seed_range:
        eigenvalues, x0, t = _candidate(seed, dim)
        q = make_quadratic(eigenvalues, seed, x_star)
        sol = brox_box_quadratic(q, x0, t, tol)
        d0 = float(np.abs(x0 - x_star).max())
        d1 = float(np.abs(sol.point - x_star).max())
        if d1 >= (1.0 + margin) * d0:
            return Counterexample(seed, eigenvalues, x_star, np.array(q.A), x0, t,
                                  sol.point, d0, d1)
    raise SearchFailure("no l-infinity distance increase found in the seed range")


def counterexample_trajectory(cx: Counterexample, iters=30, cfg=None) -> Trajectory:
    """Full exact l-infinity run from the counterexample's starting point."""
    q = make_quadratic(cx.eigenvalues, cx.seed, cx.x_star)
    return run_bpm(q, NormDescriptor.linf(cx.x0.size), cx.x0, RadiusSchedule.constant(cx.t),
                   cfg, iters)
