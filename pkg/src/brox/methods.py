"""Outer iterations: exact ball-proximal steps and their linearized (LMO) variant."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .broximal import BroxConfig, brox
from .exceptions import ArgumentError, ConvergenceError
from .geometry import Ball, NormDescriptor, dual_norm_value, norm_value
from .problems import Objective

__all__ = [
    "RadiusSchedule",
    "StepRecord",
    "Trajectory",
    "run_bpm",
    "run_linearized",
    "linearized_step",
    "polyak_radius",
]

GRAD_STOP_TOL = 1e-12


@dataclass(frozen=True)
class RadiusSchedule:
    """Radii ``t_k``: constant, an explicit list, or Polyak (l2 linearized runs)."""

    kind: str
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "explicit", "polyak"):
            raise ArgumentError(f"unknown radius schedule {self.kind!r}")
        vals = tuple(float(v) for v in self.values)
        if self.kind == "constant" and len(vals) != 1:
            raise ArgumentError("constant schedule takes exactly one radius")
        if self.kind == "explicit" and not vals:
            raise ArgumentError("explicit schedule needs at least one radius")
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise ArgumentError("radii must be positive and finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, t):
        return cls("constant", (t,))

    @classmethod
    def explicit(cls, radii):
        return cls("explicit", tuple(radii))

    @classmethod
    def polyak(cls):
        return cls("polyak")

    @classmethod
    def parse(cls, text):
        """``const:<t> | explicit:<t0>,<t1>,... | polyak``."""
        head, _, arg = text.strip().partition(":")
        head = head.lower()
        try:
            if head in ("const", "constant"):
                return cls.constant(float(arg))
            if head == "explicit":
                return cls.explicit(float(a) for a in arg.split(",") if a.strip())
        except ValueError as exc:
            raise ArgumentError(f"bad radius schedule {text!r}") from exc
        if head == "polyak" and not arg:
            return cls.polyak()
        raise ArgumentError(f"bad radius schedule {text!r}")

    def spec(self):
        if self.kind == "constant":
            return f"const:{self.values[0]!r}"
        if self.kind == "explicit":
            return "explicit:" + ",".join(repr(v) for v in self.values)
        return "polyak"

    def check_length(self, iters):
        if self.kind == "explicit" and len(self.values) < iters:
            raise ArgumentError(f"explicit schedule has {len(self.values)} radii, need {iters}")

    def radius(self, k, f=None, x=None):
        if self.kind == "constant":
            return self.values[0]
        if self.kind == "explicit":
            return self.values[k]
        return polyak_radius(f, x)


@dataclass
class StepRecord:
    """State at iterate ``k``; step fields describe the move to ``x_{k+1}``.

    On the final record the step fields (``t``, ``step_length``, ``brox_path``,
    ``stationarity_residual``) are ``None``.
    """

    k: int
    x: np.ndarray
    f: float
    grad: np.ndarray
    dual_grad_norm: float
    t: float | None = None
    step_length: float | None = None
    brox_path: str | None = None
    stationarity_residual: float | None = None


@dataclass
class Trajectory:
    records: list
    norm: NormDescriptor
    label: str
    method: str
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, k):
        return self.records[k]

    @property
    def steps(self):
        """Number of completed steps."""
        return len(self.records) - 1

    @property
    def xs(self):
        return np.array([r.x for r in self.records])

    @property
    def fs(self):
        return np.array([r.f for r in self.records])

    @property
    def exact(self):
        return self.method == "bpm" and all(
            r.brox_path != "frank_wolfe" for r in self.records[:-1])


def _record(f, norm, k, x):
    g = f.gradient(x)
    return StepRecord(k=k, x=x, f=f.value(x), grad=g, dual_grad_norm=dual_norm_value(norm, g))


def _check_run(f, norm, x0, iters):
    if iters < 1:
        raise ArgumentError("iteration count must be >= 1")
    if f.dimension != norm.dimension:
        raise ArgumentError("objective and norm dimensions differ")
    x0 = np.array(x0, dtype=float).reshape(-1)
    if x0.size != f.dimension or not np.all(np.isfinite(x0)):
        raise ArgumentError("x0 must be a finite vector of the problem dimension")
    return x0


def run_bpm(f: Objective, norm: NormDescriptor, x0, sched: RadiusSchedule,
            cfg: BroxConfig | None = None, iters=10, stop_tol=0.0) -> Trajectory:
    """Iterate ``x_{k+1} = argmin {f(z) : ||z - x_k|| <= t_k}``.

    Stops after ``iters`` steps, or earlier once ``f(x_k) - f* <= stop_tol``
    when the optimum is known.
    """
    cfg = cfg or BroxConfig()
    x = _check_run(f, norm, x0, iters)
    if sched.kind == "polyak":
        raise ArgumentError("the Polyak schedule is only available for linearized l2 runs")
    sched.check_length(iters)
    records = [_record(f, norm, 0, x)]
    for k in range(iters):
        rec = records[-1]
        if f.f_star is not None and rec.f - f.f_star <= stop_tol:
            break
        t = sched.radius(k)
        try:
            sol = brox(f, Ball(x, t, norm), cfg)
        except ConvergenceError as exc:
            exc.step = k
            raise
        x_new = np.asarray(sol.point, dtype=float)
        rec.t = t
        rec.step_length = norm_value(norm, x_new - x)
        rec.brox_path = sol.path
        rec.stationarity_residual = sol.stationarity_residual
        x = x_new
        records.append(_record(f, norm, k + 1, x))
    return Trajectory(records, norm, f.label, "bpm", {"brox": cfg.as_dict(), "radius": sched.spec()})


def linearized_step(norm: NormDescriptor, x, g, t) -> np.ndarray:
    """Closed-form minimizer of the linear model ``<g, z - x>`` over ``B(x, t)``.

    Per norm this is greedy coordinate descent (l1), normalized gradient
    descent (l2), sign descent (linf), the lp interpolation, a preconditioned
    normalized step (ellipsoid) and the orthogonalized ``-t U V^T`` step
    (spectral).
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if x.shape != (norm.dimension,) or g.shape != (norm.dimension,):
        raise ArgumentError("x and g must match the norm dimension")
    if not t > 0:
        raise ArgumentError("t must be positive")
    if not np.any(g):
        return x.copy()
    kind = norm.kind
    if kind == "l1":
        # Gauss-Southwell: largest |g_i|, first index on ties
        i = int(np.argmax(np.abs(g)))
        out = x.copy()
        out[i] -= t * np.sign(g[i])
        return out
    if kind == "l2":
        return x - t * g / np.linalg.norm(g)
    if kind == "linf":
        return x - t * np.sign(g)
    if kind == "lp":
        q = norm.q
        gq = np.sum(np.abs(g) ** q) ** (1.0 / q)
        return x - t * np.sign(g) * (np.abs(g) / gq) ** (q - 1.0)
    if kind == "ellipsoid":
        direction = linalg.cho_solve((norm.cholesky, True), g)
        return x - t * direction / math.sqrt(float(g @ direction))
    U, s, Vt = np.linalg.svd(g.reshape(norm.shape), full_matrices=False)
    r = int(np.sum(s > 1e-12 * s[0]))
    return x - t * (U[:, :r] @ Vt[:r]).reshape(-1)


def polyak_radius(f: Objective, x) -> float:
    """``(f(x) - f*) / ||grad f(x)||_2``."""
    if f.f_star is None:
        raise ArgumentError("the Polyak radius needs a known optimal value")
    g = f.gradient(x)
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        raise ArgumentError("the Polyak radius is undefined at a stationary point")
    return (f.value(x) - f.f_star) / gn


def run_linearized(f: Objective, norm: NormDescriptor, x0, sched: RadiusSchedule,
                   iters=10, stop_tol=0.0) -> Trajectory:
    """Iterate ``x_{k+1} = x_k + t_k lmo(grad f(x_k))``."""
    x = _check_run(f, norm, x0, iters)
    if sched.kind == "polyak":
        if norm.kind != "l2":
            raise ArgumentError("the Polyak schedule is only defined for the l2 norm")
        if f.f_star is None:
            raise ArgumentError("the Polyak schedule needs a known optimal value")
    sched.check_length(iters)
    records = [_record(f, norm, 0, x)]
    for k in range(iters):
        rec = records[-1]
        if rec.dual_grad_norm <= GRAD_STOP_TOL:
            break
        if f.f_star is not None and rec.f - f.f_star <= stop_tol:
            break
        t = sched.radius(k, f, x)
        if not t > 0:
            break
        x_new = linearized_step(norm, x, rec.grad, t)
        rec.t = t
        rec.step_length = norm_value(norm, x_new - x)
        rec.brox_path = "linearized"
        rec.stationarity_residual = 0.0
        x = x_new
        records.append(_record(f, norm, k + 1, x))
    return Trajectory(records, norm, f.label, "linearized", {"radius": sched.spec()})
