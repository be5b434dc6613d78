"""Ball-constrained minimization: ``argmin { f(z) : ||z - center|| <= t }``.

Quadratics get specialized solvers per ball geometry (trust-region secular
equation for l2 and ellipsoids, coordinate descent for boxes, projected
gradient for l1 balls).  Anything else goes through Frank-Wolfe on the ball's
linear minimization oracle.  :func:`brox_bruteforce` is a grid search kept
deliberately naive so it can serve as an independent check in low dimension.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

from .exceptions import ArgumentError, ConvergenceError, UnsupportedError
from .geometry import Ball, NormDescriptor, lmo, normal_cone_violation
from .problems import Objective, QuadraticObjective

__all__ = [
    "BroxConfig",
    "BroxSolution",
    "brox",
    "brox_l2_quadratic",
    "brox_ellipsoid_quadratic",
    "brox_box_quadratic",
    "brox_l1_quadratic",
    "brox_frank_wolfe",
    "brox_bruteforce",
    "project_l1_ball",
    "kkt_residual",
    "batch_norm",
]

EXACT_PATHS = frozenset({"l2_exact", "ellipsoid_exact", "box_cd", "l1_pgd"})

SECULAR_MAX_ITER = 200
BOX_MAX_SWEEPS = 100_000
L1_MAX_ITER = 100_000


@dataclass
class BroxConfig:
    """Tolerances and budgets for the inner solvers."""

    tol: float = 1e-12
    fw_max_iters: int = 2_000
    fw_gap_tol: float = 1e-10
    grid_resolution: float = 1e-3

    def __post_init__(self):
        if not self.tol > 0:
            raise ArgumentError("brox.tol must be positive")
        if int(self.fw_max_iters) < 1:
            raise ArgumentError("brox.fw_max_iters must be >= 1")
        if self.fw_gap_tol < 0:
            raise ArgumentError("brox.fw_gap_tol must be nonnegative")
        if not self.grid_resolution > 0:
            raise ArgumentError("brox.grid_resolution must be positive")
        self.fw_max_iters = int(self.fw_max_iters)

    def as_dict(self):
        return asdict(self)


@dataclass
class BroxSolution:
    point: np.ndarray
    stationarity_residual: float
    inner_iterations: int
    on_boundary: bool
    path: str = ""

    @property
    def exact(self):
        return self.path in EXACT_PATHS


def kkt_residual(f: Objective, ball: Ball, z) -> float:
    """Normal-cone violation of ``-grad f(z)`` at ``z``; zero at a ball minimizer."""
    return normal_cone_violation(ball, z, -f.gradient(z))


def _solution(f, ball, z, iterations, path, rtol=1e-9, residual=None):
    dist = ball.distance(z)
    if residual is None:
        residual = kkt_residual(f, ball, z)
    return BroxSolution(
        point=z,
        stationarity_residual=float(residual),
        inner_iterations=int(iterations),
        on_boundary=bool(dist >= ball.radius * (1.0 - rtol)),
        path=path,
    )


def _args(q, center, t, tol):
    if not isinstance(q, QuadraticObjective):
        raise ArgumentError("this solver needs a QuadraticObjective")
    if not t > 0:
        raise ArgumentError("radius must be positive")
    if not tol > 0:
        raise ArgumentError("tol must be positive")
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.size != q.dimension:
        raise ArgumentError("center has the wrong length")
    return center


def _secular_root(evals, gv, t, tol):
    """Smallest ``lam >= 0`` with ``||gv / (evals + lam)||_2 = t`` to ``tol * t``.

    Bisection on ``[0, ||g||/t + lambda_max]`` until the bracket is within a
    factor two, then Newton on ``1/||p(lam)|| - 1/t`` kept inside the bracket.
    """
    gsq = gv * gv

    def plen(lam):
        return math.sqrt(float(np.sum(gsq / (evals + lam) ** 2)))

    lo, hi = 0.0, math.sqrt(float(gsq.sum())) / t + float(evals[-1])
    width0 = hi
    lam = 0.5 * (lo + hi)
    newton = False
    for it in range(1, SECULAR_MAX_ITER + 1):
        p = plen(lam)
        if abs(p - t) <= tol * t:
            return lam, it
        if p > t:
            lo = lam
        else:
            hi = lam
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            return lam, it
        if not newton and ((lo > 0 and hi <= 2 * lo) or hi - lo <= 1e-3 * width0):
            newton = True
        if newton:
            dp = float(np.sum(gsq / (evals + lam) ** 3)) / p**3
            cand = lam - (1.0 / p - 1.0 / t) / dp
            lam = cand if lo < cand < hi else 0.5 * (lo + hi)
        else:
            lam = 0.5 * (lo + hi)
    raise ConvergenceError(f"secular equation not solved in {SECULAR_MAX_ITER} iterations")


def _eigh(q):
    cached = getattr(q, "_eigh_cache", None)
    if cached is None:
        cached = linalg.eigh(q.A)
        q._eigh_cache = cached
    return cached


def brox_l2_quadratic(q: QuadraticObjective, center, t, tol=1e-12) -> BroxSolution:
    """Exact minimizer of a quadratic over a Euclidean ball (trust-region subproblem)."""
    c = _args(q, center, t, tol)
    ball = Ball(c, t, NormDescriptor.l2(q.dimension))
    x_star = q.x_star
    if np.linalg.norm(x_star - c) <= t:
        return _solution(q, ball, x_star.copy(), 0, "l2_exact")
    evals, V = _eigh(q)
    gv = V.T @ q.gradient(c)
    lam, iters = _secular_root(evals, gv, t, tol)
    z = c - V @ (gv / (evals + lam))
    return _solution(q, ball, z, iters, "l2_exact")


def brox_ellipsoid_quadratic(q: QuadraticObjective, center, t, X, tol=1e-12) -> BroxSolution:
    """Exact minimizer over ``{z : ||z - center||_X <= t}``.

    With ``X = L L^T`` and ``y = L^T (z - center)`` the ellipsoid becomes a
    Euclidean ball and the quadratic keeps its form, so the l2 solver applies.
    """
    c = _args(q, center, t, tol)
    norm = X if isinstance(X, NormDescriptor) else NormDescriptor.ellipsoid(X)
    if norm.kind != "ellipsoid" or norm.dimension != q.dimension:
        raise ArgumentError("X must be an SPD matrix matching the problem dimension")
    ball = Ball(c, t, norm)
    if ball.distance(q.x_star) <= t:
        return _solution(q, ball, q.x_star.copy(), 0, "ellipsoid_exact")
    L = norm.cholesky
    # L^{-1} A L^{-T}
    B = linalg.solve_triangular(L, q.A, lower=True)
    A_y = linalg.solve_triangular(L, B.T, lower=True)
    A_y = 0.5 * (A_y + A_y.T)
    y_star = L.T @ (q.x_star - c)
    qy = QuadraticObjective(A_y, y_star, q.f_star, label=q.label)
    sol = brox_l2_quadratic(qy, np.zeros(q.dimension), t, tol)
    z = c + linalg.solve_triangular(L.T, sol.point, lower=False)
    return _solution(q, ball, z, sol.inner_iterations, "ellipsoid_exact")


def brox_box_quadratic(q: QuadraticObjective, center, t, tol=1e-12) -> BroxSolution:
    """Minimizer of a quadratic over the l-infinity ball (a box).

    Cyclic exact coordinate minimization with clipping, stopped once a full
    sweep moves no coordinate by more than ``tol * t``.  The reported residual
    is the norm of the projected gradient.
    """
    c = _args(q, center, t, tol)
    ball = Ball(c, t, NormDescriptor.linf(q.dimension))
    lo, hi = c - t, c + t
    A, x_star = q.A, q.x_star
    z = np.clip(x_star, lo, hi)
    if np.array_equal(z, x_star):
        return _solution(q, ball, x_star.copy(), 0, "box_cd")
    diag = np.diag(A).copy()
    d = q.dimension
    for sweep in range(1, BOX_MAX_SWEEPS + 1):
        r = A @ (z - x_star)
        biggest = 0.0
        for i in range(d):
            zi = min(max(z[i] - r[i] / diag[i], lo[i]), hi[i])
            delta = zi - z[i]
            if delta != 0.0:
                r += delta * A[:, i]
                z[i] = zi
                biggest = max(biggest, abs(delta))
        if biggest <= tol * t:
            break
    else:
        raise ConvergenceError(f"box solver did not converge in {BOX_MAX_SWEEPS} sweeps")
    g = q.gradient(z)
    residual = float(np.linalg.norm(z - np.clip(z - g, lo, hi)))
    return _solution(q, ball, z, sweep, "box_cd", residual=residual)


def project_l1_ball(v, center, t):
    """Euclidean projection of ``v`` onto ``{z : ||z - center||_1 <= t}`` (sort based)."""
    w = np.asarray(v, dtype=float) - center
    a = np.abs(w)
    if a.sum() <= t:
        return center + w
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    rho = int(np.nonzero(u * j > css - t)[0][-1])
    theta = (css[rho] - t) / (rho + 1.0)
    return center + np.sign(w) * np.maximum(a - theta, 0.0)


def brox_l1_quadratic(q: QuadraticObjective, center, t, tol=1e-12) -> BroxSolution:
    """Minimizer of a quadratic over an l1 ball by projected gradient descent.

    Step ``1/lambda_max(A)``; stops when successive iterates are within
    ``tol * t`` in the Euclidean norm.
    """
    c = _args(q, center, t, tol)
    ball = Ball(c, t, NormDescriptor.l1(q.dimension))
    x_star = q.x_star
    if np.abs(x_star - c).sum() <= t:
        return _solution(q, ball, x_star.copy(), 0, "l1_pgd")
    step = 1.0 / q.lambda_max
    A = q.A
    z = project_l1_ball(x_star, c, t)
    for it in range(1, L1_MAX_ITER + 1):
        z_new = project_l1_ball(z - step * (A @ (z - x_star)), c, t)
        moved = float(np.linalg.norm(z_new - z))
        z = z_new
        if moved <= tol * t:
            break
    else:
        raise ConvergenceError(f"l1 solver did not converge in {L1_MAX_ITER} iterations")
    return _solution(q, ball, z, it, "l1_pgd")


def brox_frank_wolfe(f: Objective, ball: Ball, max_iters=2_000, gap_tol=1e-10) -> BroxSolution:
    """Conditional-gradient minimization of ``f`` over ``ball``.

    Vertices come from ``center + t * lmo(grad)``.  Quadratics use exact line
    search, other objectives the ``2/(j+2)`` rule.  The returned residual is
    the duality gap ``<grad f(z), z - s>`` at the returned point; when the
    budget runs out, the iterate with the smallest gap seen is returned.

    The iteration starts at the center, or at the objective's known minimizer
    when that lies in the ball (its gap is zero, so no iterations are spent
    on the sublinear interior case).
    """
    if max_iters < 1:
        raise ArgumentError("max_iters must be >= 1")
    c, t, norm = ball.center, ball.radius, ball.norm
    A = f.A if isinstance(f, QuadraticObjective) else None
    z = c.copy()
    if f.x_star is not None and ball.contains(f.x_star):
        z = np.array(f.x_star, dtype=float)
    best = (math.inf, z, 0)
    for j in range(max_iters + 1):
        g = f.gradient(z)
        s = c + t * lmo(norm, g)
        d = s - z
        gap = -float(g @ d)
        if gap < best[0]:
            best = (gap, z.copy(), j)
        if gap <= gap_tol or j == max_iters:
            break
        if A is not None:
            curv = float(d @ (A @ d))
            gamma = min(1.0, gap / curv) if curv > 0 else 1.0
        else:
            gamma = 2.0 / (j + 2.0)
        z = z + gamma * d
    gap, z, j = best
    return _solution(f, ball, z, j, "frank_wolfe", rtol=1e-3, residual=max(gap, 0.0))


def batch_norm(n: NormDescriptor, P) -> np.ndarray:
    """Row-wise norm of an ``(N, d)`` array."""
    P = np.asarray(P, dtype=float)
    if n.kind == "l1":
        return np.abs(P).sum(axis=1)
    if n.kind == "l2":
        return np.sqrt(np.einsum("ij,ij->i", P, P))
    if n.kind == "linf":
        return np.abs(P).max(axis=1)
    if n.kind == "lp":
        return np.sum(np.abs(P) ** n.p, axis=1) ** (1.0 / n.p)
    if n.kind == "ellipsoid":
        Y = P @ n.cholesky
        return np.sqrt(np.einsum("ij,ij->i", Y, Y))
    if min(n.shape) == 1:
        # a single row or column: the spectral norm is the Euclidean norm
        return np.sqrt(np.einsum("ij,ij->i", P, P))
    mats = P.reshape(P.shape[0], *n.shape)
    return np.linalg.svd(mats, compute_uv=False)[:, 0]


def _batch_values(f, P):
    if isinstance(f, QuadraticObjective):
        R = P - f.x_star
        return 0.5 * np.einsum("ij,ij->i", R @ f.A, R) + f.f_star
    batch = getattr(f, "values", None)
    if batch is not None:
        return batch(P)
    return np.array([f.value(p) for p in P])


_ZOOM = 10


def _eval_points(f, ball, idx, lo, step, atol):
    """Values at ``center + lo + idx * step`` with a feasibility mask, in chunks."""
    vals = np.empty(idx.shape[0])
    keep = np.empty(idx.shape[0], dtype=bool)
    for s in range(0, idx.shape[0], 1_000_000):
        P = lo + idx[s:s + 1_000_000] * step
        keep[s:s + P.shape[0]] = batch_norm(ball.norm, P) <= ball.radius + atol
        vals[s:s + P.shape[0]] = _batch_values(f, P + ball.center)
    return vals, keep


def _full_grid(f, ball, half, counts, atol):
    """Values and feasibility on the whole base grid, as ``(2k+1)^d`` arrays."""
    d = half.size
    shape = tuple(2 * counts + 1)
    step = half / counts
    rest = (np.stack(np.meshgrid(*[np.arange(n) for n in shape[1:]], indexing="ij"),
                     axis=-1).reshape(-1, d - 1) if d > 1 else np.zeros((1, 0), dtype=int))
    V = np.empty(shape)
    F = np.empty(shape, dtype=bool)
    chunk = max(1, 1_000_000 // rest.shape[0])
    for start in range(0, shape[0], chunk):
        block = np.arange(start, min(shape[0], start + chunk))
        idx = np.concatenate([np.repeat(block, rest.shape[0])[:, None],
                              np.tile(rest, (block.size, 1))], axis=1)
        vals, keep = _eval_points(f, ball, idx, -half, step, atol)
        V[start:start + block.size] = vals.reshape((block.size,) + shape[1:])
        F[start:start + block.size] = keep.reshape((block.size,) + shape[1:])
    return V, F, step


def _node_slopes(V, step):
    """Largest finite-difference slope on the grid edges touching each node."""
    S = np.zeros_like(V)
    for ax in range(V.ndim):
        if V.shape[ax] < 2:
            continue
        D = np.abs(np.diff(V, axis=ax)) / step[ax]
        lo = [slice(None)] * V.ndim
        hi = [slice(None)] * V.ndim
        lo[ax], hi[ax] = slice(0, -1), slice(1, None)
        S[tuple(lo)] = np.maximum(S[tuple(lo)], D)
        S[tuple(hi)] = np.maximum(S[tuple(hi)], D)
    return S


def brox_bruteforce(f: Objective, ball: Ball, resolution=1e-3, refine=0,
                    max_points=50_000_000):
    """Grid argmin of ``f`` over ``ball`` in dimension at most three.

    The grid spans the ball's bounding box ``center +- half_width`` with the
    same number of intervals on both sides of the center and spacing at most
    ``resolution``.  Box faces and the vertices of l1 balls therefore lie on
    the grid.

    ``refine`` adds zoom levels with a tenth of the previous spacing each.  A
    level re-grids the cells around every feasible point whose value is within
    ``2 L h sqrt(d)`` of the best one, where ``h`` is the current spacing and
    ``L`` a finite-difference slope bound near those candidates.  Some feasible
    grid point within one cell of the true minimizer passes that test, so the
    refined patches keep the minimizer.  No gradients are used.
    """
    d = ball.norm.dimension
    if d > 3:
        raise UnsupportedError("grid oracle supports dimension <= 3")
    if not resolution > 0:
        raise ArgumentError("resolution must be positive")
    if refine < 0:
        raise ArgumentError("refine must be >= 0")
    half = ball.bounding_box()
    counts = np.maximum(1, np.ceil(half / resolution - 1e-9)).astype(int)
    if np.prod(2 * counts + 1, dtype=float) > max_points:
        raise ArgumentError("grid too large; raise the resolution")
    atol = 1e-12 * max(1.0, ball.radius)
    V, F, step = _full_grid(f, ball, half, counts, atol)
    flat = int(np.argmin(np.where(F, V, np.inf)))
    best_val = float(V.flat[flat])
    best_pt = -half + np.array(np.unravel_index(flat, V.shape)) * step + ball.center
    if not refine:
        return best_pt

    # shrink the slope bound to the edges around the candidate set; the grid
    # point next to the minimizer stays a candidate at every pass
    S = _node_slopes(V, step)
    slope = float(S.max())
    while True:
        cand = F & (V <= best_val + 2.0 * slope * step.max() * math.sqrt(d))
        local = float(S[cand].max())
        if local >= slope:
            break
        slope = local
    idx = np.argwhere(cand)
    del V, F, S

    patch = np.stack(np.meshgrid(*[np.arange(-_ZOOM, _ZOOM + 1)] * d, indexing="ij"),
                     axis=-1).reshape(-1, d)
    top = 2 * counts
    for _ in range(refine):
        top = top * _ZOOM
        step = step / _ZOOM
        fine = np.unique(np.clip((idx[:, None, :] * _ZOOM + patch).reshape(-1, d), 0, top),
                         axis=0)
        if fine.shape[0] > max_points:
            raise ArgumentError("refinement too large; raise the resolution")
        vals, keep = _eval_points(f, ball, fine, -half, step, atol)
        fine, vals = fine[keep], vals[keep]
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_pt = float(vals[i]), -half + fine[i] * step + ball.center
        idx = fine[vals <= best_val + 2.0 * slope * step.max() * math.sqrt(d)]
    return best_pt


def brox(f: Objective, ball: Ball, cfg: BroxConfig | None = None) -> BroxSolution:
    """Minimize ``f`` over ``ball`` with the best available solver.

    Quadratics over l2, ellipsoid, l-infinity and l1 balls use the exact
    solvers; everything else uses Frank-Wolfe.  ``solution.path`` names the
    solver that ran.
    """
    cfg = cfg or BroxConfig()
    if f.dimension != ball.norm.dimension:
        raise ArgumentError("objective and ball dimensions differ")
    if isinstance(f, QuadraticObjective):
        kind = ball.norm.kind
        if kind == "l2":
            return brox_l2_quadratic(f, ball.center, ball.radius, cfg.tol)
        if kind == "ellipsoid":
            return brox_ellipsoid_quadratic(f, ball.center, ball.radius, ball.norm, cfg.tol)
        if kind == "linf":
            return brox_box_quadratic(f, ball.center, ball.radius, cfg.tol)
        if kind == "l1":
            return brox_l1_quadratic(f, ball.center, ball.radius, cfg.tol)
    return brox_frank_wolfe(f, ball, cfg.fw_max_iters, cfg.fw_gap_tol)

