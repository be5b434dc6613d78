"""Norms, dual norms, balls and linear minimization oracles.

Every norm is described by an immutable :class:`NormDescriptor`.  Vectors are
flat ``float64`` arrays of length ``dimension``; the spectral norm reads them
as ``rows x cols`` matrices in row-major (C) order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import ArgumentError, NumericError, UnsupportedError

__all__ = [
    "NormDescriptor",
    "Ball",
    "norm_value",
    "dual_norm_value",
    "lmo",
    "normal_cone_violation",
    "unit_ball_volume",
    "ellipsoid_volume",
    "design_ellipsoid",
    "parse_norm",
]

KINDS = ("l1", "l2", "linf", "lp", "ellipsoid", "spectral")

# singular values below this fraction of sigma_max are treated as zero
SPECTRAL_RANK_RTOL = 1e-12

BALL_MEMBERSHIP_ATOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NormDescriptor:
    """Tagged description of a norm on ``R^dimension``.

    Use the classmethod constructors rather than calling this directly.
    """

    kind: str
    dimension: int
    p: float | None = None
    matrix: np.ndarray | None = field(default=None, repr=False)
    shape: tuple[int, int] | None = None
    cholesky: np.ndarray | None = field(default=None, repr=False)
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown norm kind {self.kind!r}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ArgumentError("dimension must be a positive integer")

    # -- constructors -----------------------------------------------------
    @classmethod
    def l1(cls, dimension):
        return cls("l1", int(dimension))

    @classmethod
    def l2(cls, dimension):
        return cls("l2", int(dimension))

    @classmethod
    def linf(cls, dimension):
        return cls("linf", int(dimension))

    @classmethod
    def lp(cls, p, dimension):
        p = float(p)
        if not (1.0 < p < math.inf):
            raise ArgumentError(f"lp norm needs 1 < p < inf, got {p}")
        return cls("lp", int(dimension), p=p)

    @classmethod
    def ellipsoid(cls, X, source=None):
        """Norm ``sqrt(v^T X v)`` for a symmetric positive definite ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != X.shape[1]:
            raise ArgumentError("ellipsoid matrix must be square")
        if not np.allclose(X, X.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(X).max())):
            raise ArgumentError("ellipsoid matrix must be symmetric")
        X = 0.5 * (X + X.T)
        try:
            L = linalg.cholesky(X, lower=True)
        except linalg.LinAlgError as exc:
            raise ArgumentError("ellipsoid matrix is not positive definite") from exc
        return cls("ellipsoid", X.shape[0], matrix=_frozen(X), cholesky=_frozen(L),
                   source=source)

    @classmethod
    def spectral(cls, rows, cols):
        rows, cols = int(rows), int(cols)
        if rows < 1 or cols < 1:
            raise ArgumentError("spectral shape must be positive")
        return cls("spectral", rows * cols, shape=(rows, cols))

    # -- helpers ----------------------------------------------------------
    @property
    def q(self):
        """Conjugate exponent of an lp norm."""
        return self.p / (self.p - 1.0)

    @property
    def inner_product(self):
        """True when the norm is induced by an inner product."""
        return self.kind in ("l2", "ellipsoid")

    def dual(self):
        """Descriptor of the dual norm (not available for spectral)."""
        if self.kind == "l1":
            return NormDescriptor.linf(self.dimension)
        if self.kind == "linf":
            return NormDescriptor.l1(self.dimension)
        if self.kind == "l2":
            return self
        if self.kind == "lp":
            return NormDescriptor.lp(self.q, self.dimension)
        if self.kind == "ellipsoid":
            return NormDescriptor.ellipsoid(linalg.cho_solve((self.cholesky, True),
                                                             np.eye(self.dimension)))
        raise UnsupportedError("the nuclear norm has no descriptor; use dual_norm_value")

    def _key(self):
        m = None if self.matrix is None else (self.matrix.shape, self.matrix.tobytes())
        return (self.kind, self.dimension, self.p, self.shape, m)

    def __eq__(self, other):
        if not isinstance(other, NormDescriptor):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def solve(self, v):
        """Return ``X^{-1} v`` for an ellipsoid norm."""
        return linalg.cho_solve((self.cholesky, True), v)

    def as_matrix(self, v):
        return np.asarray(v, dtype=float).reshape(self.shape)

    def spec(self):
        """Text form used by config files."""
        if self.kind == "lp":
            return f"lp:{self.p!r}"
        if self.kind == "spectral":
            return f"spectral:{self.shape[0]}x{self.shape[1]}"
        if self.kind == "ellipsoid":
            return f"ellipsoid:{self.source}" if self.source else "ellipsoid"
        return self.kind

    def __str__(self):
        return self.spec()


@dataclass(frozen=True, eq=False)
class Ball:
    """Closed ball ``{z : ||z - center|| <= radius}``."""

    center: np.ndarray
    radius: float
    norm: NormDescriptor

    def __post_init__(self):
        center = _frozen(self.center).reshape(-1)
        if center.size != self.norm.dimension:
            raise ArgumentError(
                f"center has length {center.size}, norm expects {self.norm.dimension}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ArgumentError(f"radius must be positive and finite, got {self.radius}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    def distance(self, z):
        return norm_value(self.norm, np.asarray(z, dtype=float) - self.center)

    def contains(self, z, atol=BALL_MEMBERSHIP_ATOL):
        return self.distance(z) <= self.radius + atol

    def bounding_box(self):
        """Per-coordinate half widths: ``|z_i - c_i| <= radius * ||e_i||_*``."""
        eye = np.eye(self.norm.dimension)
        return self.radius * np.array([dual_norm_value(self.norm, e) for e in eye])


def _check(n, v):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size != n.dimension:
        raise ArgumentError(f"expected a vector of length {n.dimension}, got shape {v.shape}")
    return v


def _singular_values(n, v):
    try:
        return linalg.svdvals(n.as_matrix(v))
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"SVD failed: {exc}") from exc


def _lp(v, p):
    scale = np.abs(v).max()
    if scale == 0.0:
        return 0.0
    return scale * float(np.sum((np.abs(v) / scale) ** p) ** (1.0 / p))


def norm_value(n: NormDescriptor, v) -> float:
    """Primal norm ``||v||``."""
    v = _check(n, v)
    kind = n.kind
    if kind == "l1":
        return float(np.abs(v).sum())
    if kind == "l2":
        return float(np.linalg.norm(v))
    if kind == "linf":
        return float(np.abs(v).max())
    if kind == "lp":
        return _lp(v, n.p)
    if kind == "ellipsoid":
        # ||L^T v||_2 avoids cancellation in v^T X v
        return float(np.linalg.norm(n.cholesky.T @ v))
    s = _singular_values(n, v)
    return float(s[0]) if s.size else 0.0


def dual_norm_value(n: NormDescriptor, v) -> float:
    """Dual norm ``||v||_* = sup_{||z|| <= 1} <v, z>``."""
    v = _check(n, v)
    kind = n.kind
    if kind == "l1":
        return float(np.abs(v).max())
    if kind == "l2":
        return float(np.linalg.norm(v))
    if kind == "linf":
        return float(np.abs(v).sum())
    if kind == "lp":
        return _lp(v, n.q)
    if kind == "ellipsoid":
        # ||L^{-1} v||_2 = sqrt(v^T X^{-1} v)
        return float(np.linalg.norm(linalg.solve_triangular(n.cholesky, v, lower=True)))
    return float(_singular_values(n, v).sum())


def lmo(n: NormDescriptor, g) -> np.ndarray:
    """Minimizer of ``<g, z>`` over the unit ball of ``n``.

    Returns the zero vector when ``g == 0``.  Ties in the l1 oracle go to the
    smallest index; the spectral oracle uses the reduced SVD restricted to the
    numerical rank of ``g``.
    """
    g = _check(n, g)
    out = np.zeros_like(g)
    if not np.any(g):
        return out
    kind = n.kind
    if kind == "l1":
        i = int(np.argmax(np.abs(g)))
        out[i] = -np.sign(g[i])
        return out
    if kind == "l2":
        return -g / np.linalg.norm(g)
    if kind == "linf":
        return -np.sign(g)
    if kind == "lp":
        q = n.q
        a = np.abs(g) / np.abs(g).max()
        w = a ** (q - 1.0)
        # ||a||_q^{q-1} with the same scaling; the scale cancels
        return -np.sign(g) * w / (np.sum(a**q) ** ((q - 1.0) / q))
    if kind == "ellipsoid":
        y = n.solve(g)
        return -y / math.sqrt(float(g @ y))
    G = n.as_matrix(g)
    try:
        U, s, Vt = linalg.svd(G, full_matrices=False)
    except linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed: {exc}") from exc
    r = int(np.sum(s > SPECTRAL_RANK_RTOL * s[0]))
    return -(U[:, :r] @ Vt[:r]).reshape(-1)


def normal_cone_violation(b: Ball, u, g) -> float:
    """How far ``g`` is from the normal cone of ``b`` at ``u``.

    Returns ``max(0, t ||g||_* - <g, u - center>)``, which is zero exactly when
    ``g`` is a normal direction at ``u``.
    """
    u = _check(b.norm, u)
    g = _check(b.norm, g)
    excess = b.distance(u) - b.radius
    if excess > 1e-9 * max(1.0, b.radius):
        raise ArgumentError(f"point lies outside the ball by {excess:.3e}")
    return max(0.0, b.radius * dual_norm_value(b.norm, g) - float(g @ (u - b.center)))


def unit_ball_volume(d: int) -> float:
    """Volume of the Euclidean unit ball in ``R^d``."""
    return math.exp(0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0))


def ellipsoid_volume(X, radius) -> float:
    """Volume of ``{z : sqrt(z^T X z) <= radius}``."""
    X = np.asarray(X, dtype=float)
    d = X.shape[0]
    sign, logdet = np.linalg.slogdet(X)
    if sign <= 0:
        raise ArgumentError("matrix is not positive definite")
    return math.exp(d * math.log(radius) - 0.5 * logdet) * unit_ball_volume(d)


def design_ellipsoid(x0, x_star, volume) -> np.ndarray:
    """SPD matrix whose ball around ``x0`` through ``x_star`` has the given volume.

    Builds ``X = c1 P + (I - P)`` with ``P`` the orthogonal projector onto
    ``x0 - x_star`` and ``c1`` chosen so that the ball of radius
    ``||x0 - x_star||_X`` has volume ``volume``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    if x0.shape != x_star.shape:
        raise ArgumentError("x0 and x_star must have the same length")
    d = x0.size
    if d < 2:
        raise UnsupportedError("fixed-volume ellipsoid design needs dimension >= 2")
    if not volume > 0:
        raise ArgumentError("volume must be positive")
    diff = x0 - x_star
    r2 = float(np.linalg.norm(diff))
    if r2 == 0.0:
        raise ArgumentError("x0 and x_star must be distinct")
    # c1 = (V / (r2^d vol_d))^{2/(d-1)}, evaluated in logs to avoid overflow
    log_c1 = (2.0 / (d - 1)) * (math.log(volume) - d * math.log(r2)
                                - math.log(unit_ball_volume(d)))
    c1 = math.exp(log_c1)
    u = diff / r2
    P = np.outer(u, u)
    X = c1 * P + (np.eye(d) - P)
    return 0.5 * (X + X.T)


def parse_norm(text: str, dimension: int | None = None) -> NormDescriptor:
    """Parse ``l1 | l2 | linf | lp:<p> | ellipsoid:<csv> | spectral:<m>x<n>``."""
    text = text.strip()
    head, _, arg = text.partition(":")
    head = head.lower()
    if head in ("l1", "l2", "linf"):
        if dimension is None:
            raise ArgumentError(f"norm {text!r} needs a dimension")
        return getattr(NormDescriptor, head)(dimension)
    if head == "lp":
        if dimension is None:
            raise ArgumentError(f"norm {text!r} needs a dimension")
        try:
            p = float(arg)
        except ValueError as exc:
            raise ArgumentError(f"bad lp exponent in {text!r}") from exc
        return NormDescriptor.lp(p, dimension)
    if head == "ellipsoid":
        if not arg:
            raise ArgumentError("ellipsoid norm needs a matrix csv path")
        try:
            X = np.loadtxt(arg, delimiter=",", ndmin=2, comments="#")
        except OSError as exc:
            raise ArgumentError(f"cannot read ellipsoid matrix {arg!r}: {exc}") from exc
        n = NormDescriptor.ellipsoid(X, source=arg)
        if dimension is not None and n.dimension != dimension:
            raise ArgumentError("ellipsoid matrix size does not match the problem")
        return n
    if head == "spectral":
        try:
            m, k = (int(s) for s in arg.lower().split("x"))
        except ValueError as exc:
            raise ArgumentError(f"bad spectral shape in {text!r}") from exc
        n = NormDescriptor.spectral(m, k)
        if dimension is not None and n.dimension != dimension:
            raise ArgumentError(f"spectral shape {m}x{k} does not match dimension {dimension}")
        return n
    raise ArgumentError(f"unknown norm {text!r}")
