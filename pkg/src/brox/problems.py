"""Convex test objectives with exact gradients and, where known, minimizers."""
from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.special import expit

from .exceptions import ArgumentError, ConvergenceError

__all__ = [
    "Objective",
    "FunctionObjective",
    "QuadraticObjective",
    "LeastSquaresObjective",
    "LogisticObjective",
    "make_quadratic",
    "quadratic_from_matrix",
    "make_least_squares",
    "make_logistic",
    "random_rotation",
]


class Objective:
    """Finite convex function on ``R^dimension`` with a gradient.

    Subclasses implement :meth:`value` and :meth:`gradient`.  ``x_star`` and
    ``f_star`` are ``None`` when no minimizer is known.
    """

    def __init__(self, dimension, label="objective", x_star=None, f_star=None):
        self.dimension = int(dimension)
        self.label = label
        if (x_star is None) != (f_star is None):
            raise ArgumentError("x_star and f_star must be given together")
        if x_star is not None:
            x_star = np.array(x_star, dtype=float).reshape(-1)
            x_star.setflags(write=False)
            if x_star.size != self.dimension:
                raise ArgumentError("x_star has the wrong length")
            f_star = float(f_star)
        self.x_star = x_star
        self.f_star = f_star

    @property
    def known_optimum(self):
        if self.x_star is None:
            return None
        return self.x_star, self.f_star

    def _vec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ArgumentError(f"expected a vector of length {self.dimension}, got {x.shape}")
        return x

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    def __repr__(self):
        return f"<{type(self).__name__} {self.label} d={self.dimension}>"


class FunctionObjective(Objective):
    """Objective backed by plain callables."""

    def __init__(self, value, gradient, dimension, label="function", x_star=None, f_star=None):
        super().__init__(dimension, label, x_star, f_star)
        self._value = value
        self._gradient = gradient

    def value(self, x):
        return float(self._value(self._vec(x)))

    def gradient(self, x):
        return np.asarray(self._gradient(self._vec(x)), dtype=float)


class QuadraticObjective(Objective):
    """``f(x) = 0.5 (x - x*)^T A (x - x*) + f*`` with ``A`` SPD."""

    def __init__(self, A, x_star, f_star=0.0, label="quadratic"):
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ArgumentError("A must be square")
        if np.abs(A - A.T).max() > 1e-12 * max(1.0, np.abs(A).max()):
            raise ArgumentError("A must be symmetric")
        A = 0.5 * (A + A.T)
        eig = linalg.eigvalsh(A)
        if eig[0] <= 0:
            raise ArgumentError("A must be positive definite")
        A.setflags(write=False)
        super().__init__(A.shape[0], label, x_star, f_star)
        self.A = A
        self.eigenvalues = eig

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])

    def value(self, x):
        r = self._vec(x) - self.x_star
        return 0.5 * float(r @ (self.A @ r)) + self.f_star

    def gradient(self, x):
        return self.A @ (self._vec(x) - self.x_star)


class LeastSquaresObjective(Objective):
    """``f(x) = 0.5 ||M x - y||^2``."""

    def __init__(self, M, y, label="least_squares"):
        M = np.array(M, dtype=float, ndmin=2)
        y = np.array(y, dtype=float).reshape(-1)
        if M.shape[0] != y.size:
            raise ArgumentError(f"M has {M.shape[0]} rows but y has length {y.size}")
        if M.shape[0] < 1 or M.shape[1] < 1:
            raise ArgumentError("M must be non-empty")
        self.M, self.y = M, y
        x_star = f_star = None
        gram = M.T @ M
        if np.linalg.matrix_rank(gram) == M.shape[1]:
            x_star = linalg.lstsq(M, y)[0]
            f_star = 0.5 * float(np.sum((M @ x_star - y) ** 2))
        super().__init__(M.shape[1], label, x_star, f_star)

    def value(self, x):
        r = self.M @ self._vec(x) - self.y
        return 0.5 * float(r @ r)

    def gradient(self, x):
        return self.M.T @ (self.M @ self._vec(x) - self.y)

    def values(self, P):
        R = np.asarray(P, dtype=float) @ self.M.T - self.y
        return 0.5 * np.einsum("ij,ij->i", R, R)


class LogisticObjective(Objective):
    """Mean logistic loss plus ``ridge/2 ||x||^2``."""

    def __init__(self, features, labels, ridge=0.0, label="logistic", solve_tol=1e-12):
        F = np.array(features, dtype=float, ndmin=2)
        lab = np.array(labels, dtype=float).reshape(-1)
        if F.shape[0] != lab.size:
            raise ArgumentError("features and labels disagree in length")
        if not np.all(np.isin(lab, (-1.0, 1.0))):
            raise ArgumentError("labels must be -1 or +1")
        if ridge < 0:
            raise ArgumentError("ridge must be nonnegative")
        self.features, self.labels, self.ridge = F, lab, float(ridge)
        self._signed = lab[:, None] * F
        super().__init__(F.shape[1], label)
        if self.ridge > 0:
            x_star = self._solve(solve_tol)
            self.x_star = x_star
            self.x_star.setflags(write=False)
            self.f_star = self.value(x_star)

    def value(self, x):
        x = self._vec(x)
        m = self._signed @ x
        return float(np.mean(np.logaddexp(0.0, -m))) + 0.5 * self.ridge * float(x @ x)

    def gradient(self, x):
        x = self._vec(x)
        m = self._signed @ x
        w = expit(-m)
        return -(self._signed.T @ w) / m.size + self.ridge * x

    def values(self, P):
        P = np.asarray(P, dtype=float)
        m = P @ self._signed.T
        return (np.mean(np.logaddexp(0.0, -m), axis=1)
                + 0.5 * self.ridge * np.einsum("ij,ij->i", P, P))

    def hessian(self, x):
        x = self._vec(x)
        m = self._signed @ x
        s = expit(m) * expit(-m)
        H = (self.features.T * s) @ self.features / m.size
        return H + self.ridge * np.eye(self.dimension)

    def _solve(self, tol, max_iter=100):
        # damped Newton; strongly convex because ridge > 0.  Near the optimum the
        # decrease in f drops below rounding, so a step that halves the gradient
        # norm is accepted even when the Armijo test cannot see it.
        x = np.zeros(self.dimension)
        g = self.gradient(x)
        gnorm = np.linalg.norm(g)
        for _ in range(max_iter):
            if gnorm <= tol:
                return x
            step = linalg.solve(self.hessian(x), g, assume_a="pos")
            fx, a = self.value(x), 1.0
            while True:
                x_new = x - a * step
                g_new = self.gradient(x_new)
                gnorm_new = np.linalg.norm(g_new)
                if (self.value(x_new) <= fx - 1e-4 * a * float(g @ step)
                        or gnorm_new <= 0.5 * gnorm or a < 1e-12):
                    break
                a *= 0.5
            if gnorm_new >= gnorm:
                # no further progress: the gradient is at rounding level
                break
            x, g, gnorm = x_new, g_new, gnorm_new
        if gnorm <= 1e-10:
            return x
        raise ConvergenceError(f"logistic optimum solve stalled at |grad| = {gnorm:.3e}")


def random_rotation(d, seed):
    """Orthogonal matrix from the QR factorization of a seeded Gaussian matrix."""
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    # fix column signs so Q does not depend on the LAPACK sign convention
    return Q * np.sign(np.diag(R))


def make_quadratic(eigenvalues, rotation_seed, x_star, f_star=0.0, label=None):
    """Quadratic with ``A = Q^T diag(eigenvalues) Q`` and a seeded rotation ``Q``."""
    lam = np.asarray(eigenvalues, dtype=float).reshape(-1)
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ArgumentError("eigenvalues must be positive and finite")
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    if x_star.size != lam.size:
        raise ArgumentError("x_star and eigenvalues disagree in length")
    Q = random_rotation(lam.size, rotation_seed)
    A = Q.T @ (lam[:, None] * Q)
    A = 0.5 * (A + A.T)
    if label is None:
        label = f"quadratic(seed={rotation_seed})"
    return QuadraticObjective(A, x_star, f_star, label=label)


def quadratic_from_matrix(A, x_star, f_star=0.0, label="quadratic"):
    return QuadraticObjective(A, x_star, f_star, label=label)


def make_least_squares(M, y):
    return LeastSquaresObjective(M, y)


def make_logistic(features, labels, ridge=0.0):
    return LogisticObjective(features, labels, ridge)
