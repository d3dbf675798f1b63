"""Soft-margin kernel SVM trained by sequential minimal optimization.

The dual problem solved is::

    min_a  1/2 a'Qa - sum(a)   s.t.  0 <= a_i <= beta,  y'a = 0

with ``Q_ij = y_i y_j K(x_i, x_j)``. Each iteration picks the pair that
violates the optimality conditions most (second-order working-set
selection) and solves the two-variable subproblem in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConvergenceError, PreconditionError, SchemaError
from .kernels import KernelSpec, gram

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100_000
_TAU = 1e-12
_SNAP = 1e-12  # relative to beta; rounding residue of ai + aj updates


@dataclass(frozen=True)
class DualSolution:
    alpha: np.ndarray
    bias: float
    iterations: int
    kkt_gap: float


def _snap(a: float, beta: float) -> float:
    if a < _SNAP * beta:
        return 0.0
    if a > beta * (1.0 - _SNAP):
        return beta
    return a


def solve_dual(K: np.ndarray, y: np.ndarray, beta: float, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> DualSolution:
    """Run SMO on a precomputed kernel matrix and labels in {-1, +1}."""
    n = len(y)
    y = np.asarray(y, dtype=float)
    Q = K * np.outer(y, y)
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)

    for it in range(max_iter + 1):
        score = -y * grad
        up = ((y > 0) & (alpha < beta)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < beta))
        up_idx = np.flatnonzero(up)
        low_idx = np.flatnonzero(low)
        i = int(up_idx[np.argmax(score[up_idx])])
        m_up = score[i]
        m_low = float(score[low_idx].min())
        gap = m_up - m_low
        if gap < tol:
            break
        if it == max_iter:
            raise ConvergenceError("SMO did not converge within the iteration cap", gap)

        cand = low_idx[score[low_idx] < m_up]
        b = m_up - score[cand]
        a = diag[i] + diag[cand] - 2.0 * K[i, cand]
        a = np.where(a > 0, a, _TAU)
        j = int(cand[np.argmin(-(b * b) / a)])

        ai_old, aj_old = alpha[i], alpha[j]
        ai, aj = ai_old, aj_old
        if y[i] != y[j]:
            quad = diag[i] + diag[j] - 2.0 * K[i, j]
            quad = quad if quad > 0 else _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > beta:
                    ai, aj = beta, beta - diff
            elif aj > beta:
                aj, ai = beta, beta + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * K[i, j]
            quad = quad if quad > 0 else _TAU
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > beta:
                if ai > beta:
                    ai, aj = beta, total - beta
            elif aj < 0:
                aj, ai = 0.0, total
            if total > beta:
                if aj > beta:
                    aj, ai = beta, total - beta
            elif ai < 0:
                ai, aj = 0.0, total
        ai, aj = _snap(ai, beta), _snap(aj, beta)
        alpha[i], alpha[j] = ai, aj
        grad += Q[:, i] * (ai - ai_old) + Q[:, j] * (aj - aj_old)

    score = -y * grad
    free = (alpha > 0) & (alpha < beta)
    if np.any(free):
        bias = float(score[free].mean())
    else:
        up = ((y > 0) & (alpha < beta)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < beta))
        bias = 0.5 * (float(score[up].max()) + float(score[low].min()))
    return DualSolution(alpha=alpha, bias=bias, iterations=it, kkt_gap=float(gap))


@dataclass(frozen=True, eq=False)
class SvmBinaryModel:
    """Kernel expansion ``f(x) = sum_i coef_i K(x, sv_i) + bias``.

    ``coef_i = alpha_i * y_i``; only examples with ``alpha_i > 0`` are kept.
    ``platt`` holds the sigmoid ``(A, B)`` once calibrated.
    """

    support_vectors: np.ndarray
    coefficients: np.ndarray
    bias: float
    kernel: KernelSpec
    regularization: float
    platt: Optional[tuple[float, float]] = None
    kkt_gap: float = field(default=0.0, compare=False)

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.coefficients)

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def with_platt(self, a: float, b: float) -> "SvmBinaryModel":
        return SvmBinaryModel(self.support_vectors, self.coefficients, self.bias,
                              self.kernel, self.regularization, (float(a), float(b)),
                              self.kkt_gap)

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise SchemaError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return gram(self.kernel, X, self.support_vectors) @ self.coefficients + self.bias

    def to_dict(self):
        return {
            "kernel": self.kernel.to_dict(),
            "regularization": self.regularization,
            "bias": self.bias,
            "platt": list(self.platt) if self.platt is not None else None,
            "coefficients": self.coefficients.tolist(),
            "support_vectors": self.support_vectors.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        sv = np.asarray(d["support_vectors"], dtype=float)
        return cls(
            support_vectors=sv.reshape(len(d["coefficients"]), -1),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            bias=float(d["bias"]),
            kernel=KernelSpec.from_dict(d["kernel"]),
            regularization=float(d["regularization"]),
            platt=tuple(d["platt"]) if d["platt"] is not None else None,
        )


def train_svm(X, y, kernel: KernelSpec = KernelSpec("linear"), beta: float = 1.0,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SvmBinaryModel:
    """Train a binary soft-margin SVM.

    Parameters
    ----------
    X : array of shape (n, d)
    y : array of n labels in {-1, +1}
    kernel : KernelSpec
        An rbf kernel without gamma gets the data-dependent default.
    beta : float
        Upper bound on every multiplier (the slack penalty).

    Raises
    ------
    PreconditionError
        Only one class present, bad labels, or non-positive beta.
    ConvergenceError
        The KKT gap stayed above ``tol`` after ``max_iter`` pair updates.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(X) != len(y):
        raise PreconditionError("X and y differ in length")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise PreconditionError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise PreconditionError("both classes must be present")
    if not (math.isfinite(beta) and beta > 0):
        raise PreconditionError("beta must be positive")
    kernel = kernel.resolved(X)
    sol = solve_dual(gram(kernel, X, X), y, beta, tol=tol, max_iter=max_iter)
    keep = sol.alpha > 0
    return SvmBinaryModel(
        support_vectors=X[keep].copy(),
        coefficients=sol.alpha[keep] * y[keep],
        bias=sol.bias,
        kernel=kernel,
        regularization=float(beta),
        kkt_gap=sol.kkt_gap,
    )


def svm_decision(model: SvmBinaryModel, x) -> float:
    return float(model.decision(np.asarray(getattr(x, "values", x), dtype=float))[0])
