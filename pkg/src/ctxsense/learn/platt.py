"""Sigmoid calibration of decision values, ``P(y=+1|f) = 1 / (1 + exp(A f + B))``.

The fit is Newton's method with a backtracking line search on the
negative log-likelihood, following Lin, Lin & Weng's numerically careful
formulation of Platt's procedure.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConvergenceError, PreconditionError

GRAD_TOL = 1e-6
MAX_ITER = 100
MIN_STEP = 1e-10
_HESS_RIDGE = 1e-12


def sigmoid_prob(f, a: float, b: float):
    """Evaluate the calibrated probability without overflow."""
    z0 = a * np.asarray(f, dtype=float) + b
    z = np.atleast_1d(z0)
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    out[pos] = ez / (1.0 + ez)
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return float(out[0]) if z0.ndim == 0 else out


def _nll(f, t, a, b):
    z = a * f + b
    pos = z >= 0
    zp, zn = z[pos], z[~pos]
    return float(np.sum(t[pos] * zp + np.log1p(np.exp(-zp)))
                 + np.sum((t[~pos] - 1.0) * zn + np.log1p(np.exp(zn))))


def platt_targets(labels, prior_correction: bool = True) -> np.ndarray:
    """Targets ``(y + 1) / 2``, optionally shrunk away from 0 and 1 by class counts."""
    y = np.asarray(labels)
    pos = y > 0
    if not prior_correction:
        return pos.astype(float)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    return np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))


def fit_platt(decisions, labels, prior_correction: bool = True,
              grad_tol: float = GRAD_TOL, max_iter: int = MAX_ITER) -> tuple[float, float]:
    """Fit ``(A, B)`` by maximum likelihood.

    ``labels`` are +1 / -1 (anything <= 0 counts as negative). With
    ``prior_correction`` the targets are ``(N+ + 1)/(N+ + 2)`` and
    ``1/(N- + 2)`` instead of 1 and 0, which keeps the optimum finite on
    separable data.
    """
    f = np.asarray(decisions, dtype=float)
    y = np.asarray(labels, dtype=float)
    if f.shape != y.shape or f.ndim != 1:
        raise PreconditionError("decisions and labels must be equal-length 1-D arrays")
    n_pos = int(np.sum(y > 0))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise PreconditionError("both labels must be present")
    t = platt_targets(y, prior_correction)

    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = _nll(f, t, a, b)
    for _ in range(max_iter):
        p = sigmoid_prob(f, a, b)
        d2 = p * (1.0 - p)
        d1 = t - p
        g1, g2 = float(np.dot(f, d1)), float(np.sum(d1))
        if max(abs(g1), abs(g2)) < grad_tol:
            return a, b
        h11 = _HESS_RIDGE + float(np.dot(f * f, d2))
        h22 = _HESS_RIDGE + float(np.sum(d2))
        h21 = float(np.dot(f, d2))
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= MIN_STEP:
            na, nb = a + step * da, b + step * db
            nf = _nll(f, t, na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            break
    p = sigmoid_prob(f, a, b)
    d1 = t - p
    residual = max(abs(float(np.dot(f, d1))), abs(float(np.sum(d1))))
    if residual < grad_tol:
        return a, b
    raise ConvergenceError("sigmoid fit did not converge", residual)


def platt_prob(model, x) -> float:
    """Calibrated ``P(y=+1|x)`` for a binary model with a fitted sigmoid."""
    if model.platt is None:
        raise PreconditionError("model has no fitted sigmoid")
    f = model.decision(np.asarray(getattr(x, "values", x), dtype=float))
    return float(sigmoid_prob(f[0], *model.platt))
