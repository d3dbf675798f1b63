"""One-versus-one SVM ensembles with calibrated pairwise probabilities."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from ..categories import ClassPosterior
from ..errors import PreconditionError, SchemaError, TrainingError
from .kernels import KernelSpec
from .platt import fit_platt, sigmoid_prob
from .svm import DEFAULT_TOL, SvmBinaryModel, train_svm

PAIR_CLAMP = 1e-6


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature z-scoring; constant features keep unit scale."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        scale = X.std(axis=0)
        scale[~(scale > 0)] = 1.0
        return cls(X.mean(axis=0), scale)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


def couple_pairwise(pairwise, labels: Optional[Sequence[str]] = None) -> ClassPosterior:
    """Combine pairwise probabilities into one posterior.

    ``pairwise[i][j]`` (``i < j``) is the probability of class ``i`` given
    that the sample is either ``i`` or ``j``; the lower triangle is implied.
    Class ``i`` receives ``1 / (sum_j 1/mu_ij - (L - 2))`` before the final
    normalization.
    """
    mu = np.asarray(pairwise, dtype=float)
    L = mu.shape[0]
    if mu.shape != (L, L) or L < 2:
        raise PreconditionError("pairwise table must be L x L with L >= 2")
    probs = couple_pairwise_batch(mu[None])[0]
    if labels is None:
        labels = tuple(str(i) for i in range(L))
    return ClassPosterior(tuple(labels), probs)


def couple_pairwise_batch(mu: np.ndarray) -> np.ndarray:
    """Vectorized coupling over a stack of ``(n, L, L)`` upper-triangular tables."""
    n, L, _ = mu.shape
    iu = np.triu_indices(L, k=1)
    full = np.ones_like(mu)
    upper = np.clip(mu[:, iu[0], iu[1]], PAIR_CLAMP, 1.0 - PAIR_CLAMP)
    full[:, iu[0], iu[1]] = upper
    full[:, iu[1], iu[0]] = 1.0 - upper
    inv = 1.0 / full
    idx = np.arange(L)
    inv[:, idx, idx] = 0.0
    raw = 1.0 / (inv.sum(axis=2) - (L - 2))
    return raw / raw.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class OneVsOneEnsemble:
    """``L(L-1)/2`` calibrated binary SVMs; ``pairwise[(i, j)]`` favours class ``i``."""

    classes: tuple[str, ...]
    feature_names: tuple[str, ...]
    scaler: Standardizer
    pairwise: dict
    class_priors: np.ndarray

    def __post_init__(self):
        L = len(self.classes)
        if set(self.pairwise) != set(combinations(range(L), 2)):
            raise SchemaError("ensemble needs exactly one model per class pair")
        if abs(float(np.sum(self.class_priors)) - 1.0) > 1e-9:
            raise SchemaError("class priors must sum to 1")

    def pairwise_probs(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise SchemaError(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        Z = self.scaler.transform(X)
        L = len(self.classes)
        mu = np.full((len(Z), L, L), 0.5)
        for (i, j), model in self.pairwise.items():
            mu[:, i, j] = sigmoid_prob(model.decision(Z), *model.platt)
        return mu

    def predict_proba(self, X) -> np.ndarray:
        return couple_pairwise_batch(self.pairwise_probs(X))

    def posterior(self, x) -> ClassPosterior:
        return ClassPosterior(self.classes, self.predict_proba(_values(x))[0])

    def predict(self, X) -> list[str]:
        return [self.classes[k] for k in np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self):
        return {
            "type": "ovo_svm",
            "classes": list(self.classes),
            "features": list(self.feature_names),
            "class_priors": self.class_priors.tolist(),
            "scaler": self.scaler.to_dict(),
            "pairs": [
                {"i": i, "j": j, "model": self.pairwise[(i, j)].to_dict()}
                for (i, j) in sorted(self.pairwise)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            classes=tuple(d["classes"]),
            feature_names=tuple(d["features"]),
            scaler=Standardizer.from_dict(d["scaler"]),
            pairwise={(p["i"], p["j"]): SvmBinaryModel.from_dict(p["model"])
                      for p in d["pairs"]},
            class_priors=np.asarray(d["class_priors"], dtype=float),
        )


def _values(x):
    return np.asarray(getattr(x, "values", x), dtype=float)


def _calibration_split(y_idx: np.ndarray, L: int, fraction: float,
                       seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    cal = np.zeros(len(y_idx), dtype=bool)
    for c in range(L):
        members = np.flatnonzero(y_idx == c)
        n_cal = int(round(fraction * len(members)))
        if n_cal < 1 or len(members) - n_cal < 1:
            raise TrainingError(
                f"class {c} has {len(members)} examples, too few for a calibration "
                "split; use calibration='same'")
        cal[rng.permutation(members)[:n_cal]] = True
    return ~cal, cal


def train_ensemble(X, labels: Sequence[str], classes: Optional[Sequence[str]] = None,
                   feature_names: Optional[Sequence[str]] = None,
                   kernel: KernelSpec = KernelSpec("rbf"), beta: float = 1.0,
                   calibration: str = "holdout", calibration_fraction: float = 0.3,
                   class_priors: Optional[Sequence[float]] = None, seed: int = 0,
                   tol: float = DEFAULT_TOL) -> OneVsOneEnsemble:
    """Train and calibrate one binary SVM per class pair.

    Features are z-scored with constants learned here. With
    ``calibration='holdout'`` each class is split once, the SVMs see 70 %
    and the sigmoids are fitted on the remaining 30 %; ``'same'`` fits both
    on all data. Priors default to the training class frequencies.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = [str(v) for v in labels]
    if classes is None:
        classes = sorted(set(labels))
    classes = tuple(classes)
    missing = [c for c in classes if c not in labels]
    if missing:
        raise TrainingError(f"no training examples for: {', '.join(missing)}")
    if len(classes) < 2:
        raise PreconditionError("at least two classes are required")
    extra = set(labels) - set(classes)
    if extra:
        raise TrainingError(f"labels outside the class set: {sorted(extra)}")
    if feature_names is None:
        feature_names = tuple(f"x{k}" for k in range(X.shape[1]))
    if len(feature_names) != X.shape[1]:
        raise SchemaError("feature_names do not match X")
    L = len(classes)
    y_idx = np.array([classes.index(v) for v in labels])

    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    kernel = kernel.resolved(Z)

    if calibration == "holdout":
        fit_mask, cal_mask = _calibration_split(y_idx, L, calibration_fraction, seed)
    elif calibration == "same":
        fit_mask = cal_mask = np.ones(len(y_idx), dtype=bool)
    else:
        raise PreconditionError(f"unknown calibration mode {calibration!r}")

    pairwise = {}
    for i, j in combinations(range(L), 2):
        sel = fit_mask & ((y_idx == i) | (y_idx == j))
        model = train_svm(Z[sel], np.where(y_idx[sel] == i, 1.0, -1.0), kernel, beta, tol=tol)
        csel = cal_mask & ((y_idx == i) | (y_idx == j))
        a, b = fit_platt(model.decision(Z[csel]), np.where(y_idx[csel] == i, 1.0, -1.0))
        pairwise[(i, j)] = model.with_platt(a, b)

    if class_priors is None:
        priors = np.bincount(y_idx, minlength=L) / len(y_idx)
    else:
        priors = np.asarray(class_priors, dtype=float)
        if priors.shape != (L,) or abs(priors.sum() - 1.0) > 1e-9:
            raise PreconditionError("class_priors must be L values summing to 1")
    return OneVsOneEnsemble(classes, tuple(feature_names), scaler, pairwise, priors)


def ensemble_posterior(ensemble: OneVsOneEnsemble, x) -> ClassPosterior:
    return ensemble.posterior(x)
