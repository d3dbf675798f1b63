"""Hierarchical behaviour recognition and the connectivity filter.

The filter runs over all nine behaviour categories. Each step blends the
new classifier output with the previous estimate, expresses the blend as a
rank-one transfer matrix from the previous estimate, masks that matrix
with the connection likelihoods, and renormalizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol

import numpy as np

from .categories import (BEHAVIOURS, BRANCHES, CATEGORY_GROUP, GROUPS, HUMAN_BEHAVIOURS,
                         STATIONARY_BEHAVIOURS, VEHICLE_BEHAVIOURS, ClassPosterior)
from .errors import ConfigurationError, DegenerateStateError, PreconditionError, SchemaError
from .features import HUMAN_ACTIVITY, HUMAN_VEHICLE, ROLE_SCHEMAS, VEHICLE_MOTION

PERMITTED = 0.9
UNLIKELY = 0.1

# rows: current group, columns: previous group (the table is symmetric)
GROUP_CONNECTIONS = np.array([
    #  H    V    U    T    B
    [0.9, 0.9, 0.1, 0.1, 0.1],  # H
    [0.9, 0.9, 0.9, 0.9, 0.9],  # V
    [0.1, 0.9, 0.9, 0.1, 0.1],  # U
    [0.1, 0.9, 0.1, 0.9, 0.1],  # T
    [0.1, 0.9, 0.1, 0.1, 0.9],  # B
])


class ProbabilisticClassifier(Protocol):
    """Anything that maps feature rows to class distributions."""

    classes: tuple[str, ...]
    feature_names: tuple[str, ...]

    def predict_proba(self, X) -> np.ndarray: ...


def connection_matrix(categories=BEHAVIOURS, groups=GROUPS,
                      table: np.ndarray = GROUP_CONNECTIONS) -> np.ndarray:
    """Expand the group table to categories: ``C[i, j] = table[g(i), g(j)]``."""
    g = np.array([groups.index(CATEGORY_GROUP.get(c, c)) for c in categories])
    return table[np.ix_(g, g)]


def connected(prev_category: str, next_category: str) -> bool:
    gi = GROUPS.index(CATEGORY_GROUP[next_category])
    gj = GROUPS.index(CATEGORY_GROUP[prev_category])
    return GROUP_CONNECTIONS[gi, gj] >= PERMITTED


def _vec(x) -> np.ndarray:
    return x.probs if isinstance(x, ClassPosterior) else np.asarray(x, dtype=float)


def smooth(z_k, x_prev, alpha: float = 0.5) -> np.ndarray:
    """``alpha * z_k + (1 - alpha) * x_prev``."""
    z, x = _vec(z_k), _vec(x_prev)
    if z.shape != x.shape:
        raise SchemaError("measurement and estimate cover different category sets")
    if not 0.0 <= alpha <= 1.0:
        raise PreconditionError("alpha must lie in [0, 1]")
    return alpha * z + (1.0 - alpha) * x


def transfer_matrix(x_cur, x_prev) -> np.ndarray:
    """Minimum-norm ``Omega`` with ``Omega @ x_prev == x_cur``.

    Uses the vector pseudoinverse ``x_prev.T / (x_prev . x_prev)``, so only
    ``pinv(x_prev) @ x_prev == 1`` holds, not the outer-product identity.
    """
    cur, prev = _vec(x_cur), _vec(x_prev)
    norm_sq = float(np.dot(prev, prev))
    if norm_sq == 0.0:
        raise DegenerateStateError("previous estimate is the zero vector")
    return np.outer(cur, prev / norm_sq)


@dataclass
class BehaviorFilterState:
    estimate: ClassPosterior
    alpha: float = 0.5
    C: np.ndarray = field(default_factory=connection_matrix)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise PreconditionError("alpha must lie in [0, 1]")
        n = len(self.estimate)
        if self.C.shape != (n, n):
            raise SchemaError("connection matrix does not match the category set")

    @classmethod
    def initial(cls, labels=BEHAVIOURS, alpha: float = 0.5,
                C: Optional[np.ndarray] = None) -> "BehaviorFilterState":
        """Cold start from the uniform distribution."""
        if C is None:
            C = connection_matrix(labels)
        return cls(ClassPosterior.uniform(labels), alpha, C)


def connectivity_step(state: BehaviorFilterState, z_k: ClassPosterior) -> ClassPosterior:
    """Advance the filter by one epoch, updating ``state`` in place."""
    if tuple(z_k.labels) != tuple(state.estimate.labels):
        raise SchemaError("measurement labels differ from the filter's category set")
    prev = state.estimate.probs
    blended = smooth(z_k.probs, prev, state.alpha)
    omega = transfer_matrix(blended, prev)
    masked = (omega * state.C) @ prev
    total = masked.sum()
    if not total > 0:
        raise DegenerateStateError("connectivity update removed all probability mass")
    state.estimate = ClassPosterior(state.estimate.labels, masked / total)
    return state.estimate


def stationary_probability(x: ClassPosterior) -> float:
    return float(sum(x[c] for c in STATIONARY_BEHAVIOURS if c in x.labels))


@dataclass(frozen=True)
class BehaviorModels:
    """The three classifiers of the hierarchy."""

    human_vehicle: Optional[ProbabilisticClassifier]
    human_activity: Optional[ProbabilisticClassifier]
    vehicle_motion: Optional[ProbabilisticClassifier]

    def check(self):
        for role, model in ((HUMAN_VEHICLE, self.human_vehicle),
                            (HUMAN_ACTIVITY, self.human_activity),
                            (VEHICLE_MOTION, self.vehicle_motion)):
            if model is None:
                raise ConfigurationError(f"no model loaded for {role}")
            if tuple(model.feature_names) != ROLE_SCHEMAS[role]:
                raise SchemaError(f"{role} model was trained on a different feature schema")


def _reorder(probs: np.ndarray, have, want) -> np.ndarray:
    try:
        idx = [list(have).index(c) for c in want]
    except ValueError as exc:
        raise SchemaError(f"classifier does not cover category {exc}") from None
    return probs[:, idx]


def hierarchical_proba(rows: Mapping[str, np.ndarray], models: BehaviorModels,
                       routing: str = "soft") -> np.ndarray:
    """Batch version of :func:`hierarchical_classify` over feature matrices by role."""
    models.check()
    branch = _reorder(models.human_vehicle.predict_proba(rows[HUMAN_VEHICLE]),
                      models.human_vehicle.classes, BRANCHES)
    if routing == "hard":
        hard = np.zeros_like(branch)
        hard[np.arange(len(branch)), np.argmax(branch, axis=1)] = 1.0
        branch = hard
    elif routing != "soft":
        raise PreconditionError(f"unknown routing mode {routing!r}")
    human = _reorder(models.human_activity.predict_proba(rows[HUMAN_ACTIVITY]),
                     models.human_activity.classes, HUMAN_BEHAVIOURS)
    vehicle = _reorder(models.vehicle_motion.predict_proba(rows[VEHICLE_MOTION]),
                       models.vehicle_motion.classes, VEHICLE_BEHAVIOURS)
    out = np.hstack([branch[:, :1] * human, branch[:, 1:] * vehicle])
    return out / out.sum(axis=1, keepdims=True)


def hierarchical_classify(window_features: Mapping[str, object], models: BehaviorModels,
                          routing: str = "soft") -> ClassPosterior:
    """Nine-way posterior ``p(branch) * p(category | branch)``."""
    rows = {}
    for role in (HUMAN_VEHICLE, HUMAN_ACTIVITY, VEHICLE_MOTION):
        if role not in window_features:
            raise ConfigurationError(f"missing {role} features")
        fv = window_features[role]
        rows[role] = np.atleast_2d(np.asarray(getattr(fv, "values", fv), dtype=float))
    return ClassPosterior(BEHAVIOURS, hierarchical_proba(rows, models, routing)[0])


def filter_stream(measurements, alpha: float = 0.5,
                  C: Optional[np.ndarray] = None) -> list[ClassPosterior]:
    """Run the connectivity filter over a sequence of posteriors from a cold start."""
    measurements = list(measurements)
    if not measurements:
        return []
    state = BehaviorFilterState.initial(measurements[0].labels, alpha, C)
    return [connectivity_step(state, z) for z in measurements]
