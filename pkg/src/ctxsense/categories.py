"""Context category sets and the probability-distribution record they share."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import PreconditionError, SchemaError


class BehaviorCategory(str, enum.Enum):
    STATIONARY = "Stationary"
    WALKING = "Walking"
    RUNNING = "Running"
    ASCENDING_STAIRS = "AscendingStairs"
    DESCENDING_STAIRS = "DescendingStairs"
    STATIONARY_VEHICLE = "StationaryVehicleEngineOn"
    DIESEL_TRAIN = "MovingDieselTrain"
    BUS = "MovingBus"
    UNDERGROUND_TRAIN = "MovingUndergroundTrain"

    @property
    def group(self) -> str:
        return CATEGORY_GROUP[self.value]

    @property
    def is_human(self) -> bool:
        return self.group == "H"


class EnvironmentClass(str, enum.Enum):
    INDOOR = "Indoor"
    INTERMEDIATE = "Intermediate"
    OUTDOOR = "Outdoor"


BEHAVIOURS = tuple(c.value for c in BehaviorCategory)
HUMAN_BEHAVIOURS = BEHAVIOURS[:5]
VEHICLE_BEHAVIOURS = BEHAVIOURS[5:]
STATIONARY_BEHAVIOURS = (BehaviorCategory.STATIONARY.value,
                         BehaviorCategory.STATIONARY_VEHICLE.value)

# connectivity groups, in connection-table order
GROUPS = ("H", "V", "U", "T", "B")
CATEGORY_GROUP = {
    **{c: "H" for c in HUMAN_BEHAVIOURS},
    BehaviorCategory.STATIONARY_VEHICLE.value: "V",
    BehaviorCategory.UNDERGROUND_TRAIN.value: "U",
    BehaviorCategory.DIESEL_TRAIN.value: "T",
    BehaviorCategory.BUS.value: "B",
}
MOVING_VEHICLE_GROUPS = ("U", "T", "B")

BRANCHES = ("human", "vehicle")

ENVIRONMENTS = tuple(e.value for e in EnvironmentClass)
VEHICLE_ENVIRONMENTS = (EnvironmentClass.INDOOR.value, EnvironmentClass.OUTDOOR.value)


def branch_of(category: str) -> str:
    return "human" if CATEGORY_GROUP[category] == "H" else "vehicle"


@dataclass(frozen=True, eq=False)
class ClassPosterior:
    """A probability distribution over an ordered label set."""

    labels: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(self.labels),):
            raise SchemaError("one probability per label required")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise PreconditionError(f"not a probability distribution: {p}")
        p = np.clip(p, 0.0, 1.0)
        p.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "probs", p)

    @classmethod
    def normalized(cls, labels: Sequence[str], weights) -> "ClassPosterior":
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise PreconditionError("weights must have positive mass")
        return cls(tuple(labels), w / total)

    @classmethod
    def one_hot(cls, labels: Sequence[str], label: str) -> "ClassPosterior":
        labels = tuple(labels)
        p = np.zeros(len(labels))
        p[labels.index(label)] = 1.0
        return cls(labels, p)

    @classmethod
    def uniform(cls, labels: Sequence[str]) -> "ClassPosterior":
        return cls(tuple(labels), np.full(len(labels), 1.0 / len(labels)))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, float]) -> "ClassPosterior":
        return cls(tuple(mapping), np.array(list(mapping.values()), dtype=float))

    def __getitem__(self, label: str) -> float:
        return float(self.probs[self.labels.index(label)])

    def __len__(self):
        return len(self.labels)

    @property
    def argmax(self) -> str:
        return self.labels[int(np.argmax(self.probs))]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.probs.tolist()))

    def aggregate(self, mapping: Mapping[str, str], targets: Iterable[str]) -> "ClassPosterior":
        """Sum probabilities into coarser labels (e.g. connectivity groups)."""
        targets = tuple(targets)
        out = np.zeros(len(targets))
        for label, p in zip(self.labels, self.probs):
            out[targets.index(mapping[label])] += p
        return ClassPosterior(targets, out / out.sum())


def grouped(posterior: ClassPosterior) -> ClassPosterior:
    """Five-way connectivity-group view of a nine-way behaviour posterior."""
    return posterior.aggregate(CATEGORY_GROUP, GROUPS)
