"""Scoring a run's argmax labels against a truth timeline at 1 Hz."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .categories import BEHAVIOURS, CATEGORY_GROUP, ENVIRONMENTS, GROUPS
from .errors import AlignmentError, PreconditionError

ALIGN_TOL = 0.5


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Confusion rows are truth labels, columns are predictions."""

    classes: tuple[str, ...]
    confusion: np.ndarray
    accuracy: float
    precision: dict
    recall: dict
    mean_delay: Optional[float]
    delays: tuple[int, ...]

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "confusion": self.confusion.tolist(),
                "accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
                "mean_delay": self.mean_delay, "delays": list(self.delays), "n": self.n}


def transition_delays(truth: Sequence[str], predicted: Sequence[str]) -> list[int]:
    """Epochs from each truth change to the first matching prediction.

    A change that is never matched before the next change (or the end)
    counts as the full length of its segment.
    """
    changes = [k for k in range(1, len(truth)) if truth[k] != truth[k - 1]]
    bounds = changes + [len(truth)]
    delays = []
    for start, stop in zip(changes, bounds[1:]):
        d = stop - start
        for k in range(start, stop):
            if predicted[k] == truth[start]:
                d = k - start
                break
        delays.append(d)
    return delays


def evaluate_labels(truth: Sequence[str], predicted: Sequence[str],
                    classes: Optional[Sequence[str]] = None) -> EvalReport:
    if len(truth) != len(predicted):
        raise PreconditionError("truth and predictions differ in length")
    if not truth:
        raise PreconditionError("nothing to evaluate")
    if classes is None:
        classes = sorted(set(truth) | set(predicted))
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    extra = (set(truth) | set(predicted)) - set(classes)
    if extra:
        raise PreconditionError(f"labels outside the class set: {sorted(extra)}")
    cm = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(truth, predicted):
        cm[index[t], index[p]] += 1
    diag = np.diag(cm)
    col, row = cm.sum(axis=0), cm.sum(axis=1)
    precision = {c: (float(diag[i] / col[i]) if col[i] else None) for i, c in enumerate(classes)}
    recall = {c: (float(diag[i] / row[i]) if row[i] else None) for i, c in enumerate(classes)}
    delays = transition_delays(list(truth), list(predicted))
    return EvalReport(classes, cm, float(diag.sum() / cm.sum()), precision, recall,
                      float(np.mean(delays)) if delays else None, tuple(delays))


def align_truth(records: Sequence[dict], truth, tol: float = ALIGN_TOL) -> list[tuple]:
    """Truth row for every record, matched on time."""
    times = np.array([r[0] for r in truth], dtype=float)
    out = []
    for rec in records:
        t = float(rec["t"])
        k = int(np.argmin(np.abs(times - t))) if times.size else -1
        if k < 0 or abs(times[k] - t) > tol:
            raise AlignmentError(f"record at t={t} has no truth row within {tol} s")
        out.append(truth[k])
    return out


def evaluate_run(records: Sequence[dict], truth) -> dict[str, EvalReport]:
    """Reports for the behaviour (9-way and grouped) and environment outputs, raw and filtered."""
    rows = align_truth(records, truth)
    reports = {}
    if records and records[0].get("behavior") is not None:
        tb = [r[1] for r in rows]
        reports["behavior"] = evaluate_labels(
            tb, [r["behavior"]["label"] for r in records], BEHAVIOURS)
        reports["behavior_raw"] = evaluate_labels(
            tb, [r["behavior"]["raw_label"] for r in records], BEHAVIOURS)
        reports["behavior_group"] = evaluate_labels(
            [CATEGORY_GROUP[c] for c in tb], [r["behavior"]["group"] for r in records], GROUPS)
    if records and records[0].get("environment") is not None:
        te = [r[2] for r in rows]
        reports["environment"] = evaluate_labels(
            te, [r["environment"]["label"] for r in records], ENVIRONMENTS)
        reports["environment_raw"] = evaluate_labels(
            te, [r["environment"]["raw_label"] for r in records], ENVIRONMENTS)
    return reports
