"""GNSS environment detection: SVM posteriors smoothed by a first-order HMM.

Transition matrices are column-stochastic, ``A[next, prev]``. The
stationarity probability from the behaviour filter pulls the transition
matrix towards the identity, since a stationary user cannot change
environment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .categories import ENVIRONMENTS, VEHICLE_ENVIRONMENTS, ClassPosterior
from .errors import AlignmentError, ConfigurationError, DegenerateStateError, PreconditionError
from .features import DEFAULT_CN0_THRESHOLD, ENVIRONMENT, ENVIRONMENT_VEHICLE, gnss_features
from .ingest import GnssEpochSeries

PROB_FLOOR = 1e-9
ALIGN_TOL = 0.5

PEDESTRIAN = "pedestrian"
VEHICLE = "vehicle"
AUTO = "auto"

EnvironmentBelief = ClassPosterior

TABLE6 = np.array([
    # prev: Indoor, Intermediate, Outdoor
    [2 / 3, 1 / 3, 0.0],    # next Indoor
    [1 / 3, 1 / 3, 1 / 3],  # next Intermediate
    [0.0, 1 / 3, 2 / 3],    # next Outdoor
])


@dataclass(frozen=True, eq=False)
class HmmParams:
    states: tuple[str, ...]
    initial: np.ndarray
    transition: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        n = len(self.states)
        if self.initial.shape != (n,) or self.priors.shape != (n,):
            raise PreconditionError("initial and prior vectors must have one entry per state")
        if self.transition.shape != (n, n):
            raise PreconditionError("transition matrix must be square over the states")
        for name, vec in (("initial", self.initial), ("priors", self.priors)):
            if abs(vec.sum() - 1.0) > 1e-9 or np.any(vec < 0):
                raise PreconditionError(f"{name} must be a probability vector")
        if np.any(self.transition < 0) or np.any(np.abs(self.transition.sum(axis=0) - 1) > 1e-9):
            raise PreconditionError("transition columns must each sum to 1")

    @classmethod
    def pedestrian(cls) -> "HmmParams":
        return cls(ENVIRONMENTS, np.array([0.4, 0.2, 0.4]), TABLE6.copy(),
                   np.array([0.4, 0.2, 0.4]))

    @classmethod
    def vehicle(cls) -> "HmmParams":
        # Intermediate mass of the pedestrian table folded back proportionally
        return cls(VEHICLE_ENVIRONMENTS, np.array([0.5, 0.5]),
                   np.array([[2 / 3, 1 / 3], [1 / 3, 2 / 3]]), np.array([0.5, 0.5]))

    def to_dict(self):
        return {"states": list(self.states), "initial": self.initial.tolist(),
                "transition": self.transition.tolist(), "priors": self.priors.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["states"]), np.asarray(d["initial"], dtype=float),
                   np.asarray(d["transition"], dtype=float),
                   np.asarray(d["priors"], dtype=float))


def _vec(x):
    return x.probs if isinstance(x, ClassPosterior) else np.asarray(x, dtype=float)


def emission_from_posterior(posterior, priors) -> np.ndarray:
    """Normalized emission weights ``P(S|x) / P(S)`` with a 1e-9 floor."""
    post = np.maximum(_vec(posterior), PROB_FLOOR)
    pri = np.maximum(np.asarray(priors, dtype=float), PROB_FLOOR)
    if post.shape != pri.shape:
        raise PreconditionError("posterior and priors differ in length")
    w = post / pri
    return w / w.sum()


def associated_transition(p_stat: float, A0) -> np.ndarray:
    """``p_stat * I + (1 - p_stat) * A0``."""
    if not 0.0 <= p_stat <= 1.0:
        raise PreconditionError("p_stat must lie in [0, 1]")
    A0 = np.asarray(A0, dtype=float)
    return p_stat * np.eye(len(A0)) + (1.0 - p_stat) * A0


def _normalize(w, states):
    total = w.sum()
    if not total > 0:
        raise DegenerateStateError("environment belief lost all probability mass")
    return ClassPosterior(tuple(states), w / total)


def hmm_initial(emission, initial, states=ENVIRONMENTS) -> EnvironmentBelief:
    return _normalize(_vec(emission) * np.asarray(initial, dtype=float), states)


def hmm_forward_step(belief, emission, A) -> EnvironmentBelief:
    """``b'(j) ~ e(j) * sum_i A[j, i] b(i)``."""
    states = belief.labels if isinstance(belief, ClassPosterior) else ENVIRONMENTS
    predicted = np.asarray(A, dtype=float) @ _vec(belief)
    return _normalize(_vec(emission) * predicted, states)


def _transition_at(A, k):
    A = A if isinstance(A, (list, tuple)) else np.asarray(A, dtype=float)
    if isinstance(A, np.ndarray) and A.ndim == 2:
        return A
    return np.asarray(A[k - 1], dtype=float)


def forward_filter(emissions, initial, A, states=None) -> list[EnvironmentBelief]:
    """Filtered marginals for every epoch.

    ``A`` is either one matrix or a sequence whose element ``k - 1`` moves
    epoch ``k - 1`` to epoch ``k``.
    """
    E = np.atleast_2d(np.asarray(emissions, dtype=float))
    if states is None:
        states = ENVIRONMENTS if E.shape[1] == 3 else tuple(str(i) for i in range(E.shape[1]))
    beliefs = [hmm_initial(E[0], initial, states)]
    for k in range(1, len(E)):
        beliefs.append(hmm_forward_step(beliefs[-1], E[k], _transition_at(A, k)))
    return beliefs


def viterbi_decode(emissions, initial, A) -> list[int]:
    """Most probable state path (log domain, ties to the lower state index).

    Zero transition entries stay forbidden (log 0 = -inf).
    """
    E = np.atleast_2d(np.asarray(emissions, dtype=float))
    if E.shape[0] == 0:
        raise PreconditionError("empty emission sequence")
    with np.errstate(divide="ignore"):
        logE = np.log(E)
        delta = np.log(np.asarray(initial, dtype=float)) + logE[0]
        back = []
        for k in range(1, len(E)):
            logA = np.log(_transition_at(A, k))
            cand = logA + delta[None, :]  # [next, prev]
            arg = np.argmax(cand, axis=1)
            back.append(arg)
            delta = cand[np.arange(len(arg)), arg] + logE[k]
    path = [int(np.argmax(delta))]
    for arg in reversed(back):
        path.append(int(arg[path[-1]]))
    return path[::-1]


def align_p_stat(epoch_times: np.ndarray, p_stat, tol: float = ALIGN_TOL) -> np.ndarray:
    """Map ``(t, p)`` behaviour samples onto epochs; unmatched epochs get 0.

    Raises
    ------
    AlignmentError
        A behaviour sample has no epoch within ``tol`` seconds.
    """
    out = np.zeros(len(epoch_times))
    if p_stat is None:
        return out
    times = np.asarray(epoch_times, dtype=float)
    for t, p in p_stat:
        if times.size == 0:
            raise AlignmentError(f"behaviour sample at t={t} but no GNSS epochs")
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol:
            raise AlignmentError(
                f"behaviour sample at t={t:.3f} s has no GNSS epoch within {tol} s")
        out[k] = p
    return out


class ModeSelector:
    """Follows the behaviour branch, switching only after ``hysteresis`` agreeing epochs."""

    def __init__(self, hysteresis: int = 5, initial: Optional[str] = None):
        self.hysteresis = hysteresis
        self.mode = initial
        self._streak = 0

    def update(self, observed: str) -> str:
        if self.mode is None:
            self.mode = observed
        elif observed != self.mode:
            self._streak += 1
            if self._streak >= self.hysteresis:
                self.mode = observed
                self._streak = 0
        else:
            self._streak = 0
        return self.mode


@dataclass(frozen=True)
class EnvironmentModels:
    """Environment classifiers per mode; the vehicle one is optional."""

    pedestrian: object
    vehicle: Optional[object] = None
    pedestrian_hmm: HmmParams = field(default_factory=HmmParams.pedestrian)
    vehicle_hmm: HmmParams = field(default_factory=HmmParams.vehicle)

    def classifier(self, mode):
        model = self.pedestrian if mode == PEDESTRIAN else self.vehicle
        if model is None:
            raise ConfigurationError(f"no environment model for {mode} mode")
        return model

    def hmm(self, mode) -> HmmParams:
        return self.pedestrian_hmm if mode == PEDESTRIAN else self.vehicle_hmm


@dataclass(frozen=True, eq=False)
class EnvironmentStep:
    t: float
    mode: str
    posterior: ClassPosterior
    emission: ClassPosterior
    belief: ClassPosterior
    p_stat: float
    transition: Optional[np.ndarray]


@dataclass(frozen=True)
class EnvironmentTrack:
    steps: tuple[EnvironmentStep, ...]
    path: Optional[tuple[str, ...]] = None

    def __len__(self):
        return len(self.steps)

    def labels(self) -> list[str]:
        return [s.belief.argmax for s in self.steps]

    def raw_labels(self) -> list[str]:
        return [s.posterior.argmax for s in self.steps]


def _convert_belief(belief: ClassPosterior, states) -> np.ndarray:
    if tuple(states) == VEHICLE_ENVIRONMENTS:
        mid = belief["Intermediate"] / 2.0 if "Intermediate" in belief.labels else 0.0
        return np.array([belief["Indoor"] + mid, belief["Outdoor"] + mid])
    return np.array([belief[s] if s in belief.labels else 0.0 for s in states])


def _reorder_posterior(probs, have, want):
    return np.array([probs[list(have).index(s)] for s in want])


def detect_environment_sequence(epochs: GnssEpochSeries, models,
                                hmm: Optional[HmmParams] = None,
                                p_stat=None, modes: Optional[Sequence[str]] = None,
                                cn0_threshold: float = DEFAULT_CN0_THRESHOLD,
                                decode: bool = False) -> EnvironmentTrack:
    """Classify and filter a GNSS epoch series.

    Parameters
    ----------
    models : EnvironmentModels or a single probabilistic classifier
        A bare classifier runs in one mode, picked from its class count.
    p_stat : sequence of (t, p), optional
        Stationarity samples matched to epochs within 0.5 s; epochs without
        one use the unmodified transition matrix.
    modes : sequence of str, optional
        Per-epoch ``'pedestrian'`` / ``'vehicle'``; default pedestrian.
    decode : bool
        Also return the Viterbi path for each run of constant mode.
    """
    if not isinstance(models, EnvironmentModels):
        if len(models.classes) == 2:
            models = EnvironmentModels(pedestrian=None, vehicle=models)
            default_mode = VEHICLE
        else:
            models = EnvironmentModels(pedestrian=models)
            default_mode = PEDESTRIAN
    else:
        default_mode = PEDESTRIAN
    if hmm is not None:
        models = EnvironmentModels(models.pedestrian, models.vehicle, hmm, hmm)
    n = len(epochs)
    modes = list(modes) if modes is not None else [default_mode] * n
    if len(modes) != n:
        raise PreconditionError("one mode per epoch required")
    stat = align_p_stat(epochs.times, p_stat)

    posteriors = {}
    for mode in set(modes):
        clf = models.classifier(mode)
        role = ENVIRONMENT if mode == PEDESTRIAN else ENVIRONMENT_VEHICLE
        sel = [k for k in range(n) if modes[k] == mode]
        X = np.vstack([gnss_features(epochs[k], cn0_threshold, role).values for k in sel])
        states = models.hmm(mode).states
        P = clf.predict_proba(X)
        for row, k in zip(P, sel):
            posteriors[k] = ClassPosterior(states, _reorder_posterior(row, clf.classes, states))

    steps = []
    belief = None
    for k in range(n):
        mode = modes[k]
        params = models.hmm(mode)
        post = posteriors[k]
        emission = ClassPosterior(params.states, emission_from_posterior(post, params.priors))
        if belief is None:
            A = None
            belief = hmm_initial(emission.probs, params.initial, params.states)
        else:
            if belief.labels != params.states:
                belief = ClassPosterior.normalized(params.states,
                                                   _convert_belief(belief, params.states))
            A = associated_transition(float(stat[k]), params.transition)
            belief = hmm_forward_step(belief, emission.probs, A)
        steps.append(EnvironmentStep(float(epochs[k].t), mode, post, emission, belief,
                                     float(stat[k]), A))

    path = None
    if decode and n:
        path = []
        start = 0
        for k in range(1, n + 1):
            if k == n or modes[k] != modes[start]:
                params = models.hmm(modes[start])
                E = np.array([s.emission.probs for s in steps[start:k]])
                As = [steps[i].transition for i in range(start + 1, k)]
                idx = viterbi_decode(E, params.initial, As if As else params.transition)
                path.extend(params.states[i] for i in idx)
                start = k
        path = tuple(path)
    return EnvironmentTrack(tuple(steps), path)
