"""Training and running the full context pipeline.

Per output second the pipeline produces the raw and connectivity-filtered
behaviour posteriors, the stationarity probability, and the raw and
HMM-filtered environment posteriors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .behavior import (BehaviorFilterState, BehaviorModels, connectivity_step,
                       hierarchical_proba, stationary_probability)
from .categories import (BEHAVIOURS, BRANCHES, ENVIRONMENTS, HUMAN_BEHAVIOURS,
                         VEHICLE_BEHAVIOURS, VEHICLE_ENVIRONMENTS, ClassPosterior, branch_of,
                         grouped)
from .config import PipelineConfig
from .environment import (AUTO, PEDESTRIAN, VEHICLE, EnvironmentModels, HmmParams,
                          ModeSelector, detect_environment_sequence)
from .errors import AlignmentError, ConfigurationError, PreconditionError, TrainingError
from .features import (BEHAVIOUR_ROLES, ENVIRONMENT, ENVIRONMENT_VEHICLE, HUMAN_ACTIVITY,
                       HUMAN_VEHICLE, ROLE_SCHEMAS, VEHICLE_MOTION, gnss_features,
                       window_feature_table)
from .ingest import GnssEpoch, GnssEpochSeries, SensorStream, Window, segment
from .learn import train_ensemble, train_tree
from .modelfile import MODEL_CONSTANTS, ModelBundle


@dataclass(frozen=True)
class TrainingData:
    windows: tuple[Window, ...]
    epochs: tuple[tuple[GnssEpoch, str], ...]

    @classmethod
    def from_scenarios(cls, scenarios: Iterable, config: PipelineConfig = PipelineConfig()):
        """Pure behaviour windows and truth-labelled epochs from synthetic scenarios."""
        from .synth import pure_windows
        windows, epochs = [], []
        for sc in scenarios:
            windows += pure_windows(sc, config.window_s, config.train_overlap)
            epochs += label_epochs(sc.gnss, sc.truth)
        return cls(tuple(windows), tuple(epochs))

    @classmethod
    def from_logs(cls, imu: SensorStream, gnss: GnssEpochSeries, truth,
                  config: PipelineConfig = PipelineConfig()):
        from .synth import label_windows
        windows = label_windows(segment(imu, config.window_s, config.train_overlap), truth)
        return cls(tuple(windows), tuple(label_epochs(gnss, truth)))

    def __add__(self, other: "TrainingData") -> "TrainingData":
        return TrainingData(self.windows + other.windows, self.epochs + other.epochs)


def label_epochs(series: GnssEpochSeries, truth, tol: float = 0.5):
    """Pair each epoch with the truth environment of the same second."""
    times = np.array([r[0] for r in truth], dtype=float)
    out = []
    for epoch in series:
        k = int(np.argmin(np.abs(times - epoch.t))) if times.size else -1
        if k < 0 or abs(times[k] - epoch.t) > tol:
            raise AlignmentError(f"GNSS epoch t={epoch.t} has no truth row within {tol} s")
        out.append((epoch, truth[k][2]))
    return out


def _split(labels: Sequence[str], fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    test = np.zeros(len(labels), dtype=bool)
    for c in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == c)
        n_test = int(round(fraction * len(members)))
        test[rng.permutation(members)[:n_test]] = True
    return ~test, test


def _require(labels, classes, what):
    missing = [c for c in classes if c not in set(labels)]
    if missing:
        raise TrainingError(f"training corpus has no {what} examples for: {', '.join(missing)}")


def _accuracy(model, X, y) -> Optional[float]:
    if len(y) == 0:
        return None
    return float(np.mean(np.array(model.predict(X)) == np.asarray(y)))


def train_models(data: TrainingData, config: PipelineConfig = PipelineConfig()) -> ModelBundle:
    """Fit every classifier of the hierarchy and both environment models.

    A stratified ``holdout_fraction`` of windows and epochs is kept out of
    training and used only for the accuracies in ``bundle.report``.
    """
    blabels = [w.label for w in data.windows]
    elabels = [e for _, e in data.epochs]
    _require(blabels, BEHAVIOURS, "behaviour")
    _require(elabels, ENVIRONMENTS, "environment")
    seeds = np.random.SeedSequence(config.seed).generate_state(8)
    rng = np.random.default_rng(int(seeds[0]))
    kernel = config.kernel_spec()

    tables = [window_feature_table(w) for w in data.windows]
    F = {role: np.array([[t[k] for k in ROLE_SCHEMAS[role]] for t in tables])
         for role in BEHAVIOUR_ROLES}
    y = np.array(blabels)
    fit, test = _split(blabels, config.holdout_fraction, rng)
    branch = np.array([branch_of(c) for c in blabels])
    human = np.isin(y, HUMAN_BEHAVIOURS)
    report = {}

    tree = train_tree(F[HUMAN_VEHICLE][fit], branch[fit], BRANCHES, ROLE_SCHEMAS[HUMAN_VEHICLE],
                      config.tree_max_depth, config.tree_min_leaf)
    report[HUMAN_VEHICLE] = _accuracy(tree, F[HUMAN_VEHICLE][test], branch[test])

    activity = train_ensemble(F[HUMAN_ACTIVITY][fit & human], y[fit & human], HUMAN_BEHAVIOURS,
                              ROLE_SCHEMAS[HUMAN_ACTIVITY], kernel, config.beta,
                              config.calibration, seed=int(seeds[1]))
    report[HUMAN_ACTIVITY] = _accuracy(activity, F[HUMAN_ACTIVITY][test & human],
                                       y[test & human])
    motion = train_ensemble(F[VEHICLE_MOTION][fit & ~human], y[fit & ~human],
                            VEHICLE_BEHAVIOURS, ROLE_SCHEMAS[VEHICLE_MOTION], kernel,
                            config.beta, config.calibration, seed=int(seeds[2]))
    report[VEHICLE_MOTION] = _accuracy(motion, F[VEHICLE_MOTION][test & ~human],
                                       y[test & ~human])
    behavior = BehaviorModels(tree, activity, motion)
    if test.any():
        rows = {role: F[role][test] for role in BEHAVIOUR_ROLES}
        P = hierarchical_proba(rows, behavior, config.routing)
        report["behavior"] = float(np.mean(np.array(BEHAVIOURS)[np.argmax(P, axis=1)] == y[test]))

    E3 = np.array([gnss_features(e, config.cn0_threshold, ENVIRONMENT).values
                   for e, _ in data.epochs])
    ey = np.array(elabels)
    efit, etest = _split(elabels, config.holdout_fraction, rng)
    env = train_ensemble(E3[efit], ey[efit], ENVIRONMENTS, ROLE_SCHEMAS[ENVIRONMENT], kernel,
                         config.beta, config.calibration, seed=int(seeds[3]))
    report[ENVIRONMENT] = _accuracy(env, E3[etest], ey[etest])
    two = np.isin(ey, VEHICLE_ENVIRONMENTS)
    E2 = E3[:, :2]
    env2 = train_ensemble(E2[efit & two], ey[efit & two], VEHICLE_ENVIRONMENTS,
                          ROLE_SCHEMAS[ENVIRONMENT_VEHICLE], kernel, config.beta,
                          config.calibration, seed=int(seeds[4]))
    report[ENVIRONMENT_VEHICLE] = _accuracy(env2, E2[etest & two], ey[etest & two])

    environment = EnvironmentModels(env, env2, config.pedestrian_hmm(), HmmParams.vehicle())
    constants = {k: getattr(config, k) for k in MODEL_CONSTANTS}
    constants.update(seed=config.seed, kernel=kernel.kind, gamma=kernel.gamma, beta=config.beta,
                     calibration=config.calibration, n_windows=len(data.windows),
                     n_epochs=len(data.epochs))
    return ModelBundle(behavior, environment, constants, report)


# --------------------------------------------------------------------------
# Running


@dataclass(frozen=True, eq=False)
class BehaviorStep:
    t: float
    raw: ClassPosterior
    filtered: ClassPosterior

    @property
    def p_stat(self) -> float:
        return stationary_probability(self.filtered)


def behaviour_track(stream: SensorStream, models: BehaviorModels,
                    config: PipelineConfig = PipelineConfig()) -> list[BehaviorStep]:
    """Classify every window and run the connectivity filter at the output clock.

    Each step is stamped ``window start + window length - stride``, the
    start of the last full second the window covers.
    """
    models.check()
    windows = segment(stream, config.window_s, config.overlap)
    if not windows:
        return []
    tables = [window_feature_table(w) for w in windows]
    rows = {role: np.array([[t[k] for k in ROLE_SCHEMAS[role]] for t in tables])
            for role in BEHAVIOUR_ROLES}
    P = hierarchical_proba(rows, models, config.routing)
    state = BehaviorFilterState.initial(BEHAVIOURS, config.alpha)
    lag = config.window_s - config.stride_s
    out = []
    for w, p in zip(windows, P):
        z = ClassPosterior(BEHAVIOURS, p)
        out.append(BehaviorStep(round(w.start_t + lag, 9), z, connectivity_step(state, z)))
    return out


def _epoch_index(times: np.ndarray, t: float, tol: float = 0.5) -> int:
    k = int(np.argmin(np.abs(times - t))) if times.size else -1
    if k < 0 or abs(times[k] - t) > tol:
        raise AlignmentError(f"no GNSS epoch within {tol} s of output time t={t:.3f}")
    return k


def _epoch_modes(mode: str, times: np.ndarray, steps: list[BehaviorStep], hysteresis: int,
                 match: dict) -> list[str]:
    if mode != AUTO:
        return [mode] * len(times)
    if not steps:
        return [PEDESTRIAN] * len(times)
    observed = [None] * len(times)
    for k, i in match.items():
        observed[k] = (PEDESTRIAN if steps[i].filtered.aggregate(
            {c: branch_of(c) for c in BEHAVIOURS}, BRANCHES).argmax == "human" else VEHICLE)
    first = next(o for o in observed if o is not None)
    selector = ModeSelector(hysteresis)
    modes, last = [], first
    for o in observed:
        last = o if o is not None else last
        modes.append(selector.update(last))
    return modes


def _posterior_json(p: ClassPosterior) -> dict:
    return p.as_dict()


def run_pipeline(models: ModelBundle, config: PipelineConfig = PipelineConfig(),
                 imu: Optional[SensorStream] = None,
                 gnss: Optional[GnssEpochSeries] = None) -> list[dict]:
    """Produce one JSON-ready record per output second.

    With an IMU log records follow the behaviour clock and each must find a
    GNSS epoch within 0.5 s; GNSS epochs without a behaviour record run the
    general transition matrix. Without an IMU log records follow the GNSS
    epochs with ``p_stat`` absent.
    """
    if imu is None and gnss is None:
        raise PreconditionError("at least one of the IMU and GNSS logs is required")
    models.check_config(config)
    steps = behaviour_track(imu, models.behavior, config) if imu is not None else []

    env_steps = None
    match = {}
    if gnss is not None and len(gnss):
        times = gnss.times
        for i, s in enumerate(steps):
            match[_epoch_index(times, s.t)] = i
        modes = _epoch_modes(config.mode, times, steps, config.hysteresis, match)
        if VEHICLE in modes and models.environment.vehicle is None:
            raise ConfigurationError("model file has no vehicle-mode environment model")
        p_stat = [(steps[i].t, steps[i].p_stat) for i in sorted(match.values())]
        track = detect_environment_sequence(gnss, models.environment, p_stat=p_stat or None,
                                            modes=modes, cn0_threshold=config.cn0_threshold)
        env_steps = track.steps
    elif steps and gnss is not None:
        raise AlignmentError("GNSS log holds no epochs to align with")

    def env_json(k):
        if env_steps is None:
            return None
        e = env_steps[k]
        return {"mode": e.mode, "raw": _posterior_json(e.posterior),
                "raw_label": e.posterior.argmax, "emission": _posterior_json(e.emission),
                "belief": _posterior_json(e.belief), "label": e.belief.argmax,
                "p_stat": e.p_stat,
                "transition": None if e.transition is None else e.transition.tolist()}

    records = []
    if steps:
        inverse = {i: k for k, i in match.items()}
        for i, s in enumerate(steps):
            records.append({
                "t": s.t,
                "behavior": {"raw": _posterior_json(s.raw), "raw_label": s.raw.argmax,
                             "filtered": _posterior_json(s.filtered), "label": s.filtered.argmax,
                             "groups": _posterior_json(grouped(s.filtered)),
                             "group": grouped(s.filtered).argmax},
                "p_stat": s.p_stat,
                "environment": env_json(inverse[i]) if env_steps is not None else None,
            })
    elif env_steps is not None:
        for k, e in enumerate(env_steps):
            records.append({"t": e.t, "behavior": None, "p_stat": None,
                            "environment": env_json(k)})
    return records


def dumps_records(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, allow_nan=False) + "\n" for r in records)


def write_records(records: Iterable[dict], sink) -> None:
    text = dumps_records(records)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def read_records(source) -> list[dict]:
    from .errors import FormatError
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise FormatError(f"cannot read {source}: {exc}") from None
    out = []
    for k, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"record line {k} is not JSON: {exc}") from None
        if not isinstance(rec, dict) or "t" not in rec:
            raise FormatError(f"record line {k} lacks a timestamp")
        out.append(rec)
    return out
