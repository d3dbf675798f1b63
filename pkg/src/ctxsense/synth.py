"""Seeded synthetic IMU and GNSS data per context category.

Recipes only encode the structure the detectors rely on: gait periodicity
below 4 Hz, vehicle vibration between 20 and 40 Hz, barometric ramps on
stairs, and satellite count / signal strength differences between
environments. Scripts of ``(behaviour, environment, seconds)`` segments are
stitched into aligned logs with a per-second truth timeline.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .categories import (BEHAVIOURS, CATEGORY_GROUP, ENVIRONMENTS, VEHICLE_BEHAVIOURS,
                         BehaviorCategory as B, EnvironmentClass as E)
from .behavior import connected
from .errors import CorruptInputError, FormatError, ScriptValidationError
from .ingest import (DEFAULT_RATE, GnssEpoch, GnssEpochSeries, SatelliteObs, SensorStream,
                     Window, segment, window_geometry)

GRAVITY = 9.80665
SEA_LEVEL_HPA = 1013.25
GEOMAGNETIC_UT = 48.0
TRUTH_HEADER = ("t", "behavior", "environment")
DECIMALS = 6


@dataclass(frozen=True)
class ChannelModel:
    """Scalar channel: ``offset + ramp * t + sum(amp * sin(2 pi f t + phase)) + noise``.

    ``freq_jitter`` draws one relative frequency offset per segment and
    ``amp_wobble`` slowly modulates the amplitudes, so windows of the same
    category are alike but not identical.
    """

    offset: float = 0.0
    tones: tuple[tuple[float, float], ...] = ()
    noise: float = 0.0
    ramp: float = 0.0
    freq_jitter: float = 0.03
    amp_wobble: float = 0.15

    def render(self, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = np.full(t.shape, self.offset, dtype=float) + self.ramp * (t - t[0] if t.size else t)
        wobble_f = rng.uniform(0.03, 0.08)
        for freq, amp in self.tones:
            f = freq * (1.0 + rng.uniform(-self.freq_jitter, self.freq_jitter))
            env = 1.0 + self.amp_wobble * np.sin(2 * np.pi * wobble_f * t + rng.uniform(0, 2 * np.pi))
            out += amp * env * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        if self.noise > 0:
            out += rng.normal(0.0, self.noise, t.shape)
        return out


@dataclass(frozen=True)
class SignalRecipe:
    category: str
    accel: ChannelModel
    gyro: ChannelModel
    magn: ChannelModel
    baro: ChannelModel


def _accel(*tones, noise=0.05):
    return ChannelModel(GRAVITY, tones, noise)


def _gyro(*tones, noise=0.01):
    return ChannelModel(0.0, tones, noise)


def _magn(*tones, noise=0.3):
    return ChannelModel(GEOMAGNETIC_UT, tones, noise)


def _baro(ramp=0.0, noise=0.008):
    # offset applied by the generator so the level stays continuous
    return ChannelModel(0.0, (), noise, ramp)


RECIPES: dict[str, SignalRecipe] = {
    B.STATIONARY.value: SignalRecipe(
        # slow postural sway of a hand-held phone
        B.STATIONARY.value, _accel((0.3, 0.05), noise=0.03), _gyro((0.3, 0.01), noise=0.005),
        _magn(), _baro()),
    B.WALKING.value: SignalRecipe(
        B.WALKING.value, _accel((2.0, 2.5), (4.0, 0.8), noise=0.15),
        _gyro((2.0, 0.8), (1.0, 0.3), noise=0.05), _magn((1.0, 1.5)), _baro()),
    B.RUNNING.value: SignalRecipe(
        B.RUNNING.value, _accel((2.8, 7.0), (5.6, 2.5), noise=0.4),
        _gyro((2.8, 2.0), (1.4, 0.6), noise=0.1), _magn((1.4, 3.0)), _baro()),
    B.ASCENDING_STAIRS.value: SignalRecipe(
        B.ASCENDING_STAIRS.value, _accel((1.6, 2.0), (3.2, 0.6), noise=0.15),
        _gyro((1.6, 0.6), (0.8, 0.2), noise=0.05), _magn((0.8, 1.5)), _baro(ramp=-0.04)),
    B.DESCENDING_STAIRS.value: SignalRecipe(
        B.DESCENDING_STAIRS.value, _accel((2.2, 3.2), (4.4, 1.0), noise=0.2),
        _gyro((2.2, 0.9), (1.1, 0.3), noise=0.05), _magn((1.1, 1.5)), _baro(ramp=0.045)),
    B.STATIONARY_VEHICLE.value: SignalRecipe(
        B.STATIONARY_VEHICLE.value, _accel((26.0, 0.3), (3.0, 0.05), noise=0.03),
        _gyro((26.0, 0.02), noise=0.005), _magn(noise=0.5), _baro()),
    B.DIESEL_TRAIN.value: SignalRecipe(
        B.DIESEL_TRAIN.value, _accel((32.0, 0.35), (24.0, 0.2), (0.8, 0.25), noise=0.05),
        _gyro((0.8, 0.05), (32.0, 0.02), noise=0.01), _magn((0.2, 5.0), noise=1.0),
        _baro(noise=0.015)),
    B.BUS.value: SignalRecipe(
        B.BUS.value, _accel((22.0, 0.5), (1.5, 0.3), noise=0.06),
        _gyro((1.5, 0.1), (22.0, 0.03), noise=0.01), _magn((0.3, 2.0), noise=0.8),
        _baro(noise=0.015)),
    B.UNDERGROUND_TRAIN.value: SignalRecipe(
        B.UNDERGROUND_TRAIN.value, _accel((36.0, 0.3), (0.5, 0.2), noise=0.05),
        _gyro((0.5, 0.05), (36.0, 0.02), noise=0.01), _magn((0.3, 15.0), noise=3.0),
        _baro(noise=0.02)),
}


@dataclass(frozen=True)
class GnssRecipe:
    """Satellites per epoch ~ uniform integer in ``sats``; C/N0 ~ N(mean, sd) clipped at 0."""

    environment: str
    sats: tuple[int, int]
    cn0_mean: float
    cn0_sd: float


GNSS_RECIPES: dict[str, GnssRecipe] = {
    E.OUTDOOR.value: GnssRecipe(E.OUTDOOR.value, (9, 13), 41.0, 4.0),
    E.INTERMEDIATE.value: GnssRecipe(E.INTERMEDIATE.value, (5, 9), 36.0, 5.0),
    E.INDOOR.value: GnssRecipe(E.INDOOR.value, (0, 5), 17.0, 3.0),
}


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def _orientation(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _vectorize(mag: np.ndarray, rng) -> np.ndarray:
    """Spread a magnitude series over a fixed random device orientation."""
    return np.abs(mag)[:, None] * _orientation(rng)[None, :]


@dataclass(frozen=True, eq=False)
class LabeledImu:
    stream: SensorStream
    category: str

    def windows(self, window_s: float = 4.0, overlap: float = 0.5) -> list[Window]:
        return [replace(w, label=self.category) for w in segment(self.stream, window_s, overlap)]


@dataclass(frozen=True)
class LabeledGnss:
    series: GnssEpochSeries
    environment: str


def _render_imu(recipe: SignalRecipe, t: np.ndarray, rng, baro_start: float):
    arrays = {}
    for name in ("accel", "gyro", "magn"):
        arrays[name] = np.round(_vectorize(getattr(recipe, name).render(t, rng), rng), DECIMALS)
    arrays["baro"] = np.round(baro_start + recipe.baro.render(t, rng), DECIMALS)
    return arrays


def generate_imu(recipe, duration: float, rate: float = DEFAULT_RATE, seed=0,
                 t0: float = 0.0, baro_start: float = SEA_LEVEL_HPA) -> LabeledImu:
    """Render ``duration`` seconds of one category at ``rate`` Hz."""
    if isinstance(recipe, str):
        recipe = RECIPES[recipe]
    n = int(round(duration * rate))
    if n < 1:
        raise ScriptValidationError("duration must cover at least one sample")
    k = np.arange(n)
    t = t0 + k / rate
    arrays = _render_imu(recipe, t, _rng(seed), baro_start)
    stream = SensorStream.from_arrays(np.round(t, 9), arrays["accel"], arrays["gyro"],
                                      arrays["magn"], arrays["baro"], nominal_rate=rate)
    return LabeledImu(stream, recipe.category)


def _render_epochs(recipe: GnssRecipe, times, rng) -> list[GnssEpoch]:
    epochs = []
    for t in times:
        n = int(rng.integers(recipe.sats[0], recipe.sats[1] + 1))
        prns = sorted(rng.choice(32, size=n, replace=False) + 1)
        cn0 = np.clip(rng.normal(recipe.cn0_mean, recipe.cn0_sd, n), 0.0, None)
        az = rng.uniform(0.0, 360.0, n)
        el = rng.uniform(5.0, 90.0, n)
        epochs.append(GnssEpoch(float(t), tuple(
            SatelliteObs(f"G{p:02d}", round(float(c), 2), round(float(a), 2) % 360.0,
                         round(float(e), 2))
            for p, c, a, e in zip(prns, cn0, az, el))))
    return epochs


def generate_gnss(recipe, duration: float, seed=0, t0: float = 0.0) -> LabeledGnss:
    """1 Hz epochs at ``t0, t0 + 1, ...`` for ``duration`` seconds."""
    if isinstance(recipe, str):
        recipe = GNSS_RECIPES[recipe]
    n = int(round(duration))
    if n < 1:
        raise ScriptValidationError("duration must cover at least one epoch")
    epochs = _render_epochs(recipe, t0 + np.arange(n, dtype=float), _rng(seed))
    return LabeledGnss(GnssEpochSeries(tuple(epochs)), recipe.environment)


# --------------------------------------------------------------------------
# Scenarios


@dataclass(frozen=True)
class ScriptSegment:
    behavior: str
    environment: str
    seconds: int


def _as_segment(item) -> ScriptSegment:
    if isinstance(item, ScriptSegment):
        return item
    behavior, environment, seconds = item
    return ScriptSegment(str(behavior), str(environment), seconds)


def validate_script(script: Sequence) -> list[ScriptSegment]:
    """Check categories, durations and the boundaries between segments.

    Raises
    ------
    ScriptValidationError
        Listing every offending segment or boundary.
    """
    segments = [_as_segment(s) for s in script]
    if not segments:
        raise ScriptValidationError("scenario script is empty")
    problems = []
    start = 0
    for k, seg in enumerate(segments):
        if seg.behavior not in BEHAVIOURS:
            problems.append(f"segment {k}: unknown behaviour {seg.behavior!r}")
        if seg.environment not in ENVIRONMENTS:
            problems.append(f"segment {k}: unknown environment {seg.environment!r}")
        elif seg.behavior in VEHICLE_BEHAVIOURS and seg.environment == E.INTERMEDIATE.value:
            problems.append(f"segment {k}: vehicle behaviour {seg.behavior} cannot be "
                            "paired with Intermediate")
        if not isinstance(seg.seconds, (int, np.integer)) or seg.seconds < 1:
            problems.append(f"segment {k}: duration must be a positive whole number of seconds")
        elif k > 0 and seg.behavior in BEHAVIOURS and segments[k - 1].behavior in BEHAVIOURS:
            prev = segments[k - 1].behavior
            if not connected(prev, seg.behavior):
                problems.append(f"boundary at t={start}s: {prev} -> {seg.behavior} is not a "
                                "plausible direct transition")
        start += int(seg.seconds) if isinstance(seg.seconds, (int, np.integer)) else 0
    if problems:
        raise ScriptValidationError("; ".join(problems))
    return segments


@dataclass(frozen=True, eq=False)
class Scenario:
    imu: SensorStream
    gnss: GnssEpochSeries
    truth: tuple[tuple[float, str, str], ...]
    segments: tuple[ScriptSegment, ...]

    @property
    def duration(self) -> int:
        return len(self.truth)

    def boundaries(self) -> list[int]:
        out, t = [], 0
        for seg in self.segments[:-1]:
            t += seg.seconds
            out.append(t)
        return out

    def write(self, directory, prefix: str = "") -> dict[str, Path]:
        """Write ``imu.csv``, ``gnss.csv`` and ``truth.csv`` into ``directory``."""
        from .ingest import write_gnss_log, write_imu_log
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {name: d / f"{prefix}{name}.csv" for name in ("imu", "gnss", "truth")}
        write_imu_log(self.imu, paths["imu"])
        write_gnss_log(self.gnss, paths["gnss"])
        write_truth(self.truth, paths["truth"])
        return paths


def generate_scenario(script: Sequence, seed=0, rate: float = DEFAULT_RATE) -> Scenario:
    """Concatenate seeded segments into aligned IMU, GNSS and truth streams."""
    segments = validate_script(script)
    children = np.random.SeedSequence(seed).spawn(len(segments))
    parts = {"t": [], "accel": [], "gyro": [], "magn": [], "baro": []}
    epochs, truth = [], []
    t0, baro = 0, SEA_LEVEL_HPA
    for seg, child in zip(segments, children):
        imu_seed, gnss_seed = child.spawn(2)
        n = int(round(seg.seconds * rate))
        t = (t0 * rate + np.arange(n)) / rate
        arrays = _render_imu(RECIPES[seg.behavior], t, _rng(imu_seed), baro)
        parts["t"].append(np.round(t, 9))
        for name in ("accel", "gyro", "magn", "baro"):
            parts[name].append(arrays[name])
        baro = float(arrays["baro"][-1]) + RECIPES[seg.behavior].baro.ramp / rate
        times = t0 + np.arange(seg.seconds, dtype=float)
        epochs.extend(_render_epochs(GNSS_RECIPES[seg.environment], times, _rng(gnss_seed)))
        truth.extend((float(s), seg.behavior, seg.environment) for s in times)
        t0 += seg.seconds
    stream = SensorStream.from_arrays(*(np.concatenate(parts[k]) for k in
                                        ("t", "accel", "gyro", "magn", "baro")),
                                      nominal_rate=rate)
    return Scenario(stream, GnssEpochSeries(tuple(epochs)), tuple(truth), tuple(segments))


def training_script(seconds_per_behaviour: int = 410) -> list[ScriptSegment]:
    """Every category, each split into three segments.

    Segment-level draws (tone frequencies, device orientation) then vary
    within the corpus. Human segments cycle through the three environments;
    each vehicle trip is preceded by an engine-on stop.
    """
    s = seconds_per_behaviour
    third = [s // 3 + (1 if k < s % 3 else 0) for k in range(3)]
    out = []
    for cat in (B.STATIONARY, B.WALKING, B.RUNNING, B.ASCENDING_STAIRS, B.DESCENDING_STAIRS):
        for env, secs in zip(ENVIRONMENTS, third):
            out.append(ScriptSegment(cat.value, env, secs))
    v = B.STATIONARY_VEHICLE.value
    # nine stops; 4 s extra each covers the windows lost at segment edges
    v_part = -(-s // 9) + 4
    trips = ((B.UNDERGROUND_TRAIN, E.INDOOR), (B.DIESEL_TRAIN, E.OUTDOOR), (B.BUS, E.OUTDOOR))
    for k in range(3):
        for n, (cat, env) in enumerate(trips):
            stop_env = E.INDOOR if (k + n) % 2 == 0 else E.OUTDOOR
            out.append(ScriptSegment(v, stop_env.value, v_part))
            out.append(ScriptSegment(cat.value, env.value, third[k]))
    return out


def tour_script(seconds: int = 60) -> list[ScriptSegment]:
    """A plausible tour through all nine behaviours and three environments.

    Environment changes never coincide with leaving a vehicle, where the
    environment model itself is being switched back.
    """
    s = seconds
    seq = [
        (B.STATIONARY, E.INDOOR), (B.WALKING, E.INDOOR), (B.DESCENDING_STAIRS, E.INDOOR),
        (B.WALKING, E.INTERMEDIATE), (B.WALKING, E.OUTDOOR), (B.STATIONARY_VEHICLE, E.OUTDOOR),
        (B.BUS, E.OUTDOOR), (B.STATIONARY_VEHICLE, E.OUTDOOR), (B.WALKING, E.OUTDOOR),
        (B.RUNNING, E.OUTDOOR), (B.WALKING, E.INTERMEDIATE), (B.STATIONARY_VEHICLE, E.INDOOR),
        (B.UNDERGROUND_TRAIN, E.INDOOR), (B.STATIONARY_VEHICLE, E.OUTDOOR),
        (B.DIESEL_TRAIN, E.OUTDOOR), (B.STATIONARY_VEHICLE, E.OUTDOOR),
        (B.WALKING, E.OUTDOOR), (B.WALKING, E.INTERMEDIATE), (B.ASCENDING_STAIRS, E.INDOOR),
        (B.STATIONARY, E.INDOOR),
    ]
    return [ScriptSegment(b.value, e.value, s) for b, e in seq]


def pure_windows(scenario: Scenario, window_s: float = 4.0,
                 overlap: float = 0.5) -> list[Window]:
    """Windows lying entirely inside one behaviour, labeled with it."""
    return label_windows(segment(scenario.imu, window_s, overlap), scenario.truth)


def label_windows(windows: Iterable[Window], truth) -> list[Window]:
    """Attach the behaviour label to windows whose span has a single truth value."""
    times = np.array([r[0] for r in truth], dtype=float)
    labels = [r[1] for r in truth]
    out = []
    for w in windows:
        lo = int(np.searchsorted(times, w.start_t, side="right")) - 1
        hi = int(np.searchsorted(times, w.start_t + w.duration, side="left")) - 1
        if lo < 0 or hi >= len(labels):
            continue
        span = set(labels[lo:hi + 1])
        if len(span) == 1:
            out.append(replace(w, label=labels[lo]))
    return out


# --------------------------------------------------------------------------
# Truth CSV


def write_truth(truth, sink) -> None:
    close = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", encoding="utf-8", newline="") if close else sink
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for t, b, e in truth:
            w.writerow([repr(float(t)), b, e])
    finally:
        if close:
            fh.close()


def read_truth(source) -> list[tuple[float, str, str]]:
    close = isinstance(source, (str, os.PathLike))
    fh = open(source, "r", encoding="utf-8", newline="") if close else source
    try:
        rows = list(csv.reader(fh))
    finally:
        if close:
            fh.close()
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows:
        raise CorruptInputError("truth file is empty")
    if tuple(c.strip() for c in rows[0]) != TRUTH_HEADER:
        raise FormatError(f"truth header must be {','.join(TRUTH_HEADER)}")
    out = []
    for k, r in enumerate(rows[1:], start=2):
        if len(r) != 3:
            raise FormatError(f"truth line {k}: expected 3 fields")
        try:
            t = float(r[0])
        except ValueError:
            raise FormatError(f"truth line {k}: bad timestamp {r[0]!r}") from None
        if r[1] not in BEHAVIOURS or r[2] not in ENVIRONMENTS:
            raise FormatError(f"truth line {k}: unknown label")
        out.append((t, r[1], r[2]))
    return out
