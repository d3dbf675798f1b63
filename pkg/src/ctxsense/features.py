"""Time-domain, frequency-domain and GNSS features.

Behaviour features are identified as ``F1`` .. ``F36``:

======  ==========================================================
F1-F4   range of accel, gyro, magn magnitudes and of pressure
F5-F8   population standard deviation, same channel order
F9-F12  skewness
F13-16  kurtosis (raw, no -3 correction)
F17     zero-crossing rate of the demeaned accel magnitude
F18/19  largest spectral magnitude of demeaned accel / gyro
F20/21  frequency in Hz of the F18 / F19 peaks
F22-26  accel peak magnitude per sub-band
F27-31  gyro peak magnitude per sub-band
F32-36  summed accel PSD per sub-band
======  ==========================================================

Spectra are one-sided, rectangular-window DFTs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import PreconditionError, SchemaError
from .ingest import GnssEpoch, Window

HUMAN_VEHICLE = "human_vehicle"
HUMAN_ACTIVITY = "human_activity"
VEHICLE_MOTION = "vehicle_motion"
ENVIRONMENT = "environment"
ENVIRONMENT_VEHICLE = "environment_vehicle"

DEFAULT_BANDS = ((0.0, 10.0), (10.0, 20.0), (20.0, 30.0), (30.0, 40.0), (40.0, 50.0))
DEFAULT_CN0_THRESHOLD = 25.0

CHANNELS = ("acc", "gyro", "magn", "baro")
FEATURE_DESCRIPTIONS = {}
for _k, (_stat, _base) in enumerate(
        [("range", 1), ("std", 5), ("skewness", 9), ("kurtosis", 13)]):
    for _c, _ch in enumerate(CHANNELS):
        FEATURE_DESCRIPTIONS[f"F{_base + _c}"] = f"{_stat}_{_ch}"
FEATURE_DESCRIPTIONS.update({
    "F17": "zcr_acc",
    "F18": "peak_mag_acc",
    "F19": "peak_mag_gyro",
    "F20": "peak_freq_acc",
    "F21": "peak_freq_gyro",
})
for _b in range(5):
    FEATURE_DESCRIPTIONS[f"F{22 + _b}"] = f"band{_b}_peak_acc"
    FEATURE_DESCRIPTIONS[f"F{27 + _b}"] = f"band{_b}_peak_gyro"
    FEATURE_DESCRIPTIONS[f"F{32 + _b}"] = f"band{_b}_psd_acc"


def _ids(*spans):
    out = []
    for lo, hi in spans:
        out.extend(f"F{i}" for i in range(lo, hi + 1))
    return tuple(out)


ROLE_SCHEMAS = {
    HUMAN_VEHICLE: _ids((1, 16), (18, 21)),
    HUMAN_ACTIVITY: _ids((1, 21)),
    VEHICLE_MOTION: _ids((1, 16), (22, 36)),
    ENVIRONMENT: ("numSats", "sumCNR", "sumCNR25"),
    ENVIRONMENT_VEHICLE: ("numSats", "sumCNR"),
}
BEHAVIOUR_ROLES = (HUMAN_VEHICLE, HUMAN_ACTIVITY, VEHICLE_MOTION)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Named feature values for one classifier role."""

    role: str
    values: np.ndarray

    def __post_init__(self):
        if self.role not in ROLE_SCHEMAS:
            raise SchemaError(f"unknown classifier role {self.role!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(ROLE_SCHEMAS[self.role]),):
            raise SchemaError(
                f"{self.role} expects {len(ROLE_SCHEMAS[self.role])} values, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise SchemaError("feature values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def names(self) -> tuple[str, ...]:
        return ROLE_SCHEMAS[self.role]

    def items(self):
        return list(zip(self.names, self.values.tolist()))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SpectralConfig:
    sample_rate: float = 100.0
    sub_bands: tuple[tuple[float, float], ...] = field(default=DEFAULT_BANDS)

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise PreconditionError("sample_rate must be positive")
        nyq = self.nyquist
        prev_high = 0.0
        for lo, hi in self.sub_bands:
            if not (0.0 <= lo < hi <= nyq + 1e-12) or lo < prev_high:
                raise PreconditionError(
                    "sub-bands must be ordered, non-overlapping and within [0, Nyquist]")
            prev_high = hi

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0


def _as_series(series, min_len=1) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < min_len:
        raise PreconditionError(f"series must be 1-D with at least {min_len} samples")
    return x


def _deviations(x: np.ndarray) -> np.ndarray:
    d = x - x.mean()
    # second pass removes the rounding error left in the first mean
    return d - d.mean()


def range_of(series) -> float:
    x = _as_series(series)
    return float(x.max() - x.min())


def std_dev(series) -> float:
    """Population standard deviation (divides by N)."""
    d = _deviations(_as_series(series))
    return float(np.sqrt(np.mean(d * d)))


def _degenerate(x: np.ndarray, sigma: float) -> bool:
    return sigma == 0.0 or sigma <= 1e-12 * float(np.max(np.abs(x)))


def skewness(series) -> float:
    """Third standardized moment; 0 for a constant series."""
    x = _as_series(series)
    d = _deviations(x)
    sigma = float(np.sqrt(np.mean(d * d)))
    if _degenerate(x, sigma):
        return 0.0
    return float(np.mean(d ** 3) / sigma ** 3)


def kurtosis(series) -> float:
    """Fourth standardized moment (a Gaussian gives 3); 0 for a constant series."""
    x = _as_series(series)
    d = _deviations(x)
    sigma = float(np.sqrt(np.mean(d * d)))
    if _degenerate(x, sigma):
        return 0.0
    return float(np.mean(d ** 4) / sigma ** 4)


def zero_crossing_rate(series) -> float:
    """Fraction of adjacent pairs with strictly opposite signs.

    The series is expected to be demeaned already.
    """
    x = _as_series(series, min_len=2)
    return float(np.count_nonzero(x[:-1] * x[1:] < 0) / (x.size - 1))


def amplitude_spectrum(series, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided DFT magnitudes ``|X_k|`` and bin-centre frequencies in Hz."""
    x = _as_series(series, min_len=2)
    return np.fft.rfftfreq(x.size, d=1.0 / sample_rate), np.abs(np.fft.rfft(x))


def _band_mask(freqs, low, high, nyquist, include_high):
    if not (0.0 <= low < high <= nyquist + 1e-12):
        raise PreconditionError(f"band ({low}, {high}) outside [0, {nyquist}]")
    upper = freqs <= high if include_high else freqs < high
    return (freqs >= low) & upper


def _peak(freqs, mags, mask) -> tuple[float, float]:
    if not np.any(mask):
        return 0.0, 0.0
    sub = mags[mask]
    k = int(np.argmax(sub))  # first maximum -> lowest frequency on ties
    return float(sub[k]), float(freqs[mask][k])


def spectrum_peak(series, cfg: SpectralConfig = SpectralConfig(),
                  band: Optional[tuple[float, float]] = None,
                  include_high: bool = True) -> tuple[float, float]:
    """Return ``(peak_magnitude, peak_frequency_hz)`` of the amplitude spectrum.

    Without ``band`` the whole one-sided spectrum is searched. An explicit
    band is closed on both ends unless ``include_high`` is False.
    """
    freqs, mags = amplitude_spectrum(series, cfg.sample_rate)
    if band is None:
        mask = np.ones_like(freqs, dtype=bool)
    else:
        mask = _band_mask(freqs, band[0], band[1], cfg.nyquist, include_high)
    return _peak(freqs, mags, mask)


def psd(series, cfg: SpectralConfig = SpectralConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Raw periodogram ``(dt^2 / T) |sum x_n exp(-i w n)|^2`` on the one-sided bins.

    Returns ``(freqs, S)``. Energy check: ``S[0] + 2*sum(S[1:-1]) + S[-1]``
    (last term single only for even N) equals ``dt * sum(x**2)``.
    """
    x = _as_series(series, min_len=2)
    dt = 1.0 / cfg.sample_rate
    total_t = x.size * dt
    spec = np.fft.rfft(x)
    return np.fft.rfftfreq(x.size, d=dt), (dt * dt / total_t) * (spec.real ** 2 + spec.imag ** 2)


def onesided_weights(n: int) -> np.ndarray:
    """Multiplicity of each one-sided bin in the full two-sided spectrum."""
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def subband_summaries(series, cfg: SpectralConfig = SpectralConfig(),
                      with_psd: bool = True) -> list[tuple[float, float]]:
    """Per sub-band ``(peak magnitude, summed PSD)``.

    Bands are half-open ``[low, high)`` except the last, which is closed.
    ``summed PSD`` is 0.0 when ``with_psd`` is False.
    """
    x = _as_series(series, min_len=2)
    freqs, mags = amplitude_spectrum(x, cfg.sample_rate)
    power = psd(x, cfg)[1] if with_psd else None
    out = []
    last = len(cfg.sub_bands) - 1
    for b, (lo, hi) in enumerate(cfg.sub_bands):
        mask = _band_mask(freqs, lo, hi, cfg.nyquist, include_high=(b == last))
        peak = float(mags[mask].max()) if np.any(mask) else 0.0
        energy = float(power[mask].sum()) if with_psd else 0.0
        out.append((peak, energy))
    return out


def window_feature_table(window: Window, cfg: Optional[SpectralConfig] = None) -> dict[str, float]:
    """Compute all 36 behaviour features of a window, keyed by id."""
    if cfg is None:
        cfg = SpectralConfig(sample_rate=window.sample_rate)
    chans = (window.accel_mag, window.gyro_mag, window.magn_mag, window.baro)
    feats: dict[str, float] = {}
    for c, series in enumerate(chans):
        x = _as_series(series, min_len=2)
        feats[f"F{1 + c}"] = range_of(x)
        feats[f"F{5 + c}"] = std_dev(x)
        feats[f"F{9 + c}"] = skewness(x)
        feats[f"F{13 + c}"] = kurtosis(x)
    acc = _deviations(np.asarray(window.accel_mag, dtype=float))
    gyro = _deviations(np.asarray(window.gyro_mag, dtype=float))
    feats["F17"] = zero_crossing_rate(acc)
    feats["F18"], feats["F20"] = spectrum_peak(acc, cfg)
    feats["F19"], feats["F21"] = spectrum_peak(gyro, cfg)
    for b, (peak, energy) in enumerate(subband_summaries(acc, cfg)):
        feats[f"F{22 + b}"] = peak
        feats[f"F{32 + b}"] = energy
    for b, (peak, _) in enumerate(subband_summaries(gyro, cfg, with_psd=False)):
        feats[f"F{27 + b}"] = peak
    return feats


def select_features(table: dict[str, float], role: str) -> FeatureVector:
    if role not in BEHAVIOUR_ROLES:
        raise SchemaError(f"{role!r} is not a behaviour role")
    return FeatureVector(role, np.array([table[k] for k in ROLE_SCHEMAS[role]]))


def behaviour_features(window: Window, role: str,
                       cfg: Optional[SpectralConfig] = None) -> FeatureVector:
    return select_features(window_feature_table(window, cfg), role)


def all_behaviour_features(window: Window,
                           cfg: Optional[SpectralConfig] = None) -> dict[str, FeatureVector]:
    table = window_feature_table(window, cfg)
    return {role: select_features(table, role) for role in BEHAVIOUR_ROLES}


def gnss_features(epoch: GnssEpoch, cn0_threshold: float = DEFAULT_CN0_THRESHOLD,
                  role: str = ENVIRONMENT) -> FeatureVector:
    """``[numSats, sumCNR, sumCNR25]`` (the last dropped for the vehicle role)."""
    cn0 = np.array([o.cn0 for o in epoch.obs], dtype=float)
    values = [float(cn0.size), float(cn0.sum()), float(cn0[cn0 > cn0_threshold].sum())]
    if role == ENVIRONMENT_VEHICLE:
        values = values[:2]
    elif role != ENVIRONMENT:
        raise SchemaError(f"{role!r} is not an environment role")
    return FeatureVector(role, np.array(values))


def feature_matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    """Stack vectors that share one role into an ``(n, d)`` array."""
    if not vectors:
        raise PreconditionError("no feature vectors to stack")
    role = vectors[0].role
    if any(v.role != role for v in vectors):
        raise SchemaError("feature vectors mix classifier roles")
    return np.vstack([v.values for v in vectors])
