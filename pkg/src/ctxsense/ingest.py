"""Log parsing, sensor magnitudes and sliding-window segmentation.

Two CSV schemas are supported, both optionally preceded by a
``# ctxsense-v1`` version comment:

IMU log::

    t,ax,ay,az,gx,gy,gz,mx,my,mz,p

GNSS log (one row per tracked satellite per epoch; ``t,-,-,-,-`` marks an
epoch in which no satellite was received)::

    t,prn,cn0,az,el

Timestamps are seconds on a base shared by both logs.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import CorruptInputError, FormatError, PreconditionError

FORMAT_TAG = "ctxsense-v1"
IMU_HEADER = ("t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz", "p")
GNSS_HEADER = ("t", "prn", "cn0", "az", "el")
GNSS_MARKER = "-"
DEFAULT_RATE = 100.0
DEFAULT_MAX_BAD_RATIO = 0.1

Source = Union[str, os.PathLike, IO[bytes], IO[str]]


@dataclass(frozen=True)
class ImuSample:
    """One IMU reading: accel m/s^2, gyro rad/s, magn uT, baro hPa."""

    t: float
    accel: tuple[float, float, float]
    gyro: tuple[float, float, float]
    magn: tuple[float, float, float]
    baro: float


@dataclass(frozen=True, eq=False)
class SensorStream:
    """Time-ordered IMU samples stored column-wise.

    ``discontinuities`` holds every index ``i`` for which the gap between
    samples ``i - 1`` and ``i`` exceeds two nominal sample intervals.
    """

    t: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    magn: np.ndarray
    baro: np.ndarray
    nominal_rate: float = DEFAULT_RATE
    bad_rows: int = 0
    discontinuities: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.nominal_rate > 0:
            raise PreconditionError("nominal_rate must be positive")
        n = len(self.t)
        for name in ("accel", "gyro", "magn"):
            if getattr(self, name).shape != (n, 3):
                raise PreconditionError(f"{name} must have shape ({n}, 3)")
        if self.baro.shape != (n,):
            raise PreconditionError(f"baro must have shape ({n},)")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise PreconditionError("timestamps must be strictly increasing")
        for arr in (self.t, self.accel, self.gyro, self.magn, self.baro):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, t, accel, gyro, magn, baro, nominal_rate=DEFAULT_RATE,
                    bad_rows=0):
        """Build a stream and detect discontinuities from the timestamps."""
        t = np.asarray(t, dtype=float)
        gaps = np.diff(t)
        disc = tuple(int(i) + 1 for i in np.nonzero(gaps > 2.0 / nominal_rate)[0])
        return cls(
            t=t,
            accel=np.asarray(accel, dtype=float).reshape(-1, 3),
            gyro=np.asarray(gyro, dtype=float).reshape(-1, 3),
            magn=np.asarray(magn, dtype=float).reshape(-1, 3),
            baro=np.asarray(baro, dtype=float).reshape(-1),
            nominal_rate=float(nominal_rate),
            bad_rows=bad_rows,
            discontinuities=disc,
        )

    @classmethod
    def from_samples(cls, samples: Iterable[ImuSample], nominal_rate=DEFAULT_RATE):
        samples = sorted(samples, key=lambda s: s.t)
        return cls.from_arrays(
            [s.t for s in samples],
            [s.accel for s in samples],
            [s.gyro for s in samples],
            [s.magn for s in samples],
            [s.baro for s in samples],
            nominal_rate=nominal_rate,
        )

    def __len__(self):
        return len(self.t)

    def __iter__(self) -> Iterator[ImuSample]:
        return iter(self.samples)

    @property
    def samples(self) -> list[ImuSample]:
        return [
            ImuSample(
                t=float(self.t[i]),
                accel=tuple(float(v) for v in self.accel[i]),
                gyro=tuple(float(v) for v in self.gyro[i]),
                magn=tuple(float(v) for v in self.magn[i]),
                baro=float(self.baro[i]),
            )
            for i in range(len(self.t))
        ]

    def same_samples(self, other: "SensorStream") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("t", "accel", "gyro", "magn", "baro")
        )


@dataclass(frozen=True)
class SatelliteObs:
    prn: str
    cn0: float
    azimuth: float
    elevation: float


@dataclass(frozen=True)
class GnssEpoch:
    t: float
    obs: tuple[SatelliteObs, ...] = ()


@dataclass(frozen=True)
class GnssEpochSeries:
    """Epochs in strictly increasing time order."""

    epochs: tuple[GnssEpoch, ...]
    bad_rows: int = 0

    def __post_init__(self):
        times = [e.t for e in self.epochs]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise PreconditionError("epoch timestamps must be strictly increasing")

    def __len__(self):
        return len(self.epochs)

    def __iter__(self):
        return iter(self.epochs)

    def __getitem__(self, item):
        return self.epochs[item]

    @property
    def times(self) -> np.ndarray:
        return np.array([e.t for e in self.epochs], dtype=float)


@dataclass(frozen=True, eq=False)
class Window:
    """A fixed-length segment of per-channel scalar series.

    The three 3-axis sensors are reduced to magnitudes; the barometer is
    passed through raw.
    """

    start_t: float
    accel_mag: np.ndarray
    gyro_mag: np.ndarray
    magn_mag: np.ndarray
    baro: np.ndarray
    sample_rate: float = DEFAULT_RATE
    label: Optional[str] = None
    start_index: int = field(default=0, compare=False)

    def __post_init__(self):
        n = len(self.accel_mag)
        if not (len(self.gyro_mag) == len(self.magn_mag) == len(self.baro) == n):
            raise PreconditionError("all window channels must have equal length")

    @property
    def length_samples(self) -> int:
        return len(self.accel_mag)

    @property
    def duration(self) -> float:
        return self.length_samples / self.sample_rate


def magnitude(v) -> Union[float, np.ndarray]:
    """Euclidean norm along the last axis.

    Accepts a single 3-vector (returns a float) or an ``(n, 3)`` array
    (returns ``n`` magnitudes).
    """
    arr = np.asarray(v, dtype=float)
    if arr.shape[-1] != 3:
        raise PreconditionError("magnitude expects 3-component vectors")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError("magnitude expects finite components")
    out = np.sqrt(np.sum(arr * arr, axis=-1))
    return float(out) if out.ndim == 0 else out


def demean(series) -> np.ndarray:
    """Return ``series`` minus its mean."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise PreconditionError("cannot demean an empty series")
    return x - x.mean()


def window_geometry(window_s: float, overlap: float, rate: float) -> tuple[int, int]:
    """Return ``(length, stride)`` in samples, validating integrality."""
    if not 0.0 <= overlap < 1.0:
        raise PreconditionError("overlap must lie in [0, 1)")
    length_f = window_s * rate
    length = int(round(length_f))
    if length < 1 or abs(length - length_f) > 1e-9:
        raise PreconditionError("window_s * rate must be a positive integer")
    stride_f = length * (1.0 - overlap)
    stride = int(round(stride_f))
    if stride < 1 or abs(stride - stride_f) > 1e-9:
        raise PreconditionError("window stride must be a whole number of samples")
    return length, stride


def window_starts(n: int, length: int, stride: int) -> range:
    if n < length:
        return range(0)
    return range(0, n - length + 1, stride)


def segment(stream: SensorStream, window_s: float = 4.0,
            overlap: float = 0.75) -> list[Window]:
    """Cut a stream into overlapping windows; partial/straddling ones are dropped."""
    length, stride = window_geometry(window_s, overlap, stream.nominal_rate)
    accel = magnitude(stream.accel) if len(stream) else np.empty(0)
    gyro = magnitude(stream.gyro) if len(stream) else np.empty(0)
    magn = magnitude(stream.magn) if len(stream) else np.empty(0)
    disc = np.asarray(stream.discontinuities, dtype=int)
    windows = []
    for s in window_starts(len(stream), length, stride):
        if disc.size and np.any((disc > s) & (disc < s + length)):
            continue
        sl = slice(s, s + length)
        windows.append(Window(
            start_t=float(stream.t[s]),
            accel_mag=accel[sl],
            gyro_mag=gyro[sl],
            magn_mag=magn[sl],
            baro=np.asarray(stream.baro[sl]),
            sample_rate=stream.nominal_rate,
            start_index=s,
        ))
    return windows


# --------------------------------------------------------------------------
# CSV I/O


def _read_text(source: Source) -> str:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    if isinstance(raw, bytes):
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"log is not valid UTF-8: {exc}") from None
    return raw


def _data_lines(text: str, header: Sequence[str]) -> list[str]:
    lines = text.splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise CorruptInputError("log is empty")
    first = lines[0].strip()
    if first.startswith("#"):
        tag = first.lstrip("#").strip()
        if tag != FORMAT_TAG:
            raise FormatError(f"unsupported log version {tag!r}, expected {FORMAT_TAG!r}")
        lines.pop(0)
        while lines and not lines[0].strip():
            lines.pop(0)
        if not lines:
            raise CorruptInputError("log is empty")
    got = tuple(c.strip() for c in lines[0].split(","))
    if got != tuple(header):
        raise FormatError(f"unexpected header {','.join(got)!r}, expected {','.join(header)!r}")
    return [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("#")]


def _check_bad_ratio(bad: int, total: int, max_bad_ratio: float):
    if total == 0:
        raise CorruptInputError("log contains no data rows")
    if bad / total > max_bad_ratio:
        raise CorruptInputError(
            f"{bad} of {total} rows are malformed (limit {max_bad_ratio:.0%})")


def parse_imu_log(source: Source, format: str = FORMAT_TAG,
                  nominal_rate: float = DEFAULT_RATE,
                  max_bad_ratio: float = DEFAULT_MAX_BAD_RATIO) -> SensorStream:
    """Parse an IMU CSV log into a :class:`SensorStream`.

    Malformed rows (wrong field count, unparsable or non-finite numbers,
    repeated timestamps) are skipped and counted in ``bad_rows``.

    Raises
    ------
    FormatError
        Unknown format id, version tag or header.
    CorruptInputError
        Empty log, or more than ``max_bad_ratio`` of the rows malformed.
    """
    if format != FORMAT_TAG:
        raise FormatError(f"unsupported log format {format!r}")
    lines = _data_lines(_read_text(source), IMU_HEADER)
    rows = []
    bad = 0
    for ln in lines:
        parts = ln.split(",")
        if len(parts) != len(IMU_HEADER):
            bad += 1
            continue
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            bad += 1
            continue
        if not all(math.isfinite(v) for v in vals):
            bad += 1
            continue
        rows.append(vals)
    if rows:
        rows.sort(key=lambda r: r[0])
        unique = [rows[0]]
        for r in rows[1:]:
            if r[0] == unique[-1][0]:
                bad += 1
            else:
                unique.append(r)
        rows = unique
    _check_bad_ratio(bad, len(lines), max_bad_ratio)
    if not rows:
        raise CorruptInputError("log contains no valid rows")
    a = np.array(rows, dtype=float)
    return SensorStream.from_arrays(a[:, 0], a[:, 1:4], a[:, 4:7], a[:, 7:10],
                                    a[:, 10], nominal_rate=nominal_rate,
                                    bad_rows=bad)


def parse_gnss_log(source: Source,
                   max_bad_ratio: float = DEFAULT_MAX_BAD_RATIO) -> GnssEpochSeries:
    """Parse a GNSS CSV log, grouping rows into epochs by timestamp.

    An epoch with no satellites only exists if a marker row declares it.
    """
    lines = _data_lines(_read_text(source), GNSS_HEADER)
    grouped: dict[float, list[SatelliteObs]] = {}
    bad = 0
    for ln in lines:
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != len(GNSS_HEADER):
            bad += 1
            continue
        try:
            t = float(parts[0])
        except ValueError:
            bad += 1
            continue
        if not math.isfinite(t):
            bad += 1
            continue
        if all(p == GNSS_MARKER for p in parts[1:]):
            grouped.setdefault(t, [])
            continue
        try:
            cn0, az, el = (float(p) for p in parts[2:])
        except ValueError:
            bad += 1
            continue
        if not (parts[1] and parts[1] != GNSS_MARKER and math.isfinite(cn0)
                and cn0 >= 0 and 0.0 <= az < 360.0 and 0.0 <= el <= 90.0):
            bad += 1
            continue
        grouped.setdefault(t, []).append(SatelliteObs(parts[1], cn0, az, el))
    _check_bad_ratio(bad, len(lines), max_bad_ratio)
    epochs = tuple(GnssEpoch(t, tuple(grouped[t])) for t in sorted(grouped))
    return GnssEpochSeries(epochs, bad_rows=bad)


def _open_text_sink(sink):
    if isinstance(sink, (str, os.PathLike)):
        return open(sink, "w", encoding="utf-8", newline="\n"), True
    if isinstance(sink, (io.RawIOBase, io.BufferedIOBase)):
        return io.TextIOWrapper(sink, encoding="utf-8", newline="\n",
                                write_through=True), False
    return sink, False


def write_imu_log(stream: SensorStream, sink) -> None:
    """Write ``stream`` in the IMU CSV schema; floats use shortest round-trip text."""
    fh, close = _open_text_sink(sink)
    try:
        fh.write(f"# {FORMAT_TAG}\n")
        fh.write(",".join(IMU_HEADER) + "\n")
        block = np.column_stack([stream.t, stream.accel, stream.gyro, stream.magn,
                                 stream.baro]) if len(stream) else np.empty((0, 11))
        fh.writelines(",".join(map(repr, row)) + "\n" for row in block.tolist())
    finally:
        if close:
            fh.close()
        else:
            fh.flush()


def write_gnss_log(series: GnssEpochSeries, sink) -> None:
    fh, close = _open_text_sink(sink)
    try:
        fh.write(f"# {FORMAT_TAG}\n")
        fh.write(",".join(GNSS_HEADER) + "\n")
        for epoch in series.epochs:
            t = repr(float(epoch.t))
            if not epoch.obs:
                fh.write(",".join([t] + [GNSS_MARKER] * 4) + "\n")
            for o in epoch.obs:
                fh.write(f"{t},{o.prn},{float(o.cn0)!r},{float(o.azimuth)!r},"
                         f"{float(o.elevation)!r}\n")
    finally:
        if close:
            fh.close()
        else:
            fh.flush()
