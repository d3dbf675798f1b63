"""Pipeline settings, loadable from a JSON file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from .environment import AUTO, PEDESTRIAN, VEHICLE, HmmParams
from .errors import FormatError
from .features import DEFAULT_CN0_THRESHOLD
from .ingest import DEFAULT_MAX_BAD_RATIO, DEFAULT_RATE, window_geometry
from .learn import KernelSpec

MODES = (PEDESTRIAN, VEHICLE, AUTO)


@dataclass(frozen=True)
class PipelineConfig:
    window_s: float = 4.0
    overlap: float = 0.75
    train_overlap: float = 0.5
    sample_rate: float = DEFAULT_RATE
    alpha: float = 0.5
    cn0_threshold: float = DEFAULT_CN0_THRESHOLD
    hmm_initial: tuple[float, ...] = (0.4, 0.2, 0.4)
    hmm_transition: tuple[tuple[float, ...], ...] = (
        (2 / 3, 1 / 3, 0.0), (1 / 3, 1 / 3, 1 / 3), (0.0, 1 / 3, 2 / 3))
    hmm_priors: tuple[float, ...] = (0.4, 0.2, 0.4)
    kernel: str = "rbf"
    gamma: Optional[float] = None
    beta: float = 1.0
    calibration: str = "holdout"
    mode: str = AUTO
    routing: str = "soft"
    hysteresis: int = 5
    tree_max_depth: int = 8
    tree_min_leaf: int = 2
    holdout_fraction: float = 0.2
    max_bad_ratio: float = DEFAULT_MAX_BAD_RATIO
    seed: int = 0

    def __post_init__(self):
        try:
            window_geometry(self.window_s, self.overlap, self.sample_rate)
            window_geometry(self.window_s, self.train_overlap, self.sample_rate)
            self.pedestrian_hmm()
            self.kernel_spec()
        except ValueError as exc:
            raise FormatError(f"invalid configuration: {exc}") from None
        if self.mode not in MODES:
            raise FormatError(f"mode must be one of {', '.join(MODES)}")
        if self.routing not in ("soft", "hard"):
            raise FormatError("routing must be 'soft' or 'hard'")
        if self.calibration not in ("holdout", "same"):
            raise FormatError("calibration must be 'holdout' or 'same'")
        if not 0.0 <= self.alpha <= 1.0:
            raise FormatError("alpha must lie in [0, 1]")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise FormatError("holdout_fraction must lie in (0, 1)")
        if self.hysteresis < 1 or self.seed < 0:
            raise FormatError("hysteresis must be >= 1 and seed >= 0")

    @property
    def stride_s(self) -> float:
        return window_geometry(self.window_s, self.overlap, self.sample_rate)[1] / self.sample_rate

    def pedestrian_hmm(self) -> HmmParams:
        base = HmmParams.pedestrian()
        return HmmParams(base.states, np.array(self.hmm_initial, dtype=float),
                         np.array(self.hmm_transition, dtype=float),
                         np.array(self.hmm_priors, dtype=float))

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.gamma)

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hmm_initial"] = list(self.hmm_initial)
        d["hmm_priors"] = list(self.hmm_priors)
        d["hmm_transition"] = [list(r) for r in self.hmm_transition]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise FormatError(f"unknown configuration keys: {', '.join(unknown)}")
        d = dict(d)
        for key in ("hmm_initial", "hmm_priors"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        if "hmm_transition" in d:
            d["hmm_transition"] = tuple(tuple(float(v) for v in r) for r in d["hmm_transition"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise FormatError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise FormatError("config file must hold a JSON object")
        try:
            return cls.from_dict(data)
        except TypeError as exc:
            raise FormatError(f"invalid configuration: {exc}") from None
