"""The ``ctxmodel-v1`` model file: one JSON document, one section per classifier role.

Layout::

    {"format": "ctxmodel-v1",
     "constants": {window_s, overlap, sample_rate, cn0_threshold, ...},
     "roles": {"human_vehicle": <cart>, "human_activity": <ovo_svm>,
               "vehicle_motion": <ovo_svm>, "environment": <ovo_svm>,
               "environment_vehicle": <ovo_svm> | null},
     "hmm": {"pedestrian": {...}, "vehicle": {...}},
     "report": {role: held-out accuracy}}

Floats are written in shortest round-trip form and keys are sorted, so a
given model always serializes to the same bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .behavior import BehaviorModels
from .environment import EnvironmentModels, HmmParams
from .errors import ModelFormatError, SchemaError
from .features import (ENVIRONMENT, ENVIRONMENT_VEHICLE, HUMAN_ACTIVITY, HUMAN_VEHICLE,
                       ROLE_SCHEMAS, VEHICLE_MOTION)
from .learn import DecisionTreeModel, OneVsOneEnsemble

MODEL_FORMAT = "ctxmodel-v1"
MODEL_CONSTANTS = ("window_s", "train_overlap", "sample_rate", "cn0_threshold")
_CHECKED = ("window_s", "sample_rate", "cn0_threshold")

_LOADERS = {"cart": DecisionTreeModel.from_dict, "ovo_svm": OneVsOneEnsemble.from_dict}


@dataclass(frozen=True)
class ModelBundle:
    behavior: BehaviorModels
    environment: EnvironmentModels
    constants: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def check_config(self, config) -> None:
        """Raise SchemaError when ``config`` disagrees with the training constants."""
        for key in _CHECKED:
            if key in self.constants and float(getattr(config, key)) != float(self.constants[key]):
                raise SchemaError(
                    f"{MODEL_FORMAT} model was trained with {key}={self.constants[key]}, "
                    f"config has {getattr(config, key)}")

    def to_dict(self) -> dict:
        b, e = self.behavior, self.environment
        roles = {
            HUMAN_VEHICLE: b.human_vehicle.to_dict(),
            HUMAN_ACTIVITY: b.human_activity.to_dict(),
            VEHICLE_MOTION: b.vehicle_motion.to_dict(),
            ENVIRONMENT: e.pedestrian.to_dict(),
            ENVIRONMENT_VEHICLE: e.vehicle.to_dict() if e.vehicle is not None else None,
        }
        return {"format": MODEL_FORMAT, "constants": dict(self.constants), "roles": roles,
                "hmm": {"pedestrian": e.pedestrian_hmm.to_dict(),
                        "vehicle": e.vehicle_hmm.to_dict()},
                "report": dict(self.report)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
            found = d.get("format") if isinstance(d, dict) else None
            raise ModelFormatError(f"expected a {MODEL_FORMAT} model file, found format {found!r}")
        try:
            roles = {role: _load_role(role, d["roles"].get(role))
                     for role in (HUMAN_VEHICLE, HUMAN_ACTIVITY, VEHICLE_MOTION, ENVIRONMENT,
                                  ENVIRONMENT_VEHICLE)}
            hmm = d["hmm"]
            env = EnvironmentModels(roles[ENVIRONMENT], roles[ENVIRONMENT_VEHICLE],
                                    HmmParams.from_dict(hmm["pedestrian"]),
                                    HmmParams.from_dict(hmm["vehicle"]))
            return cls(BehaviorModels(roles[HUMAN_VEHICLE], roles[HUMAN_ACTIVITY],
                                      roles[VEHICLE_MOTION]),
                       env, dict(d.get("constants", {})), dict(d.get("report", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed {MODEL_FORMAT} file: {exc!r}") from None


def _load_role(role: str, section: Optional[dict]):
    if section is None:
        if role == ENVIRONMENT_VEHICLE:
            return None
        raise ModelFormatError(f"model file has no {role} section")
    kind = section.get("type")
    if kind not in _LOADERS:
        raise ModelFormatError(f"{role}: unknown classifier type {kind!r}")
    model = _LOADERS[kind](section)
    if tuple(model.feature_names) != ROLE_SCHEMAS[role]:
        raise SchemaError(f"{role} section uses features {list(model.feature_names)}, "
                          f"expected {list(ROLE_SCHEMAS[role])}")
    return model


def dumps(bundle: ModelBundle) -> str:
    return json.dumps(bundle.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"


def loads(text: str) -> ModelBundle:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid {MODEL_FORMAT} text: {exc}") from None
    return ModelBundle.from_dict(data)


def save_models(bundle: ModelBundle, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(bundle))


def load_models(path) -> ModelBundle:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from None
    return loads(text)
