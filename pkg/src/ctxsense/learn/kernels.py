from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import PreconditionError, SchemaError
from ..features import FeatureVector

_BLOCK = 1 << 21  # difference-array elements per block


@dataclass(frozen=True)
class KernelSpec:
    """``linear``: a.b; ``rbf``: exp(-gamma |a - b|^2)."""

    kind: str = "rbf"
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise PreconditionError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None:
            if not (math.isfinite(self.gamma) and self.gamma > 0):
                raise PreconditionError("rbf gamma must be finite and positive")

    def resolved(self, X: np.ndarray) -> "KernelSpec":
        """Fill in the default gamma, ``1 / (n_features * var(X))``."""
        if self.kind != "rbf" or self.gamma is not None:
            return self
        var = float(np.var(X))
        gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        return KernelSpec("rbf", gamma)

    def to_dict(self):
        return {"kind": self.kind, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["gamma"])


def _as_values(v):
    return v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=float)


def kernel_eval(k: KernelSpec, a, b) -> float:
    if isinstance(a, FeatureVector) and isinstance(b, FeatureVector) and a.role != b.role:
        raise SchemaError(f"kernel arguments from different roles: {a.role} vs {b.role}")
    x, y = _as_values(a), _as_values(b)
    if x.shape != y.shape:
        raise SchemaError(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    return float(gram(k, x[None, :], y[None, :])[0, 0])


def gram(k: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise SchemaError(f"feature dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if k.kind == "linear":
        return A @ B.T
    if k.gamma is None:
        raise PreconditionError("rbf gamma unresolved; call KernelSpec.resolved first")
    # explicit differences: the |a|^2 + |b|^2 - 2ab expansion cancels badly near a == b
    out = np.empty((len(A), len(B)))
    step = max(1, _BLOCK // max(1, B.size))
    for r in range(0, len(A), step):
        d = A[r:r + step, None, :] - B[None, :, :]
        out[r:r + step] = np.einsum("ijk,ijk->ij", d, d)
    return np.exp(-k.gamma * out)
