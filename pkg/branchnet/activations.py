"""Activation functions and their derivatives.

Both `apply` and `derivative` accept a single vector or a batch (one sample
per row); softmax always normalizes along the last axis.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import expit, softmax

from .errors import ConfigError, UnsupportedCombinationError

DEFAULT_ELU_ALPHA = 1.0


class ActivationKind(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"
    ELU = "elu"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


@dataclass(frozen=True)
class Activation:
    kind: ActivationKind = ActivationKind.IDENTITY
    alpha: Optional[float] = None

    def __post_init__(self):
        kind = ActivationKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ActivationKind.ELU:
            if self.alpha is None:
                object.__setattr__(self, "alpha", DEFAULT_ELU_ALPHA)
            elif not self.alpha > 0:
                raise ConfigError(f"ELU alpha must be positive, got {self.alpha}")
        elif self.alpha is not None:
            raise ConfigError(f"alpha is only meaningful for ELU, not {kind.value}")

    @classmethod
    def parse(cls, text: str) -> "Activation":
        """Parse 'elu', 'elu:0.5', 'relu', ..."""
        name, _, alpha = text.strip().lower().partition(":")
        try:
            kind = ActivationKind(name)
        except ValueError:
            raise ConfigError(f"unknown activation '{text}'") from None
        return cls(kind, float(alpha) if alpha else None)

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value}
        if self.alpha is not None:
            data["alpha"] = self.alpha
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Activation":
        return cls(ActivationKind(data["kind"]), data.get("alpha"))

    def __str__(self):
        return f"{self.kind.value}:{self.alpha}" if self.alpha is not None else self.kind.value


def apply(a: Activation, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    kind = a.kind
    if kind is ActivationKind.SIGMOID:
        return expit(z)
    if kind is ActivationKind.TANH:
        return np.tanh(z)
    if kind is ActivationKind.RELU:
        return np.maximum(z, 0.0)
    if kind is ActivationKind.ELU:
        return np.where(z > 0, z, a.alpha * np.expm1(np.minimum(z, 0.0)))
    if kind is ActivationKind.SOFTMAX:
        # scipy subtracts the max before exponentiating
        return softmax(z, axis=-1)
    return z.copy()


def derivative(a: Activation, z: np.ndarray) -> np.ndarray:
    """Elementwise g'(z) evaluated at the pre-activation z."""
    z = np.asarray(z, dtype=np.float64)
    kind = a.kind
    if kind is ActivationKind.SIGMOID:
        s = expit(z)
        return s * (1.0 - s)
    if kind is ActivationKind.TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    if kind is ActivationKind.RELU:
        # subgradient 0 at z == 0
        return (z > 0).astype(np.float64)
    if kind is ActivationKind.ELU:
        return np.where(z > 0, 1.0, a.alpha * np.exp(np.minimum(z, 0.0)))
    if kind is ActivationKind.SOFTMAX:
        raise UnsupportedCombinationError(
            "softmax has no elementwise derivative; pair it with cross-entropy on the output layer"
        )
    return np.ones_like(z)
