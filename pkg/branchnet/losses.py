"""
Loss functions: value and gradient with respect to the prediction.

Per-sample conventions (n = output length):
    MSE      mean((y_p - y)^2)
    MAE      mean(|y_p - y|)
    Huber    mean(huber_delta(y_p - y))
    LogCosh  sum(log(cosh(y_p - y)))
    CE       -sum(t * log(f))

`loss_value`/`loss_gradient` take one sample; `sample_losses`/`sample_gradients`
take a batch with one sample per row and return one loss (gradient row) per sample.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigError, LossInputError, ShapeError

LN2 = math.log(2.0)
DEFAULT_HUBER_DELTA = 1.0


class LossKind(str, Enum):
    MSE = "mse"
    MAE = "mae"
    HUBER = "huber"
    LOGCOSH = "logcosh"
    CROSS_ENTROPY = "cross_entropy"


@dataclass(frozen=True)
class Loss:
    kind: LossKind = LossKind.LOGCOSH
    delta: Optional[float] = None

    def __post_init__(self):
        kind = LossKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is LossKind.HUBER:
            if self.delta is None:
                object.__setattr__(self, "delta", DEFAULT_HUBER_DELTA)
            elif not self.delta > 0:
                raise ConfigError(f"Huber delta must be positive, got {self.delta}")
        elif self.delta is not None:
            raise ConfigError(f"delta is only meaningful for Huber, not {kind.value}")

    @classmethod
    def parse(cls, text: str) -> "Loss":
        """Parse 'mse', 'huber', 'huber:2.5', 'logcosh', ..."""
        name, _, delta = text.strip().lower().replace("-", "_").partition(":")
        try:
            kind = LossKind(name)
        except ValueError:
            raise ConfigError(f"unknown loss '{text}'") from None
        return cls(kind, float(delta) if delta else None)

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value}
        if self.delta is not None:
            data["delta"] = self.delta
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Loss":
        return cls(LossKind(data["kind"]), data.get("delta"))

    def __str__(self):
        return self.kind.value


def logcosh(x: np.ndarray) -> np.ndarray:
    """Overflow-free log(cosh(x))."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    # log1p(2 sinh^2(x/2)) keeps full relative precision near zero
    small = np.log1p(2.0 * np.sinh(np.minimum(ax, 1.0) / 2.0) ** 2)
    large = ax + np.log1p(np.exp(-2.0 * ax)) - LN2
    return np.where(ax <= 1.0, small, large)


def _check(l: Loss, y: np.ndarray, y_pred: np.ndarray):
    if y.shape != y_pred.shape:
        raise ShapeError(f"target shape {y.shape} does not match prediction shape {y_pred.shape}", y.shape, y_pred.shape)
    if y.shape[-1] < 1:
        raise LossInputError("loss needs at least one output element")
    if l.kind is LossKind.CROSS_ENTROPY:
        at_true = np.where(y > 0, y_pred, 1.0)
        if np.any(at_true <= 0):
            raise LossInputError("cross-entropy needs a positive predicted probability at the true class")


def sample_losses(l: Loss, y, y_pred) -> np.ndarray:
    """Loss of each sample; the last axis holds the outputs of one sample."""
    y = np.asarray(y, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    _check(l, y, y_pred)
    e = y_pred - y
    kind = l.kind
    if kind is LossKind.MSE:
        return np.mean(e * e, axis=-1)
    if kind is LossKind.MAE:
        return np.mean(np.abs(e), axis=-1)
    if kind is LossKind.HUBER:
        ae = np.abs(e)
        per = np.where(ae <= l.delta, 0.5 * e * e, l.delta * ae - 0.5 * l.delta * l.delta)
        return np.mean(per, axis=-1)
    if kind is LossKind.LOGCOSH:
        return np.sum(logcosh(e), axis=-1)
    safe = np.where(y > 0, y_pred, 1.0)
    return -np.sum(np.where(y > 0, y * np.log(safe), 0.0), axis=-1)


def sample_gradients(l: Loss, y, y_pred) -> np.ndarray:
    """d(loss of each sample) / d(y_pred), same shape as y_pred."""
    y = np.asarray(y, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    _check(l, y, y_pred)
    e = y_pred - y
    n = y.shape[-1]
    kind = l.kind
    if kind is LossKind.MSE:
        return 2.0 * e / n
    if kind is LossKind.MAE:
        # np.sign(0) == 0 is the subgradient choice at a zero residual
        return np.sign(e) / n
    if kind is LossKind.HUBER:
        return np.clip(e, -l.delta, l.delta) / n
    if kind is LossKind.LOGCOSH:
        return np.tanh(e)
    safe = np.where(y > 0, y_pred, 1.0)
    return np.where(y > 0, -y / safe, 0.0)


def loss_value(l: Loss, y, y_pred) -> float:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ShapeError(f"loss_value takes one sample vector, got shape {y.shape}", y.shape)
    return float(sample_losses(l, y, y_pred))


def loss_gradient(l: Loss, y, y_pred) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ShapeError(f"loss_gradient takes one sample vector, got shape {y.shape}", y.shape)
    return sample_gradients(l, y, y_pred)
