"""
Gradient-descent optimizers operating in place on a list of parameter arrays.

A fresh optimizer is built for every learn-rate step of a schedule, so Adam's
moment estimates and SGD's velocity start from zero at each step.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

from .errors import ConfigError


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class OptimizerConfig:
    kind: OptimizerKind = OptimizerKind.ADAM
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", OptimizerKind(self.kind))
        errors = []
        if not self.lr > 0:
            errors.append(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            errors.append(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            errors.append(f"Adam betas must be in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.epsilon > 0:
            errors.append(f"Adam epsilon must be positive, got {self.epsilon}")
        if errors:
            raise ConfigError(errors)

    def to_dict(self) -> dict:
        if self.kind is OptimizerKind.SGD:
            return {"kind": "sgd", "lr": self.lr, "momentum": self.momentum}
        return {"kind": "adam", "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerConfig":
        return cls(**data)


class SGD:
    """SGD with classical momentum: v = momentum * v + lr * g; p -= v."""

    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.velocity: Optional[List[np.ndarray]] = None

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            if self.momentum:
                v *= self.momentum
                v += self.lr * g
                p -= v
            else:
                p -= self.lr * g


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Optional[List[np.ndarray]] = None
        self.v: Optional[List[np.ndarray]] = None
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1

        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1

        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= step_size * m / (np.sqrt(v / bc2) + self.epsilon)


def make_optimizer(cfg: OptimizerConfig, lr: float):
    if cfg.kind is OptimizerKind.SGD:
        return SGD(lr, cfg.momentum)
    return Adam(lr, cfg.beta1, cfg.beta2, cfg.epsilon)
