"""
Named experiment presets with the reference architectures.

Each preset has a desk variant that keeps the shape of the experiment but
runs in seconds to minutes on a laptop.
"""
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

from .activations import Activation, ActivationKind
from .errors import ConfigError
from .losses import Loss, LossKind
from .network import EarlyStopping, NetworkConfig
from .optimizers import OptimizerConfig, OptimizerKind


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str  # 1d, 2d, timeseries or accumulated
    hidden: Tuple[int, ...]
    batch_size: int
    epochs: int
    learn_rate_schedule: Tuple[float, ...]
    early_stopping: Optional[EarlyStopping] = None
    n_samples: Optional[int] = None
    strategy: Optional[str] = None
    description: str = ""

    def network(
        self,
        input_dim: int,
        output_dim: int = 1,
        loss: Loss = Loss(LossKind.LOGCOSH),
        seed: int = 0,
        elu_alpha: float = 1.0,
        init_stddev: float = 0.05,
    ) -> NetworkConfig:
        return NetworkConfig.dense(
            input_dim,
            self.hidden,
            output_dim,
            activation=Activation(ActivationKind.ELU, elu_alpha),
            loss=loss,
            optimizer=OptimizerConfig(OptimizerKind.ADAM, lr=self.learn_rate_schedule[0]),
            batch_size=self.batch_size,
            epochs=self.epochs,
            learn_rate_schedule=self.learn_rate_schedule,
            early_stopping=self.early_stopping,
            seed=seed,
            init_stddev=init_stddev,
        )


PRESETS: Dict[str, Preset] = {
    "paper-1d": Preset(
        name="paper-1d",
        kind="1d",
        hidden=(50,) * 4,
        batch_size=32,
        epochs=100,
        learn_rate_schedule=(1e-3,),
        early_stopping=EarlyStopping(patience=10),
        n_samples=2000,
        description="4x50 ELU, logcosh, Adam 1e-3, batch 32, 100 epochs, 2000 points",
    ),
    "paper-2d": Preset(
        name="paper-2d",
        kind="2d",
        hidden=(50,) * 4,
        batch_size=200,
        epochs=100,
        learn_rate_schedule=(1e-3,),
        early_stopping=EarlyStopping(patience=10),
        n_samples=160000,
        description="4x50 ELU, logcosh, Adam 1e-3, batch 200, 160000 points",
    ),
    "paper-timeseries": Preset(
        name="paper-timeseries",
        kind="timeseries",
        hidden=(50,) * 15,
        batch_size=100,
        epochs=15,
        learn_rate_schedule=(1e-3, 1e-4, 1e-5),
        strategy="time_series_first_day",
        description="15x50 ELU, logcosh, Adam 1e-3/1e-4/1e-5 x 15 epochs, batch 100",
    ),
    "paper-accumulated": Preset(
        name="paper-accumulated",
        kind="accumulated",
        hidden=(100,) * 5,
        batch_size=8,
        epochs=25,
        learn_rate_schedule=(1e-3,),
        strategy="accumulated_age_groups",
        description="5x100 ELU, logcosh, Adam 1e-3, batch 8, 25 epochs",
    ),
}

DESK_OVERRIDES = {
    "paper-1d": {},
    "paper-2d": {"n_samples": 16000, "epochs": 40},
    "paper-timeseries": {"hidden": (30,) * 5, "epochs": 20, "learn_rate_schedule": (1e-2, 1e-3, 1e-4)},
    "paper-accumulated": {"hidden": (50,) * 3},
}


def get_preset(name: str, desk: bool = False) -> Preset:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}'; available: {sorted(PRESETS)}")
    preset = PRESETS[name]
    if desk:
        preset = replace(preset, **DESK_OVERRIDES[name], description=preset.description + " (desk scale)")
    return preset
