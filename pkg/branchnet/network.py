"""
Dense feedforward network: forward pass, backpropagation and mini-batch training.

Layer l holds W^(l) with shape (n_l, n_{l-1}) and b^(l) with length n_l. Batches
are stored one sample per row, so a layer computes Z = H W^T + b.
"""
import dataclasses
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import activations, losses
from .activations import Activation, ActivationKind
from .dataset import Dataset
from .errors import ConfigError, NumericalError, ShapeError, TrainingError, UnsupportedCombinationError, ValidationError
from .losses import Loss, LossKind
from .numerics import as_vector, check_finite, make_rng, matmul, normal_sample
from .optimizers import OptimizerConfig, make_optimizer
from .storage import read_json, write_json

logger = logging.getLogger(__name__)

MODEL_FORMAT = "branchnet-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    neurons: int
    activation: Activation = Activation(ActivationKind.IDENTITY)

    def __post_init__(self):
        if self.neurons < 1:
            raise ConfigError(f"a layer needs at least one neuron, got {self.neurons}")

    def to_dict(self) -> dict:
        return {"neurons": self.neurons, "activation": self.activation.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "LayerSpec":
        return cls(int(data["neurons"]), Activation.from_dict(data["activation"]))


@dataclass(frozen=True)
class EarlyStopping:
    patience: int = 10
    min_delta: float = 0.0
    validation_fraction: float = 0.2

    def __post_init__(self):
        errors = []
        if self.patience < 1:
            errors.append(f"patience must be at least 1, got {self.patience}")
        if self.min_delta < 0:
            errors.append(f"min_delta must be non-negative, got {self.min_delta}")
        if not 0.0 < self.validation_fraction < 1.0:
            errors.append(f"validation_fraction must be in (0, 1), got {self.validation_fraction}")
        if errors:
            raise ConfigError(errors)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    layers: Tuple[LayerSpec, ...]
    loss: Loss = Loss(LossKind.LOGCOSH)
    optimizer: OptimizerConfig = OptimizerConfig()
    batch_size: int = 32
    epochs: int = 100
    learn_rate_schedule: Tuple[float, ...] = ()
    early_stopping: Optional[EarlyStopping] = None
    seed: int = 0
    init_stddev: float = 0.05
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        schedule = tuple(float(lr) for lr in self.learn_rate_schedule) or (self.optimizer.lr,)
        object.__setattr__(self, "learn_rate_schedule", schedule)

        errors = []
        if self.input_dim < 1:
            errors.append(f"input_dim must be at least 1, got {self.input_dim}")
        if not self.layers:
            errors.append("at least one layer is required")
        if self.batch_size < 1:
            errors.append(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 1:
            errors.append(f"epochs must be at least 1, got {self.epochs}")
        if any(not lr > 0 for lr in schedule):
            errors.append(f"all learning rates must be positive, got {list(schedule)}")
        if self.init_stddev < 0:
            errors.append(f"init_stddev must be non-negative, got {self.init_stddev}")
        if not 0 <= self.seed < 2 ** 64:
            errors.append(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if errors:
            raise ConfigError(errors)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].neurons

    @property
    def total_epochs(self) -> int:
        return self.epochs * len(self.learn_rate_schedule)

    @classmethod
    def dense(
        cls,
        input_dim: int,
        hidden: Sequence[int],
        output_dim: int = 1,
        activation: Activation = Activation(ActivationKind.ELU),
        output_activation: Activation = Activation(ActivationKind.IDENTITY),
        **kwargs,
    ) -> "NetworkConfig":
        """Uniform hidden activation and a separate output activation."""
        layers = [LayerSpec(n, activation) for n in hidden] + [LayerSpec(output_dim, output_activation)]
        return cls(input_dim=input_dim, layers=tuple(layers), **kwargs)

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": [layer.to_dict() for layer in self.layers],
            "loss": self.loss.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learn_rate_schedule": list(self.learn_rate_schedule),
            "early_stopping": self.early_stopping.to_dict() if self.early_stopping else None,
            "seed": self.seed,
            "init_stddev": self.init_stddev,
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown network key '{k}'" for k in unknown])
        try:
            stopping = data.get("early_stopping")
            return cls(
                input_dim=int(data["input_dim"]),
                layers=tuple(LayerSpec.from_dict(layer) for layer in data["layers"]),
                loss=Loss.from_dict(data.get("loss", {"kind": "logcosh"})),
                optimizer=OptimizerConfig.from_dict(data.get("optimizer", {"kind": "adam"})),
                batch_size=int(data.get("batch_size", 32)),
                epochs=int(data.get("epochs", 100)),
                learn_rate_schedule=tuple(data.get("learn_rate_schedule", ())),
                early_stopping=EarlyStopping(**stopping) if stopping else None,
                seed=int(data.get("seed", 0)),
                init_stddev=float(data.get("init_stddev", 0.05)),
                standardize=bool(data.get("standardize", True)),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid network config: {e}") from e


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-score fitted on the training split."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        mean = features.mean(axis=0)
        scale = features.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Standardizer":
        return cls(np.asarray(data["mean"], dtype=np.float64), np.asarray(data["scale"], dtype=np.float64))


@dataclass(frozen=True)
class Gradients:
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TrainedModel:
    config: NetworkConfig
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    loss_trace: Tuple[float, ...] = ()
    validation_trace: Tuple[float, ...] = ()
    stopped_epoch: Optional[int] = None
    standardizer: Optional[Standardizer] = None

    def __post_init__(self):
        weights = tuple(_frozen(w) for w in self.weights)
        biases = tuple(_frozen(b) for b in self.biases)
        if len(weights) != len(self.config.layers) or len(biases) != len(self.config.layers):
            raise ShapeError(f"expected {len(self.config.layers)} layers of parameters, got {len(weights)}/{len(biases)}")
        previous = self.config.input_dim
        for l, (w, b, layer) in enumerate(zip(weights, biases, self.config.layers), start=1):
            expected = (layer.neurons, previous)
            if w.shape != expected:
                raise ShapeError(f"W^({l}) has shape {w.shape}, expected {expected}", w.shape, expected)
            if b.shape != (layer.neurons,):
                raise ShapeError(f"b^({l}) has shape {b.shape}, expected ({layer.neurons},)", b.shape)
            previous = layer.neurons
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "loss_trace", tuple(float(v) for v in self.loss_trace))
        object.__setattr__(self, "validation_trace", tuple(float(v) for v in self.validation_trace))

    @property
    def final_loss(self) -> Optional[float]:
        return self.loss_trace[-1] if self.loss_trace else None

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config.to_dict(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "standardizer": self.standardizer.to_dict() if self.standardizer else None,
            "loss_trace": list(self.loss_trace),
            "validation_trace": list(self.validation_trace),
            "stopped_epoch": self.stopped_epoch,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedModel":
        if data.get("format") != MODEL_FORMAT:
            raise ConfigError(f"not a {MODEL_FORMAT} document")
        config = NetworkConfig.from_dict(data["config"])
        return cls(
            config=config,
            weights=tuple(np.asarray(w, dtype=np.float64).reshape(layer.neurons, -1) for w, layer in zip(data["weights"], config.layers)),
            biases=tuple(np.asarray(b, dtype=np.float64) for b in data["biases"]),
            loss_trace=tuple(data.get("loss_trace", ())),
            validation_trace=tuple(data.get("validation_trace", ())),
            stopped_epoch=data.get("stopped_epoch"),
            standardizer=Standardizer.from_dict(data["standardizer"]) if data.get("standardizer") else None,
        )


def save_model(model: TrainedModel, path):
    return write_json(path, model.to_dict())


def load_model(path) -> TrainedModel:
    return TrainedModel.from_dict(read_json(path))


def _forward_cache(weights, biases, layers, inputs: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    zs: List[np.ndarray] = []
    hs: List[np.ndarray] = [inputs]
    h = inputs
    for w, b, layer in zip(weights, biases, layers):
        z = matmul(h, w.T) + b
        h = activations.apply(layer.activation, z)
        zs.append(z)
        hs.append(h)
    return zs, hs


def _output_delta(layer: LayerSpec, loss: Loss, z: np.ndarray, y_pred: np.ndarray, y: np.ndarray) -> np.ndarray:
    if layer.activation.kind is ActivationKind.SOFTMAX:
        if loss.kind is not LossKind.CROSS_ENTROPY:
            raise UnsupportedCombinationError(f"softmax output needs cross-entropy loss, not {loss.kind.value}")
        # softmax + cross-entropy: dJ/dz = f - t for one-hot t
        return y_pred - y
    return losses.sample_gradients(loss, y, y_pred) * activations.derivative(layer.activation, z)


def _batch_gradients(weights, biases, config: NetworkConfig, inputs: np.ndarray, targets: np.ndarray):
    """Mean gradients over the batch and the per-sample losses."""
    layers = config.layers
    zs, hs = _forward_cache(weights, biases, layers, inputs)
    per_sample = losses.sample_losses(config.loss, targets, hs[-1])
    m = inputs.shape[0]

    delta = _output_delta(layers[-1], config.loss, zs[-1], hs[-1], targets)
    grads_w: List[np.ndarray] = [None] * len(layers)
    grads_b: List[np.ndarray] = [None] * len(layers)
    for l in range(len(layers) - 1, -1, -1):
        grads_w[l] = matmul(delta.T, hs[l]) / m
        grads_b[l] = delta.sum(axis=0) / m
        if l > 0:
            delta = matmul(delta, weights[l]) * activations.derivative(layers[l - 1].activation, zs[l - 1])
    return grads_w, grads_b, per_sample


def _prepare_inputs(model: TrainedModel, xs: np.ndarray) -> np.ndarray:
    if model.standardizer is not None:
        return model.standardizer.transform(xs)
    return xs


def forward(model: TrainedModel, x) -> np.ndarray:
    x = as_vector(x, "input")
    if x.shape[0] != model.config.input_dim:
        raise ShapeError(f"input has length {x.shape[0]}, network expects {model.config.input_dim}", x.shape)
    return predict_batch(model, x[None, :])[0]


def predict_batch(model: TrainedModel, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 2 and xs.shape[0] == 0:
        return np.empty((0, model.config.output_dim))
    if xs.ndim != 2 or xs.shape[1] != model.config.input_dim:
        raise ShapeError(f"batch has shape {xs.shape}, network expects (n, {model.config.input_dim})", xs.shape)
    check_finite(xs, "input batch")
    _, hs = _forward_cache(model.weights, model.biases, model.config.layers, _prepare_inputs(model, xs))
    return hs[-1]


def backward(model: TrainedModel, x, y) -> Gradients:
    """Gradients of the single-sample loss with respect to every W^(l) and b^(l)."""
    x = as_vector(x, "input")
    y = as_vector(y, "target")
    if x.shape[0] != model.config.input_dim:
        raise ShapeError(f"input has length {x.shape[0]}, network expects {model.config.input_dim}", x.shape)
    if y.shape[0] != model.config.output_dim:
        raise ShapeError(f"target has length {y.shape[0]}, network outputs {model.config.output_dim}", y.shape)
    inputs = _prepare_inputs(model, x[None, :])
    grads_w, grads_b, _ = _batch_gradients(model.weights, model.biases, model.config, inputs, y[None, :])
    return Gradients(tuple(grads_w), tuple(grads_b))


def total_loss(model: TrainedModel, x, y) -> float:
    """Single-sample loss J(theta) at the model's current parameters."""
    y_pred = forward(model, x)
    return losses.loss_value(model.config.loss, as_vector(y, "target"), y_pred)


def _init_params(rng, config: NetworkConfig):
    weights, biases = [], []
    previous = config.input_dim
    for layer in config.layers:
        w = normal_sample(rng, 0.0, config.init_stddev, layer.neurons * previous)
        weights.append(w.reshape(layer.neurons, previous))
        biases.append(np.zeros(layer.neurons))
        previous = layer.neurons
    return weights, biases


def _validation_split(rng, n: int, stopping: Optional[EarlyStopping]):
    if stopping is None:
        return np.arange(n), np.arange(0)
    if n < 2:
        logger.warning("Early stopping disabled: need at least 2 samples for a validation split")
        return np.arange(n), np.arange(0)
    order = rng.permutation(n)
    n_val = min(max(1, int(round(stopping.validation_fraction * n))), n - 1)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


EpochCallback = Callable[[int, TrainedModel], None]


def train(config: NetworkConfig, data: Dataset, epoch_callback: Optional[EpochCallback] = None) -> TrainedModel:
    """
    Mini-batch training over the whole learn-rate schedule.

    Each rate runs for `config.epochs` epochs with a fresh optimizer. Data is
    reshuffled every epoch from the seeded stream; the last short batch is kept.
    `epoch_callback(epoch, snapshot)` is called after every epoch when given.
    """
    if len(data) == 0:
        raise ValidationError("cannot train on an empty dataset")
    if data.n_features != config.input_dim:
        raise ShapeError(f"dataset has {data.n_features} features, network expects {config.input_dim}", data.features.shape)
    if data.n_targets != config.output_dim:
        raise ShapeError(f"dataset has {data.n_targets} targets, network outputs {config.output_dim}", data.targets.shape)

    rng = make_rng(config.seed)
    train_idx, val_idx = _validation_split(rng, len(data), config.early_stopping)
    standardizer = Standardizer.fit(data.features[train_idx]) if config.standardize else None
    inputs = standardizer.transform(data.features) if standardizer else np.array(data.features)
    x_train, y_train = inputs[train_idx], data.targets[train_idx]
    x_val, y_val = inputs[val_idx], data.targets[val_idx]

    weights, biases = _init_params(rng, config)
    params = [p for pair in zip(weights, biases) for p in pair]
    n_train = x_train.shape[0]

    loss_trace: List[float] = []
    validation_trace: List[float] = []
    best_val = np.inf
    wait = 0
    stopped_epoch: Optional[int] = None
    epoch = 0

    logger.info(
        f"Training {len(config.layers)}-layer network on {n_train} samples "
        f"({len(val_idx)} held out), schedule {list(config.learn_rate_schedule)}"
    )
    for step, lr in enumerate(config.learn_rate_schedule, start=1):
        optimizer = make_optimizer(config.optimizer, lr)
        for _ in range(config.epochs):
            order = rng.permutation(n_train)
            loss_sum = 0.0
            try:
                for start in range(0, n_train, config.batch_size):
                    batch = order[start:start + config.batch_size]
                    grads_w, grads_b, per_sample = _batch_gradients(weights, biases, config, x_train[batch], y_train[batch])
                    loss_sum += float(per_sample.sum())
                    grads = [g for pair in zip(grads_w, grads_b) for g in pair]
                    optimizer.step(params, grads)
            except NumericalError as e:
                raise TrainingError(f"non-finite values at epoch {epoch}: {e}", epoch) from e

            epoch_loss = loss_sum / n_train
            if not np.isfinite(epoch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch)
            loss_trace.append(epoch_loss)
            logger.debug(f"Epoch {epoch}: loss {epoch_loss:.6g}")

            if epoch_callback is not None:
                epoch_callback(epoch, TrainedModel(config, tuple(weights), tuple(biases), standardizer=standardizer))

            if len(val_idx):
                _, hs = _forward_cache(weights, biases, config.layers, x_val)
                val_loss = float(losses.sample_losses(config.loss, y_val, hs[-1]).mean())
                validation_trace.append(val_loss)
                if val_loss < best_val - config.early_stopping.min_delta:
                    best_val = val_loss
                    wait = 0
                else:
                    wait += 1
                    if wait >= config.early_stopping.patience:
                        stopped_epoch = epoch
            epoch += 1
            if stopped_epoch is not None:
                break

        logger.info(f"Schedule step {step}/{len(config.learn_rate_schedule)} (lr={lr:g}) finished with loss {loss_trace[-1]:.6g}")
        if stopped_epoch is not None:
            logger.info(f"Early stopping at epoch {stopped_epoch}: no validation improvement for {config.early_stopping.patience} epochs")
            break

    return TrainedModel(
        config=config,
        weights=tuple(weights),
        biases=tuple(biases),
        loss_trace=tuple(loss_trace),
        validation_trace=tuple(validation_trace),
        stopped_epoch=stopped_epoch,
        standardizer=standardizer,
    )


def evaluate(model: TrainedModel, data: Dataset) -> dict:
    """Test-set quality: MSE, MAE, R^2 and MSE relative to the target variance."""
    if len(data) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    predictions = predict_batch(model, data.features)
    errors = predictions - data.targets
    mse = float(np.mean(errors ** 2))
    variance = float(np.var(data.targets))
    return {
        "samples": len(data),
        "mse": mse,
        "mae": float(np.mean(np.abs(errors))),
        "target_variance": variance,
        "relative_mse": mse / variance if variance > 0 else None,
        "r2": 1.0 - mse / variance if variance > 0 else None,
    }
