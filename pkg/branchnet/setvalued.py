"""
Two-branch toy datasets for set-valued regression.

1D branches share the domain [-6, 6]: f1(x) = ((x-4)(x+4))^2 and f2 equals f1
outside [-4, 4] and 0 on it. 2D branches are sigmoid(xy(2x+2y)) and
sigmoid(xy(x^2+y^2)) on a configurable box, [-1.5, 1.5]^2 by default.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from .dataset import Dataset
from .errors import ConfigError, DomainError
from .numerics import make_rng, normal_sample

logger = logging.getLogger(__name__)

DOMAIN_1D = ((-6.0,), (6.0,))
DOMAIN_2D = ((-1.5, -1.5), (1.5, 1.5))
NOISE_1D = 5.0
NOISE_2D = 0.02


class BranchFunction(str, Enum):
    F1_1D = "f1_1d"
    F2_1D = "f2_1d"
    F1_2D = "f1_2d"
    F2_2D = "f2_2d"


DIMENSIONS = {
    BranchFunction.F1_1D: 1,
    BranchFunction.F2_1D: 1,
    BranchFunction.F1_2D: 2,
    BranchFunction.F2_2D: 2,
}

# where the branches of each family disagree, as a box
MULTIVALUED_REGIONS = {
    1: ((-4.0,), (4.0,)),
    2: None,  # the whole sampling box
}
GRID_POINTS = {1: 401, 2: 41}


@dataclass(frozen=True)
class Box:
    low: Tuple[float, ...]
    high: Tuple[float, ...]

    def __post_init__(self):
        low = tuple(float(v) for v in self.low)
        high = tuple(float(v) for v in self.high)
        if len(low) != len(high) or not low:
            raise ConfigError(f"box bounds must have equal, nonzero length: {low} / {high}")
        if any(not lo < hi for lo, hi in zip(low, high)):
            raise ConfigError(f"box is empty: low {low}, high {high}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self) -> int:
        return len(self.low)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.low) & (points <= self.high), axis=1)


@dataclass(frozen=True)
class BranchSpec:
    id: int
    function: BranchFunction
    domain: Box

    def __post_init__(self):
        object.__setattr__(self, "function", BranchFunction(self.function))
        if DIMENSIONS[self.function] != self.domain.dim:
            raise ConfigError(f"{self.function.value} is {DIMENSIONS[self.function]}-dimensional, domain is {self.domain.dim}-dimensional")

    def __call__(self, points) -> np.ndarray:
        return evaluate(self, points)

    def to_dict(self) -> dict:
        return {"id": self.id, "function": self.function.value, "low": list(self.domain.low), "high": list(self.domain.high)}


def _check_domain(points: np.ndarray, box: Box):
    inside = box.contains(points)
    if not np.all(inside):
        bad = points[~inside][0]
        raise DomainError(f"point {tuple(bad.tolist())} lies outside the domain [{box.low}, {box.high}]")


def _f1_1d(x: np.ndarray) -> np.ndarray:
    return ((x - 4.0) * (x + 4.0)) ** 2


def _f2_1d(x: np.ndarray) -> np.ndarray:
    return np.where(np.abs(x) <= 4.0, 0.0, _f1_1d(x))


def eval_f1_1d(x: float) -> float:
    _check_domain(np.array([[x]], dtype=np.float64), Box(*DOMAIN_1D))
    return float(_f1_1d(np.float64(x)))


def eval_f2_1d(x: float) -> float:
    _check_domain(np.array([[x]], dtype=np.float64), Box(*DOMAIN_1D))
    return float(_f2_1d(np.float64(x)))


def _raw_2d(which: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if which == "f1":
        return x * y * (2.0 * x + 2.0 * y)
    if which == "f2":
        return x * y * (x * x + y * y)
    raise ConfigError(f"unknown 2D branch '{which}', expected 'f1' or 'f2'")


def eval_2d(which: str, x: float, y: float, box: Box = Box(*DOMAIN_2D)) -> float:
    _check_domain(np.array([[x, y]], dtype=np.float64), box)
    return float(expit(_raw_2d(which, np.float64(x), np.float64(y))))


def evaluate(branch: BranchSpec, points) -> np.ndarray:
    """Vectorized branch evaluation; points has one row per input."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(-1, branch.domain.dim)
    _check_domain(points, branch.domain)
    kind = branch.function
    if kind is BranchFunction.F1_1D:
        return _f1_1d(points[:, 0])
    if kind is BranchFunction.F2_1D:
        return _f2_1d(points[:, 0])
    which = "f1" if kind is BranchFunction.F1_2D else "f2"
    return expit(_raw_2d(which, points[:, 0], points[:, 1]))


def branches_1d() -> Tuple[BranchSpec, BranchSpec]:
    box = Box(*DOMAIN_1D)
    return BranchSpec(1, BranchFunction.F1_1D, box), BranchSpec(2, BranchFunction.F2_1D, box)


def branches_2d(box: Box = Box(*DOMAIN_2D)) -> Tuple[BranchSpec, BranchSpec]:
    return BranchSpec(1, BranchFunction.F1_2D, box), BranchSpec(2, BranchFunction.F2_2D, box)


@dataclass(frozen=True)
class MixtureConfig:
    branches: Tuple[BranchSpec, BranchSpec]
    fraction_first: float
    n_samples: int = 2000
    noise_stddev: float = NOISE_1D
    split_test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        errors = []
        if len(self.branches) != 2:
            errors.append(f"a mixture needs exactly two branches, got {len(self.branches)}")
        elif self.branches[0].domain != self.branches[1].domain:
            errors.append("both branches must share one domain")
        elif self.branches[0].id == self.branches[1].id:
            errors.append(f"branch ids must differ, both are {self.branches[0].id}")
        if not 0.0 <= self.fraction_first <= 1.0:
            errors.append(f"fraction_first must be in [0, 1], got {self.fraction_first}")
        if self.n_samples < 1:
            errors.append(f"n_samples must be at least 1, got {self.n_samples}")
        if self.noise_stddev < 0:
            errors.append(f"noise_stddev must be non-negative, got {self.noise_stddev}")
        if not 0.0 < self.split_test_fraction < 1.0:
            errors.append(f"split_test_fraction must be in (0, 1), got {self.split_test_fraction}")
        if not 0 <= self.seed < 2 ** 64:
            errors.append(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if errors:
            raise ConfigError(errors)

    @property
    def dim(self) -> int:
        return self.branches[0].domain.dim

    def to_dict(self) -> dict:
        return {
            "branches": [b.to_dict() for b in self.branches],
            "fraction_first": self.fraction_first,
            "n_samples": self.n_samples,
            "noise_stddev": self.noise_stddev,
            "split_test_fraction": self.split_test_fraction,
            "seed": self.seed,
        }


def mixture_1d(fraction_first: float, n_samples: int = 2000, noise_stddev: float = NOISE_1D, seed: int = 0, **kwargs) -> MixtureConfig:
    return MixtureConfig(branches_1d(), fraction_first, n_samples, noise_stddev, seed=seed, **kwargs)


def mixture_2d(fraction_first: float, n_samples: int = 160000, noise_stddev: float = NOISE_2D, seed: int = 0, **kwargs) -> MixtureConfig:
    return MixtureConfig(branches_2d(), fraction_first, n_samples, noise_stddev, seed=seed, **kwargs)


def generate_mixture(cfg: MixtureConfig) -> Tuple[Dataset, Dataset]:
    """Sample a two-branch mixture and split it into (train, test)."""
    rng = make_rng(cfg.seed)
    first, second = cfg.branches
    box = first.domain
    n = cfg.n_samples

    xs = rng.uniform(box.low, box.high, size=(n, box.dim))
    from_first = rng.random(n) < cfg.fraction_first
    values = np.where(from_first, evaluate(first, xs), evaluate(second, xs))
    targets = values + normal_sample(rng, 0.0, cfg.noise_stddev, n)
    branch_ids = np.where(from_first, first.id, second.id)

    order = rng.permutation(n)
    n_test = int(round(cfg.split_test_fraction * n))
    test_idx, train_idx = np.sort(order[:n_test]), np.sort(order[n_test:])

    names = tuple("x" if box.dim == 1 else f"x{i + 1}" for i in range(box.dim))
    tags = pd.DataFrame({"branch": pd.array(branch_ids, dtype="Int64")})
    full = Dataset(xs, targets[:, None], tags, feature_names=names, target_names=("y",))

    logger.info(
        f"Generated {n} samples ({int(from_first.sum())} from branch {first.id}), "
        f"split {len(train_idx)}/{len(test_idx)}"
    )
    return full.subset(train_idx), full.subset(test_idx)


def evaluation_grid(branches: Sequence[BranchSpec], points_per_axis: int = None) -> np.ndarray:
    """Evenly spaced points over the region where the two branches disagree."""
    box = branches[0].domain
    region = MULTIVALUED_REGIONS.get(box.dim)
    low, high = region if region is not None else (box.low, box.high)
    n = points_per_axis or GRID_POINTS.get(box.dim, 41)
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(low, high)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def branch_values(branches: Sequence[BranchSpec], points) -> np.ndarray:
    """One column per branch, one row per point."""
    return np.column_stack([evaluate(b, points) for b in branches])
