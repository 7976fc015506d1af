"""
Majority-branch learning, residual-based sample classification and the
joint/A/B hidden-feature protocol.
"""
import asyncio
import json
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .dataset import Dataset
from .errors import ConfigError, ProtocolError, ValidationError
from .losses import LossKind
from .network import NetworkConfig, TrainedModel, predict_batch, train
from .setvalued import BranchSpec, MixtureConfig, branch_values, evaluation_grid, generate_mixture

logger = logging.getLogger(__name__)

NETWORKS = ("A", "B", "joint")
POPULATIONS = ("A", "B")
OUTCOMES = ("over", "under", "accurate")


@dataclass(frozen=True)
class ProtocolConfig:
    accuracy_band: float = 0.15
    majority_threshold: float = 0.6
    cross_threshold: float = 0.6
    own_threshold: float = 0.6
    midpoint_band: float = 0.1
    min_gap_fraction: float = 0.05
    max_workers: int = 3

    def __post_init__(self):
        errors = []
        if not self.accuracy_band > 0:
            errors.append(f"accuracy_band must be positive, got {self.accuracy_band}")
        if not 0.5 < self.majority_threshold <= 1.0:
            errors.append(f"majority_threshold must be in (0.5, 1], got {self.majority_threshold}")
        for name in ("cross_threshold", "own_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                errors.append(f"{name} must be in [0, 1], got {value}")
        if not 0.0 < self.midpoint_band < 0.5:
            errors.append(f"midpoint_band must be in (0, 0.5), got {self.midpoint_band}")
        if not 0.0 <= self.min_gap_fraction < 1.0:
            errors.append(f"min_gap_fraction must be in [0, 1), got {self.min_gap_fraction}")
        if self.max_workers < 1:
            errors.append(f"max_workers must be at least 1, got {self.max_workers}")
        if errors:
            raise ConfigError(errors)

    def to_dict(self) -> dict:
        # json has no infinity; an unbounded band is written as null
        band = self.accuracy_band if np.isfinite(self.accuracy_band) else None
        return {
            "accuracy_band": band,
            "majority_threshold": self.majority_threshold,
            "cross_threshold": self.cross_threshold,
            "own_threshold": self.own_threshold,
            "midpoint_band": self.midpoint_band,
            "min_gap_fraction": self.min_gap_fraction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolConfig":
        data = dict(data)
        if "accuracy_band" in data and data["accuracy_band"] is None:
            data["accuracy_band"] = float("inf")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid protocol config: {e}") from e


# Majority-branch learning

@dataclass(frozen=True)
class BranchProximity:
    """How a model's predictions sit relative to two branches on a grid."""

    points: np.ndarray
    predictions: np.ndarray
    values: np.ndarray
    branch_ids: Tuple[int, int]
    usable: np.ndarray
    nearest: np.ndarray
    in_midpoint: np.ndarray

    def closer_fraction(self, branch_id: int) -> float:
        """Share of usable grid points where the prediction is nearer `branch_id`."""
        n = int(self.usable.sum())
        if n == 0:
            return 0.0
        return float(np.sum(self.nearest[self.usable] == branch_id) / n)

    @property
    def region_fractions(self) -> Dict[str, float]:
        """Three-way split of usable points: near branch 1, near branch 2 or in the midpoint band."""
        n = int(self.usable.sum())
        if n == 0:
            return {str(self.branch_ids[0]): 0.0, str(self.branch_ids[1]): 0.0, "midpoint": 0.0}
        usable_mid = self.in_midpoint[self.usable]
        nearest = self.nearest[self.usable]
        fractions = {str(b): float(np.sum((nearest == b) & ~usable_mid) / n) for b in self.branch_ids}
        fractions["midpoint"] = float(usable_mid.sum() / n)
        return fractions

    def majority(self, threshold: float) -> Optional[int]:
        """The branch nearest to most predictions, or None below `threshold`."""
        shares = {b: self.closer_fraction(b) for b in self.branch_ids}
        # ties go to the lower branch id
        winner = min(shares, key=lambda b: (-shares[b], b))
        return winner if shares[winner] >= threshold else None


def branch_proximity(
    model: TrainedModel,
    branches: Sequence[BranchSpec],
    grid: Optional[np.ndarray] = None,
    midpoint_band: float = 0.1,
    min_gap_fraction: float = 0.05,
) -> BranchProximity:
    branches = sorted(branches, key=lambda b: b.id)
    if grid is None:
        grid = evaluation_grid(branches)
    values = branch_values(branches, grid)
    predictions = predict_batch(model, grid)[:, 0]

    gap = np.abs(values[:, 0] - values[:, 1])
    largest = float(gap.max()) if gap.size else 0.0
    usable = gap > 0 if largest == 0 else gap >= min_gap_fraction * largest

    distance = np.abs(predictions[:, None] - values)
    ids = np.array([b.id for b in branches])
    nearest = ids[np.argmin(distance, axis=1)]
    middle = values.mean(axis=1)
    in_midpoint = np.abs(predictions - middle) <= midpoint_band * gap

    return BranchProximity(
        points=grid,
        predictions=predictions,
        values=values,
        branch_ids=(int(ids[0]), int(ids[1])),
        usable=usable,
        nearest=nearest,
        in_midpoint=in_midpoint & usable,
    )


def fit_majority(cfg: NetworkConfig, mix: Dataset, epoch_callback=None) -> TrainedModel:
    """Train on a mixture; with logcosh the network follows the larger branch."""
    if cfg.loss.kind is not LossKind.LOGCOSH:
        logger.warning(f"Fitting a mixture with {cfg.loss.kind.value} loss; only logcosh is expected to pick the majority branch")
    tags = mix.tag("branch")
    if tags is not None and len(mix):
        counts = pd.Series(tags).value_counts().sort_index()
        logger.info(f"Mixture branch counts: {counts.to_dict()}")
    return train(cfg, mix, epoch_callback=epoch_callback)


@dataclass(frozen=True)
class BranchAssignment:
    samples: pd.DataFrame
    counts: Dict[int, int]
    majority: Optional[int]
    proximity: BranchProximity = field(repr=False)

    @property
    def tag_agreement(self) -> Optional[float]:
        """Share of tagged, unambiguous samples whose assignment matches their true branch."""
        if "true_branch" not in self.samples.columns:
            return None
        known = self.samples["true_branch"].notna() & ~self.samples["ambiguous"]
        if not known.any():
            return None
        hits = self.samples.loc[known, "assigned"] == self.samples.loc[known, "true_branch"]
        return float(hits.mean())

    def agreement_where(self, mask: np.ndarray) -> Optional[float]:
        subset = self.samples[np.asarray(mask, dtype=bool)]
        if subset.empty or "true_branch" not in subset.columns:
            return None
        return float((subset["assigned"] == subset["true_branch"]).mean())


def classify_by_branch(
    model: TrainedModel,
    data: Dataset,
    branches: Sequence[BranchSpec],
    pcfg: ProtocolConfig = ProtocolConfig(),
) -> BranchAssignment:
    """
    Assign every sample to the branch whose value is nearest its target.

    Ties go to the lower branch id. The majority branch comes from the model's
    predictions voted over the multi-valued region.
    """
    branches = sorted(branches, key=lambda b: b.id)
    values = branch_values(branches, data.features)
    residuals = data.targets[:, :1] - values
    ids = np.array([b.id for b in branches])
    # argmin returns the first minimum, which is the lower id after sorting
    assigned = ids[np.argmin(np.abs(residuals), axis=1)]

    samples = pd.DataFrame({"prediction": predict_batch(model, data.features)[:, 0]})
    for j, b in enumerate(branches):
        samples[f"residual_{b.id}"] = residuals[:, j]
    samples["assigned"] = assigned
    # where branches coincide the target cannot tell them apart
    samples["ambiguous"] = values[:, 0] == values[:, 1]
    true_branch = data.tag("branch")
    if true_branch is not None:
        samples["true_branch"] = pd.array(true_branch, dtype="Int64")

    proximity = branch_proximity(model, branches, midpoint_band=pcfg.midpoint_band, min_gap_fraction=pcfg.min_gap_fraction)
    counts = {int(b): int(np.sum(assigned == b)) for b in ids}
    majority = proximity.majority(pcfg.majority_threshold)
    logger.info(f"Branch assignment counts {counts}, majority branch {majority}")
    return BranchAssignment(samples, counts, majority, proximity)


def sweep_fractions(
    cfg: NetworkConfig,
    mixture: MixtureConfig,
    fractions: Sequence[float],
    pcfg: ProtocolConfig = ProtocolConfig(),
) -> pd.DataFrame:
    """Majority branch learned at each mixing fraction."""
    rows = []
    for fraction in fractions:
        train_set, _ = generate_mixture(replace(mixture, fraction_first=float(fraction)))
        model = fit_majority(cfg, train_set)
        proximity = branch_proximity(model, mixture.branches, midpoint_band=pcfg.midpoint_band, min_gap_fraction=pcfg.min_gap_fraction)
        first, second = proximity.branch_ids
        rows.append({
            "fraction_first": float(fraction),
            f"closer_to_{first}": proximity.closer_fraction(first),
            f"closer_to_{second}": proximity.closer_fraction(second),
            "majority": proximity.majority(pcfg.majority_threshold),
            "final_loss": model.final_loss,
        })
        logger.info(f"Fraction {fraction:.2f}: majority branch {rows[-1]['majority']}")
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class LossSummary:
    loss: str
    final_loss: float
    region_fractions: Dict[str, float]
    closer_fractions: Dict[str, float]
    prediction_variance: float
    model: TrainedModel = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "final_loss": self.final_loss,
            "region_fractions": self.region_fractions,
            "closer_fractions": self.closer_fractions,
            "prediction_variance": self.prediction_variance,
        }


def _loss_label(cfg: NetworkConfig) -> str:
    if cfg.loss.delta is not None:
        return f"{cfg.loss.kind.value}:{cfg.loss.delta:g}"
    return cfg.loss.kind.value


def compare_losses(
    mix: Dataset,
    cfgs: Sequence[NetworkConfig],
    branches: Sequence[BranchSpec],
    pcfg: ProtocolConfig = ProtocolConfig(),
    last_epochs: int = 10,
) -> List[LossSummary]:
    """
    Train one model per loss on the same mixture and compare where each lands.

    `prediction_variance` is the grid-averaged variance of predictions over the
    last `last_epochs` epochs, which exposes MAE oscillating between branches.
    """
    if not cfgs:
        raise ValidationError("compare_losses needs at least one config")
    reference = {k: v for k, v in cfgs[0].to_dict().items() if k != "loss"}
    for cfg in cfgs[1:]:
        if {k: v for k, v in cfg.to_dict().items() if k != "loss"} != reference:
            raise ConfigError("configs passed to compare_losses may differ only in their loss")

    grid = evaluation_grid(branches)
    summaries = []
    for cfg in cfgs:
        recent = deque(maxlen=last_epochs)

        def record(epoch: int, snapshot: TrainedModel, recent=recent):
            recent.append(predict_batch(snapshot, grid)[:, 0])

        model = train(cfg, mix, epoch_callback=record)
        history = np.vstack(recent)
        variance = float(np.mean(np.var(history, axis=0))) if len(recent) > 1 else 0.0
        proximity = branch_proximity(model, branches, grid, pcfg.midpoint_band, pcfg.min_gap_fraction)
        label = _loss_label(cfg)
        summaries.append(LossSummary(
            loss=label,
            final_loss=model.final_loss,
            region_fractions=proximity.region_fractions,
            closer_fractions={str(b): proximity.closer_fraction(b) for b in proximity.branch_ids},
            prediction_variance=variance,
            model=model,
        ))
        logger.info(f"{label}: final loss {model.final_loss:.6g}, prediction variance {variance:.6g}")
    return summaries


# Hidden-feature protocol

class Decision(str, Enum):
    CLUSTERS_DETECTED = "clusters_detected"
    NO_CLUSTERS = "no_clusters"
    INCONCLUSIVE = "inconclusive"


def unit_relative_error(predictions: np.ndarray, targets: np.ndarray) -> float:
    """
    Signed error of a unit's whole series relative to its magnitude.

    A series whose targets are all zero has no magnitude. An exact zero
    prediction scores 0; anything else falls back to the mean signed error,
    and the report flags such units with zero_targets.
    """
    scale = float(np.sum(np.abs(targets)))
    signed = float(np.sum(predictions - targets))
    if scale == 0:
        if not np.any(predictions):
            return 0.0
        return float(np.mean(predictions - targets))
    return signed / scale


def classify_error(error: float, band: float) -> str:
    if error > band:
        return "over"
    if error < -band:
        return "under"
    return "accurate"


@dataclass(frozen=True)
class CrossEvalReport:
    decision: Decision
    rule: str
    counts: Dict[str, Dict[str, Dict[str, int]]]
    unit_errors: pd.DataFrame
    config: ProtocolConfig
    models: Dict[str, TrainedModel] = field(default_factory=dict, repr=False, compare=False)

    def share(self, network: str, population: str, outcome: str) -> float:
        cell = self.counts[network][population]
        total = sum(cell.values())
        return cell[outcome] / total if total else 0.0

    def to_dict(self) -> dict:
        units = []
        for row in self.unit_errors.itertuples(index=False):
            units.append({
                "district": row.district,
                "population": row.population,
                "errors": {net: float(getattr(row, f"error_{net}")) for net in NETWORKS},
                "mean_errors": {net: float(getattr(row, f"mean_error_{net}")) for net in NETWORKS},
                "zero_targets": bool(row.zero_targets),
                "outcomes": {net: getattr(row, f"outcome_{net}") for net in NETWORKS},
            })
        return {
            "decision": self.decision.value,
            "rule": self.rule,
            "counts": self.counts,
            "units": units,
            "thresholds": self.config.to_dict(),
            "note": "over/under/accurate use a mean relative error band chosen for this report",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        rows = []
        for net in NETWORKS:
            for pop in POPULATIONS:
                cell = self.counts[net][pop]
                rows.append({
                    "network": net,
                    "population": pop,
                    "units": sum(cell.values()),
                    "over": cell["over"],
                    "under": cell["under"],
                    "accurate": cell["accurate"],
                })
        band = self.config.accuracy_band
        band_text = f"+/-{band:.0%}" if np.isfinite(band) else "unbounded"
        lines = [
            f"Decision: {self.decision.value}",
            f"Rule: {self.rule}",
            f"Accuracy band {band_text}, cross threshold {self.config.cross_threshold:.0%}, "
            f"own threshold {self.config.own_threshold:.0%}",
            "",
            pd.DataFrame(rows).to_string(index=False),
            "",
        ]
        return "\n".join(lines)


def _partition_from_panel(panel: Dataset) -> Dict[str, str]:
    districts = panel.tag("district")
    labels = panel.tag("population_label")
    if districts is None:
        raise ProtocolError("panel carries no district ids")
    if labels is None:
        raise ProtocolError("panel carries no population labels and no partition was given")
    partition = {}
    for district, label in zip(districts, labels):
        if label is None or (isinstance(label, float) and np.isnan(label)):
            continue
        partition.setdefault(str(district), str(label))
    return partition


def _check_partition(units: Sequence[str], partition: Mapping[str, str]) -> Dict[str, List[str]]:
    missing = [u for u in units if u not in partition]
    if missing:
        raise ProtocolError(f"units without a partition label: {missing[:5]}")
    bad = sorted({label for label in partition.values() if label not in POPULATIONS})
    if bad:
        raise ProtocolError(f"partition labels must be 'A' or 'B', got {bad}")
    classes = {pop: [u for u in units if partition[u] == pop] for pop in POPULATIONS}
    for pop, members in classes.items():
        if not members:
            raise ProtocolError(f"partition class {pop} empty")
        if len(members) < 2:
            raise ProtocolError(f"partition class {pop} has {len(members)} unit, at least 2 are required")
    return classes


async def _train_networks(cfg: NetworkConfig, subsets: Dict[str, Dataset], max_workers: int) -> Dict[str, TrainedModel]:
    semaphore = asyncio.Semaphore(max_workers)

    async def run(name: str, data: Dataset):
        async with semaphore:
            logger.info(f"Training {name} network on {len(data)} rows")
            return name, await asyncio.to_thread(train, cfg, data)

    results = await asyncio.gather(*(run(name, data) for name, data in subsets.items()))
    return dict(results)


def _decide(counts, pcfg: ProtocolConfig) -> Tuple[Decision, str]:
    def share(net, pop, outcome):
        cell = counts[net][pop]
        total = sum(cell.values())
        return cell[outcome] / total if total else 0.0

    cross = pcfg.cross_threshold
    a_over_b = share("A", "B", "over") >= cross and share("B", "A", "under") >= cross
    a_under_b = share("A", "B", "under") >= cross and share("B", "A", "over") >= cross
    own = share("A", "A", "accurate") >= pcfg.own_threshold and share("B", "B", "accurate") >= pcfg.own_threshold

    if a_over_b or a_under_b:
        direction = (
            "A-network over-predicts B and B-network under-predicts A"
            if a_over_b else
            "A-network under-predicts B and B-network over-predicts A"
        )
        if own:
            return Decision.CLUSTERS_DETECTED, f"{direction}; both own-network fits accurate"
        return Decision.INCONCLUSIVE, f"{direction}; own-network accuracy below {pcfg.own_threshold:.0%}"
    return Decision.NO_CLUSTERS, f"no cross-network asymmetry reaching {cross:.0%}"


def run_hidden_feature_protocol(
    cfg: NetworkConfig,
    panel: Dataset,
    partition: Optional[Mapping[str, str]] = None,
    pcfg: ProtocolConfig = ProtocolConfig(),
) -> CrossEvalReport:
    """
    Train identical networks on population A, population B and all units, then
    score every unit under every network.
    """
    units = [str(u) for u in panel.units()]
    if not units:
        raise ProtocolError("panel carries no district ids")
    if partition is None:
        partition = _partition_from_panel(panel)
    partition = {str(k): v for k, v in partition.items()}
    classes = _check_partition(units, partition)

    districts = np.array([str(d) for d in panel.tag("district")], dtype=object)
    subsets = {
        "A": panel.where(np.isin(districts, classes["A"])),
        "B": panel.where(np.isin(districts, classes["B"])),
        "joint": panel,
    }
    models = asyncio.run(_train_networks(cfg, subsets, pcfg.max_workers))

    predictions = {net: predict_batch(models[net], panel.features) for net in NETWORKS}
    rows = []
    for unit in units:
        mask = districts == unit
        row = {"district": unit, "population": partition[unit], "zero_targets": not np.any(panel.targets[mask])}
        for net in NETWORKS:
            error = unit_relative_error(predictions[net][mask], panel.targets[mask])
            row[f"error_{net}"] = error
            row[f"mean_error_{net}"] = float(np.mean(predictions[net][mask] - panel.targets[mask]))
            row[f"outcome_{net}"] = classify_error(error, pcfg.accuracy_band)
        rows.append(row)
    unit_errors = pd.DataFrame(rows)

    counts = {
        net: {
            pop: {outcome: int(np.sum((unit_errors["population"] == pop) & (unit_errors[f"outcome_{net}"] == outcome))) for outcome in OUTCOMES}
            for pop in POPULATIONS
        }
        for net in NETWORKS
    }
    decision, rule = _decide(counts, pcfg)
    logger.info(f"Hidden-feature protocol decision: {decision.value} ({rule})")
    return CrossEvalReport(decision, rule, counts, unit_errors, pcfg, models)
