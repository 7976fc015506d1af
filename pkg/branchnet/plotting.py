"""
SVG figures for training runs, protocol reports and correlation maps.

Figures are rendered with the Agg backend and written without a date stamp and
with a fixed hash salt, so seeded runs produce identical files.
"""
import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

logger = logging.getLogger(__name__)

POPULATION_COLORS = {"A": "tab:blue", "B": "tab:orange", None: "tab:gray"}
BRANCH_COLORS = {1: "tab:blue", 2: "tab:green"}
PREDICTION_COLOR = "tab:red"
NETWORK_STYLES = {"A": "--", "B": ":", "joint": "-"}

plt.rcParams["svg.hashsalt"] = "branchnet"
plt.rcParams["svg.fonttype"] = "none"


def save_svg(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    logger.debug(f"Wrote {path}")
    return path


def plot_loss_trace(loss_trace: Sequence[float], path, validation_trace: Sequence[float] = (), title: str = "Training loss"):
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = np.arange(1, len(loss_trace) + 1)
    ax.plot(epochs, loss_trace, label="training")
    if len(validation_trace):
        ax.plot(np.arange(1, len(validation_trace) + 1), validation_trace, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend()
    return save_svg(fig, path)


def plot_mixture_1d(features: np.ndarray, targets: np.ndarray, branch_tags, grid: np.ndarray, predictions: np.ndarray, path, title: str = ""):
    """Samples colored by branch with the model's prediction curve on top."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    tags = pd.Series(branch_tags) if branch_tags is not None else pd.Series([None] * len(targets))
    for branch in sorted(tags.dropna().unique()):
        mask = (tags == branch).fillna(False).to_numpy(dtype=bool)
        ax.scatter(features[mask, 0], targets[mask], s=4, alpha=0.5, color=BRANCH_COLORS.get(int(branch), "tab:gray"), label=f"branch {branch}")
    if tags.isna().all():
        ax.scatter(features[:, 0], targets, s=4, alpha=0.5, color="tab:gray", label="samples")
    order = np.argsort(grid[:, 0])
    ax.plot(grid[order, 0], predictions[order], color=PREDICTION_COLOR, linewidth=2, label="prediction")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    ax.legend(markerscale=3)
    return save_svg(fig, path)


def plot_surface_2d(grid: np.ndarray, predictions: np.ndarray, branch_values: np.ndarray, path, slice_y: float = 1.0, title: str = ""):
    """2D prediction as a color-mapped scatter plus a fixed-y slice against both branches."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(11, 4.5))
    points = left.scatter(grid[:, 0], grid[:, 1], c=predictions, cmap="viridis", s=12, vmin=0.0, vmax=1.0)
    fig.colorbar(points, ax=left, label="prediction")
    left.set_xlabel("x1")
    left.set_ylabel("x2")
    left.set_title(title or "prediction")

    ys = np.unique(grid[:, 1])
    nearest = ys[np.argmin(np.abs(ys - slice_y))]
    mask = grid[:, 1] == nearest
    order = np.argsort(grid[mask, 0])
    xs = grid[mask, 0][order]
    for j, color in enumerate(BRANCH_COLORS.values()):
        right.plot(xs, branch_values[mask, j][order], color=color, label=f"branch {j + 1}")
    right.plot(xs, predictions[mask][order], color=PREDICTION_COLOR, linewidth=2, label="prediction")
    right.set_xlabel("x1")
    right.set_title(f"slice x2 = {nearest:.2f}")
    right.legend()
    return save_svg(fig, path)


def plot_loss_comparison(grid: np.ndarray, branch_values: np.ndarray, predictions: Mapping[str, np.ndarray], path):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    x = grid[:, 0]
    order = np.argsort(x)
    for j, color in enumerate(BRANCH_COLORS.values()):
        ax.plot(x[order], branch_values[order, j], color=color, linewidth=3, alpha=0.4, label=f"branch {j + 1}")
    palette = sns.color_palette("dark", len(predictions))
    for (label, values), color in zip(predictions.items(), palette):
        ax.plot(x[order], values[order], color=color, label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("prediction")
    ax.set_title("Predictions by loss")
    ax.legend()
    return save_svg(fig, path)


def plot_unit_series(
    unit: str,
    days: np.ndarray,
    targets: np.ndarray,
    predictions: Dict[str, np.ndarray],
    path,
    population: Optional[str] = None,
    ylabel: str = "target",
):
    """One unit's series with one prediction line per network."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(days, targets, s=8, color=POPULATION_COLORS.get(population, "tab:gray"), label=f"data ({population or 'unlabeled'})")
    for name, values in predictions.items():
        ax.plot(days, values, color=PREDICTION_COLOR, linestyle=NETWORK_STYLES.get(name, "-"), label=f"{name} network" if name in NETWORK_STYLES else name)
    ax.set_xlabel("day")
    ax.set_ylabel(ylabel)
    ax.set_title(f"District {unit}")
    ax.legend()
    return save_svg(fig, path)


def plot_predictions(targets: np.ndarray, predictions: np.ndarray, populations, path, title: str = "Prediction vs target"):
    """Scatter of predicted against true values, one color per population."""
    fig, ax = plt.subplots(figsize=(5.5, 5))
    labels = pd.Series(populations if populations is not None else [None] * len(targets), dtype=object)
    for population in [p for p in ("A", "B") if (labels == p).any()] + ([None] if labels.isna().any() else []):
        mask = labels.isna().to_numpy() if population is None else (labels == population).to_numpy()
        ax.scatter(targets[mask], predictions[mask], s=6, alpha=0.6, color=POPULATION_COLORS[population], label=population or "unlabeled")
    low = float(min(targets.min(), predictions.min()))
    high = float(max(targets.max(), predictions.max()))
    ax.plot([low, high], [low, high], color="black", linewidth=1)
    ax.set_xlabel("target")
    ax.set_ylabel("prediction")
    ax.set_title(title)
    ax.legend()
    return save_svg(fig, path)


def plot_correlation_heatmap(corr: pd.DataFrame, path):
    size = max(5.0, 0.7 * len(corr))
    fig, ax = plt.subplots(figsize=(size + 1.5, size))
    sns.heatmap(corr, vmin=-1.0, vmax=1.0, center=0.0, cmap="coolwarm", annot=len(corr) <= 12, fmt=".2f", square=True, ax=ax)
    ax.set_title("Feature correlation")
    return save_svg(fig, path)
