"""
Dataset: feature matrix, target matrix and per-sample metadata tags.

CSV layout: header row, feature columns, target columns (header prefixed with
`target_`), then tag columns. Missing tags are written as empty fields.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import PanelError, ShapeError
from .numerics import as_matrix

logger = logging.getLogger(__name__)

TAG_COLUMNS = ("branch", "district", "population_label", "day")
TARGET_PREFIX = "target_"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    tags: pd.DataFrame = field(default_factory=pd.DataFrame)
    feature_names: Tuple[str, ...] = ()
    target_names: Tuple[str, ...] = ()

    def __post_init__(self):
        features = as_matrix(np.array(self.features, dtype=np.float64), "features")
        targets = as_matrix(np.array(self.targets, dtype=np.float64), "targets")
        if features.shape[0] != targets.shape[0]:
            raise ShapeError(
                f"features have {features.shape[0]} rows but targets have {targets.shape[0]}",
                features.shape, targets.shape,
            )
        tags = self.tags
        if tags is None or len(tags.columns) == 0:
            tags = pd.DataFrame(index=range(features.shape[0]))
        if len(tags) != features.shape[0]:
            raise ShapeError(f"tags have {len(tags)} rows but features have {features.shape[0]}", (len(tags),), features.shape)
        unknown = [c for c in tags.columns if c not in TAG_COLUMNS]
        if unknown:
            raise PanelError(f"unknown tag columns: {unknown}")
        tags = tags.reset_index(drop=True)

        feature_names = tuple(self.feature_names) or tuple(f"x{i}" for i in range(features.shape[1]))
        target_names = tuple(self.target_names) or tuple(f"y{i}" for i in range(targets.shape[1]))
        if len(feature_names) != features.shape[1] or len(target_names) != targets.shape[1]:
            raise ShapeError("column names do not match matrix widths", features.shape, targets.shape)

        features.flags.writeable = False
        targets.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "feature_names", feature_names)
        object.__setattr__(self, "target_names", target_names)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[1]

    def tag(self, name: str) -> Optional[np.ndarray]:
        if name not in self.tags.columns:
            return None
        return self.tags[name].to_numpy()

    def subset(self, index: Sequence[int]) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            self.features[index],
            self.targets[index],
            self.tags.iloc[index].reset_index(drop=True),
            self.feature_names,
            self.target_names,
        )

    def where(self, mask: np.ndarray) -> "Dataset":
        return self.subset(np.flatnonzero(np.asarray(mask, dtype=bool)))

    def units(self) -> list:
        """District ids in order of first appearance."""
        districts = self.tag("district")
        if districts is None:
            return []
        return list(dict.fromkeys(districts.tolist()))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=list(self.feature_names))
        for j, name in enumerate(self.target_names):
            frame[TARGET_PREFIX + name] = self.targets[:, j]
        for column in TAG_COLUMNS:
            if column in self.tags.columns:
                # .array keeps nullable Int64 tags integral next to <NA>
                frame[column] = self.tags[column].array
        return frame

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, na_rep="", lineterminator="\n")
        logger.debug(f"Wrote {len(self)} rows to {path}")
        return path

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        if not path.exists():
            raise PanelError(f"dataset file not found: {path}")
        try:
            frame = pd.read_csv(path, keep_default_na=False, dtype=str)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise PanelError(f"malformed dataset CSV {path}: {e}") from e

        tag_cols = [c for c in frame.columns if c in TAG_COLUMNS]
        target_cols = [c for c in frame.columns if c.startswith(TARGET_PREFIX)]
        feature_cols = [c for c in frame.columns if c not in tag_cols and c not in target_cols]
        if not target_cols:
            raise PanelError(f"{path} has no '{TARGET_PREFIX}' columns")
        try:
            features = frame[feature_cols].astype(np.float64).to_numpy()
            targets = frame[target_cols].astype(np.float64).to_numpy()
        except ValueError as e:
            raise PanelError(f"non-numeric value in {path}: {e}") from e

        tags = pd.DataFrame(index=range(len(frame)))
        for column in tag_cols:
            values = frame[column].where(frame[column] != "", None)
            if column in ("branch", "day"):
                try:
                    values = pd.to_numeric(values).astype("Int64")
                except (TypeError, ValueError) as e:
                    raise PanelError(f"{column} tags in {path} must be integers: {e}") from e
            tags[column] = values
        return cls(
            features.reshape(len(frame), len(feature_cols)),
            targets.reshape(len(frame), len(target_cols)),
            tags,
            tuple(feature_cols),
            tuple(c[len(TARGET_PREFIX):] for c in target_cols),
        )
