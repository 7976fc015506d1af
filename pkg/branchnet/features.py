"""
District panel ingestion and feature engineering.

A panel is a set of DistrictRecords (demographics) plus one CaseSeries per
district (daily counts indexed from day 0). `build_design` turns a panel into
a Dataset according to a FeatureStrategy.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .dataset import Dataset
from .errors import ConfigError, PanelError, ValidationError
from .numerics import make_rng

logger = logging.getLogger(__name__)

FIRST_DAY_RATE = 100000  # cases per this many inhabitants mark the first day
RECOVERY_SHIFT = 14
TRAILING_WINDOW = 7
BAND_SUM_TOLERANCE = 0.005

DISTRICT_COLUMNS = ("id", "population", "area_km2", "income", "pop_band1", "pop_band2", "pop_band3", "label")
SERIES_COLUMNS = ("id", "day", "new_cases", "new_deaths", "new_recoveries")
BAND_CASE_COLUMNS = ("band1_cases", "band2_cases", "band3_cases")
BAND_DEATH_COLUMNS = ("band1_deaths", "band2_deaths", "band3_deaths")
LABELS = ("A", "B")


class AgeBanding(str, Enum):
    STANDARD = "0-34/35-79/80+"
    ALTERNATE = "0-30/30-65/65+"


@dataclass(frozen=True)
class DistrictRecord:
    id: str
    population_total: int
    area: float
    income: float
    age_group_pops: Tuple[int, int, int]
    population_label: Optional[str] = None
    banding: AgeBanding = AgeBanding.STANDARD

    def __post_init__(self):
        errors = []
        if self.population_total < 0:
            errors.append(f"population must be non-negative, got {self.population_total}")
        if not self.area > 0:
            errors.append(f"area must be positive, got {self.area}")
        if not self.income > 0:
            errors.append(f"income must be positive, got {self.income}")
        if len(self.age_group_pops) != 3 or any(p < 0 for p in self.age_group_pops):
            errors.append(f"three non-negative age band populations required, got {self.age_group_pops}")
        if self.population_label not in (None,) + LABELS:
            errors.append(f"label must be A, B or empty, got {self.population_label!r}")
        if errors:
            raise PanelError(f"district {self.id}: " + "; ".join(errors))
        object.__setattr__(self, "age_group_pops", tuple(int(p) for p in self.age_group_pops))

    @property
    def band_mismatch(self) -> float:
        """Relative gap between the band sum and the total population."""
        if self.population_total == 0:
            return 0.0 if sum(self.age_group_pops) == 0 else math.inf
        return abs(sum(self.age_group_pops) - self.population_total) / self.population_total


def _counts(values, name: str, district: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim not in (1, 2):
        raise PanelError(f"district {district}: {name} must be a day-indexed array")
    if np.any(arr < 0):
        raise PanelError(f"district {district}: {name} has negative entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CaseSeries:
    district_id: str
    new_cases: np.ndarray
    new_deaths: np.ndarray
    new_recoveries: Optional[np.ndarray] = None
    band_cases: Optional[np.ndarray] = None
    band_deaths: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.new_cases)
        for name in ("new_cases", "new_deaths", "new_recoveries", "band_cases", "band_deaths"):
            values = getattr(self, name)
            if values is None:
                continue
            arr = _counts(values, name, self.district_id)
            if arr.shape[0] != n:
                raise PanelError(f"district {self.district_id}: {name} has {arr.shape[0]} days, new_cases has {n}")
            if name.startswith("band_") and arr.shape != (n, 3):
                raise PanelError(f"district {self.district_id}: {name} must have shape ({n}, 3), got {arr.shape}")
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.new_cases)

    @property
    def cumulative_cases(self) -> np.ndarray:
        return np.cumsum(self.new_cases)

    @property
    def cumulative_deaths(self) -> np.ndarray:
        return np.cumsum(self.new_deaths)

    @property
    def cumulative_recoveries(self) -> Optional[np.ndarray]:
        if self.new_recoveries is None:
            return None
        return np.cumsum(self.new_recoveries)


@dataclass(frozen=True)
class RejectedRow:
    file: str
    line: int
    reason: str

    def __str__(self):
        return f"{self.file}:{self.line}: {self.reason}"


@dataclass
class IngestReport:
    rejected: List[RejectedRow] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    dropped: List[str] = field(default_factory=list)

    def reject(self, file: str, line: int, reason: str):
        row = RejectedRow(file, line, reason)
        logger.warning(f"Rejected row {row}")
        self.rejected.append(row)

    def warn(self, message: str):
        logger.warning(message)
        self.warnings.append(message)

    @property
    def clean(self) -> bool:
        return not (self.rejected or self.warnings or self.dropped)

    def to_dict(self) -> dict:
        return {
            "rejected": [{"file": r.file, "line": r.line, "reason": r.reason} for r in self.rejected],
            "warnings": list(self.warnings),
            "dropped": list(self.dropped),
        }


def _read_table(path: Path, required: Sequence[str], kind: str) -> pd.DataFrame:
    if not path.exists():
        raise PanelError(f"{kind} file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise PanelError(f"no {kind} rows in {path}") from None
    except pd.errors.ParserError as e:
        raise PanelError(f"malformed {kind} CSV {path}: {e}") from e
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise PanelError(f"{path} is missing columns: {missing}")
    if frame.empty:
        raise PanelError(f"no {kind} rows in {path}")
    return frame


def _parse_districts(path: Path, banding: AgeBanding, report: IngestReport) -> Dict[str, DistrictRecord]:
    frame = _read_table(path, DISTRICT_COLUMNS, "district")
    records: Dict[str, DistrictRecord] = {}
    seen = set()
    for line, row in zip(frame.index + 2, frame.itertuples(index=False)):
        district = row.id.strip()
        if district in seen:
            raise PanelError(f"duplicate district id '{district}' at {path.name}:{line}")
        seen.add(district)
        try:
            record = DistrictRecord(
                id=district,
                population_total=int(row.population),
                area=float(row.area_km2),
                income=float(row.income),
                age_group_pops=(int(row.pop_band1), int(row.pop_band2), int(row.pop_band3)),
                population_label=row.label.strip() or None,
                banding=banding,
            )
        except (ValueError, PanelError) as e:
            report.reject(path.name, int(line), str(e))
            continue
        if record.band_mismatch > BAND_SUM_TOLERANCE:
            report.warn(f"district {district}: age bands sum to {sum(record.age_group_pops)}, population is {record.population_total}")
        records[district] = record
    return records


def _parse_series(path: Path, known: Sequence[str], report: IngestReport) -> Dict[str, CaseSeries]:
    frame = _read_table(path, SERIES_COLUMNS, "series")
    frame["id"] = frame["id"].str.strip()
    lines = frame.index + 2
    value_columns = [c for c in frame.columns if c not in ("id",)]
    optional = set(value_columns) - set(SERIES_COLUMNS) - set(BAND_CASE_COLUMNS) - set(BAND_DEATH_COLUMNS)
    if optional:
        raise PanelError(f"{path} has unknown columns: {sorted(optional)}")

    numbers = frame[value_columns].apply(pd.to_numeric, errors="coerce")
    blank = frame[value_columns] == ""
    # recoveries and band splits may be left blank
    may_be_blank = [c for c in value_columns if c not in ("day", "new_cases", "new_deaths")]

    keep = np.ones(len(frame), dtype=bool)
    for i, line in enumerate(lines):
        reasons = []
        for column in value_columns:
            value = numbers.at[i, column]
            if blank.at[i, column]:
                if column not in may_be_blank:
                    reasons.append(f"{column} is empty")
            elif pd.isna(value) or value != math.floor(value):
                reasons.append(f"{column} is not an integer: {frame.at[i, column]!r}")
            elif value < 0:
                reasons.append(f"{column} is negative")
        district = frame.at[i, "id"]
        if not reasons and district not in known:
            report.warn(f"{path.name}:{line}: series row for unknown district '{district}' ignored")
            keep[i] = False
            continue
        if reasons:
            report.reject(path.name, int(line), "; ".join(reasons))
            keep[i] = False

    frame = frame[keep]
    numbers = numbers[keep]
    lines = lines[keep]
    duplicated = frame.duplicated(subset=["id", "day"], keep="first").to_numpy()
    for line in lines[duplicated]:
        report.reject(path.name, int(line), "duplicate (id, day) row")
    frame, numbers = frame[~duplicated], numbers[~duplicated]
    if frame.empty:
        raise PanelError(f"no usable series rows in {path}")

    length = int(numbers["day"].max()) + 1
    series: Dict[str, CaseSeries] = {}
    for district, rows in numbers.groupby(frame["id"], sort=False):
        days = rows["day"].astype(np.int64).to_numpy()

        def dense(columns) -> Optional[np.ndarray]:
            present = [c for c in columns if c in rows.columns]
            if len(present) != len(columns) or rows[present].isna().any(axis=None):
                return None
            out = np.zeros((length, len(columns)), dtype=np.int64)
            out[days] = rows[present].astype(np.int64).to_numpy()
            return out

        recoveries = dense(["new_recoveries"])
        if recoveries is None:
            report.warn(f"district {district}: recoveries incomplete, active-case strategies unavailable")
        band_cases = dense(list(BAND_CASE_COLUMNS)) if BAND_CASE_COLUMNS[0] in rows.columns else None
        band_deaths = dense(list(BAND_DEATH_COLUMNS)) if BAND_DEATH_COLUMNS[0] in rows.columns else None
        series[district] = CaseSeries(
            district_id=district,
            new_cases=dense(["new_cases"])[:, 0],
            new_deaths=dense(["new_deaths"])[:, 0],
            new_recoveries=None if recoveries is None else recoveries[:, 0],
            band_cases=band_cases,
            band_deaths=band_deaths,
        )
    return series


def ingest_panel(district_csv, series_csv, banding: AgeBanding = AgeBanding.STANDARD):
    """
    Read and validate a panel.

    Returns (records, series, report). Rows failing validation are listed in the
    report with their line numbers; districts without any series are dropped.
    """
    report = IngestReport()
    district_path, series_path = Path(district_csv), Path(series_csv)
    records = _parse_districts(district_path, banding, report)
    series = _parse_series(series_path, list(records), report)

    for district in list(records):
        if district not in series:
            report.dropped.append(district)
            report.warn(f"district {district} has no series rows and was dropped")
            del records[district]

    logger.info(
        f"Ingested {len(records)} districts, {len(series)} series "
        f"({len(report.rejected)} rejected rows, {len(report.dropped)} dropped districts)"
    )
    return records, series, report


def write_panel(records: Mapping[str, DistrictRecord], series: Mapping[str, CaseSeries], directory) -> Tuple[Path, Path]:
    """Write districts.csv and series.csv in the ingest layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    districts = pd.DataFrame([
        {
            "id": r.id,
            "population": r.population_total,
            "area_km2": repr(float(r.area)),
            "income": repr(float(r.income)),
            "pop_band1": r.age_group_pops[0],
            "pop_band2": r.age_group_pops[1],
            "pop_band3": r.age_group_pops[2],
            "label": r.population_label or "",
        }
        for r in records.values()
    ], columns=list(DISTRICT_COLUMNS))

    with_bands = bool(series) and all(s.band_cases is not None and s.band_deaths is not None for s in series.values())
    frames = []
    for s in series.values():
        n = len(s)
        part = pd.DataFrame({
            "id": [s.district_id] * n,
            "day": np.arange(n),
            "new_cases": s.new_cases,
            "new_deaths": s.new_deaths,
            "new_recoveries": s.new_recoveries if s.new_recoveries is not None else [""] * n,
        })
        if with_bands:
            for j, column in enumerate(BAND_CASE_COLUMNS):
                part[column] = s.band_cases[:, j]
            for j, column in enumerate(BAND_DEATH_COLUMNS):
                part[column] = s.band_deaths[:, j]
        frames.append(part)
    columns = list(SERIES_COLUMNS) + (list(BAND_CASE_COLUMNS + BAND_DEATH_COLUMNS) if with_bands else [])
    series_frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)

    district_path = directory / "districts.csv"
    series_path = directory / "series.csv"
    districts.to_csv(district_path, index=False, lineterminator="\n")
    series_frame.to_csv(series_path, index=False, lineterminator="\n")
    logger.info(f"Wrote panel with {len(districts)} districts and {len(series_frame)} series rows to {directory}")
    return district_path, series_path


def density(r: DistrictRecord) -> float:
    return r.population_total / r.area


def first_day(series: CaseSeries, population: int) -> int:
    """Smallest day where cumulative cases reach one per 100000 inhabitants."""
    if population <= 0:
        raise PanelError(f"district {series.district_id}: first day needs a positive population, got {population}")
    reached = np.flatnonzero(series.cumulative_cases * FIRST_DAY_RATE >= population)
    if reached.size == 0:
        raise PanelError(f"district {series.district_id} never reaches {1 / FIRST_DAY_RATE:g} cumulative cases per inhabitant")
    return int(reached[0])


def active_cases(series: CaseSeries) -> np.ndarray:
    """Cumulative cases minus deaths minus recoveries shifted forward 14 days."""
    recoveries = series.cumulative_recoveries
    if recoveries is None:
        raise PanelError(f"district {series.district_id}: active cases need new_recoveries")
    shifted = np.zeros(len(series), dtype=np.int64)
    if len(series) > RECOVERY_SHIFT:
        shifted[RECOVERY_SHIFT:] = recoveries[:-RECOVERY_SHIFT]
    active = series.cumulative_cases - series.cumulative_deaths - shifted
    if np.any(active < 0):
        logger.warning(f"district {series.district_id}: negative active cases on {int(np.sum(active < 0))} days clamped to 0")
        active = np.maximum(active, 0)
    return active


def trailing_mean7(values, d: int) -> float:
    """Mean of the 7 days before d; days before 0 count as 0."""
    if d < 0:
        raise ValidationError(f"day index must be non-negative, got {d}")
    window = np.asarray(values, dtype=np.float64)[max(0, d - TRAILING_WINDOW):d]
    return float(window.sum() / TRAILING_WINDOW)


class StrategyKind(str, Enum):
    ACCUMULATED_AGE_GROUPS = "accumulated_age_groups"
    ACCUMULATED_INFECTED_AGES = "accumulated_infected_ages"
    TIME_SERIES_CUMULATIVE = "time_series_cumulative"
    TIME_SERIES_FIRST_DAY = "time_series_first_day"
    TIME_SERIES_PAST7 = "time_series_past7"
    TIME_SERIES_LOG_CASES = "time_series_log_cases"
    TIME_SERIES_LOG_MID_AGE = "time_series_log_mid_age"
    RELATIVE_PROPORTIONS = "relative_proportions"
    RELATIVE_MID_AGE = "relative_mid_age"


TARGET_CHOICES = {
    StrategyKind.ACCUMULATED_AGE_GROUPS: ("all", "cases", "deaths", "cases_per_million"),
    StrategyKind.ACCUMULATED_INFECTED_AGES: ("cases", "deaths"),
    StrategyKind.TIME_SERIES_CUMULATIVE: ("cases", "deaths", "active"),
    StrategyKind.TIME_SERIES_FIRST_DAY: ("cases", "deaths", "active"),
    StrategyKind.TIME_SERIES_PAST7: ("active",),
    StrategyKind.TIME_SERIES_LOG_CASES: ("log_cases",),
    StrategyKind.TIME_SERIES_LOG_MID_AGE: ("log_band2_cases",),
    StrategyKind.RELATIVE_PROPORTIONS: ("log_rel_cases",),
    StrategyKind.RELATIVE_MID_AGE: ("log_rel_band2_cases",),
}

ACCUMULATED = (StrategyKind.ACCUMULATED_AGE_GROUPS, StrategyKind.ACCUMULATED_INFECTED_AGES)


@dataclass(frozen=True)
class FeatureStrategy:
    kind: StrategyKind
    target: Optional[str] = None
    include_label: bool = False
    exclude_districts: Tuple[str, ...] = ()
    banding: Optional[AgeBanding] = None

    def __post_init__(self):
        try:
            kind = StrategyKind(self.kind)
        except ValueError:
            raise ConfigError(f"unknown feature strategy '{self.kind}'") from None
        object.__setattr__(self, "kind", kind)
        choices = TARGET_CHOICES[kind]
        target = self.target or choices[0]
        if target not in choices:
            raise ConfigError(f"target '{target}' is not available for {kind.value}; choose from {list(choices)}")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "exclude_districts", tuple(self.exclude_districts))
        if self.banding is not None:
            object.__setattr__(self, "banding", AgeBanding(self.banding))

    @property
    def is_time_series(self) -> bool:
        return self.kind not in ACCUMULATED

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "target": self.target,
            "include_label": self.include_label,
            "exclude_districts": list(self.exclude_districts),
            "banding": self.banding.value if self.banding else None,
        }


def _require(value, name: str, strategy: FeatureStrategy, district: str):
    if value is None:
        raise PanelError(f"{strategy.kind.value} requires {name}, missing for district {district}")
    return value


def _log_replace_zero(values: np.ndarray) -> np.ndarray:
    # zero cumulative cases become 1 so the log target starts at 0
    return np.log(np.maximum(values, 1).astype(np.float64))


def _log_relative(relative: np.ndarray, replacement: float) -> np.ndarray:
    return np.log(np.where(relative > 0, relative, replacement))


def _first_positive(relative: np.ndarray, start: int, what: str, district: str) -> float:
    positive = np.flatnonzero(relative[start:] > 0)
    if positive.size == 0:
        positive = np.flatnonzero(relative > 0)
        if positive.size == 0:
            raise PanelError(f"district {district}: {what} is zero on every day")
        return float(relative[positive[0]])
    return float(relative[start + positive[0]])


def _accumulated_rows(r: DistrictRecord, s: CaseSeries, strategy: FeatureStrategy):
    base = {"income": r.income, "density": density(r)}
    if strategy.kind is StrategyKind.ACCUMULATED_AGE_GROUPS:
        features = {**base, **{f"pop_band{j + 1}": float(p) for j, p in enumerate(r.age_group_pops)}}
        total_cases = float(s.new_cases.sum())
        totals = {
            "cases": total_cases,
            "deaths": float(s.new_deaths.sum()),
            "cases_per_million": total_cases / r.population_total * 1e6 if r.population_total else 0.0,
        }
        targets = totals if strategy.target == "all" else {strategy.target: totals[strategy.target]}
        return [(features, targets, None)]

    band_cases = _require(s.band_cases, "band case columns", strategy, r.id).sum(axis=0)
    if strategy.target == "cases":
        features = {**base, **{f"pop_band{j + 1}": float(p) for j, p in enumerate(r.age_group_pops)}}
        targets = {f"band{j + 1}_cases": float(c) for j, c in enumerate(band_cases)}
    else:
        band_deaths = _require(s.band_deaths, "band death columns", strategy, r.id).sum(axis=0)
        features = {**base, **{f"band{j + 1}_cases": float(c) for j, c in enumerate(band_cases)}}
        targets = {f"band{j + 1}_deaths": float(d) for j, d in enumerate(band_deaths)}
    return [(features, targets, None)]


def _time_series_rows(r: DistrictRecord, s: CaseSeries, strategy: FeatureStrategy):
    kind = strategy.kind
    n = len(s)
    if n == 0:
        return []
    pop = r.population_total
    b1, b2, b3 = (float(p) for p in r.age_group_pops)
    base = {"income": r.income, "density": density(r)}
    cumulative = s.cumulative_cases

    needs_first_day = kind is not StrategyKind.TIME_SERIES_CUMULATIVE
    start = first_day(s, pop) if needs_first_day else None

    target = strategy.target
    if target == "active" or kind is StrategyKind.TIME_SERIES_PAST7:
        _require(s.new_recoveries, "new_recoveries", strategy, r.id)
        active = active_cases(s)

    if target == "cases":
        values = cumulative.astype(np.float64)
    elif target == "deaths":
        values = s.cumulative_deaths.astype(np.float64)
    elif target == "active":
        values = active.astype(np.float64)
    elif target == "log_cases":
        values = _log_replace_zero(cumulative)
    elif target == "log_band2_cases":
        band2 = np.cumsum(_require(s.band_cases, "band case columns", strategy, r.id)[:, 1])
        values = _log_replace_zero(band2)
    elif target == "log_rel_cases":
        relative = cumulative / pop
        values = _log_relative(relative, float(relative[start]))
    else:
        if r.age_group_pops[1] == 0:
            raise PanelError(f"district {r.id}: band 2 population is zero")
        relative = np.cumsum(_require(s.band_cases, "band case columns", strategy, r.id)[:, 1]) / r.age_group_pops[1]
        values = _log_relative(relative, _first_positive(relative, start, "band 2 relative cases", r.id))

    rows = []
    for d in range(n):
        if kind in (StrategyKind.TIME_SERIES_CUMULATIVE,):
            features = {**base, "pop_band1": b1, "pop_band2": b2, "pop_band3": b3}
        elif kind in (StrategyKind.TIME_SERIES_FIRST_DAY, StrategyKind.TIME_SERIES_LOG_CASES):
            features = {**base, "pop_band1": b1, "pop_band2": b2, "pop_band3": b3, "first_day": float(start)}
        elif kind is StrategyKind.TIME_SERIES_PAST7:
            features = {
                **base, "pop_band1": b1, "pop_band2": b2, "pop_band3": b3, "first_day": float(start),
                "mean7_active": trailing_mean7(active, d),
            }
        elif kind is StrategyKind.TIME_SERIES_LOG_MID_AGE:
            features = {**base, "pop_band2": b2, "first_day": float(start)}
        elif kind is StrategyKind.RELATIVE_PROPORTIONS:
            # the third band is implied by the other two
            features = {**base, "rel_band1": b1 / pop, "rel_band2": b2 / pop, "first_day": float(start)}
        else:
            features = {**base, "rel_band2": b2 / pop, "first_day": float(start)}
        features["day"] = float(d)
        rows.append((features, {target: float(values[d])}, d))
    return rows


def build_design(
    records: Mapping[str, DistrictRecord],
    series: Mapping[str, CaseSeries],
    strategy: FeatureStrategy,
) -> Dataset:
    """
    One row per district (accumulated strategies) or per district and day
    (time-series strategies), in record order.
    """
    if not isinstance(records, Mapping):
        records = {r.id: r for r in records}
    excluded = set(strategy.exclude_districts)
    unknown = sorted(excluded - set(records))
    if unknown:
        logger.warning(f"Excluded districts not in the panel: {unknown}")

    if strategy.is_time_series and strategy.kind is not StrategyKind.TIME_SERIES_CUMULATIVE:
        unreached = [
            district for district, record in records.items()
            if district not in excluded
            and district in series
            and len(series[district]) > 0
            and not np.any(series[district].cumulative_cases * FIRST_DAY_RATE >= record.population_total)
        ]
        if unreached:
            raise PanelError(
                f"{strategy.kind.value}: {len(unreached)} districts never reach the first-day threshold, "
                f"exclude them to continue: {','.join(unreached)}"
            )

    feature_rows, target_rows, tag_rows = [], [], []
    for district, record in records.items():
        if district in excluded:
            continue
        if strategy.banding is not None and record.banding is not strategy.banding:
            raise PanelError(f"{strategy.kind.value} expects age bands {strategy.banding.value}, district {district} uses {record.banding.value}")
        s = _require(series.get(district), "a case series", strategy, district)
        rows = _accumulated_rows(record, s, strategy) if not strategy.is_time_series else _time_series_rows(record, s, strategy)
        for features, targets, day in rows:
            if strategy.include_label:
                if record.population_label is None:
                    raise PanelError(f"include_label needs a population label, missing for district {district}")
                features["label"] = 1.0 if record.population_label == "B" else 0.0
            feature_rows.append(features)
            target_rows.append(targets)
            tag = {"district": district, "population_label": record.population_label}
            if day is not None:
                tag["day"] = day
            tag_rows.append(tag)

    if not feature_rows:
        raise PanelError(f"{strategy.kind.value} produced no rows")
    features = pd.DataFrame(feature_rows)
    targets = pd.DataFrame(target_rows)
    tags = pd.DataFrame(tag_rows)
    if "day" in tags.columns:
        tags["day"] = tags["day"].astype("Int64")
    logger.info(f"Built {strategy.kind.value} design: {len(features)} rows x {features.shape[1]} features -> {list(targets.columns)}")
    return Dataset(
        features.to_numpy(dtype=np.float64),
        targets.to_numpy(dtype=np.float64),
        tags,
        tuple(features.columns),
        tuple(targets.columns),
    )


def correlation_matrix(d: Dataset) -> pd.DataFrame:
    """Pearson correlation over every feature and target column."""
    if len(d) < 2:
        raise ValidationError(f"correlation needs >= 2 rows, got {len(d)}")
    labels = list(d.feature_names) + list(d.target_names)
    values = np.hstack([d.features, d.targets])
    centered = values - values.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    constant = norms == 0
    if constant.any():
        logger.warning(f"Constant columns get correlation 0: {[labels[i] for i in np.flatnonzero(constant)]}")
    safe = np.where(constant, 1.0, norms)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return pd.DataFrame(corr, index=labels, columns=labels)


def _split(total: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    """Split counts by weights with floor; the last band takes the remainder."""
    out = np.zeros((len(total), 3), dtype=np.int64)
    out[:, 0] = np.floor(total * weights[0]).astype(np.int64)
    out[:, 1] = np.floor(total * weights[1]).astype(np.int64)
    out[:, 2] = total - out[:, 0] - out[:, 1]
    return out


def generate_synthetic_panel(
    n_districts: int,
    n_days: int,
    effect_size: float = 0.0,
    label_fraction: float = 0.25,
    seed: int = 0,
) -> Tuple[Dict[str, DistrictRecord], Dict[str, CaseSeries]]:
    """
    Districts with log-normal demographics and logistic case curves.

    Districts labeled B have their carrying capacity scaled by (1 + effect_size),
    which makes the label a hidden feature of known strength.
    """
    errors = []
    if n_districts < 4:
        errors.append(f"n_districts must be at least 4, got {n_districts}")
    if n_days < 0:
        errors.append(f"n_days must be non-negative, got {n_days}")
    if not effect_size > -1.0:
        errors.append(f"effect_size must exceed -1, got {effect_size}")
    if not 0.0 <= label_fraction <= 1.0:
        errors.append(f"label_fraction must be in [0, 1], got {label_fraction}")
    if errors:
        raise ConfigError(errors)

    rng = make_rng(seed)
    labeled = set(rng.permutation(n_districts)[:int(round(label_fraction * n_districts))].tolist())
    days = np.arange(n_days, dtype=np.float64)

    records: Dict[str, DistrictRecord] = {}
    series: Dict[str, CaseSeries] = {}
    for i in range(n_districts):
        district = f"D{i + 1:03d}"
        population = max(1000, int(round(rng.lognormal(math.log(150000), 0.6))))
        area = float(rng.lognormal(math.log(800), 0.7))
        income = float(rng.lognormal(math.log(22000), 0.15))
        share1 = float(np.clip(rng.normal(0.38, 0.03), 0.2, 0.5))
        # band 3 keeps at least 5% of the population
        share2 = float(np.clip(rng.normal(0.52, 0.03), 0.4, 0.95 - share1))
        band1 = int(round(population * share1))
        band2 = int(round(population * share2))
        band3 = population - band1 - band2
        label = "B" if i in labeled else "A"

        attack = rng.uniform(0.00115, 0.00135) * (1.0 + effect_size if label == "B" else 1.0)
        rate = rng.uniform(0.12, 0.18)
        midpoint = rng.uniform(35.0, 50.0)
        cfr = rng.uniform(0.02, 0.05)

        cum_cases = np.round(attack * population / (1.0 + np.exp(-rate * (days - midpoint)))).astype(np.int64)
        cum_cases = np.maximum.accumulate(cum_cases) if n_days else cum_cases
        cum_deaths = np.floor(cfr * cum_cases).astype(np.int64)
        cum_recovered = np.floor((1.0 - cfr) * cum_cases).astype(np.int64)

        new_cases = np.diff(cum_cases, prepend=0)
        new_deaths = np.diff(cum_deaths, prepend=0)
        new_recovered = np.diff(cum_recovered, prepend=0)

        records[district] = DistrictRecord(district, population, area, income, (band1, band2, band3), label)
        series[district] = CaseSeries(
            district_id=district,
            new_cases=new_cases,
            new_deaths=new_deaths,
            new_recoveries=new_recovered,
            band_cases=_split(new_cases, (band1 / population, band2 / population)),
            band_deaths=_split(new_deaths, (0.05, 0.35)),
        )

    logger.info(f"Generated synthetic panel: {n_districts} districts ({len(labeled)} labeled B), {n_days} days, effect {effect_size}")
    return records, series
