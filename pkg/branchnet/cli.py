"""
Command-line entry point.

    branchnet gen 1d|2d|panel     write mixture or panel CSVs
    branchnet train               train a preset and write model, metrics and plots
    branchnet detect              run the joint/A/B hidden-feature protocol on a panel
    branchnet correlate           correlation CSV and heatmap for a panel
    branchnet compare-losses      train one model per loss on the same mixture
    branchnet sweep               majority branch across mixing fractions

Exit status: 0 on success, 2 for usage or validation errors, 1 for runtime failures.
"""
import argparse
import json
import logging
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.settings import Settings

from . import plotting
from .activations import Activation
from .branchclass import ProtocolConfig, compare_losses, run_hidden_feature_protocol, sweep_fractions
from .dataset import Dataset
from .errors import ConfigError, ValidationError
from .features import FeatureStrategy, build_design, correlation_matrix, generate_synthetic_panel, ingest_panel, write_panel
from .losses import Loss, LossKind
from .network import EarlyStopping, LayerSpec, NetworkConfig, TrainedModel, evaluate, predict_batch, save_model, train
from .optimizers import OptimizerConfig
from .presets import PRESETS, Preset, get_preset
from .setvalued import (
    DOMAIN_1D,
    NOISE_1D,
    NOISE_2D,
    MixtureConfig,
    branch_values,
    branches_1d,
    branches_2d,
    evaluation_grid,
    generate_mixture,
)
from .storage import read_json, write_json, write_text

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

EXPERIMENT_KEYS = ("preset", "strategy", "network", "mixture", "panel", "protocol", "output", "seed")
NETWORK_KEYS = (
    "hidden", "activation", "loss", "optimizer", "batch_size", "epochs",
    "learn_rate_schedule", "early_stopping", "init_stddev", "standardize",
)
MIXTURE_KEYS = ("fraction_first", "n_samples", "noise_stddev", "split_test_fraction")
PANEL_KEYS = ("districts", "series")


@dataclass(frozen=True)
class ExperimentConfig:
    preset: Optional[str] = None
    strategy: Optional[FeatureStrategy] = None
    network: dict = field(default_factory=dict)
    mixture: dict = field(default_factory=dict)
    panel: Optional[Tuple[Path, Path]] = None
    protocol: dict = field(default_factory=dict)
    output: Optional[Path] = None
    seed: Optional[int] = None


def _unknown(section: str, data: dict, allowed: Sequence[str]) -> List[str]:
    return [f"unknown key '{section}{k}'" for k in sorted(set(data) - set(allowed))]


def _creatable(directory: Path) -> bool:
    candidate = directory
    while not candidate.exists():
        if candidate.parent == candidate:
            return False
        candidate = candidate.parent
    return candidate.is_dir() and os.access(candidate, os.W_OK)


def load_experiment_config(path) -> ExperimentConfig:
    """Read and validate an experiment JSON, reporting every problem at once."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = read_json(path)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object")

    errors = _unknown("", data, EXPERIMENT_KEYS)
    base = path.parent

    preset = data.get("preset")
    if preset is not None and preset not in PRESETS:
        errors.append(f"unknown preset '{preset}'; available: {sorted(PRESETS)}")

    strategy = None
    if data.get("strategy") is not None:
        try:
            strategy = FeatureStrategy(**data["strategy"])
        except ConfigError as e:
            errors.extend(e.errors)
        except TypeError as e:
            errors.append(f"strategy: {e}")

    network = data.get("network") or {}
    errors += _unknown("network.", network, NETWORK_KEYS)
    if not errors:
        try:
            build_network(get_preset(preset or "paper-1d"), 1, 1, 0, {}, network)
        except ConfigError as e:
            errors.extend(e.errors)
        except (TypeError, ValueError) as e:
            errors.append(f"network: {e}")

    mixture = data.get("mixture") or {}
    errors += _unknown("mixture.", mixture, MIXTURE_KEYS)
    if not set(mixture) - set(MIXTURE_KEYS):
        try:
            MixtureConfig(branches_1d(), **{"fraction_first": 0.5, **mixture})
        except ConfigError as e:
            errors.extend(e.errors)

    panel = None
    if data.get("panel") is not None:
        panel_data = data["panel"]
        errors += _unknown("panel.", panel_data, PANEL_KEYS)
        paths = []
        for key in PANEL_KEYS:
            if key not in panel_data:
                errors.append(f"panel.{key} is required")
                continue
            p = Path(panel_data[key])
            p = p if p.is_absolute() else base / p
            if not p.exists():
                errors.append(f"panel.{key} file not found: {p}")
            paths.append(p)
        if len(paths) == 2:
            panel = (paths[0], paths[1])

    protocol = data.get("protocol") or {}
    errors += _unknown("protocol.", protocol, [f.name for f in fields(ProtocolConfig)])
    if not set(protocol) - {f.name for f in fields(ProtocolConfig)}:
        try:
            ProtocolConfig.from_dict(protocol)
        except ConfigError as e:
            errors.extend(e.errors)

    output = None
    if data.get("output") is not None:
        output = Path(data["output"])
        if not _creatable(output):
            errors.append(f"output directory cannot be created: {output}")

    seed = data.get("seed")
    if seed is not None and (not isinstance(seed, int) or not 0 <= seed < 2 ** 64):
        errors.append(f"seed must be a 64-bit unsigned integer, got {seed!r}")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(preset, strategy, network, mixture, panel, protocol, output, seed)


def parse_loss(text: str, huber_delta: float = 1.0) -> Loss:
    loss = Loss.parse(text)
    if loss.kind is LossKind.HUBER and ":" not in text:
        loss = Loss(LossKind.HUBER, huber_delta)
    return loss


def build_network(
    preset: Preset,
    input_dim: int,
    output_dim: int,
    seed: int,
    training_defaults: dict,
    overrides: dict,
    loss: Optional[str] = None,
    epochs: Optional[int] = None,
) -> NetworkConfig:
    """The preset's architecture, with config-file overrides and then CLI flags applied."""
    elu_alpha = training_defaults.get("elu_alpha", 1.0)
    loss_obj = parse_loss(loss or overrides.get("loss") or "logcosh", training_defaults.get("huber_delta", 1.0))
    cfg = preset.network(
        input_dim,
        output_dim,
        loss=loss_obj,
        seed=seed,
        elu_alpha=elu_alpha,
        init_stddev=training_defaults.get("init_stddev", 0.05),
    )

    changes = {}
    if "hidden" in overrides or "activation" in overrides:
        activation = Activation.parse(overrides["activation"]) if "activation" in overrides else cfg.layers[0].activation
        hidden = overrides.get("hidden", [layer.neurons for layer in cfg.layers[:-1]])
        changes["layers"] = tuple(LayerSpec(int(n), activation) for n in hidden) + (cfg.layers[-1],)
    if "optimizer" in overrides:
        changes["optimizer"] = OptimizerConfig.from_dict(overrides["optimizer"])
        if "learn_rate_schedule" not in overrides:
            changes["learn_rate_schedule"] = (changes["optimizer"].lr,)
    if "learn_rate_schedule" in overrides:
        changes["learn_rate_schedule"] = tuple(float(lr) for lr in overrides["learn_rate_schedule"])
    if "early_stopping" in overrides:
        stopping = overrides["early_stopping"]
        changes["early_stopping"] = EarlyStopping(**stopping) if stopping else None
    for key in ("batch_size", "epochs", "init_stddev", "standardize"):
        if key in overrides:
            changes[key] = overrides[key]
    if epochs is not None:
        changes["epochs"] = epochs
    return cfg.replace(**changes) if changes else cfg


@dataclass
class Context:
    settings: Settings
    experiment: ExperimentConfig
    seed: int
    out: Path
    desk: bool

    @property
    def training_defaults(self) -> dict:
        return self.settings.get_training_defaults()

    def protocol_config(self, accuracy_band: Optional[float] = None) -> ProtocolConfig:
        values = {**self.settings.get_protocol_defaults(), **self.experiment.protocol}
        if accuracy_band is not None:
            values["accuracy_band"] = accuracy_band
        return ProtocolConfig.from_dict(values)

    def panel_paths(self, args) -> Tuple[Path, Path]:
        if getattr(args, "panel", None):
            directory = Path(args.panel)
            return directory / "districts.csv", directory / "series.csv"
        if self.experiment.panel is not None:
            return self.experiment.panel
        raise ValidationError(f"{args.command} needs --panel DIR or a 'panel' entry in --config")

    def strategy(self, args, default: str, default_target: Optional[str] = None) -> FeatureStrategy:
        base = self.experiment.strategy
        kind = getattr(args, "strategy", None) or (base.kind if base else default)
        target = getattr(args, "target", None)
        if target is None and base is not None and base.kind == kind:
            target = base.target
        if target is None and kind == default:
            target = default_target
        exclude = tuple(args.exclude.split(",")) if getattr(args, "exclude", None) else (base.exclude_districts if base else ())
        include_label = getattr(args, "include_label", False) or (base.include_label if base else False)
        return FeatureStrategy(kind, target, include_label, exclude, base.banding if base else None)


def _safe_name(unit: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", unit)


def _mixture_config(ctx: Context, kind: str, preset: Preset, fraction: Optional[float], samples: Optional[int] = None, noise: Optional[float] = None) -> MixtureConfig:
    settings = ctx.experiment.mixture
    branches = branches_1d() if kind == "1d" else branches_2d()
    return MixtureConfig(
        branches=branches,
        fraction_first=fraction if fraction is not None else settings.get("fraction_first", 0.7),
        n_samples=samples or settings.get("n_samples") or preset.n_samples,
        noise_stddev=noise if noise is not None else settings.get("noise_stddev", NOISE_1D if kind == "1d" else NOISE_2D),
        split_test_fraction=settings.get("split_test_fraction", 0.2),
        seed=ctx.seed,
    )


def _load_panel(ctx: Context, args):
    districts, series_path = ctx.panel_paths(args)
    records, series, report = ingest_panel(districts, series_path)
    write_json(ctx.out / "ingest.json", report.to_dict())
    return records, series


def cmd_gen(args, ctx: Context) -> int:
    if args.kind == "panel":
        records, series = generate_synthetic_panel(args.districts, args.days, args.effect, args.label_fraction, ctx.seed)
        write_panel(records, series, ctx.out)
        return EXIT_OK

    preset = get_preset("paper-1d" if args.kind == "1d" else "paper-2d", ctx.desk)
    mixture = _mixture_config(ctx, args.kind, preset, args.fraction, args.samples, args.noise)
    train_set, test_set = generate_mixture(mixture)
    train_set.to_csv(ctx.out / "train.csv")
    test_set.to_csv(ctx.out / "test.csv")
    write_json(ctx.out / "mixture.json", mixture.to_dict())
    logger.info(f"Wrote {len(train_set)} training and {len(test_set)} test rows to {ctx.out}")
    return EXIT_OK


def _write_training_outputs(ctx: Context, model: TrainedModel, metrics: dict, extra: dict):
    save_model(model, ctx.out / "model.json")
    write_json(ctx.out / "metrics.json", {
        **extra,
        "metrics": metrics,
        "initial_loss": model.loss_trace[0],
        "final_loss": model.final_loss,
        "epochs_run": len(model.loss_trace),
        "stopped_epoch": model.stopped_epoch,
        "network": model.config.to_dict(),
    })
    trace = pd.DataFrame({"epoch": np.arange(len(model.loss_trace)), "loss": model.loss_trace})
    if model.validation_trace:
        trace["validation_loss"] = model.validation_trace
    trace.to_csv(ctx.out / "loss_trace.csv", index=False, lineterminator="\n")
    plotting.plot_loss_trace(model.loss_trace, ctx.out / "loss_trace.svg", model.validation_trace)


def _plot_unit_series(directory: Path, design: Dataset, predictions: dict):
    """One SVG per district of a time-series design."""
    districts = np.array([str(d) for d in design.tag("district")], dtype=object)
    labels = design.tag("population_label")
    days = design.tag("day")
    for unit in design.units():
        mask = districts == str(unit)
        population = labels[mask][0] if labels is not None else None
        plotting.plot_unit_series(
            str(unit),
            np.asarray(days[mask], dtype=np.int64),
            design.targets[mask, 0],
            {name: values[mask, 0] for name, values in predictions.items()},
            directory / f"{_safe_name(str(unit))}.svg",
            population=population if isinstance(population, str) else None,
            ylabel=design.target_names[0],
        )


def cmd_train(args, ctx: Context) -> int:
    panel_given = bool(args.panel) or ctx.experiment.panel is not None
    preset_name = args.preset or ctx.experiment.preset or ("paper-timeseries" if panel_given else "paper-1d")
    preset = get_preset(preset_name, ctx.desk)
    extra = {"preset": preset.name, "seed": ctx.seed}

    design = None
    if args.data:
        train_set = Dataset.from_csv(args.data)
        test_set = Dataset.from_csv(args.test) if args.test else None
    elif panel_given:
        records, series = _load_panel(ctx, args)
        strategy = ctx.strategy(args, preset.strategy or "time_series_first_day")
        design = build_design(records, series, strategy)
        train_set, test_set = design, None
        extra["strategy"] = strategy.to_dict()
    elif preset.kind in ("1d", "2d"):
        mixture = _mixture_config(ctx, preset.kind, preset, args.fraction)
        train_set, test_set = generate_mixture(mixture)
        extra["mixture"] = mixture.to_dict()
    else:
        raise ValidationError(f"preset {preset.name} needs --data or --panel")

    cfg = build_network(preset, train_set.n_features, train_set.n_targets, ctx.seed, ctx.training_defaults, ctx.experiment.network, args.loss, args.epochs)
    model = train(cfg, train_set)

    evaluated = test_set if test_set is not None else train_set
    extra["split"] = "test" if test_set is not None else "train"
    metrics = evaluate(model, evaluated)
    _write_training_outputs(ctx, model, metrics, extra)

    if design is not None and design.tag("day") is not None:
        _plot_unit_series(ctx.out / "districts", design, {"prediction": predict_batch(model, design.features)})
    if train_set.n_features == 1 and train_set.n_targets == 1 and design is None:
        grid = np.linspace(DOMAIN_1D[0][0], DOMAIN_1D[1][0], 401)[:, None]
        shown = evaluated
        plotting.plot_mixture_1d(shown.features, shown.targets[:, 0], shown.tag("branch"), grid, predict_batch(model, grid)[:, 0], ctx.out / "prediction.svg", title=preset.name)
    elif train_set.n_features == 2 and design is None:
        branches = branches_2d()
        grid = evaluation_grid(branches)
        plotting.plot_surface_2d(grid, predict_batch(model, grid)[:, 0], branch_values(branches, grid), ctx.out / "prediction.svg", title=preset.name)
    else:
        plotting.plot_predictions(evaluated.targets[:, 0], predict_batch(model, evaluated.features)[:, 0], evaluated.tag("population_label"), ctx.out / "prediction.svg")

    logger.info(f"Training finished: loss {model.loss_trace[0]:.6g} -> {model.final_loss:.6g}, {extra['split']} MSE {metrics['mse']:.6g}")
    return EXIT_OK


def cmd_detect(args, ctx: Context) -> int:
    records, series = _load_panel(ctx, args)
    strategy = ctx.strategy(args, "time_series_first_day", "cases")
    design = build_design(records, series, strategy)
    preset = get_preset(args.preset or ctx.experiment.preset or "paper-timeseries", ctx.desk)
    cfg = build_network(preset, design.n_features, design.n_targets, ctx.seed, ctx.training_defaults, ctx.experiment.network, args.loss, args.epochs)
    pcfg = ctx.protocol_config(args.accuracy_band)

    report = run_hidden_feature_protocol(cfg, design, None, pcfg)

    write_text(ctx.out / "report.json", report.to_json())
    write_text(ctx.out / "report.txt", report.to_text())
    if design.tag("day") is not None:
        predictions = {name: predict_batch(model, design.features) for name, model in report.models.items()}
        _plot_unit_series(ctx.out / "units", design, predictions)
    print(report.to_text())
    return EXIT_OK


def cmd_correlate(args, ctx: Context) -> int:
    records, series = _load_panel(ctx, args)
    design = build_design(records, series, ctx.strategy(args, "accumulated_age_groups", "all"))
    corr = correlation_matrix(design)
    ctx.out.mkdir(parents=True, exist_ok=True)
    corr.to_csv(ctx.out / "correlation.csv", lineterminator="\n")
    plotting.plot_correlation_heatmap(corr, ctx.out / "correlation.svg")
    logger.info(f"Wrote {corr.shape[0]}x{corr.shape[1]} correlation matrix to {ctx.out}")
    return EXIT_OK


def cmd_compare_losses(args, ctx: Context) -> int:
    preset = get_preset(args.preset or ctx.experiment.preset or "paper-1d", ctx.desk)
    if preset.kind not in ("1d", "2d"):
        raise ValidationError(f"compare-losses needs a mixture preset, got {preset.name}")
    mixture = _mixture_config(ctx, preset.kind, preset, args.fraction if args.fraction is not None else 0.5)
    train_set, _ = generate_mixture(mixture)
    cfgs = [
        build_network(preset, train_set.n_features, 1, ctx.seed, ctx.training_defaults, ctx.experiment.network, loss, args.epochs)
        for loss in args.losses.split(",")
    ]
    summaries = compare_losses(train_set, cfgs, mixture.branches, ctx.protocol_config())

    write_json(ctx.out / "compare_losses.json", {
        "mixture": mixture.to_dict(),
        "losses": [s.to_dict() for s in summaries],
    })
    if preset.kind == "1d":
        grid = evaluation_grid(mixture.branches)
        plotting.plot_loss_comparison(
            grid,
            branch_values(mixture.branches, grid),
            {s.loss: predict_batch(s.model, grid)[:, 0] for s in summaries},
            ctx.out / "compare_losses.svg",
        )
    for s in summaries:
        print(f"{s.loss:>10}  final loss {s.final_loss:.4g}  regions {s.region_fractions}  variance {s.prediction_variance:.4g}")
    return EXIT_OK


def cmd_sweep(args, ctx: Context) -> int:
    preset = get_preset(args.preset or ctx.experiment.preset or "paper-1d", ctx.desk)
    if preset.kind not in ("1d", "2d"):
        raise ValidationError(f"sweep needs a mixture preset, got {preset.name}")
    try:
        fractions = [float(f) for f in args.fractions.split(",")]
    except ValueError:
        raise ValidationError(f"--fractions must be comma-separated numbers, got {args.fractions!r}") from None
    mixture = _mixture_config(ctx, preset.kind, preset, fractions[0])
    cfg = build_network(preset, mixture.dim, 1, ctx.seed, ctx.training_defaults, ctx.experiment.network, args.loss, args.epochs)
    table = sweep_fractions(cfg, mixture, fractions, ctx.protocol_config())
    ctx.out.mkdir(parents=True, exist_ok=True)
    table.to_csv(ctx.out / "sweep.csv", index=False, lineterminator="\n")
    print(table.to_string(index=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed (default: DEFAULT_SEED)")
    common.add_argument("--out", help="output directory (default: OUTPUT_DIR)")
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--desk", action="store_true", help="use scaled-down presets")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--preset", choices=sorted(PRESETS))
    training.add_argument("--loss", help="loss override, e.g. mse, huber:2.5")
    training.add_argument("--epochs", type=int, help="epochs per learn-rate step")

    panel = argparse.ArgumentParser(add_help=False)
    panel.add_argument("--panel", help="directory with districts.csv and series.csv")
    panel.add_argument("--strategy", help="feature strategy")
    panel.add_argument("--target", help="strategy target")
    panel.add_argument("--exclude", help="comma-separated district ids to leave out")
    panel.add_argument("--include-label", action="store_true", help="add the population label as a feature")

    parser = argparse.ArgumentParser(prog="branchnet", description="Set-valued regression and hidden-feature detection")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate datasets")
    gen.add_argument("kind", choices=("1d", "2d", "panel"))
    gen.add_argument("--fraction", type=float, help="share of samples from branch 1")
    gen.add_argument("--samples", type=int)
    gen.add_argument("--noise", type=float)
    gen.add_argument("--districts", type=int, default=40)
    gen.add_argument("--days", type=int, default=80)
    gen.add_argument("--effect", type=float, default=0.0)
    gen.add_argument("--label-fraction", type=float, default=0.25)
    gen.set_defaults(handler=cmd_gen)

    tr = sub.add_parser("train", parents=[common, training, panel], help="train a network")
    tr.add_argument("--data", help="training CSV")
    tr.add_argument("--test", help="test CSV")
    tr.add_argument("--fraction", type=float, help="mixture fraction when generating data")
    tr.set_defaults(handler=cmd_train)

    detect = sub.add_parser("detect", parents=[common, training, panel], help="hidden-feature protocol")
    detect.add_argument("--accuracy-band", type=float)
    detect.set_defaults(handler=cmd_detect)

    corr = sub.add_parser("correlate", parents=[common, panel], help="correlation matrix")
    corr.set_defaults(handler=cmd_correlate)

    compare = sub.add_parser("compare-losses", parents=[common, training], help="compare losses on one mixture")
    compare.add_argument("--fraction", type=float)
    compare.add_argument("--losses", default="logcosh,mse,mae")
    compare.set_defaults(handler=cmd_compare_losses)

    sweep = sub.add_parser("sweep", parents=[common, training], help="majority branch per mixing fraction")
    sweep.add_argument("--fractions", default="0.3,0.4,0.5,0.6,0.7,0.8")
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None, settings: Optional[Settings] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        settings = settings or Settings()
        settings.validate()
    except ValueError as e:
        logger.error(str(e))
        return EXIT_USAGE

    try:
        experiment = load_experiment_config(args.config) if args.config else ExperimentConfig()
        seed = args.seed if args.seed is not None else (experiment.seed if experiment.seed is not None else settings.DEFAULT_SEED)
        if not 0 <= seed < 2 ** 64:
            raise ValidationError(f"--seed must be a 64-bit unsigned integer, got {seed}")
        out = Path(args.out or experiment.output or settings.OUTPUT_DIR)
        ctx = Context(settings, experiment, seed, out, args.desk)
        logger.info(f"Running {args.command} (seed {seed}, output {out})")
        return args.handler(args, ctx)
    except ValidationError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE
