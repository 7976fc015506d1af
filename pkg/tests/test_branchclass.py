import json
import logging
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from branchnet.branchclass import (
    BranchProximity,
    Decision,
    ProtocolConfig,
    _check_partition,
    _decide,
    branch_proximity,
    classify_by_branch,
    classify_error,
    compare_losses,
    fit_majority,
    run_hidden_feature_protocol,
    sweep_fractions,
    unit_relative_error,
)
from branchnet.dataset import Dataset
from branchnet.errors import ConfigError, ProtocolError
from branchnet.features import FeatureStrategy, build_design, generate_synthetic_panel
from branchnet.losses import Loss, LossKind
from branchnet.network import LayerSpec, NetworkConfig, TrainedModel, predict_batch
from branchnet.presets import get_preset
from branchnet.setvalued import branch_values, branches_1d, branches_2d, evaluation_grid, generate_mixture, mixture_1d, mixture_2d


def constant_model(value: float, input_dim: int = 1) -> TrainedModel:
    cfg = NetworkConfig(input_dim=input_dim, layers=(LayerSpec(1),))
    return TrainedModel(cfg, (np.zeros((1, input_dim)),), (np.array([value]),))


def tiny_config(input_dim: int, **kwargs) -> NetworkConfig:
    defaults = dict(epochs=2, batch_size=32, seed=0)
    defaults.update(kwargs)
    return NetworkConfig.dense(input_dim, (4,), **defaults)


def counts_from(table):
    """table[net][pop] = (over, under, accurate)"""
    return {
        net: {pop: dict(zip(("over", "under", "accurate"), cells)) for pop, cells in pops.items()}
        for net, pops in table.items()
    }


class TestProtocolConfig:
    def test_defaults(self):
        pcfg = ProtocolConfig()
        assert (pcfg.accuracy_band, pcfg.cross_threshold, pcfg.own_threshold) == (0.15, 0.6, 0.6)

    def test_collects_errors(self):
        with pytest.raises(ConfigError) as info:
            ProtocolConfig(accuracy_band=0, majority_threshold=0.5, cross_threshold=2.0)
        assert len(info.value.errors) == 3

    def test_infinite_band_round_trip(self):
        pcfg = ProtocolConfig(accuracy_band=float("inf"))
        data = pcfg.to_dict()
        assert data["accuracy_band"] is None
        assert ProtocolConfig.from_dict(data).accuracy_band == float("inf")

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ProtocolConfig.from_dict({"band": 0.2})


class TestProximity:
    def test_closer_fraction_matches_brute_force(self):
        branches = branches_1d()
        model = constant_model(200.0)
        proximity = branch_proximity(model, branches)
        grid = evaluation_grid(branches)
        values = branch_values(branches, grid)
        gap = np.abs(values[:, 0] - values[:, 1])
        usable = closer = 0
        for g, (v1, v2) in zip(gap, values):
            if g < 0.05 * gap.max():
                continue
            usable += 1
            closer += abs(200.0 - v1) <= abs(200.0 - v2)
        assert proximity.closer_fraction(1) == pytest.approx(closer / usable, abs=1e-12)
        assert proximity.closer_fraction(1) + proximity.closer_fraction(2) == pytest.approx(1.0)

    @pytest.mark.parametrize("value, expected", [(1000.0, 1), (-5.0, 2), (83.0, None)])
    def test_majority(self, value, expected):
        proximity = branch_proximity(constant_model(value), branches_1d())
        assert proximity.majority(0.6) == expected

    def test_tie_goes_to_lower_id(self):
        n = 4
        proximity = BranchProximity(
            points=np.zeros((n, 1)),
            predictions=np.zeros(n),
            values=np.zeros((n, 2)),
            branch_ids=(1, 2),
            usable=np.ones(n, dtype=bool),
            nearest=np.array([2, 1, 2, 1]),
            in_midpoint=np.zeros(n, dtype=bool),
        )
        assert proximity.majority(0.5) == 1

    def test_region_fractions_partition_usable_points(self):
        proximity = branch_proximity(constant_model(120.0), branches_1d())
        fractions = proximity.region_fractions
        assert set(fractions) == {"1", "2", "midpoint"}
        assert sum(fractions.values()) == pytest.approx(1.0)
        assert fractions["midpoint"] > 0

    def test_2d_grid(self):
        proximity = branch_proximity(constant_model(10.0, 2), branches_2d())
        assert proximity.points.shape == (41 * 41, 2)


class TestClassifyByBranch:
    def test_noiseless_recovers_tags(self):
        train, _ = generate_mixture(mixture_1d(0.3, n_samples=1000, noise_stddev=0.0, seed=2))
        assignment = classify_by_branch(constant_model(100.0), train, branches_1d())
        assert assignment.tag_agreement == 1.0
        assert sum(assignment.counts.values()) == len(train)

    def test_noiseless_2d(self):
        train, _ = generate_mixture(mixture_2d(0.8, n_samples=2000, noise_stddev=0.0, seed=5))
        assignment = classify_by_branch(constant_model(0.5, 2), train, branches_2d())
        assert assignment.tag_agreement == 1.0

    def test_coinciding_branches_are_ambiguous(self):
        data = Dataset([[-5.0], [0.0], [3.0]], [[81.0], [0.0], [0.0]])
        assignment = classify_by_branch(constant_model(0.0), data, branches_1d())
        assert assignment.samples["ambiguous"].tolist() == [True, False, False]
        # equal distance to both branches: lower id
        assert assignment.samples["assigned"].tolist() == [1, 2, 2]
        assert assignment.tag_agreement is None

    def test_residuals_use_targets(self):
        data = Dataset([[0.0]], [[250.0]])
        assignment = classify_by_branch(constant_model(0.0), data, branches_1d())
        row = assignment.samples.iloc[0]
        assert (row["residual_1"], row["residual_2"], row["assigned"]) == (-6.0, 250.0, 1)

    def test_gaussian_tail_bound(self):
        sigma = 5.0
        train, _ = generate_mixture(mixture_1d(0.5, n_samples=20_000, noise_stddev=sigma, seed=7))
        assignment = classify_by_branch(constant_model(100.0), train, branches_1d())
        values = branch_values(branches_1d(), train.features)
        gap = np.abs(values[:, 0] - values[:, 1])
        region = gap >= 6 * sigma
        agreement = assignment.agreement_where(region)
        assert agreement >= 0.99

        # misclassification happens when noise crosses half the gap
        expected_errors = float(np.sum(stats.norm.cdf(-gap[region] / (2 * sigma))))
        observed_errors = (1.0 - agreement) * region.sum()
        assert observed_errors <= expected_errors + 4 * np.sqrt(expected_errors) + 1

    def test_majority_from_predictions(self):
        train, _ = generate_mixture(mixture_1d(0.7, n_samples=200, seed=1))
        assert classify_by_branch(constant_model(1000.0), train, branches_1d()).majority == 1
        assert classify_by_branch(constant_model(-5.0), train, branches_1d()).majority == 2


class TestFitAndCompare:
    def test_fit_majority_warns_for_other_losses(self, caplog):
        train, _ = generate_mixture(mixture_1d(0.7, n_samples=100, seed=1))
        with caplog.at_level(logging.WARNING, logger="branchnet.branchclass"):
            model = fit_majority(tiny_config(1, loss=Loss(LossKind.MSE)), train)
        assert "mse" in caplog.text
        assert len(model.loss_trace) == 2

    def test_sweep_table(self):
        cfg = tiny_config(1)
        table = sweep_fractions(cfg, mixture_1d(0.5, n_samples=100), [0.3, 0.8])
        assert list(table["fraction_first"]) == [0.3, 0.8]
        assert {"closer_to_1", "closer_to_2", "majority", "final_loss"} <= set(table.columns)
        np.testing.assert_allclose(table["closer_to_1"] + table["closer_to_2"], 1.0)

    def test_compare_losses_requires_matching_configs(self):
        train, _ = generate_mixture(mixture_1d(0.5, n_samples=100))
        cfgs = [tiny_config(1), tiny_config(1, loss=Loss(LossKind.MSE), epochs=3)]
        with pytest.raises(ConfigError):
            compare_losses(train, cfgs, branches_1d())

    def test_compare_losses_summaries(self):
        train, _ = generate_mixture(mixture_1d(0.5, n_samples=100))
        cfgs = [tiny_config(1, epochs=4, loss=Loss(kind)) for kind in (LossKind.LOGCOSH, LossKind.MSE, LossKind.HUBER)]
        summaries = compare_losses(train, cfgs, branches_1d(), last_epochs=3)
        assert [s.loss for s in summaries] == ["logcosh", "mse", "huber:1"]
        for s in summaries:
            assert s.prediction_variance >= 0
            assert sum(s.region_fractions.values()) == pytest.approx(1.0)
            json.dumps(s.to_dict())


class TestErrorsAndDecision:
    def test_unit_relative_error(self):
        assert unit_relative_error(np.array([12.0, 24.0]), np.array([10.0, 20.0])) == pytest.approx(0.2)
        assert unit_relative_error(np.array([1.0, 3.0]), np.zeros(2)) == 2.0
        assert unit_relative_error(np.zeros(3), np.zeros(3)) == 0.0
        assert unit_relative_error(np.array([-1.0, -3.0]), np.zeros(2)) == -2.0

    @pytest.mark.parametrize("error, outcome", [(0.2, "over"), (-0.2, "under"), (0.15, "accurate"), (-0.1, "accurate")])
    def test_classify_error(self, error, outcome):
        assert classify_error(error, 0.15) == outcome

    def test_infinite_band_is_always_accurate(self):
        assert classify_error(1e300, float("inf")) == "accurate"

    def clustered(self):
        return counts_from({
            "A": {"A": (0, 1, 9), "B": (8, 0, 2)},
            "B": {"A": (0, 7, 3), "B": (1, 0, 9)},
            "joint": {"A": (0, 0, 10), "B": (0, 0, 10)},
        })

    def test_detects_clusters(self):
        decision, rule = _decide(self.clustered(), ProtocolConfig())
        assert decision is Decision.CLUSTERS_DETECTED
        assert "over-predicts B" in rule

    def test_opposite_direction(self):
        counts = counts_from({
            "A": {"A": (0, 0, 10), "B": (0, 9, 1)},
            "B": {"A": (9, 0, 1), "B": (0, 0, 10)},
            "joint": {"A": (0, 0, 10), "B": (0, 0, 10)},
        })
        decision, rule = _decide(counts, ProtocolConfig())
        assert decision is Decision.CLUSTERS_DETECTED
        assert "under-predicts B" in rule

    def test_decision_symmetric_under_label_swap(self):
        counts = self.clustered()
        swapped = {
            "A": {"A": counts["B"]["B"], "B": counts["B"]["A"]},
            "B": {"A": counts["A"]["B"], "B": counts["A"]["A"]},
            "joint": {"A": counts["joint"]["B"], "B": counts["joint"]["A"]},
        }
        assert _decide(swapped, ProtocolConfig())[0] is _decide(counts, ProtocolConfig())[0]

    def test_asymmetry_without_own_accuracy_is_inconclusive(self):
        counts = self.clustered()
        counts["A"]["A"] = {"over": 5, "under": 5, "accurate": 0}
        assert _decide(counts, ProtocolConfig())[0] is Decision.INCONCLUSIVE

    def test_one_sided_asymmetry_is_not_clusters(self):
        counts = self.clustered()
        counts["B"]["A"] = {"over": 0, "under": 0, "accurate": 10}
        assert _decide(counts, ProtocolConfig())[0] is Decision.NO_CLUSTERS


class TestPartition:
    def test_empty_class(self):
        with pytest.raises(ProtocolError, match="partition class B empty"):
            _check_partition(["u1", "u2"], {"u1": "A", "u2": "A"})

    def test_single_unit_class(self):
        with pytest.raises(ProtocolError, match="has 1 unit"):
            _check_partition(["u1", "u2", "u3"], {"u1": "A", "u2": "A", "u3": "B"})

    def test_unlabelled_unit(self):
        with pytest.raises(ProtocolError):
            _check_partition(["u1", "u2"], {"u1": "A"})

    def test_bad_label(self):
        with pytest.raises(ProtocolError):
            _check_partition(["u1", "u2"], {"u1": "A", "u2": "C"})


def small_panel(effect=0.0, seed=0, n_districts=8, n_days=60):
    records, series = generate_synthetic_panel(n_districts, n_days, effect, 0.5, seed)
    return build_design(records, series, FeatureStrategy("time_series_first_day", "cases"))


class TestHiddenFeatureProtocol:
    def test_infinite_band_gives_no_clusters(self):
        panel = small_panel()
        pcfg = ProtocolConfig(accuracy_band=float("inf"))
        report = run_hidden_feature_protocol(tiny_config(panel.n_features, epochs=1), panel, pcfg=pcfg)
        assert report.decision is Decision.NO_CLUSTERS
        for net in ("A", "B", "joint"):
            for pop in ("A", "B"):
                assert report.share(net, pop, "accurate") == 1.0

    def test_counts_cover_every_unit(self):
        panel = small_panel(seed=3)
        report = run_hidden_feature_protocol(tiny_config(panel.n_features, epochs=1), panel)
        sizes = report.unit_errors["population"].value_counts()
        for net in ("A", "B", "joint"):
            for pop in ("A", "B"):
                assert sum(report.counts[net][pop].values()) == sizes[pop]
        assert set(report.models) == {"A", "B", "joint"}

    def test_label_swap_mirrors_report(self):
        panel = small_panel(seed=4)
        units = panel.units()
        labels = dict(zip(panel.tag("district"), panel.tag("population_label")))
        partition = {u: labels[u] for u in units}
        swapped = {u: "B" if p == "A" else "A" for u, p in partition.items()}
        cfg = tiny_config(panel.n_features, epochs=1)
        first = run_hidden_feature_protocol(cfg, panel, partition)
        second = run_hidden_feature_protocol(cfg, panel, swapped)
        assert first.decision is second.decision
        assert first.counts["A"]["A"] == second.counts["B"]["B"]
        assert first.counts["A"]["B"] == second.counts["B"]["A"]
        assert first.counts["joint"]["A"] == second.counts["joint"]["B"]

    def test_explicit_partition_overrides_labels(self):
        panel = small_panel(seed=5)
        units = panel.units()
        with pytest.raises(ProtocolError):
            run_hidden_feature_protocol(tiny_config(panel.n_features), panel, {u: "A" for u in units})

    def test_needs_labels_or_partition(self):
        panel = small_panel(seed=6)
        unlabelled = Dataset(panel.features, panel.targets, panel.tags[["district", "day"]], panel.feature_names, panel.target_names)
        with pytest.raises(ProtocolError):
            run_hidden_feature_protocol(tiny_config(panel.n_features), unlabelled)

    def test_report_serialization(self):
        panel = small_panel(seed=7)
        report = run_hidden_feature_protocol(tiny_config(panel.n_features, epochs=1), panel)
        data = json.loads(report.to_json())
        assert data["decision"] == report.decision.value
        assert data["thresholds"]["accuracy_band"] == 0.15
        assert len(data["units"]) == len(panel.units())
        assert set(data["units"][0]["errors"]) == {"A", "B", "joint"}
        assert set(data["units"][0]["mean_errors"]) == {"A", "B", "joint"}
        districts = panel.tag("district")
        for unit in data["units"]:
            mask = districts == unit["district"]
            assert unit["zero_targets"] is (not np.any(panel.targets[mask]))
            for net, model in report.models.items():
                expected = np.mean(predict_batch(model, panel.features[mask]) - panel.targets[mask])
                assert unit["mean_errors"][net] == pytest.approx(expected, rel=1e-12, abs=1e-12)
        text = report.to_text()
        assert text.startswith(f"Decision: {report.decision.value}")
        assert "+/-15%" in text
        assert "joint" in text

    def test_duplicated_population_is_not_clusters(self):
        records, series = generate_synthetic_panel(4, 60, 0.0, 0.0, seed=8)
        for district in list(records):
            twin = f"{district}B"
            records[twin] = replace(records[district], id=twin, population_label="B")
            series[twin] = replace(series[district], district_id=twin)
        panel = build_design(records, series, FeatureStrategy("time_series_first_day", "cases"))
        report = run_hidden_feature_protocol(tiny_config(panel.n_features, epochs=3), panel)
        assert report.decision is not Decision.CLUSTERS_DETECTED
        np.testing.assert_array_equal(report.unit_errors["error_A"], report.unit_errors["error_B"])


# Acceptance runs: minutes of training each.

@pytest.mark.slow
@pytest.mark.parametrize("fraction, min_hits", [(0.6, 14), (0.7, 18), (0.8, 18)])
def test_majority_branch_across_seeds(fraction, min_hits):
    cfg = get_preset("paper-1d", desk=True).network(1, 1)
    hits = 0
    for seed in range(20):
        train, _ = generate_mixture(mixture_1d(fraction, seed=seed))
        model = fit_majority(cfg.replace(seed=seed), train)
        hits += branch_proximity(model, branches_1d()).closer_fraction(1) >= 0.9
    assert hits >= min_hits


@pytest.mark.slow
def test_loss_contrast_on_even_mixture():
    train, _ = generate_mixture(mixture_1d(0.5, seed=0))
    base = get_preset("paper-1d", desk=True).network(1, 1)
    cfgs = [base.replace(loss=Loss(kind)) for kind in (LossKind.LOGCOSH, LossKind.MSE, LossKind.MAE)]
    logcosh, mse, mae = compare_losses(train, cfgs, branches_1d())
    assert mse.region_fractions["midpoint"] >= 0.8
    assert mae.prediction_variance >= 2 * logcosh.prediction_variance


@pytest.mark.slow
def test_majority_branch_2d():
    train, _ = generate_mixture(mixture_2d(0.7, n_samples=16000, seed=0))
    model = fit_majority(get_preset("paper-2d", desk=True).network(2, 1), train)
    assert branch_proximity(model, branches_2d()).closer_fraction(1) >= 0.9


def _protocol_decisions(effect):
    preset = get_preset("paper-timeseries", desk=True)
    decisions = []
    for seed in range(20):
        records, series = generate_synthetic_panel(40, 80, effect, 0.25, seed)
        panel = build_design(records, series, FeatureStrategy("time_series_first_day", "cases"))
        report = run_hidden_feature_protocol(preset.network(panel.n_features, 1, seed=seed), panel)
        decisions.append(report.decision)
    return decisions


@pytest.mark.slow
def test_protocol_positive_control():
    assert _protocol_decisions(0.5).count(Decision.CLUSTERS_DETECTED) >= 18


@pytest.mark.slow
def test_protocol_negative_control():
    assert _protocol_decisions(0.0).count(Decision.CLUSTERS_DETECTED) <= 1
