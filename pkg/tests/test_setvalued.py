from dataclasses import replace

import numpy as np
import pytest
from scipy.special import expit

from branchnet.errors import ConfigError, DomainError
from branchnet.setvalued import (
    Box,
    BranchFunction,
    BranchSpec,
    MixtureConfig,
    branch_values,
    branches_1d,
    branches_2d,
    eval_2d,
    eval_f1_1d,
    eval_f2_1d,
    evaluate,
    evaluation_grid,
    generate_mixture,
    mixture_1d,
    mixture_2d,
)


class TestBranches1D:
    @pytest.mark.parametrize("x, expected", [(4, 0), (0, 256), (-6, 400)])
    def test_f1(self, x, expected):
        assert eval_f1_1d(x) == expected

    @pytest.mark.parametrize("x, expected", [(0, 0), (5, 81), (-4, 0), (4, 0), (-6, 400)])
    def test_f2(self, x, expected):
        assert eval_f2_1d(x) == expected

    @pytest.mark.parametrize("x", [-6.01, 6.5, 100])
    def test_out_of_domain(self, x):
        with pytest.raises(DomainError):
            eval_f1_1d(x)
        with pytest.raises(DomainError):
            eval_f2_1d(x)

    def test_agree_outside_interior(self):
        f1, f2 = branches_1d()
        x = np.concatenate([np.linspace(-6, -4, 50), np.linspace(4, 6, 50)])
        np.testing.assert_array_equal(f1(x), f2(x))

    def test_differ_inside(self):
        f1, f2 = branches_1d()
        x = np.linspace(-3.99, 3.99, 200)
        assert np.all(f1(x) > 0)
        assert np.all(f2(x) == 0)


class TestBranches2D:
    def test_f1_on_axis(self):
        assert eval_2d("f1", 0.0, 1.3) == 0.5

    def test_f2_at_one_one(self):
        assert eval_2d("f2", 1.0, 1.0) == pytest.approx(0.880797, abs=1e-6)

    def test_f1_antidiagonal(self):
        assert eval_2d("f1", 1.0, -1.0) == 0.5

    def test_out_of_box(self):
        with pytest.raises(DomainError):
            eval_2d("f1", 2.0, 0.0)

    def test_custom_box(self):
        assert eval_2d("f2", 2.0, 0.0, Box((-3, -3), (3, 3))) == 0.5

    def test_unknown_branch(self):
        with pytest.raises(ConfigError):
            eval_2d("f3", 0.0, 0.0)

    def test_vectorized_matches_scalar(self, rng):
        f1, f2 = branches_2d()
        points = rng.uniform(-1.5, 1.5, size=(30, 2))
        expected = [eval_2d("f2", x, y) for x, y in points]
        np.testing.assert_allclose(evaluate(f2, points), expected, rtol=1e-15)

    def test_strictly_inside_unit_interval(self, rng):
        points = rng.uniform(-1.5, 1.5, size=(1000, 2))
        values = branch_values(branches_2d(), points)
        assert np.all((values > 0) & (values < 1))


class TestConfig:
    def test_collects_every_error(self):
        with pytest.raises(ConfigError) as info:
            MixtureConfig(branches_1d(), 1.5, n_samples=0, noise_stddev=-1.0, split_test_fraction=1.0)
        assert len(info.value.errors) == 4

    def test_branch_domains_must_match(self):
        with pytest.raises(ConfigError):
            MixtureConfig((branches_1d()[0], BranchSpec(2, BranchFunction.F2_1D, Box((-5,), (5,)))), 0.5)

    def test_branch_dimension_must_match_domain(self):
        with pytest.raises(ConfigError):
            BranchSpec(1, BranchFunction.F1_2D, Box((-1,), (1,)))

    def test_empty_box(self):
        with pytest.raises(ConfigError):
            Box((1.0,), (1.0,))

    def test_defaults(self):
        assert mixture_1d(0.7).noise_stddev == 5.0
        cfg = mixture_2d(0.7)
        assert (cfg.n_samples, cfg.noise_stddev, cfg.dim) == (160000, 0.02, 2)


class TestGenerateMixture:
    def test_split_sizes(self):
        train, test = generate_mixture(mixture_1d(0.7, seed=1))
        assert (len(train), len(test)) == (1600, 400)
        assert train.feature_names == ("x",)
        assert train.target_names == ("y",)

    def test_pure_first_branch(self):
        train, test = generate_mixture(mixture_1d(1.0, n_samples=300))
        assert set(train.tag("branch")) | set(test.tag("branch")) == {1}

    def test_noiseless_targets_are_exact(self):
        f1, f2 = branches_1d()
        train, _ = generate_mixture(mixture_1d(0.5, n_samples=2000, noise_stddev=0.0, seed=8))
        branch = train.tag("branch")
        x = train.features
        expected = np.where(branch == 1, f1(x), f2(x))
        np.testing.assert_array_equal(train.targets[:, 0], expected)

    def test_branch_share(self):
        train, test = generate_mixture(mixture_1d(0.7, n_samples=10_000, seed=4))
        tags = np.concatenate([train.tag("branch"), test.tag("branch")]).astype(int)
        assert abs(np.mean(tags == 1) - 0.7) < 0.02

    def test_inputs_inside_domain(self):
        train, _ = generate_mixture(mixture_2d(0.5, n_samples=500))
        assert np.all(np.abs(train.features) <= 1.5)
        assert train.feature_names == ("x1", "x2")

    def test_splits_disjoint_and_exhaustive(self):
        cfg = mixture_1d(0.6, n_samples=500, seed=3)
        train, test = generate_mixture(cfg)
        rows = {tuple(r) for r in np.hstack([train.features, train.targets])}
        test_rows = {tuple(r) for r in np.hstack([test.features, test.targets])}
        assert not rows & test_rows
        assert len(rows) + len(test_rows) == 500

    def test_same_seed_bit_identical(self):
        cfg = mixture_1d(0.6, n_samples=400, seed=21)
        a_train, a_test = generate_mixture(cfg)
        b_train, b_test = generate_mixture(cfg)
        assert a_train.features.tobytes() == b_train.features.tobytes()
        assert a_test.targets.tobytes() == b_test.targets.tobytes()

    def test_other_seed_differs(self):
        a, _ = generate_mixture(mixture_1d(0.6, n_samples=100, seed=1))
        b, _ = generate_mixture(replace(mixture_1d(0.6, n_samples=100), seed=2))
        assert a.features.tobytes() != b.features.tobytes()

    def test_noise_level(self):
        f1, _ = branches_1d()
        train, _ = generate_mixture(mixture_1d(1.0, n_samples=5000, seed=6))
        residual = train.targets[:, 0] - f1(train.features)
        assert residual.std() == pytest.approx(5.0, rel=0.05)


class TestGrid:
    def test_1d_grid_covers_multivalued_region(self):
        grid = evaluation_grid(branches_1d())
        assert grid.shape == (401, 1)
        assert grid[0, 0] == -4.0 and grid[-1, 0] == 4.0

    def test_2d_grid_covers_box(self):
        grid = evaluation_grid(branches_2d())
        assert grid.shape == (41 * 41, 2)
        np.testing.assert_array_equal(grid.min(axis=0), [-1.5, -1.5])
        np.testing.assert_array_equal(grid.max(axis=0), [1.5, 1.5])

    def test_branch_values_columns(self):
        grid = evaluation_grid(branches_1d(), 5)
        values = branch_values(branches_1d(), grid)
        np.testing.assert_array_equal(values[:, 1], 0.0)
        np.testing.assert_array_equal(values[:, 0], ((grid[:, 0] - 4) * (grid[:, 0] + 4)) ** 2)
