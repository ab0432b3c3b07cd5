"""Model families, the category split, metrics, ablation, persistence."""

import numpy as np
import pytest

from qoekit.model import FeatureVector, to_feature_vector
from qoekit.predictor import (CategoryTooSmallError, Dataset, DatasetRow,
                              DegenerateTestError, EmptyTrainError, FULL_MASK,
                              MaskMismatchError, MetricsBundle, PredictorModel,
                              RidgeLinear, SingularSystemError, ablate,
                              build_dataset, evaluate, kendall, load_model,
                              predict, save_model, split_by_category, train,
                              verify_held_out)
from qoekit.synth import SyntheticWorld, generate

CATS = ("knowledge_reasoning", "creative_tasks", "lifestyle_entertainment",
        "empathy_growth", "society_professional")


def _row(values, target, qid="q00", category="knowledge_reasoning"):
    return DatasetRow(FeatureVector(tuple(values)), float(target), qid, category, "overall")


def _grid_rows(grid, weights=(2.0, 3.0, 0.0, 0.0, 0.0), intercept=0.0, n_questions=20):
    rows = []
    for i, (content, qos) in enumerate(grid.combos()):
        fv = to_feature_vector(content, qos)
        target = intercept + float(np.dot(fv.values, weights))
        qid = f"q{i % n_questions:02d}"
        rows.append(DatasetRow(fv, target, qid, CATS[(i % n_questions) % 5], "overall"))
    return Dataset(rows)


class _FixedRegressor:
    """Stub that replays canned predictions, for metric tests."""

    def __init__(self, values):
        self.values = list(values)

    def predict(self, x):
        return np.array(self.values[: x.shape[0]], dtype=float)


def _fixed_model(predictions, mask=FULL_MASK):
    return PredictorModel("linear-ridge", mask, _FixedRegressor(predictions),
                          {"seed": 0})


def _dataset_with_targets(targets):
    rows = [_row((i, 0, 0.05, 0.25, 3.0), t, qid=f"q{i:02d}") for i, t in enumerate(targets)]
    return Dataset(rows)


class TestSplit:
    def _fixture_dataset(self, content_items):
        rows = []
        for item in content_items.values():
            rows.append(DatasetRow(FeatureVector((1, 1, 0.05, 0.25, 3.0)), 1.0,
                                   item.question_id, item.category, "overall"))
        return Dataset(rows)

    def test_one_question_per_category(self, content_items):
        dataset = self._fixture_dataset(content_items)
        train_set, test_set = split_by_category(dataset, seed=0)
        assert len(test_set.question_ids()) == 5
        assert len(train_set.question_ids()) == 49
        test_cats = {row.category for row in test_set.rows}
        assert test_cats == set(CATS)

    def test_deterministic_given_seed(self, content_items):
        dataset = self._fixture_dataset(content_items)
        first = split_by_category(dataset, seed=7)[1].question_ids()
        second = split_by_category(dataset, seed=7)[1].question_ids()
        assert first == second

    def test_different_seeds_can_differ(self, content_items):
        dataset = self._fixture_dataset(content_items)
        picks = {frozenset(split_by_category(dataset, seed=s)[1].question_ids())
                 for s in range(10)}
        assert len(picks) > 1

    def test_no_question_overlap(self, content_items):
        dataset = self._fixture_dataset(content_items)
        train_set, test_set = split_by_category(dataset, seed=3)
        assert not (train_set.question_ids() & test_set.question_ids())

    def test_category_too_small(self):
        rows = [_row((1, 1, 0.05, 0.25, 3), 1.0, "q00", "creative_tasks"),
                _row((1, 0, 0.05, 0.25, 3), 1.0, "q01", "empathy_growth"),
                _row((0, 1, 0.05, 0.25, 3), 1.0, "q02", "empathy_growth")]
        with pytest.raises(CategoryTooSmallError):
            split_by_category(Dataset(rows), seed=0)


class TestRidge:
    def test_noiseless_recovery(self, grid):
        dataset = _grid_rows(grid, weights=(2.0, 3.0, 0.0, 0.0, 0.0), intercept=0.5)
        model = train("linear-ridge", dataset, seed=0)
        coef = model.regressor.coef
        assert coef[0] == pytest.approx(0.5, abs=1e-6)
        assert coef[1:] == pytest.approx([2.0, 3.0, 0.0, 0.0, 0.0], abs=1e-6)
        predictions = model.predict_matrix(dataset.matrix())
        assert float(np.sqrt(np.mean((predictions - dataset.targets()) ** 2))) < 1e-6

    def test_singular_without_ridge(self):
        # duplicated rows of an all-equal feature cannot be solved at ridge 0
        rows = [_row((1, 1, 0.05, 0.25, 3.0), 1.0, f"q{i}") for i in range(4)]
        with pytest.raises(SingularSystemError):
            train("linear-ridge", Dataset(rows), hyper={"ridge": 0.0}, seed=0)

    def test_ridge_resolves_degeneracy(self):
        rows = [_row((1, 1, 0.05, 0.25, 3.0), 1.0, f"q{i}") for i in range(4)]
        model = train("linear-ridge", Dataset(rows), seed=0)
        raw, _ = predict(model, FeatureVector((1, 1, 0.05, 0.25, 3.0)))
        assert raw == pytest.approx(1.0, abs=1e-3)


class TestKnn:
    def test_k1_memorizes_train(self, grid):
        dataset = _grid_rows(grid, weights=(1.0, -2.0, 10.0, 0.5, 0.1))
        model = train("knn", dataset, hyper={"k": 1}, seed=0)
        predictions = model.predict_matrix(dataset.matrix())
        assert np.array_equal(predictions, dataset.targets())

    def test_k3_is_mean_of_neighbours(self):
        rows = [_row((0, 0, 0.05, 0.25, float(v)), t, qid=f"q{v}")
                for v, t in [(1, 1.0), (2, 2.0), (3, 4.0), (10, 40.0)]]
        model = train("knn", Dataset(rows), hyper={"k": 3}, seed=0)
        raw, _ = predict(model, {"density": 0, "accuracy": 0, "speed": 0.05,
                                 "pause_pos": 0.25, "pause_dur": 2.0})
        assert raw == pytest.approx((1.0 + 2.0 + 4.0) / 3)


class TestForest:
    def test_single_row_constant_predictor(self):
        dataset = Dataset([_row((1, 0, 0.05, 0.25, 3.0), 2.5)])
        model = train("tree-ensemble", dataset, hyper={"n_trees": 10}, seed=0)
        raw, _ = predict(model, FeatureVector((0, 1, 0.1, 0.75, 7.0)))
        assert raw == 2.5

    def test_fits_separable_signal(self, grid):
        dataset = _grid_rows(grid, weights=(0.0, 4.0, 0.0, 0.0, 0.0))
        model = train("tree-ensemble", dataset, hyper={"n_trees": 30}, seed=1)
        high = predict(model, FeatureVector((1, 1, 0.05, 0.25, 3.0)))[0]
        low = predict(model, FeatureVector((1, 0, 0.05, 0.25, 3.0)))[0]
        assert high - low > 2.0

    def test_training_deterministic(self, grid):
        dataset = _grid_rows(grid, weights=(1.0, 2.0, -5.0, 0.0, -0.2))
        a = train("tree-ensemble", dataset, hyper={"n_trees": 15}, seed=5)
        b = train("tree-ensemble", dataset, hyper={"n_trees": 15}, seed=5)
        x = dataset.matrix()
        assert np.array_equal(a.predict_matrix(x), b.predict_matrix(x))


class TestPredict:
    def test_linear_dot_product(self):
        regressor = RidgeLinear()
        regressor.coef = np.array([0.0, 2.0, 3.0, 0.0, 0.0, 0.0])
        model = PredictorModel("linear-ridge", FULL_MASK, regressor, {})
        raw, clamped = predict(model, FeatureVector((1, 1, 0.05, 0.25, 3.0)))
        assert raw == 5.0 and clamped == 5.0

    def test_clamping(self):
        regressor = RidgeLinear()
        regressor.coef = np.array([10.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        model = PredictorModel("linear-ridge", FULL_MASK, regressor, {})
        raw, clamped = predict(model, FeatureVector((1, 1, 0.05, 0.25, 3.0)))
        assert raw == 10.0 and clamped == 5.0

    def test_mask_mismatch_full_vector_to_masked_model(self):
        mask = (True, False, True, True, True)  # accuracy dropped
        model = PredictorModel("linear-ridge", mask, _FixedRegressor([0.0]), {})
        with pytest.raises(MaskMismatchError):
            predict(model, FeatureVector((1, 1, 0.05, 0.25, 3.0)))

    def test_mask_mismatch_extra_key(self):
        mask = (True, False, True, True, True)
        model = PredictorModel("linear-ridge", mask, _FixedRegressor([0.0]), {})
        with pytest.raises(MaskMismatchError):
            predict(model, {"density": 1, "accuracy": 1, "speed": 0.05,
                            "pause_pos": 0.25, "pause_dur": 3.0})

    def test_masked_mapping_accepted(self):
        mask = (True, False, True, True, True)
        model = PredictorModel("linear-ridge", mask, _FixedRegressor([1.5]), {})
        raw, _ = predict(model, {"density": 1, "speed": 0.05,
                                 "pause_pos": 0.25, "pause_dur": 3.0})
        assert raw == 1.5


class TestEvaluate:
    def test_perfect_predictor(self):
        dataset = _dataset_with_targets([1.0, 2.0, 3.0, 4.0])
        metrics = evaluate(_fixed_model([1.0, 2.0, 3.0, 4.0]), dataset)
        assert metrics.srcc == 1.0
        assert metrics.plcc == pytest.approx(1.0)
        assert metrics.krcc == 1.0
        assert metrics.rmse == 0.0

    def test_reversed_order(self):
        dataset = _dataset_with_targets([1.0, 2.0, 3.0, 4.0])
        metrics = evaluate(_fixed_model([4.0, 3.0, 2.0, 1.0]), dataset)
        assert metrics.srcc == -1.0
        assert metrics.krcc == -1.0

    def test_hand_values(self):
        dataset = _dataset_with_targets([1.0, 2.0, 3.0, 4.0])
        metrics = evaluate(_fixed_model([2.0, 1.0, 4.0, 3.0]), dataset)
        assert metrics.srcc == pytest.approx(0.6, abs=1e-12)
        assert metrics.krcc == pytest.approx(1 / 3, abs=1e-12)

    def test_degenerate_when_both_constant(self):
        dataset = _dataset_with_targets([2.0, 2.0, 2.0])
        with pytest.raises(DegenerateTestError):
            evaluate(_fixed_model([1.0, 1.0, 1.0]), dataset)

    def test_constant_predictions_yield_zero_rank_metrics(self):
        dataset = _dataset_with_targets([1.0, 2.0, 3.0])
        metrics = evaluate(_fixed_model([2.0, 2.0, 2.0]), dataset)
        assert metrics.srcc == 0.0 and metrics.krcc == 0.0 and metrics.plcc == 0.0

    def test_empty_test_rejected(self):
        with pytest.raises(DegenerateTestError):
            evaluate(_fixed_model([]), Dataset([]))

    def test_kendall_surface(self):
        assert kendall([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(1 / 3)

    def test_metrics_bundle_guards(self):
        with pytest.raises(Exception):
            MetricsBundle(float("nan"), 0.0, 0.0, 0.0)


class TestTrainGuards:
    def test_empty_train(self):
        with pytest.raises(EmptyTrainError):
            train("linear-ridge", Dataset([]), seed=0)

    def test_unknown_family(self):
        from qoekit.errors import DomainError
        with pytest.raises(DomainError):
            train("boosted", Dataset([_row((1, 1, 0.05, 0.25, 3.0), 1.0)]), seed=0)


class TestBuildDataset:
    def test_z_mode_rows(self, grid):
        records, _ = generate(SyntheticWorld(seed=1), grid, 8, 40)
        dataset = build_dataset(records, "overall", "z")
        assert dataset.meta == {"dimension": "overall", "target": "z"}
        assert len(dataset.rows) > 0
        # one row per surviving (rater, condition) pair
        assert len(dataset.rows) <= 8 * 40

    def test_mos_mode_rows(self, grid):
        records, _ = generate(SyntheticWorld(seed=1), grid, 8, 40)
        dataset = build_dataset(records, "overall", "mos")
        assert len(dataset.rows) == 40
        assert all(0.0 <= row.target <= 5.0 for row in dataset.rows)

    def test_bad_target_rejected(self, grid):
        records, _ = generate(SyntheticWorld(seed=1), grid, 4, 20)
        from qoekit.errors import DomainError
        with pytest.raises(DomainError):
            build_dataset(records, "overall", "raw")


class TestAblate:
    def test_full_row_matches_direct_run(self, grid):
        records, _ = generate(SyntheticWorld(seed=3), grid, 12, 80)
        dataset = build_dataset(records, "overall", "mos")
        results = ablate(dataset, "linear-ridge", seed=3)
        train_set, test_set = split_by_category(dataset, seed=3)
        direct = evaluate(train("linear-ridge", train_set, seed=3), test_set)
        assert results["none"] == direct

    def test_rows_cover_all_features(self, grid):
        records, _ = generate(SyntheticWorld(seed=3), grid, 8, 60)
        dataset = build_dataset(records, "overall", "mos")
        results = ablate(dataset, "linear-ridge", seed=1)
        assert list(results) == ["none", "density", "accuracy", "speed",
                                 "pause_pos", "pause_dur"]

    def test_zero_weight_feature_barely_matters(self, grid):
        # ground truth gives pause_pos no weight at all
        world = SyntheticWorld(weights=(0.35, 2.4, -27.0, 0.0, -0.5),
                               noise_sd=0.1, seed=11)
        records, _ = generate(world, grid, 16, 120)
        dataset = build_dataset(records, "overall", "mos")
        results = ablate(dataset, "linear-ridge", seed=11)
        delta = results["none"].srcc - results["pause_pos"].srcc
        assert abs(delta) < 0.05


class TestPersistence:
    @pytest.mark.parametrize("family,hyper", [
        ("linear-ridge", {}),
        ("knn", {"k": 3}),
        ("tree-ensemble", {"n_trees": 12}),
    ])
    def test_round_trip_bit_exact(self, tmp_path, grid, family, hyper):
        dataset = _grid_rows(grid, weights=(1.0, 2.0, -8.0, 0.3, -0.3))
        model = train(family, dataset, hyper=hyper, seed=4)
        path = tmp_path / "model.json"
        save_model(model, path)
        reloaded = load_model(path)
        x = dataset.matrix()
        assert np.array_equal(model.predict_matrix(x), reloaded.predict_matrix(x))
        assert reloaded.family == model.family
        assert reloaded.feature_mask == model.feature_mask


class TestHeldOut:
    def test_linear_world_generalizes_off_grid(self, grid, heldout_grid):
        world = SyntheticWorld(noise_sd=0.15, seed=6)
        records, _ = generate(world, grid, 16, 100)
        dataset = build_dataset(records, "overall", "mos")
        model = train("linear-ridge", dataset, seed=6)
        held_world = SyntheticWorld(noise_sd=0.15, seed=60)
        held_records, _ = generate(held_world, heldout_grid, 16, 48)
        metrics = verify_held_out(model, held_records)
        assert metrics.srcc >= 0.9

    def test_empty_heldout_rejected(self, grid):
        records, _ = generate(SyntheticWorld(seed=1), grid, 6, 30)
        dataset = build_dataset(records, "overall", "mos")
        model = train("linear-ridge", dataset, seed=1)
        with pytest.raises(DegenerateTestError):
            verify_held_out(model, [])
