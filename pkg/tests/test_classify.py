import numpy as np
import pytest

import tensplit.classify as classify_mod
from tensplit.classify import (
    EvalReport,
    ExperimentConfig,
    LabeledVectors,
    knn_classify,
    nearest_centroid,
    report_csv,
    run_experiment,
    summary_json,
)
from tensplit.core import DenseTensor
from tensplit.dataset import (
    EnsembleDataset,
    make_group_splits,
    synthetic_face_fixture,
)
from tensplit.kernels import ConvergenceError


def vecs(points, labels):
    return LabeledVectors(vectors=[np.asarray(p, float) for p in points],
                          labels=list(labels))


class TestLabeledVectors:
    def test_matrix_shape(self):
        lv = vecs([[1, 2], [3, 4], [5, 6]], [0, 1, 0])
        assert lv.matrix().shape == (3, 2)
        assert len(lv) == 3
        assert lv.dim == 2

    def test_validation(self):
        with pytest.raises(ValueError):
            vecs([[1, 2]], [0, 1])
        with pytest.raises(ValueError):
            vecs([[1, 2], [1, 2, 3]], [0, 1])
        with pytest.raises(ValueError):
            LabeledVectors(vectors=[np.ones((2, 2))], labels=[0])


class TestKnn:
    def test_training_point_recovers_own_label(self):
        train = vecs([[0, 0], [5, 5], [9, 0]], [0, 1, 2])
        rep = knn_classify(train, train, k=1)
        assert rep.accuracy == 1.0
        np.testing.assert_array_equal(rep.confusion, np.eye(3, dtype=int))

    def test_separable_clusters(self):
        train = vecs([[0, 0], [0, 1], [10, 10], [10, 11]], [0, 0, 1, 1])
        test = vecs([[0.2, 0.4], [9.8, 10.6], [0.1, 0.9], [10.2, 10.1]],
                    [0, 1, 0, 1])
        rep = knn_classify(train, test, k=1)
        assert rep.accuracy == 1.0
        assert rep.confusion[0].sum() == 2  # row sums count true-class samples
        assert rep.confusion[1].sum() == 2

    def test_vote_tie_breaks_by_total_distance(self):
        train = vecs([[1, 0], [-0.5, 0]], [0, 1])
        test = vecs([[0, 0]], [1])
        rep = knn_classify(train, test, k=2)
        assert rep.accuracy == 1.0  # class 1 is nearer, wins the 1-1 vote

    def test_full_tie_breaks_by_lowest_id(self):
        train = vecs([[1, 0], [-1, 0]], [7, 3])
        rep = knn_classify(train, vecs([[0, 0]], [3]), k=2)
        assert rep.accuracy == 1.0  # both classes at distance 1, ID 3 < 7

    def test_k_clamped_to_training_size(self):
        train = vecs([[0, 0], [1, 0]], [0, 1])
        rep = knn_classify(train, vecs([[0.1, 0]], [0]), k=50)
        assert rep.accuracy == 1.0

    def test_validation(self):
        train = vecs([[0, 0]], [0])
        with pytest.raises(ValueError):
            knn_classify(train, train, k=0)
        with pytest.raises(ValueError):
            knn_classify(vecs([], []), train)
        with pytest.raises(ValueError):
            knn_classify(train, vecs([[0, 0, 0]], [0]))


class TestNearestCentroid:
    def test_axis_clusters(self):
        train = vecs([[2, 0], [4, 0], [0, 2], [0, 4]], [0, 0, 1, 1])
        test = vecs([[5, 1], [1, 5]], [0, 1])
        rep = nearest_centroid(train, test)
        assert rep.accuracy == 1.0

    def test_equidistant_goes_to_lowest_id(self):
        train = vecs([[-1, 0], [1, 0], [1, 0], [3, 0]], [4, 4, 2, 2])
        rep = nearest_centroid(train, vecs([[1, 0]], [2]))
        assert rep.accuracy == 1.0  # centroids at 0 and 2, tie goes to ID 2

    def test_matches_bruteforce_table(self):
        rng = np.random.default_rng(0)
        train_pts = rng.standard_normal((15, 4))
        train_labs = [int(l) for l in rng.integers(0, 3, size=15)]
        test_pts = rng.standard_normal((12, 4))
        test_labs = [int(l) for l in rng.integers(0, 3, size=12)]
        train = vecs(train_pts, train_labs)
        test = vecs(test_pts, test_labs)
        rep = nearest_centroid(train, test)

        cents = {
            lab: train_pts[[i for i, l in enumerate(train_labs) if l == lab]].mean(0)
            for lab in sorted(set(train_labs))
        }
        expect = np.zeros((3, 3), dtype=int)
        for x, true in zip(test_pts, test_labs):
            pred = min(sorted(cents),
                       key=lambda lab: (np.linalg.norm(x - cents[lab]), lab))
            expect[true, pred] += 1
        np.testing.assert_array_equal(rep.confusion, expect)
        assert rep.accuracy == np.trace(expect) / 12


class TestEvalReport:
    def test_accuracy_is_trace_over_total(self):
        conf = np.array([[3, 1], [0, 4]])
        rep = EvalReport(accuracy=7 / 8, confusion=conf, per_run=[7 / 8],
                         mean=7 / 8, stddev=0.0, class_ids=[0, 1])
        assert rep.accuracy == np.trace(conf) / conf.sum()

    def test_square_confusion_required(self):
        with pytest.raises(ValueError):
            EvalReport(accuracy=1.0, confusion=np.zeros((2, 3)), per_run=[],
                       mean=0.0, stddev=0.0, class_ids=[0, 1])


class TestExperimentConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.realizations == 100
        assert cfg.classifier == "knn"
        assert cfg.ranks == [1]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"realizations": 0},
            {"classifier": "svm"},
            {"k": 0},
            {"ranks": []},
            {"ranks": [1, 0]},
            {"tau": -0.5},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)


def single_class_dataset(seed=0):
    rng = np.random.default_rng(seed)
    arr = rng.uniform(0.1, 1.0, size=(4, 3, 6))
    return EnsembleDataset(tensor=DenseTensor(arr), labels=[0] * 6)


class TestRunExperiment:
    def test_single_class_is_always_right(self):
        ds = single_class_dataset()
        plan = make_group_splits(ds, groups=3, train=1, seed=0)
        cfg = ExperimentConfig(realizations=2, max_sweeps=50)
        for method in ("raw", "ll1", "cpd"):
            rep = run_experiment(ds, plan, method, cfg)
            assert rep.accuracy == 1.0
            assert rep.per_run == [1.0, 1.0]

    def test_deterministic(self):
        ds = synthetic_face_fixture(height=8, width=6, seed=1,
                                    n_classes=2, per_class=4)
        plan = make_group_splits(ds, groups=4, train=2, seed=3)
        cfg = ExperimentConfig(realizations=2, ranks=[1, 1], max_sweeps=60)
        a = run_experiment(ds, plan, "ll1", cfg)
        b = run_experiment(ds, plan, "ll1", cfg)
        assert a.per_run == b.per_run
        np.testing.assert_array_equal(a.confusion, b.confusion)
        assert a.mean == b.mean

    def test_individual_features_beat_raw_on_fixture(self):
        ds = synthetic_face_fixture(height=8, width=6, seed=2,
                                    n_classes=2, per_class=4)
        plan = make_group_splits(ds, groups=4, train=2, seed=0)
        cfg = ExperimentConfig(realizations=3, ranks=[1, 1], max_sweeps=150)
        raw = run_experiment(ds, plan, "raw", cfg)
        ll1 = run_experiment(ds, plan, "ll1", cfg)
        assert ll1.mean >= raw.mean

    def test_realization_count_and_confusion_totals(self):
        ds = synthetic_face_fixture(height=8, width=6, seed=1,
                                    n_classes=2, per_class=4)
        plan = make_group_splits(ds, groups=4, train=1, seed=0)
        cfg = ExperimentConfig(realizations=3)
        rep = run_experiment(ds, plan, "raw", cfg)
        assert len(rep.per_run) == 3
        # 3 test groups x 2 samples x 3 realizations
        assert rep.confusion.sum() == 18
        assert rep.accuracy == np.trace(rep.confusion) / 18

    def test_cpd_uses_one_rank1_term_per_block(self, monkeypatch):
        seen = []
        original = classify_mod.fit_feature_bank

        def spy(t, ranks, cfg=None, n_restarts=1):
            seen.append(list(ranks))
            return original(t, ranks, cfg, n_restarts)

        monkeypatch.setattr(classify_mod, "fit_feature_bank", spy)
        ds = single_class_dataset()
        plan = make_group_splits(ds, groups=3, train=1, seed=0)
        cfg = ExperimentConfig(realizations=1, ranks=[2, 3], max_sweeps=30)
        run_experiment(ds, plan, "cpd", cfg)
        assert seen and all(r == [1, 1] for r in seen)

    def test_decomposition_failure_names_the_group(self, monkeypatch):
        def boom(t, ranks, cfg=None, n_restarts=1):
            raise ConvergenceError("solver stalled")

        monkeypatch.setattr(classify_mod, "fit_feature_bank", boom)
        ds = single_class_dataset()
        plan = make_group_splits(ds, groups=3, train=1, seed=0)
        cfg = ExperimentConfig(realizations=1)
        with pytest.raises(ConvergenceError, match="group"):
            run_experiment(ds, plan, "ll1", cfg)

    def test_unknown_method(self):
        ds = single_class_dataset()
        plan = make_group_splits(ds, groups=3, train=1, seed=0)
        with pytest.raises(ValueError, match="method"):
            run_experiment(ds, plan, "pca")


class TestReports:
    def test_csv_layout(self):
        rep = EvalReport(accuracy=0.75, confusion=np.array([[3, 1], [1, 3]]),
                         per_run=[0.5, 1.0], mean=0.75, stddev=0.25,
                         class_ids=[0, 1])
        lines = report_csv(rep).splitlines()
        assert lines[0] == "realization,accuracy"
        assert lines[1] == "0,0.500000"
        assert lines[2] == "1,1.000000"
        assert lines[3] == "mean,0.750000"
        assert lines[4] == "stddev,0.250000"

    def test_summary_json(self):
        rep = EvalReport(accuracy=1.0, confusion=np.eye(2, dtype=int),
                         per_run=[1.0], mean=1.0, stddev=0.0, class_ids=[0, 1])
        text = summary_json({"raw": {"knn": rep}})
        assert text.endswith("\n")
        import json

        data = json.loads(text)
        assert data["raw"]["knn"] == {
            "accuracy": 1.0,
            "mean": 1.0,
            "stddev": 0.0,
            "realizations": 1,
        }
