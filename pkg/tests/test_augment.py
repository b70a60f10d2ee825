import numpy as np
import pytest
from toymodels import constant_logit_model

from domainfusion import augment, data, drs
from domainfusion.errors import ConfigError, ShapeError


def target_set(n_per_class=10, k=2, side=4, seed=0):
    rng = np.random.default_rng(seed)
    n = n_per_class * k
    return data.LabeledImageSet(
        pixels=rng.integers(0, 256, size=(n, 1, side, side), dtype=np.uint8),
        labels=(np.arange(n) % k).astype(np.uint16),
        num_classes=k,
        name="target",
    )


class TestBuildAugmented:
    def test_zero_generated_identity(self):
        target = target_set()
        model = constant_logit_model(0.0, num_classes=2)
        out = augment.build_augmented(
            target, model, augment.AugmentPlan(gen_per_class=0, use_drs=False)
        )
        assert np.array_equal(out.images.pixels, target.pixels)
        assert out.n_real == len(target) and out.n_generated == 0

    def test_counts_and_histogram(self):
        target = target_set(n_per_class=10, k=2)
        model = constant_logit_model(0.0, num_classes=2)
        plan = augment.AugmentPlan(gen_per_class=5, use_drs=False)
        out = augment.build_augmented(target, model, plan, seed=1)
        assert len(out.images) == 20 + 10
        assert np.array_equal(np.bincount(out.images.labels), [15, 15])

    def test_real_prefix_untouched(self):
        target = target_set()
        model = constant_logit_model(0.0, num_classes=2)
        plan = augment.AugmentPlan(gen_per_class=3, use_drs=False)
        out = augment.build_augmented(target, model, plan, seed=2)
        assert np.array_equal(out.images.pixels[: len(target)], target.pixels)
        assert out.provenance().sum() == len(target)

    def test_labels_stay_in_target_range_with_extra_model_classes(self):
        target = target_set(k=2)
        model = constant_logit_model(0.0, num_classes=5)  # trained with outer classes
        plan = augment.AugmentPlan(gen_per_class=4, use_drs=False)
        out = augment.build_augmented(target, model, plan, seed=3)
        assert int(out.images.labels.max()) < target.num_classes

    def test_drs_path_records(self):
        target = target_set(k=2)
        model = constant_logit_model(0.0, num_classes=2)
        head = drs.CalibrationHead.identity(2)
        state = drs.init_drs_state(model, head, range(2), seed=1, tau=20)
        plan = augment.AugmentPlan(gen_per_class=6, use_drs=True)
        out = augment.build_augmented(target, model, plan, head, state, seed=4)
        assert out.n_generated == 12
        assert len(out.records) == 2
        assert {r.class_id for r in out.records} == {0, 1}

    def test_drs_requires_head_and_state(self):
        target = target_set(k=2)
        model = constant_logit_model(0.0, num_classes=2)
        with pytest.raises(ConfigError):
            augment.build_augmented(
                target, model, augment.AugmentPlan(gen_per_class=2, use_drs=True)
            )


class TestConventionalAugment:
    def test_all_disabled_identity(self):
        cfg = augment.CdaConfig(flip=False, expand=False, rotate=False)
        img = target_set().pixels[0]
        out = augment.conventional_augment(img, cfg, seed=5)
        assert np.array_equal(out, img)

    def test_forced_flip_is_involution(self):
        cfg = augment.CdaConfig(flip=True, flip_prob=1.0, expand=False, rotate=False)
        img = target_set().pixels[0]
        once = augment.conventional_augment(img, cfg, seed=6)
        twice = augment.conventional_augment(once, cfg, seed=6)
        assert not np.array_equal(once, img)
        assert np.array_equal(twice, img)

    def test_degenerate_parameters_bitwise_identity(self):
        cfg = augment.CdaConfig(
            flip=False,
            expand=True, expand_lo=1.0, expand_hi=1.0,
            rotate=True, rotate_lo=0.0, rotate_hi=0.0,
        )
        img = target_set().pixels[1]
        out = augment.conventional_augment(img, cfg, seed=7)
        assert np.array_equal(out, img)

    def test_deterministic_in_seed(self):
        cfg = augment.CdaConfig()
        img = target_set().pixels[2]
        a = augment.conventional_augment(img, cfg, seed=8)
        b = augment.conventional_augment(img, cfg, seed=8)
        assert np.array_equal(a, b)

    def test_shape_and_range_preserved_property(self):
        cfg = augment.CdaConfig()
        rng = np.random.default_rng(11)
        for trial in range(1000):
            img = rng.integers(0, 256, size=(1, 6, 6), dtype=np.uint8)
            out = augment.conventional_augment(img, cfg, seed=trial)
            assert out.shape == img.shape
            assert out.dtype == np.uint8


def separable_sets(n=40, side=4, seed=0):
    """Two classes split by mean brightness; linearly separable."""
    rng = np.random.default_rng(seed)
    dark = rng.integers(0, 60, size=(n // 2, 1, side, side), dtype=np.uint8)
    bright = rng.integers(196, 256, size=(n // 2, 1, side, side), dtype=np.uint8)
    pixels = np.concatenate([dark, bright])
    labels = np.array([0] * (n // 2) + [1] * (n // 2), dtype=np.uint16)
    order = rng.permutation(n)
    return data.LabeledImageSet(
        pixels=pixels[order], labels=labels[order], num_classes=2, name="sep"
    )


class TestTrainClassifier:
    def test_zero_steps_returns_initial(self):
        train = separable_sets(seed=1)
        val = separable_sets(seed=2)
        cfg = augment.ClassifierConfig(steps=0, seed=3)
        clf = augment.train_classifier(train, val, cfg)
        from domainfusion import nn

        fresh = nn.init_params(clf.spec, 3, stream_tag="classifier")
        for name, arr in clf.params.items():
            assert np.array_equal(arr, fresh[name])

    def test_linearly_separable_reaches_perfect_val(self):
        train = separable_sets(seed=1)
        val = separable_sets(seed=2)
        cfg = augment.ClassifierConfig(steps=400, batch=16, lr=1e-3, seed=4)
        clf = augment.train_classifier(train, val, cfg)
        report = augment.evaluate(clf, val, k=1)
        assert report.top1 == 1.0

    def test_deterministic(self):
        train = separable_sets(seed=1)
        val = separable_sets(seed=2)
        cfg = augment.ClassifierConfig(steps=50, batch=8, seed=5)
        a = augment.train_classifier(train, val, cfg)
        b = augment.train_classifier(train, val, cfg)
        for name, arr in a.params.items():
            assert np.array_equal(arr, b.params[name])

    def test_cda_path_runs_deterministically(self):
        train = separable_sets(seed=1)
        val = separable_sets(seed=2)
        cfg = augment.ClassifierConfig(steps=20, batch=8, seed=6)
        cda = augment.CdaConfig()
        a = augment.train_classifier(train, val, cfg, cda=cda)
        b = augment.train_classifier(train, val, cfg, cda=cda)
        for name, arr in a.params.items():
            assert np.array_equal(arr, b.params[name])

    def test_val_label_space_checked(self):
        train = separable_sets()
        bad_val = data.LabeledImageSet(
            pixels=train.pixels[:4],
            labels=np.array([0, 1, 2, 0], dtype=np.uint16),
            num_classes=3,
            name="bad",
        )
        with pytest.raises(ShapeError):
            augment.train_classifier(train, bad_val, augment.ClassifierConfig(steps=1))


class FixedClassifier(augment.Classifier):
    """Classifier stub returning a preset score table."""

    def __init__(self, table, num_classes):
        self.table = np.asarray(table, dtype=np.float64)
        self.num_classes = num_classes

    def logits(self, images):
        return self.table


def tiny_test_set(labels, k, side=2):
    labels = np.asarray(labels, dtype=np.uint16)
    pixels = np.zeros((labels.shape[0], 1, side, side), dtype=np.uint8)
    return data.LabeledImageSet(pixels=pixels, labels=labels, num_classes=k, name="t")


class TestEvaluate:
    def test_one_hot_oracle_classifier(self):
        labels = [0, 1, 2, 1]
        table = np.eye(3)[labels]
        clf = FixedClassifier(table, 3)
        report = augment.evaluate(clf, tiny_test_set(labels, 3), k=1)
        assert report.top1 == 1.0

    def test_k_equals_class_count_saturates(self):
        rng = np.random.default_rng(3)
        labels = [0, 2, 1, 2, 0]
        clf = FixedClassifier(rng.normal(size=(5, 3)), 3)
        report = augment.evaluate(clf, tiny_test_set(labels, 3), k=3)
        assert report.topk == 1.0

    def test_hand_built_score_table(self):
        # rows 0 and 2 correct, row 1 wrong -> top1 = 2/3
        table = [[0.9, 0.1], [0.8, 0.2], [0.3, 0.7]]
        labels = [0, 1, 1]
        clf = FixedClassifier(table, 2)
        report = augment.evaluate(clf, tiny_test_set(labels, 2), k=1)
        assert report.top1 == pytest.approx(2 / 3)

    def test_argmax_tie_breaks_to_lowest_class(self):
        table = [[0.5, 0.5]]
        clf = FixedClassifier(table, 2)
        assert augment.evaluate(clf, tiny_test_set([0], 2), k=1).top1 == 1.0
        assert augment.evaluate(clf, tiny_test_set([1], 2), k=1).top1 == 0.0

    def test_topk_monotone_in_k(self):
        rng = np.random.default_rng(9)
        labels = rng.integers(0, 4, size=30).tolist()
        clf = FixedClassifier(rng.normal(size=(30, 4)), 4)
        ds = tiny_test_set(labels, 4)
        accs = [augment.evaluate(clf, ds, k=k).topk for k in range(1, 5)]
        assert all(b >= a for a, b in zip(accs, accs[1:]))
        assert accs[0] == augment.evaluate(clf, ds, k=1).top1


def report_from(per_acc, per_n, k=1):
    per_acc = np.asarray(per_acc, dtype=np.float64)
    per_n = np.asarray(per_n, dtype=np.int64)
    top1 = float((per_acc * per_n).sum() / per_n.sum())
    return augment.EvalReport(
        top1=top1, topk=top1, k=k, per_class_acc=per_acc, per_class_n=per_n
    )


class TestImprovementRate:
    def test_identical_reports_rate_one(self):
        r = report_from([0.5, 0.25, 0.75], [10, 10, 20])
        rates = augment.improvement_rate(r, r, {"a": [0, 1], "b": [2]})
        assert all(g.rate == pytest.approx(1.0) for g in rates)

    def test_hand_rate(self):
        with_da = report_from([0.25], [100])
        without = report_from([0.20], [100])
        rates = augment.improvement_rate(with_da, without, {"g": [0]})
        assert rates[0].rate == pytest.approx(1.25)

    def test_zero_baseline_marked_undefined(self):
        with_da = report_from([0.5, 0.4], [10, 10])
        without = report_from([0.0, 0.2], [10, 10])
        rates = augment.improvement_rate(with_da, without, {"z": [0], "ok": [1]})
        by_name = {g.group: g for g in rates}
        assert by_name["z"].rate is None
        assert by_name["ok"].rate == pytest.approx(2.0)
        assert rates[-1].group == "z"  # undefined sorts last

    def test_empty_group_rejected(self):
        r = report_from([0.5], [10])
        with pytest.raises(ConfigError):
            augment.improvement_rate(r, r, {"empty": []})

    def test_sorted_descending(self):
        with_da = report_from([0.9, 0.3, 0.6], [10, 10, 10])
        without = report_from([0.3, 0.3, 0.3], [10, 10, 10])
        rates = augment.improvement_rate(
            with_da, without, {"a": [0], "b": [1], "c": [2]}
        )
        assert [g.group for g in rates] == ["a", "c", "b"]


class TestReportFiles:
    def test_eval_row_schema(self, tmp_path):
        r = report_from([0.5, 0.7], [10, 10])
        path = tmp_path / "eval.csv"
        augment.write_eval_row(path, "run1", "df", r, 400, 800, 3)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "run_id,mode,top1,topk,n_train_real,n_train_gen,seed"
        assert lines[1].startswith("run1,df,0.6")

    def test_class_companion_schema(self, tmp_path):
        r = report_from([0.5, 0.7], [10, 20])
        path = tmp_path / "classes.csv"
        augment.write_eval_classes(path, "run1", r)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "run_id,class,accuracy,n"
        assert len(lines) == 3
        assert lines[2] == "run1,1,0.7,20"
