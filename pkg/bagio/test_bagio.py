"""Tests for bag storage, the synthetic generator and dataset splits."""

import numpy as np
import pytest

from bagio import (
    Bag,
    FeatureSizeError,
    ManifestError,
    NonFiniteFeatureError,
    SplitError,
    SplitSpec,
    SynthSpec,
    SynthSpecError,
    bag_sampling_weights,
    class_balanced_weights,
    generate_synthetic_dataset,
    planting_log,
    read_bag,
    stratified_kfold,
    write_bag,
)
from bagio.storage import FEATURES_NAME, MANIFEST_NAME, write_dataset


# ============================================================================
# STORAGE
# ============================================================================

def test_single_zero_patch_round_trips(tmp_path):
    bag = Bag("one", 0, np.array([[0, 0]]), np.zeros((1, 4), dtype=np.float32))
    assert read_bag(write_bag(bag, tmp_path)) == bag


def test_round_trip_is_byte_identical(tmp_path, tiny_bag):
    loaded = read_bag(write_bag(tiny_bag, tmp_path))
    assert loaded == tiny_bag
    assert loaded.features.tobytes() == tiny_bag.features.tobytes()
    assert loaded.annotations == tiny_bag.annotations


def test_random_bags_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(100):
        n, d_f = int(rng.integers(1, 30)), int(rng.integers(1, 20))
        cells = rng.choice(400, size=n, replace=False)
        bag = Bag(
            f"b{i}",
            int(rng.integers(0, 4)),
            np.stack([cells // 20, cells % 20], axis=1),
            (rng.standard_normal((n, d_f)) * 10 ** rng.uniform(-30, 30)).astype(np.float32),
        )
        assert read_bag(write_bag(bag, tmp_path)) == bag


def test_truncated_payload_is_size_error(tmp_path, tiny_bag):
    bag_dir = write_bag(tiny_bag, tmp_path)
    payload = (bag_dir / FEATURES_NAME).read_bytes()
    (bag_dir / FEATURES_NAME).write_bytes(payload[:-1])
    with pytest.raises(FeatureSizeError):
        read_bag(bag_dir)


def test_malformed_manifest(tmp_path, tiny_bag):
    bag_dir = write_bag(tiny_bag, tmp_path)
    (bag_dir / MANIFEST_NAME).write_text("{not json", encoding="utf-8")
    with pytest.raises(ManifestError):
        read_bag(bag_dir)


def test_non_finite_payload(tmp_path, tiny_bag):
    bag_dir = write_bag(tiny_bag, tmp_path)
    values = np.fromfile(bag_dir / FEATURES_NAME, dtype="<f4")
    values[3] = np.nan
    values.tofile(bag_dir / FEATURES_NAME)
    with pytest.raises(NonFiniteFeatureError):
        read_bag(bag_dir)


def test_duplicate_coords_rejected(tmp_path):
    bag = Bag("dup", 1, np.array([[0, 0], [0, 0]]), np.ones((2, 3), dtype=np.float32))
    with pytest.raises(ValueError):
        write_bag(bag, tmp_path)


@pytest.mark.parametrize("bag_id", ["../escape", "a/b", "a\\b", "..", "."])
def test_path_like_bag_id_rejected(tmp_path, bag_id):
    bag = Bag(bag_id, 1, np.array([[0, 0]]), np.ones((1, 3), dtype=np.float32))
    with pytest.raises(ValueError, match="plain file name"):
        write_bag(bag, tmp_path / "data")
    assert not any(tmp_path.rglob("*.f32"))


# ============================================================================
# SYNTHETIC GENERATOR
# ============================================================================

def test_normal_bags_have_no_planted_patches():
    spec = SynthSpec(class_counts=(5, 0, 0, 0), tumor_fraction=0.0, feature_dim=8)
    for bag in generate_synthetic_dataset(spec, seed=3):
        assert bag.grade == 0
        assert bag.annotations == []


def test_label_is_worst_planted_grade(small_spec):
    spec = SynthSpec(**{**small_spec.__dict__, "lower_grade_prob": 1.0})
    for bag in generate_synthetic_dataset(spec, seed=11):
        planted = planting_log(bag)
        if bag.grade == 0:
            assert planted == ()
        else:
            assert max(planted) == bag.grade
            if bag.grade == 3:
                assert planted == (1, 2, 3)


def test_planted_regions_are_disjoint(small_spec):
    for bag in generate_synthetic_dataset(small_spec, seed=5):
        seen = set()
        for region in bag.annotations:
            assert not seen & set(region.patch_indices)
            seen |= set(region.patch_indices)


def test_generator_is_deterministic(tmp_path):
    spec = SynthSpec(class_counts=(80, 60, 40, 20), feature_dim=16)
    first = generate_synthetic_dataset(spec, seed=7)
    second = generate_synthetic_dataset(spec, seed=7, jobs=2)
    assert first == second
    write_dataset(first, tmp_path / "a")
    write_dataset(second, tmp_path / "b")
    for bag in first:
        for name in (MANIFEST_NAME, FEATURES_NAME):
            assert (tmp_path / "a" / bag.bag_id / name).read_bytes() == (tmp_path / "b" / bag.bag_id / name).read_bytes()


def test_degenerate_specs_rejected():
    with pytest.raises(SynthSpecError):
        SynthSpec(class_counts=()).validate()
    with pytest.raises(SynthSpecError):
        SynthSpec(noise_scale=-1.0).validate()


def test_close_signatures_rejected():
    sig = np.zeros((4, 3))
    sig[1] = [1, 0, 0]
    sig[2] = [np.cos(0.5), np.sin(0.5), 0]
    sig[3] = [0, 0, 1]
    with pytest.raises(SynthSpecError):
        SynthSpec(feature_dim=3, signatures=sig.tolist()).validate()


# ============================================================================
# SPLITS
# ============================================================================

def _labelled_bags(counts):
    bags = []
    for grade, count in enumerate(counts):
        for _ in range(count):
            i = len(bags)
            bags.append(Bag(f"b{i}", grade, np.array([[0, i]]), np.ones((1, 2), dtype=np.float32)))
    return bags


def test_skin_counts_five_folds():
    counts = (247, 383, 108, 77)
    bags = _labelled_bags(counts)
    folds = stratified_kfold(bags, SplitSpec(), seed=0)
    assert len(folds) == 5
    labels = np.array([b.grade for b in bags])
    for fold in folds:
        test_counts = np.bincount(labels[fold.test], minlength=4)
        assert np.all(np.abs(test_counts - np.array(counts) / 5) <= 1)
        assert not set(fold.train) & set(fold.val)
        assert not (set(fold.train) | set(fold.val)) & set(fold.test)


def test_single_fold_all_train():
    bags = _labelled_bags((3, 3, 3, 3))
    (fold,) = stratified_kfold(bags, SplitSpec(fold_count=1, train_fraction=1.0, val_fraction=0.0, test_fraction=0.0), 0)
    assert sorted(fold.train) == list(range(12))
    assert fold.val == [] and fold.test == []


def test_test_folds_partition_dataset():
    rng = np.random.default_rng(2)
    bags = _labelled_bags(tuple(int(c) for c in rng.integers(5, 40, size=4)))
    folds = stratified_kfold(bags, SplitSpec(), seed=9)
    union = [i for fold in folds for i in fold.test]
    assert sorted(union) == list(range(len(bags)))


def test_too_few_members_for_folds():
    with pytest.raises(SplitError):
        stratified_kfold(_labelled_bags((10, 10, 10, 3)), SplitSpec(), seed=0)


def test_fractions_must_sum_to_one():
    with pytest.raises(ValueError):
        SplitSpec(train_fraction=0.5, val_fraction=0.2, test_fraction=0.2)


# ============================================================================
# CLASS-BALANCED WEIGHTS
# ============================================================================

def test_symmetric_counts_equal_weights():
    assert np.allclose(class_balanced_weights([10, 10], beta=0.9), [0.5, 0.5])


def test_beta_zero_is_uniform():
    assert np.allclose(class_balanced_weights([100, 10, 1], beta=0.0), [1 / 3] * 3)


def test_effective_number_formula():
    beta = 0.999
    raw = [(1 - beta) / (1 - beta ** 100), (1 - beta) / (1 - beta ** 10)]
    expected = np.array(raw) / sum(raw)
    assert np.allclose(class_balanced_weights([100, 10], beta), expected, rtol=1e-12)


def test_weights_positive_and_non_increasing():
    counts = [500, 120, 40, 7]
    weights = class_balanced_weights(counts, 0.999)
    assert np.all(weights > 0)
    assert abs(weights.sum() - 1) < 1e-12
    assert np.all(np.diff(weights) >= 0)


def test_beta_one_rejected():
    with pytest.raises(SplitError):
        class_balanced_weights([3, 4], beta=1.0)


def test_bag_weights_realise_class_weights():
    labels = [0] * 100 + [1] * 10 + [2] * 10 + [3] * 10
    per_bag = bag_sampling_weights(labels, 4, beta=0.999)
    per_class = np.bincount(labels, weights=per_bag, minlength=4)
    assert np.allclose(per_class, class_balanced_weights([100, 10, 10, 10], 0.999))
