import numpy as np
import pytest

from evidence_select.errors import ConfigError, ContractError
from evidence_select.synthbag import (
    AnchorBank,
    Bag,
    generate_dataset,
    gram_schmidt,
    nearest_anchor,
    planted_fraction_bounds,
    split_for,
)

from conftest import small_gen_config


def test_generation_is_deterministic(gen_config):
    a = generate_dataset(gen_config)
    b = generate_dataset(gen_config)
    for x, y in zip(a.bags, b.bags):
        assert x.id == y.id
        assert np.array_equal(x.features, y.features)
        assert np.array_equal(x.coords, y.coords)
        assert x.planted == y.planted


def test_different_seed_changes_features():
    a = generate_dataset(small_gen_config(num_bags=3, seed=1))
    b = generate_dataset(small_gen_config(num_bags=3, seed=2))
    assert not np.array_equal(a.bags[0].features, b.bags[0].features)


def test_bag_invariants(dataset, gen_config):
    pmin, pmax = gen_config.patches_per_bag_range
    emin, emax = gen_config.evidence_per_bag_range
    for bag in dataset.bags:
        bag.validate(dataset.num_classes)
        assert pmin <= bag.num_patches <= pmax
        assert emin <= len(bag.planted) <= emax
        assert bag.features.dtype == np.float32
        assert bag.coords.shape == (bag.num_patches, 2)


def test_planted_patches_sit_near_own_class_concepts(dataset):
    for bag in dataset.bags:
        nearest = nearest_anchor(bag.features[bag.planted], dataset.anchors)
        own = set(dataset.class_concepts(bag.label))
        assert set(int(m) for m in nearest) <= own


def test_labels_cycle_through_classes(dataset):
    labels = [bag.label for bag in dataset.bags]
    assert labels[:4] == [0, 1, 0, 1]


def test_anchor_bank_is_orthonormal(dataset):
    A = dataset.anchors.anchors
    assert np.allclose(A @ A.T, np.eye(A.shape[0]), atol=1e-10)
    dataset.anchors.validate()


def test_single_patch_bags():
    data = generate_dataset(small_gen_config(num_bags=4, patches_per_bag_range=(1, 1),
                                             evidence_per_bag_range=(1, 1)))
    for bag in data.bags:
        assert bag.num_patches == 1
        assert bag.planted == [0]


def test_noise_free_evidence_equals_prototype():
    data = generate_dataset(small_gen_config(num_bags=2, noise_sigma=0.0))
    bag = data.bags[0]
    nearest = nearest_anchor(bag.features[bag.planted], data.anchors)
    for i, m in zip(bag.planted, nearest):
        assert np.allclose(bag.features[i], data.anchors.anchors[m], atol=1e-6)


@pytest.mark.parametrize("overrides,key", [
    ({"patches_per_bag_range": (10, 5)}, "generate.patches_per_bag_range"),
    ({"evidence_per_bag_range": (0, 2)}, "generate.evidence_per_bag_range"),
    ({"evidence_per_bag_range": (3, 2)}, "generate.evidence_per_bag_range"),
    ({"num_classes": 1}, "generate.num_classes"),
    ({"num_concepts": 1}, "generate.num_concepts"),
    ({"feature_dim": 2}, "generate.feature_dim"),
    ({"distractor_rate": 1.5}, "generate.distractor_rate"),
])
def test_invalid_config_names_key(overrides, key):
    with pytest.raises(ConfigError) as info:
        generate_dataset(small_gen_config(**overrides))
    assert info.value.key == key


def test_planted_fraction_bounds():
    low, high = planted_fraction_bounds(small_gen_config(patches_per_bag_range=(10, 20),
                                                         evidence_per_bag_range=(2, 4)))
    assert low == pytest.approx(0.1)
    assert high == pytest.approx(0.4)


def test_split_assignment_is_stable():
    assert split_for("bag00003") == split_for("bag00003")
    assert split_for("bag00003") in ("train", "val", "test")


def test_restrict_keeps_order(dataset):
    bag = dataset.bags[0]
    sub = bag.restrict([2, 0])
    assert np.array_equal(sub.features[0], bag.features[2])
    assert np.array_equal(sub.features[1], bag.features[0])
    assert sub.label == bag.label


def test_gram_schmidt_rejects_dependent_rows():
    with pytest.raises(ContractError):
        gram_schmidt(np.array([[1.0, 0.0], [2.0, 0.0]]))


def test_bag_validate_rejects_nonfinite():
    bag = Bag(id="x", features=np.array([[np.nan, 0.0]], dtype=np.float32),
              coords=np.zeros((1, 2), dtype=np.float32), label=0)
    with pytest.raises(ContractError):
        bag.validate()


def test_anchor_bank_validate_rejects_non_unit():
    with pytest.raises(ContractError):
        AnchorBank(anchors=np.array([[2.0, 0.0]]), names=["a"]).validate()
