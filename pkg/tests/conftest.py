"""Shared fixtures: a tiny generated dataset and small models trained on it."""

import numpy as np
import pytest

from evidence_select import model
from evidence_select.constants import SPLITS
from evidence_select.synthbag import GenConfig, generate_dataset
from evidence_select.training import TrainConfig, train


def small_gen_config(**overrides) -> GenConfig:
    values = dict(
        num_bags=36,
        patches_per_bag_range=(6, 12),
        feature_dim=10,
        num_classes=2,
        num_concepts=4,
        evidence_per_bag_range=(2, 3),
        noise_sigma=0.2,
        distractor_rate=0.1,
        seed=7,
    )
    values.update(overrides)
    return GenConfig(**values)


def small_train_config(**overrides) -> TrainConfig:
    values = dict(
        epochs=2,
        learning_rate=1e-2,
        predictor_hidden=6,
        selector_hidden=6,
        adapter_rank=2,
        seed=3,
    )
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture(scope="session")
def gen_config():
    return small_gen_config()


@pytest.fixture(scope="session")
def dataset(gen_config):
    """Generated dataset with splits reassigned round-robin so none is empty."""
    data = generate_dataset(gen_config)
    for i, bag in enumerate(data.bags):
        bag.split = SPLITS[i % len(SPLITS)]
    return data


@pytest.fixture
def train_config():
    return small_train_config()


@pytest.fixture
def fresh_state(dataset, train_config):
    return model.init_state(dataset, train_config)


@pytest.fixture(scope="session")
def trained_state(dataset):
    """Two epochs of training; tests that mutate it must work on a copy."""
    return train(dataset, small_train_config()).model


@pytest.fixture
def gen():
    return np.random.default_rng(0)
