"""Synthetic bag generator with planted evidence."""

import logging
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple

import numpy as np

from . import rng
from .constants import DEFAULT_SEED, SPLITS
from .errors import ConfigError, ContractError


logger = logging.getLogger(__name__)

# Split by id hash: 14/20 train, 3/20 val, 3/20 test
SPLIT_BUCKETS = 20
TRAIN_BUCKETS = 14
VAL_BUCKETS = 17


@dataclass
class GenConfig:
    """Parameters of the synthetic generative model."""
    num_bags: int = 600
    patches_per_bag_range: Tuple[int, int] = (40, 120)
    feature_dim: int = 64
    num_classes: int = 4
    num_concepts: int = 8
    evidence_per_bag_range: Tuple[int, int] = (3, 10)
    noise_sigma: float = 0.3
    distractor_rate: float = 0.1
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        self.patches_per_bag_range = tuple(int(v) for v in self.patches_per_bag_range)
        self.evidence_per_bag_range = tuple(int(v) for v in self.evidence_per_bag_range)

    def validate(self) -> None:
        """Raise ConfigError if the configuration is inconsistent."""
        pmin, pmax = self.patches_per_bag_range
        emin, emax = self.evidence_per_bag_range
        if self.num_bags < 0:
            raise ConfigError("must be >= 0", "generate.num_bags")
        if pmin < 1 or pmin > pmax:
            raise ConfigError(f"invalid range [{pmin}, {pmax}]", "generate.patches_per_bag_range")
        if emin < 1 or emin > emax:
            raise ConfigError(f"invalid range [{emin}, {emax}]", "generate.evidence_per_bag_range")
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes", "generate.num_classes")
        if self.num_concepts < self.num_classes:
            raise ConfigError("every class needs at least one concept", "generate.num_concepts")
        if self.feature_dim < self.num_concepts:
            raise ConfigError("feature_dim must be >= num_concepts", "generate.feature_dim")
        if self.noise_sigma < 0:
            raise ConfigError("must be >= 0", "generate.noise_sigma")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ConfigError("must lie in [0, 1]", "generate.distractor_rate")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("must be a 64-bit unsigned integer", "generate.seed")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["patches_per_bag_range"] = list(self.patches_per_bag_range)
        data["evidence_per_bag_range"] = list(self.evidence_per_bag_range)
        return data


@dataclass
class Bag:
    """One instance set with its collective label."""
    id: str
    features: np.ndarray  # (N, d) float32
    coords: np.ndarray  # (N, 2) float32
    label: int
    planted: Optional[List[int]] = None
    split: str = "train"

    @property
    def num_patches(self) -> int:
        return int(self.features.shape[0])

    def validate(self, num_classes: Optional[int] = None) -> None:
        """Check the bag invariants, raising ContractError on violation."""
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ContractError(f"bag {self.id}: needs at least one patch")
        if self.coords.shape != (self.features.shape[0], 2):
            raise ContractError(f"bag {self.id}: coords shape {self.coords.shape} does not match")
        if not np.all(np.isfinite(self.features)):
            raise ContractError(f"bag {self.id}: non-finite feature entries")
        if num_classes is not None and not 0 <= self.label < num_classes:
            raise ContractError(f"bag {self.id}: label {self.label} out of range")
        if self.planted and max(self.planted) >= self.num_patches:
            raise ContractError(f"bag {self.id}: planted index out of range")
        if self.split not in SPLITS:
            raise ContractError(f"bag {self.id}: unknown split {self.split!r}")

    def restrict(self, indices) -> "Bag":
        """Bag containing exactly the given rows, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return Bag(
            id=self.id,
            features=self.features[idx],
            coords=self.coords[idx],
            label=self.label,
            planted=None,
            split=self.split,
        )


@dataclass
class AnchorBank:
    """Unit-norm concept anchors in bridge space."""
    anchors: np.ndarray  # (M, bridge_dim) float64
    names: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(self.anchors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.anchors.shape[1])

    def validate(self) -> None:
        if self.anchors.ndim != 2 or self.anchors.shape[0] < 1:
            raise ContractError("anchor bank needs at least one anchor")
        norms = np.linalg.norm(self.anchors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ContractError("anchors must be unit norm")
        if len(self.names) != self.anchors.shape[0]:
            raise ContractError("one name per anchor required")


@dataclass
class Dataset:
    """Bags, anchors and the concept-to-class map of one generated dataset."""
    bags: List[Bag]
    anchors: AnchorBank
    concept_classes: List[int]
    config: GenConfig

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def split(self, name: str) -> List[Bag]:
        """Bags of one split, in dataset order."""
        return [bag for bag in self.bags if bag.split == name]

    def class_concepts(self, label: int) -> List[int]:
        return [m for m, c in enumerate(self.concept_classes) if c == label]


def gram_schmidt(vectors: np.ndarray) -> np.ndarray:
    """Orthonormalize the rows of ``vectors`` in order (modified Gram-Schmidt)."""
    basis = np.array(vectors, dtype=np.float64, copy=True)
    for i in range(basis.shape[0]):
        for j in range(i):
            basis[i] -= np.dot(basis[j], basis[i]) * basis[j]
        norm = np.linalg.norm(basis[i])
        if norm == 0.0:
            raise ContractError("degenerate draw during orthonormalization")
        basis[i] /= norm
    return basis


def assign_concepts(num_concepts: int, num_classes: int) -> List[int]:
    """Round-robin concept-to-class map; every class gets at least one concept."""
    return [m % num_classes for m in range(num_concepts)]


def split_for(bag_id: str) -> str:
    """Deterministic split assignment by bag id hash."""
    bucket = rng.stable_hash(bag_id) % SPLIT_BUCKETS
    if bucket < TRAIN_BUCKETS:
        return "train"
    if bucket < VAL_BUCKETS:
        return "val"
    return "test"


def make_prototypes(cfg: GenConfig) -> np.ndarray:
    """Orthonormal concept prototypes in feature space."""
    draws = rng.stream(cfg.seed, rng.PROTOTYPES).standard_normal((cfg.num_concepts, cfg.feature_dim))
    return gram_schmidt(draws)


def generate_bag(cfg: GenConfig, index: int, prototypes: np.ndarray,
                 concept_classes: List[int]) -> Bag:
    """Generate bag ``index`` from its own seed stream."""
    gen = rng.stream(cfg.seed, rng.BAG, index)
    d = cfg.feature_dim
    label = index % cfg.num_classes

    n = int(gen.integers(cfg.patches_per_bag_range[0], cfg.patches_per_bag_range[1] + 1))
    n_evidence = int(gen.integers(cfg.evidence_per_bag_range[0], cfg.evidence_per_bag_range[1] + 1))
    n_evidence = min(n_evidence, n)

    own = [m for m, c in enumerate(concept_classes) if c == label]
    others = [m for m, c in enumerate(concept_classes) if c != label]

    # role: concept index for evidence/distractor patches, -1 for background
    roles = np.full(n, -1, dtype=np.int64)
    roles[:n_evidence] = gen.choice(own, size=n_evidence)
    rest = n - n_evidence
    if rest and others:
        is_distractor = gen.random(rest) < cfg.distractor_rate
        roles[n_evidence:][is_distractor] = gen.choice(others, size=int(is_distractor.sum()))
    order = gen.permutation(n)
    roles = roles[order]
    evidence_mask = order < n_evidence

    scale = cfg.noise_sigma / np.sqrt(d)
    features = np.empty((n, d), dtype=np.float64)
    for i in range(n):
        if roles[i] >= 0:
            features[i] = prototypes[roles[i]]
            if scale > 0:
                features[i] = features[i] + gen.normal(0.0, scale, d)
        else:
            features[i] = gen.normal(0.0, 1.0 / np.sqrt(d), d)
    coords = gen.uniform(0.0, 1.0, (n, 2))

    bag_id = f"bag{index:05d}"
    return Bag(
        id=bag_id,
        features=features.astype(np.float32),
        coords=coords.astype(np.float32),
        label=label,
        planted=[int(i) for i in np.flatnonzero(evidence_mask)],
        split=split_for(bag_id),
    )


def generate_dataset(cfg: GenConfig) -> Dataset:
    """Generate a reproducible dataset with planted evidence.

    Args:
        cfg: Generator configuration

    Returns:
        Dataset whose anchor bank holds the concept prototypes

    Raises:
        ConfigError: If the configuration is invalid
    """
    cfg.validate()
    prototypes = make_prototypes(cfg)
    concept_classes = assign_concepts(cfg.num_concepts, cfg.num_classes)
    bank = AnchorBank(
        anchors=prototypes,
        names=[f"concept_{m:02d}" for m in range(cfg.num_concepts)],
    )

    bags = [generate_bag(cfg, b, prototypes, concept_classes) for b in range(cfg.num_bags)]
    logger.info("generated %d bags (seed=%d)", len(bags), cfg.seed)
    return Dataset(bags=bags, anchors=bank, concept_classes=concept_classes, config=cfg)


def nearest_anchor(features: np.ndarray, bank: AnchorBank) -> np.ndarray:
    """Index of the most cosine-similar anchor for every row."""
    x = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return np.argmax((x / norms) @ bank.anchors.T, axis=1)


def planted_fraction_bounds(cfg: GenConfig) -> Tuple[float, float]:
    """Smallest and largest planted fraction the configuration can produce."""
    return (
        cfg.evidence_per_bag_range[0] / cfg.patches_per_bag_range[1],
        min(1.0, cfg.evidence_per_bag_range[1] / cfg.patches_per_bag_range[0]),
    )
