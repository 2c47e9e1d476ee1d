"""Parameter bundle shared by training, inference, diagnostics and checkpoints."""

import copy
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict

import numpy as np

from . import coverage, grounding, predictor, selector
from .constants import TEMPERATURE_END
from .coverage import ClassAnchorWeights
from .errors import ContractError
from .grounding import GroundingParams
from .predictor import PredictorParams
from .selector import SelectorParams
from .synthbag import AnchorBank, Dataset

if TYPE_CHECKING:
    from .training import TrainConfig

GROUPS = ("predictor", "grounding", "selector", "weights")


@dataclass
class ModelState:
    """All trainable parameter groups plus the inference settings they were trained with."""
    predictor: PredictorParams
    grounding: GroundingParams
    selector: SelectorParams
    weights: ClassAnchorWeights
    anchors: AnchorBank
    mode: str = "attention_bias"
    temperature: float = TEMPERATURE_END
    use_selector: bool = True

    @property
    def num_classes(self) -> int:
        return self.predictor.num_classes

    def group(self, name: str):
        if name not in GROUPS:
            raise ContractError(f"unknown parameter group {name!r}")
        return getattr(self, name)

    def named_arrays(self) -> Dict[str, np.ndarray]:
        """Live references keyed ``group.name``, in a fixed order."""
        named = {}
        for name in GROUPS:
            for key, value in self.group(name).arrays().items():
                named[f"{name}.{key}"] = value
        return named

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.named_arrays().values())


def init_state(dataset: Dataset, cfg: "TrainConfig") -> ModelState:
    """Seeded initial state for ``dataset`` under ``cfg``."""
    d = dataset.config.feature_dim
    anchors = dataset.anchors
    return ModelState(
        predictor=predictor.init_params(d, dataset.num_classes, cfg.seed, cfg.predictor_hidden),
        grounding=grounding.init_params(
            d, anchors.dim, cfg.seed,
            rank=cfg.adapter_rank,
            constrained=cfg.constrained_bridge,
            bridge_input=cfg.bridge_input,
        ),
        selector=selector.init_params(d, cfg.seed, cfg.selector_hidden),
        weights=coverage.init_weights(
            dataset.num_classes,
            anchors.size,
            dataset.concept_classes if cfg.anchor_prior else None,
        ),
        anchors=anchors,
        mode=cfg.mode,
        temperature=cfg.temperature_end if cfg.anneal else cfg.temperature_start,
        use_selector=cfg.use_selector,
    )
