"""Joint training of host, grounding, selector and class-anchor weights."""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import coverage, grounding, model, pipeline, predictor, rng, selector
from .constants import (
    ADAM_BETAS,
    ADAM_EPSILON,
    ADAPTER_RANK,
    DEFAULT_EPOCHS,
    DEFAULT_SEED,
    EVIDENCE_BUDGET,
    GRAD_CLIP,
    GROUND_EPSILON,
    INJECTION_MODES,
    LAMBDA_BUDGET,
    LAMBDA_GROUND,
    LEARNING_RATE,
    MAX_TRAIN_PATCHES,
    PREDICTOR_HIDDEN,
    SELECTOR_HIDDEN,
    TEMPERATURE_END,
    TEMPERATURE_START,
    WEIGHT_DECAY,
)
from .errors import ConfigError, TrainingError
from .metrics import accuracy, macro_f1, median, smoothed
from .model import GROUPS, ModelState
from .synthbag import Bag, Dataset


logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimizer, loss weights and model shape for one training run."""
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = LEARNING_RATE
    weight_decay: float = WEIGHT_DECAY
    grad_clip: float = GRAD_CLIP
    cosine_schedule: bool = True
    lambda_budget: float = LAMBDA_BUDGET
    lambda_ground: float = LAMBDA_GROUND
    budget: float = EVIDENCE_BUDGET
    mode: str = "attention_bias"
    max_patches: int = MAX_TRAIN_PATCHES
    seed: int = DEFAULT_SEED
    anneal: bool = True
    temperature_start: float = TEMPERATURE_START
    temperature_end: float = TEMPERATURE_END
    use_selector: bool = True
    constrained_bridge: bool = True
    bridge_input: str = "raw"
    adapter_rank: int = ADAPTER_RANK
    anchor_prior: bool = True
    predictor_hidden: int = PREDICTOR_HIDDEN
    selector_hidden: int = SELECTOR_HIDDEN

    def validate(self) -> None:
        """Raise ConfigError naming the first invalid field."""
        if self.epochs < 0:
            raise ConfigError("must be >= 0", "train.epochs")
        for key in ("learning_rate", "weight_decay", "lambda_budget", "lambda_ground", "budget"):
            if getattr(self, key) < 0:
                raise ConfigError("must be >= 0", f"train.{key}")
        if self.grad_clip <= 0:
            raise ConfigError("must be positive", "train.grad_clip")
        if self.mode not in INJECTION_MODES:
            raise ConfigError(f"must be one of {', '.join(INJECTION_MODES)}", "train.mode")
        if self.max_patches < 1:
            raise ConfigError("must be >= 1", "train.max_patches")
        if not 0 < self.temperature_end <= self.temperature_start:
            raise ConfigError("need 0 < temperature_end <= temperature_start", "train.temperature_end")
        if self.bridge_input not in grounding.BRIDGE_INPUTS:
            raise ConfigError(f"must be one of {', '.join(grounding.BRIDGE_INPUTS)}", "train.bridge_input")
        if self.adapter_rank < 1:
            raise ConfigError("must be >= 1", "train.adapter_rank")
        if self.predictor_hidden < 1 or self.selector_hidden < 1:
            raise ConfigError("hidden widths must be >= 1", "train.predictor_hidden")

    def to_dict(self) -> dict:
        return asdict(self)

    def temperature(self, epoch: int) -> float:
        if not self.anneal:
            return self.temperature_start
        return selector.anneal(epoch, self.epochs, self.temperature_start, self.temperature_end)


@dataclass
class LossBreakdown:
    total: float
    task: float
    budget: float
    ground: float
    grads: Dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def components(self) -> Dict[str, float]:
        return {"total": self.total, "task": self.task, "budget": self.budget, "ground": self.ground}


class AdamW:
    """Adaptive moments with decoupled weight decay.

    m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
    p <- p (1 - lr wd) - lr mhat / (sqrt(vhat) + eps)
    """

    def __init__(self, weight_decay: float, betas: Tuple[float, float] = ADAM_BETAS,
                 eps: float = ADAM_EPSILON):
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.steps = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float) -> None:
        """Update ``params`` in place for every name present in ``grads``."""
        self.steps += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.steps
        c2 = 1.0 - b2 ** self.steps
        for name, g in grads.items():
            p = params[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p *= 1.0 - lr * self.weight_decay
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainState:
    """Model, optimizer moments and the per-epoch metric log."""
    model: ModelState
    optimizer: AdamW
    epoch: int = 0
    history: List[Dict] = field(default_factory=list)
    step_losses: List[List[float]] = field(default_factory=list)

    def smoothed_loss(self, epoch: int, window: int = 5) -> float:
        """Trailing-window mean of the step losses at the end of ``epoch``."""
        losses = self.step_losses[epoch]
        return float(smoothed(losses, window)[-1]) if losses else float("nan")


def budget_loss(pi, rho: float) -> Tuple[float, np.ndarray]:
    """ReLU(mean(pi) - rho)^2 and its gradient."""
    pi = np.asarray(pi, dtype=np.float64)
    excess = max(float(pi.mean()) - rho, 0.0)
    return excess * excess, np.full(pi.shape, 2.0 * excess / pi.shape[0])


def grounding_loss(pi, R, alpha) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Normalized uncovered anchor mass sum_m alpha_m (1 - v_m) / sum_m alpha_m.

    Returns:
        (value, d/dpi, d/dR, d/dalpha)
    """
    pi = np.asarray(pi, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    terms = coverage.coverage_terms(pi, R)
    mass = max(float(alpha.sum()), GROUND_EPSILON)
    uncovered = 1.0 - terms.v
    value = float(alpha @ uncovered) / mass

    dpi = -((R * terms.others) @ alpha) / mass
    dR = -(alpha / mass)[None, :] * pi[:, None] * terms.others
    dalpha = (uncovered - value) / mass
    return value, dpi, dR, dalpha


def composite_loss(state: ModelState, bag: Bag, cfg: TrainConfig, temperature: float) -> LossBreakdown:
    """task + lambda_b budget + lambda_g ground, with gradients for every group.

    Gradients are keyed like ``ModelState.named_arrays``.
    """
    H = np.asarray(bag.features, dtype=np.float64)
    label = bag.label
    grads = {name: np.zeros_like(value) for name, value in state.named_arrays().items()}

    if not state.use_selector:
        task, pgrads, _ = predictor.loss_and_grad(state.predictor, H, None, state.mode, label)
        for key, g in pgrads.items():
            grads[f"predictor.{key}"] = g
        return LossBreakdown(total=task, task=task, budget=0.0, ground=0.0, grads=grads)

    gp = state.grounding
    adapted = grounding.adapt(gp, H)
    gate, gate_cache = selector.gates(state.selector, adapted.E, bag.coords, temperature)
    Z = grounding.bridge_source(gp, H, adapted)
    resp = grounding.anchor_responses(gp, Z, state.anchors)

    task, pgrads, dpi = predictor.loss_and_grad(state.predictor, H, gate.pi, state.mode, label)
    budget, dpi_budget = budget_loss(gate.pi, cfg.budget)
    ground, dpi_ground, dR, dalpha = grounding_loss(gate.pi, resp.R, state.weights.row(label))

    total = task + cfg.lambda_budget * budget + cfg.lambda_ground * ground
    dpi = dpi + cfg.lambda_budget * dpi_budget + cfg.lambda_ground * dpi_ground

    sgrads, dE = selector.gates_backward(state.selector, gate, gate_cache, dpi)
    dB, dZ = grounding.anchor_backward(gp, Z, state.anchors, resp, cfg.lambda_ground * dR)
    if gp.bridge_input == "adapted":
        dE = dE + dZ
    agrads = grounding.adapt_backward(gp, H, adapted, dE)

    for key, g in pgrads.items():
        grads[f"predictor.{key}"] = g
    for key, g in sgrads.items():
        grads[f"selector.{key}"] = g
    grads["grounding.U"] = agrads["U"]
    grads["grounding.V"] = agrads["V"]
    grads["grounding.B"] = dB
    grads["weights.raw"][label] = (
        cfg.lambda_ground * dalpha * coverage.softplus_grad(state.weights.raw[label])
    )
    return LossBreakdown(total=float(total), task=task, budget=budget, ground=ground, grads=grads)


def clip_gradients(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place to global L2 norm at most ``max_norm``; returns the pre-clip norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def cosine_lr(base: float, step: int, total: int) -> float:
    if total <= 0:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * step / total))


def subsample(bag: Bag, max_patches: int, gen: np.random.Generator) -> Bag:
    """Random patch sample when the bag is over the training maximum; order preserved."""
    if bag.num_patches <= max_patches:
        return bag
    keep = np.sort(gen.choice(bag.num_patches, size=max_patches, replace=False))
    return bag.restrict(keep)


def evaluate(state: ModelState, bags: Sequence[Bag]) -> Dict[str, float]:
    """Validation accuracy, Macro-F1, mean gate and median bimodal fraction."""
    labels, preds, mean_gates, bimodal = [], [], [], []
    for bag in bags:
        inference = pipeline.infer(state, bag)
        labels.append(bag.label)
        if state.use_selector:
            preds.append(inference.gated_class)
            mean_gates.append(float(inference.gates.pi.mean()))
            bimodal.append(selector.bimodal_fraction(inference.gates.pi))
        else:
            preds.append(inference.predicted)
    record = {
        "val_accuracy": accuracy(labels, preds),
        "val_macro_f1": macro_f1(labels, preds, state.num_classes),
    }
    if state.use_selector:
        record["mean_gate"] = float(np.mean(mean_gates)) if mean_gates else float("nan")
        record["bimodal_fraction"] = median(bimodal)
    return record


def train(dataset: Dataset, cfg: TrainConfig, state: Optional[ModelState] = None,
          trainable: Sequence[str] = GROUPS, metric_log: Optional[Path] = None,
          on_epoch: Optional[Callable[[Dict], None]] = None) -> TrainState:
    """Train on the dataset's train split, evaluating on val after each epoch.

    Args:
        dataset: Dataset with train and val splits
        cfg: Training configuration
        state: Starting model; a fresh seeded model when omitted
        trainable: Parameter groups the optimizer updates
        metric_log: Optional JSON-lines file receiving one record per epoch
        on_epoch: Optional callback receiving each epoch record

    Returns:
        TrainState holding the trained model and its metric history

    Raises:
        ConfigError: If the configuration is invalid or there are no training bags
        TrainingError: On a non-finite loss
    """
    cfg.validate()
    model_state = state if state is not None else model.init_state(dataset, cfg)
    result = TrainState(model=model_state, optimizer=AdamW(cfg.weight_decay))
    if cfg.epochs == 0:
        return result

    train_bags = dataset.split("train")
    val_bags = dataset.split("val")
    if not train_bags:
        raise ConfigError("dataset has no training bags", "train")
    groups = [g for g in trainable if g == "predictor" or model_state.use_selector]
    prefixes = tuple(f"{g}." for g in groups)
    params = {k: v for k, v in model_state.named_arrays().items() if k.startswith(prefixes)}

    total_steps = cfg.epochs * len(train_bags)
    step = 0
    log_handle = open(metric_log, "w", encoding="utf-8") if metric_log else None
    try:
        for epoch in range(cfg.epochs):
            temperature = cfg.temperature(epoch)
            order = rng.stream(cfg.seed, rng.SHUFFLE, epoch).permutation(len(train_bags))
            losses: List[float] = []
            sums = {"task": 0.0, "budget": 0.0, "ground": 0.0}
            for j in order:
                full = train_bags[int(j)]
                bag = subsample(full, cfg.max_patches, rng.stream(cfg.seed, rng.SUBSAMPLE, epoch, full.id))
                loss = composite_loss(model_state, bag, cfg, temperature)
                if not math.isfinite(loss.total):
                    logger.error("non-finite loss at epoch %d on bag %s", epoch, full.id)
                    raise TrainingError(f"non-finite loss {loss.total}", epoch, full.id)
                grads = {k: loss.grads[k] for k in params}
                clip_gradients(grads, cfg.grad_clip)
                lr = cosine_lr(cfg.learning_rate, step, total_steps) if cfg.cosine_schedule else cfg.learning_rate
                result.optimizer.step(params, grads, lr)
                if "grounding" in groups:
                    grounding.project_bridge(model_state.grounding)
                step += 1
                losses.append(loss.total)
                for key in sums:
                    sums[key] += getattr(loss, key)

            model_state.temperature = temperature
            result.epoch = epoch + 1
            result.step_losses.append(losses)
            record = {"epoch": epoch, "temperature": temperature, "loss": float(np.mean(losses))}
            record.update({key: value / len(losses) for key, value in sums.items()})
            record.update(evaluate(model_state, val_bags))
            result.history.append(record)
            logger.info("epoch %d: %s", epoch, " ".join(
                f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in record.items()
            ))
            if log_handle:
                log_handle.write(json.dumps(record, sort_keys=True) + "\n")
            if on_epoch:
                on_epoch(record)
    finally:
        if log_handle:
            log_handle.close()

    if not model_state.is_finite():
        raise TrainingError("parameters became non-finite", result.epoch)
    return result


def retrain_selector(dataset: Dataset, state: ModelState, cfg: TrainConfig, seed: int) -> ModelState:
    """Fresh selector from ``seed`` trained against the frozen host, grounding and weights."""
    fresh = state.copy()
    fresh.selector = selector.init_params(
        state.selector.W.shape[1] - 2, seed, state.selector.W.shape[0]
    )
    run_cfg = TrainConfig(**{**cfg.to_dict(), "seed": seed})
    return train(dataset, run_cfg, fresh, trainable=("selector",)).model
