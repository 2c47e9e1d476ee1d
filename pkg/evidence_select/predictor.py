"""Attention-pooling MIL host with gate injection and exact gradients.

Forward pass for a bag H (N x d) and optional gates pi:

    x_i   = s_i * h_i              s_i = pi_i in feature_reweight/hybrid, else 1
    z_i   = w2 . tanh(W1 x_i)
    l_i   = z_i + b_i              b_i = log max(pi_i, eps) in attention_bias/hybrid
    a_i   = g_i exp(l_i) / sum_j g_j exp(l_j)
                                   g_i = pi_i^2 in feature_reweight, else 1
    rep   = sum_i a_i x_i
    logit = Wc rep + b

With pi = 1 every gate term is an exact floating-point identity, so the gated
forward equals the ungated one bit for bit.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import rng
from .constants import GATE_EPSILON, INJECTION_MODES, PREDICTOR_HIDDEN
from .errors import ContractError
from .synthbag import Bag


@dataclass
class PredictorParams:
    """Host parameters: scorer (W1, w2) and linear head (Wc, b)."""
    W1: np.ndarray  # (h, d)
    w2: np.ndarray  # (h,)
    Wc: np.ndarray  # (C, d)
    b: np.ndarray  # (C,)

    @property
    def hidden(self) -> int:
        return int(self.W1.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.W1.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.Wc.shape[0])

    def arrays(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1, "w2": self.w2, "Wc": self.Wc, "b": self.b}


@dataclass
class ForwardResult:
    logits: np.ndarray
    probs: np.ndarray
    attention: np.ndarray
    bag_repr: np.ndarray


@dataclass
class _Cache:
    """Intermediate values kept for the backward pass."""
    H: np.ndarray
    X: np.ndarray
    T: np.ndarray
    expo: np.ndarray  # exp(l_i - max) / sum_j g_j exp(l_j - max)
    gates: Optional[np.ndarray]
    scaled: bool
    biased: bool
    masked: bool


def init_params(feature_dim: int, num_classes: int, seed: int,
                hidden: int = PREDICTOR_HIDDEN) -> PredictorParams:
    """Seeded Gaussian initialization with scale 1/sqrt(fan_in)."""
    gen = rng.stream(seed, rng.INIT, "predictor")
    return PredictorParams(
        W1=gen.normal(0.0, 1.0 / np.sqrt(feature_dim), (hidden, feature_dim)),
        w2=gen.normal(0.0, 1.0 / np.sqrt(hidden), hidden),
        Wc=gen.normal(0.0, 1.0 / np.sqrt(feature_dim), (num_classes, feature_dim)),
        b=np.zeros(num_classes),
    )


def check_mode(mode: str) -> None:
    if mode not in INJECTION_MODES:
        raise ContractError(f"unknown injection mode {mode!r}")


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - np.max(v))
    return e / e.sum()


def _as_features(bag_or_features) -> np.ndarray:
    if isinstance(bag_or_features, Bag):
        return np.asarray(bag_or_features.features, dtype=np.float64)
    return np.asarray(bag_or_features, dtype=np.float64)


def _check_shapes(params: PredictorParams, H: np.ndarray, gates: Optional[np.ndarray]) -> None:
    if H.ndim != 2 or H.shape[0] < 1:
        raise ContractError(f"features must be a non-empty (N, d) matrix, got {H.shape}")
    if H.shape[1] != params.feature_dim:
        raise ContractError(f"feature dim {H.shape[1]} != predictor dim {params.feature_dim}")
    if gates is not None:
        if gates.shape != (H.shape[0],):
            raise ContractError(f"gates shape {gates.shape} != ({H.shape[0]},)")
        if np.any(gates < 0.0) or np.any(gates > 1.0):
            raise ContractError("gates must lie in [0, 1]")


def _forward(params: PredictorParams, H: np.ndarray, gates: Optional[np.ndarray],
             mode: str) -> Tuple[ForwardResult, _Cache]:
    check_mode(mode)
    _check_shapes(params, H, gates)
    scaled = gates is not None and mode in ("feature_reweight", "hybrid")
    biased = gates is not None and mode in ("attention_bias", "hybrid")
    masked = gates is not None and mode == "feature_reweight"

    X = gates[:, None] * H if scaled else H
    T = np.tanh(X @ params.W1.T)
    z = T @ params.w2
    if biased:
        z = z + np.log(np.maximum(gates, GATE_EPSILON))

    if masked:
        live = gates > 0.0
        if not np.any(live):
            raise ContractError("all gates are zero; the pool is empty")
        shifted = np.exp(np.where(live, z - np.max(z[live]), -np.inf))
        weights = gates * gates * shifted
    else:
        shifted = np.exp(z - np.max(z))
        weights = shifted
    total = weights.sum()
    attention = weights / total

    rep = attention @ X
    logits = params.Wc @ rep + params.b
    probs = _softmax(logits)
    result = ForwardResult(logits=logits, probs=probs, attention=attention, bag_repr=rep)
    cache = _Cache(H=H, X=X, T=T, expo=shifted / total, gates=gates,
                   scaled=scaled, biased=biased, masked=masked)
    return result, cache


def forward(params: PredictorParams, bag, gates: Optional[np.ndarray] = None,
            mode: str = "attention_bias") -> ForwardResult:
    """Host forward pass with optional gate injection.

    Args:
        params: Host parameters
        bag: A Bag or an (N, d) feature matrix
        gates: Optional gate vector in [0, 1]^N
        mode: Injection mode

    Returns:
        ForwardResult with logits, probabilities, attention and bag representation
    """
    H = _as_features(bag)
    g = None if gates is None else np.asarray(gates, dtype=np.float64)
    result, _ = _forward(params, H, g, mode)
    return result


def _backward(params: PredictorParams, cache: _Cache, result: ForwardResult,
              dlogits: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray, np.ndarray]:
    """Backpropagate ``dlogits``; returns (param grads, gate grads, feature grads)."""
    X, T, alpha = cache.X, cache.T, result.attention
    grads = {
        "Wc": np.outer(dlogits, result.bag_repr),
        "b": dlogits.copy(),
    }
    drep = params.Wc.T @ dlogits
    dalpha = X @ drep
    dX = np.outer(alpha, drep)

    centered = dalpha - alpha @ dalpha
    dz = alpha * centered

    grads["w2"] = T.T @ dz
    dU = np.outer(dz, params.w2) * (1.0 - T * T)
    grads["W1"] = dU.T @ X
    dX += dU @ params.W1

    n = X.shape[0]
    dgates = np.zeros(n)
    if cache.scaled:
        dgates += np.einsum("ij,ij->i", dX, cache.H)
        dH = cache.gates[:, None] * dX
    else:
        dH = dX
    if cache.biased:
        live = cache.gates > GATE_EPSILON
        dgates[live] += dz[live] / cache.gates[live]
    if cache.masked:
        dgates += 2.0 * cache.gates * cache.expo * centered
    return grads, dgates, dH


def loss_and_grad(params: PredictorParams, bag, gates: Optional[np.ndarray], mode: str,
                  label: int) -> Tuple[float, Dict[str, np.ndarray], np.ndarray]:
    """Cross-entropy of the host prediction with exact gradients.

    Returns:
        (loss, parameter gradients, gate gradients); gate gradients are zero
        when no gates are given.
    """
    H = _as_features(bag)
    g = None if gates is None else np.asarray(gates, dtype=np.float64)
    if not 0 <= label < params.num_classes:
        raise ContractError(f"label {label} out of range")
    result, cache = _forward(params, H, g, mode)
    log_probs = result.logits - np.max(result.logits)
    log_probs = log_probs - np.log(np.exp(log_probs).sum())
    loss = float(-log_probs[label])
    dlogits = result.probs.copy()
    dlogits[label] -= 1.0
    grads, dgates, _ = _backward(params, cache, result, dlogits)
    return loss, grads, dgates


def class_prob_gate_grad(params: PredictorParams, bag, gates: np.ndarray, mode: str,
                         cls: int) -> Tuple[float, np.ndarray]:
    """Probability of ``cls`` under gates and its gradient w.r.t. the gates."""
    H = _as_features(bag)
    result, cache = _forward(params, H, np.asarray(gates, dtype=np.float64), mode)
    p = result.probs
    dlogits = -p[cls] * p
    dlogits[cls] += p[cls]
    _, dgates, _ = _backward(params, cache, result, dlogits)
    return float(p[cls]), dgates


def input_saliency(params: PredictorParams, bag, cls: int) -> np.ndarray:
    """L2 norm of d(logit_cls)/d(h_i) for every patch of the ungated host."""
    H = _as_features(bag)
    result, cache = _forward(params, H, None, "attention_bias")
    dlogits = np.zeros(params.num_classes)
    dlogits[cls] = 1.0
    _, _, dH = _backward(params, cache, result, dlogits)
    return np.linalg.norm(dH, axis=1)


def predict_subset(params: PredictorParams, bag, subset: Sequence[int],
                   mode: str = "attention_bias") -> Tuple[np.ndarray, int]:
    """Prediction on the bag restricted to ``subset`` (no gates).

    Raises:
        ContractError: If the subset is empty or out of range
    """
    H = _as_features(bag)
    idx = np.asarray(list(subset), dtype=np.int64)
    if idx.size == 0:
        raise ContractError("subset must be non-empty")
    if idx.min() < 0 or idx.max() >= H.shape[0]:
        raise ContractError("subset index out of range")
    result = forward(params, H[idx], None, mode)
    return result.probs, int(np.argmax(result.probs))
