"""Continuous inclusion gates and the temperature schedule."""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from . import rng
from .constants import SELECTOR_CENTER, SELECTOR_HIDDEN, TEMPERATURE_END, TEMPERATURE_START
from .coverage import sigmoid
from .errors import ContractError


@dataclass
class SelectorParams:
    """Two-layer scorer (e_i ++ c_i) -> s_i and the gate centering constant."""
    W: np.ndarray  # (hidden, d + 2)
    c: np.ndarray  # (hidden,)
    v: np.ndarray  # (hidden,)
    o: np.ndarray  # (1,) output bias
    center: float = SELECTOR_CENTER

    def arrays(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "c": self.c, "v": self.v, "o": self.o}


@dataclass
class GateVector:
    pi: np.ndarray
    temperature: float

    def __len__(self) -> int:
        return int(self.pi.shape[0])


@dataclass
class GateCache:
    inputs: np.ndarray
    hidden: np.ndarray
    scores: np.ndarray


def init_params(feature_dim: int, seed: int, hidden: int = SELECTOR_HIDDEN) -> SelectorParams:
    gen = rng.stream(seed, rng.INIT, "selector")
    fan_in = feature_dim + 2
    return SelectorParams(
        W=gen.normal(0.0, 1.0 / np.sqrt(fan_in), (hidden, fan_in)),
        c=np.zeros(hidden),
        v=gen.normal(0.0, 1.0 / np.sqrt(hidden), hidden),
        o=np.zeros(1),
    )


def normalize_coords(coords: np.ndarray) -> np.ndarray:
    """Per-bag min-max scaling to [0, 1]; constant axes map to 0."""
    c = np.asarray(coords, dtype=np.float64)
    lo = c.min(axis=0)
    span = c.max(axis=0) - lo
    out = np.zeros_like(c)
    varying = span > 0
    out[:, varying] = (c[:, varying] - lo[varying]) / span[varying]
    return out


def scores(params: SelectorParams, E: np.ndarray, coords: np.ndarray) -> Tuple[np.ndarray, GateCache]:
    inputs = np.concatenate([np.asarray(E, dtype=np.float64), normalize_coords(coords)], axis=1)
    hidden = np.tanh(inputs @ params.W.T + params.c)
    s = hidden @ params.v + params.o[0]
    return s, GateCache(inputs=inputs, hidden=hidden, scores=s)


def gates_from_scores(s: np.ndarray, temperature: float, center: float = SELECTOR_CENTER) -> np.ndarray:
    if temperature <= 0:
        raise ContractError("temperature must be positive")
    return sigmoid((np.asarray(s, dtype=np.float64) - center) / temperature)


def gates(params: SelectorParams, E: np.ndarray, coords: np.ndarray,
          temperature: float) -> Tuple[GateVector, GateCache]:
    """pi_i = sigmoid((s_i - nu) / T)."""
    s, cache = scores(params, E, coords)
    pi = gates_from_scores(s, temperature, params.center)
    return GateVector(pi=pi, temperature=float(temperature)), cache


def gates_backward(params: SelectorParams, gate: GateVector, cache: GateCache,
                   dpi: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Selector gradients and dL/dE given dL/dpi."""
    ds = dpi * gate.pi * (1.0 - gate.pi) / gate.temperature
    dpre = np.outer(ds, params.v) * (1.0 - cache.hidden ** 2)
    grads = {
        "W": dpre.T @ cache.inputs,
        "c": dpre.sum(axis=0),
        "v": cache.hidden.T @ ds,
        "o": np.array([ds.sum()]),
    }
    d = params.W.shape[1] - 2
    dE = (dpre @ params.W)[:, :d]
    return grads, dE


def anneal(epoch: int, total_epochs: int, start: float = TEMPERATURE_START,
           end: float = TEMPERATURE_END) -> float:
    """Linear temperature from ``start`` at epoch 0 to ``end`` at the final epoch."""
    if total_epochs < 1 or not 0 <= epoch < total_epochs:
        raise ContractError(f"epoch {epoch} outside [0, {total_epochs})")
    if total_epochs == 1:
        return start
    return start + (end - start) * epoch / (total_epochs - 1)


def bimodal_fraction(pi: np.ndarray, margin: float = 0.4) -> float:
    """Fraction of gates farther than ``margin`` from 0.5."""
    return float(np.mean(np.abs(np.asarray(pi) - 0.5) > margin))
