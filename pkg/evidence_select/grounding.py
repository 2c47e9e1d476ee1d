"""Low-rank residual adapter and anchor bridge."""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from . import rng
from .constants import ADAPTER_RANK, ANCHOR_DELTA, ANCHOR_GAMMA
from .errors import ContractError
from .synthbag import AnchorBank

BRIDGE_INPUTS = ["raw", "adapted"]


@dataclass
class GroundingParams:
    """Adapter factors U, V (d x r), bridge B (bridge_dim x d) and response shape."""
    U: np.ndarray
    V: np.ndarray
    B: np.ndarray
    gamma: float = ANCHOR_GAMMA
    delta: float = ANCHOR_DELTA
    constrained: bool = True
    bridge_input: str = "raw"

    @property
    def rank(self) -> int:
        return int(self.U.shape[1])

    def arrays(self) -> Dict[str, np.ndarray]:
        return {"U": self.U, "V": self.V, "B": self.B}

    def validate(self) -> None:
        if self.rank < 1 or self.U.shape != self.V.shape:
            raise ContractError("adapter factors must share shape (d, r) with r >= 1")
        if self.gamma <= 0:
            raise ContractError("gamma must be positive")
        if self.bridge_input not in BRIDGE_INPUTS:
            raise ContractError(f"unknown bridge input {self.bridge_input!r}")


@dataclass
class AdaptResult:
    E: np.ndarray  # (N, d) unit rows, zero rows for degenerate patches
    degenerate: np.ndarray  # (N,) bool
    Y: np.ndarray  # (I + U V^T) h before normalization
    norms: np.ndarray


@dataclass
class ResponseResult:
    R: np.ndarray  # (N, M) in (0, 1)
    cosine: np.ndarray
    unit: np.ndarray  # normalized bridge outputs
    norms: np.ndarray


def init_params(feature_dim: int, bridge_dim: int, seed: int, rank: int = ADAPTER_RANK,
                constrained: bool = True, bridge_input: str = "raw") -> GroundingParams:
    """Adapter starts at the identity (U = 0); the bridge starts at the identity
    when ``bridge_dim == feature_dim`` and as row-normalized noise otherwise."""
    gen = rng.stream(seed, rng.INIT, "grounding")
    V = gen.normal(0.0, 1.0 / np.sqrt(feature_dim), (feature_dim, rank))
    if bridge_dim == feature_dim:
        B = np.eye(feature_dim)
    else:
        B = gen.normal(0.0, 1.0, (bridge_dim, feature_dim))
        B /= np.linalg.norm(B, axis=1, keepdims=True)
    params = GroundingParams(
        U=np.zeros((feature_dim, rank)),
        V=V,
        B=B,
        constrained=constrained,
        bridge_input=bridge_input,
    )
    params.validate()
    return params


def _normalize_rows(Y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    norms = np.linalg.norm(Y, axis=1)
    degenerate = norms == 0.0
    safe = np.where(degenerate, 1.0, norms)
    unit = Y / safe[:, None]
    unit[degenerate] = 0.0
    return unit, norms, degenerate


def _normalize_backward(dunit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    proj = np.einsum("ij,ij->i", unit, dunit)
    safe = np.where(norms == 0.0, 1.0, norms)
    dY = (dunit - unit * proj[:, None]) / safe[:, None]
    dY[norms == 0.0] = 0.0
    return dY


def adapt(params: GroundingParams, H: np.ndarray) -> AdaptResult:
    """e_i = norm((I + U V^T) h_i); zero-norm rows become zero and are flagged."""
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)):
        raise ContractError("features must be finite")
    Y = H + (H @ params.V) @ params.U.T
    E, norms, degenerate = _normalize_rows(Y)
    return AdaptResult(E=E, degenerate=degenerate, Y=Y, norms=norms)


def adapt_backward(params: GroundingParams, H: np.ndarray, result: AdaptResult,
                   dE: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of U and V given dL/dE."""
    dY = _normalize_backward(dE, result.E, result.norms)
    P = H @ params.V
    return {"U": dY.T @ P, "V": H.T @ (dY @ params.U)}


def bridge_source(params: GroundingParams, H: np.ndarray, adapted: AdaptResult) -> np.ndarray:
    """Rows fed to the bridge: raw features by default, adapted on request."""
    return adapted.E if params.bridge_input == "adapted" else np.asarray(H, dtype=np.float64)


def anchor_responses(params: GroundingParams, Z: np.ndarray, bank: AnchorBank) -> ResponseResult:
    """r_im = sigmoid(gamma * (cos(B z_i, a_m) - delta)); cosine of a zero vector is 0."""
    Q = np.asarray(Z, dtype=np.float64) @ params.B.T
    if Q.shape[1] != bank.dim:
        raise ContractError(f"bridge dim {Q.shape[1]} != anchor dim {bank.dim}")
    unit, norms, _ = _normalize_rows(Q)
    cosine = unit @ bank.anchors.T
    R = 1.0 / (1.0 + np.exp(-params.gamma * (cosine - params.delta)))
    return ResponseResult(R=R, cosine=cosine, unit=unit, norms=norms)


def anchor_backward(params: GroundingParams, Z: np.ndarray, bank: AnchorBank,
                    result: ResponseResult, dR: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of the bridge and of the bridge input given dL/dR."""
    dcos = dR * result.R * (1.0 - result.R) * params.gamma
    dunit = dcos @ bank.anchors
    dQ = _normalize_backward(dunit, result.unit, result.norms)
    Z = np.asarray(Z, dtype=np.float64)
    return dQ.T @ Z, dQ @ params.B


def project_bridge(params: GroundingParams) -> None:
    """Renormalize bridge rows to unit norm (the constrained bridge)."""
    if not params.constrained:
        return
    norms = np.linalg.norm(params.B, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    params.B /= norms
