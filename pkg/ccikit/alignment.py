"""LoRA and KTO arithmetic for the comment fixer's fine-tuning recipe.

Nothing here trains a language model; these are the exact numeric pieces
of the recipe so presets and gradients can be checked.
"""

import math
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from ccikit.config import KtoParams
from ccikit.errors import DataError, ShapeError


def _lora_shapes(W0: np.ndarray, A: np.ndarray, B: np.ndarray) -> Tuple[int, int, int]:
    if W0.ndim != 2 or A.ndim != 2 or B.ndim != 2:
        raise ShapeError("LoRA operands must be matrices")
    d, k = W0.shape
    r = A.shape[0]
    if A.shape != (r, k) or B.shape != (d, r):
        raise ShapeError(f"LoRA shapes disagree: W0={W0.shape} A={A.shape} B={B.shape}")
    if r > min(d, k):
        raise ShapeError(f"rank r={r} exceeds min(d, k)={min(d, k)}")
    return d, k, r


def lora_forward(W0, A, B, x, scaling: float = 1.0) -> np.ndarray:
    """h = W0 x + scaling * B (A x)."""
    W0, A, B, x = (np.asarray(v, dtype=np.float64) for v in (W0, A, B, x))
    _, k, _ = _lora_shapes(W0, A, B)
    if x.shape != (k,):
        raise ShapeError(f"x has shape {x.shape}, expected ({k},)")
    return W0 @ x + scaling * (B @ (A @ x))


def lora_merge(W0, A, B, scaling: float = 1.0) -> np.ndarray:
    W0, A, B = (np.asarray(v, dtype=np.float64) for v in (W0, A, B))
    _lora_shapes(W0, A, B)
    return W0 + scaling * (B @ A)


def lora_param_count(d: int, k: int, r: int) -> int:
    """Trainable parameters of the low-rank update, r(d + k), against d*k for W0."""
    if r > min(d, k) or min(d, k, r) < 1:
        raise ShapeError(f"invalid LoRA dimensions d={d} k={k} r={r}")
    return r * (d + k)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def kto_reward(policy_logp: float, ref_logp: float) -> float:
    if not (math.isfinite(policy_logp) and math.isfinite(ref_logp)):
        raise DataError("log-probabilities must be finite")
    return policy_logp - ref_logp


def kto_baseline(policy_logps: Sequence[float], ref_logps: Sequence[float]) -> float:
    """Reference point z0: mean policy/reference log-ratio over a batch, floored at 0."""
    if len(policy_logps) != len(ref_logps):
        raise ShapeError("policy and reference log-probabilities differ in length")
    if not policy_logps:
        raise DataError("kto_baseline needs a nonempty batch")
    ratios = np.asarray(policy_logps, dtype=np.float64) - np.asarray(ref_logps, dtype=np.float64)
    return max(0.0, float(ratios.mean()))


def kto_value(r: float, z0: float, desirable: bool, params: KtoParams) -> float:
    if desirable:
        return params.lambda_d * _sigmoid(params.beta * (r - z0))
    return params.lambda_u * _sigmoid(params.beta * (z0 - r))


class KtoSample(BaseModel):
    r: float
    desirable: bool


def _samples(samples) -> Sequence[KtoSample]:
    out = [s if isinstance(s, KtoSample) else KtoSample.model_validate(s) for s in samples]
    if not out:
        raise DataError("kto_loss needs at least one sample")
    return out


def kto_loss(samples, z0: float, params: KtoParams) -> float:
    """Mean of ``lambda_y - v(r, z0)`` over samples."""
    items = _samples(samples)
    total = 0.0
    for s in items:
        lam = params.lambda_d if s.desirable else params.lambda_u
        total += lam - kto_value(s.r, z0, s.desirable, params)
    return total / len(items)


def kto_loss_grad(samples, z0: float, params: KtoParams) -> np.ndarray:
    """d kto_loss / d r_i for each sample, with z0 held fixed."""
    items = _samples(samples)
    grads = np.zeros(len(items))
    for i, s in enumerate(items):
        if s.desirable:
            sig = _sigmoid(params.beta * (s.r - z0))
            grads[i] = -params.lambda_d * params.beta * sig * (1.0 - sig)
        else:
            sig = _sigmoid(params.beta * (z0 - s.r))
            grads[i] = params.lambda_u * params.beta * sig * (1.0 - sig)
    return grads / len(items)
