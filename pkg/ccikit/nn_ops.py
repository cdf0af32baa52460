"""Forward and backward passes for the detector's layers, in float64 numpy.

Each ``*_forward`` returns its output and a cache; the matching
``*_backward`` takes the upstream gradient and the cache and returns the
input gradient plus a dict of parameter gradients keyed like the parameters.

Parameters live in one flat ``Dict[str, np.ndarray]``; a layer reads its
tensors under a name prefix such as ``"diff.fwd."``.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

import numpy as np

from ccikit.errors import DataError, ShapeError

Params = Mapping[str, np.ndarray]
Grads = Dict[str, np.ndarray]

GRU_KEYS = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh")
COS_NORM_FLOOR = 1e-12


def sigmoid(x):
    # tanh form does not overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _add(grads: Grads, key: str, value: np.ndarray) -> None:
    if key in grads:
        grads[key] += value
    else:
        grads[key] = np.array(value, dtype=np.float64, copy=True)


def _check(name: str, arr: np.ndarray, shape: Tuple[int, ...]) -> None:
    if arr.shape != shape:
        raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")


# -- GRU ---------------------------------------------------------------------


@dataclass
class GruStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    h_hat: np.ndarray


def gru_cell(x_t: np.ndarray, h_prev: np.ndarray, params: Params, prefix: str = "") -> Tuple[np.ndarray, GruStepCache]:
    """One GRU step.

    z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
    h_hat = tanh(Wh x + Uh (r * h) + bh), h_t = (1 - z) * h + z * h_hat.
    """
    Wz, Uz, bz = params[prefix + "Wz"], params[prefix + "Uz"], params[prefix + "bz"]
    Wr, Ur, br = params[prefix + "Wr"], params[prefix + "Ur"], params[prefix + "br"]
    Wh, Uh, bh = params[prefix + "Wh"], params[prefix + "Uh"], params[prefix + "bh"]
    hidden = bz.shape[0]
    _check("h_prev", h_prev, (hidden,))
    _check("x_t", x_t, (Wz.shape[1],))

    z = sigmoid(Wz @ x_t + Uz @ h_prev + bz)
    r = sigmoid(Wr @ x_t + Ur @ h_prev + br)
    h_hat = np.tanh(Wh @ x_t + Uh @ (r * h_prev) + bh)
    h_t = (1.0 - z) * h_prev + z * h_hat
    return h_t, GruStepCache(x_t, h_prev, z, r, h_hat)


def gru_cell_backward(
    dh_t: np.ndarray, cache: GruStepCache, params: Params, prefix: str, grads: Grads
) -> Tuple[np.ndarray, np.ndarray]:
    """Accumulate gate gradients into ``grads``; return (dx_t, dh_prev)."""
    x, h, z, r, h_hat = cache.x, cache.h_prev, cache.z, cache.r, cache.h_hat
    Wz, Uz = params[prefix + "Wz"], params[prefix + "Uz"]
    Wr, Ur = params[prefix + "Wr"], params[prefix + "Ur"]
    Wh, Uh = params[prefix + "Wh"], params[prefix + "Uh"]

    dz = dh_t * (h_hat - h)
    dh_prev = dh_t * (1.0 - z)

    da_h = dh_t * z * (1.0 - h_hat**2)
    rh = r * h
    _add(grads, prefix + "Wh", np.outer(da_h, x))
    _add(grads, prefix + "Uh", np.outer(da_h, rh))
    _add(grads, prefix + "bh", da_h)
    dx = Wh.T @ da_h
    drh = Uh.T @ da_h
    dh_prev += drh * r

    da_r = drh * h * r * (1.0 - r)
    _add(grads, prefix + "Wr", np.outer(da_r, x))
    _add(grads, prefix + "Ur", np.outer(da_r, h))
    _add(grads, prefix + "br", da_r)
    dx += Wr.T @ da_r
    dh_prev += Ur.T @ da_r

    da_z = dz * z * (1.0 - z)
    _add(grads, prefix + "Wz", np.outer(da_z, x))
    _add(grads, prefix + "Uz", np.outer(da_z, h))
    _add(grads, prefix + "bz", da_z)
    dx += Wz.T @ da_z
    dh_prev += Uz.T @ da_z
    return dx, dh_prev


def gru_run(xs: np.ndarray, params: Params, prefix: str) -> Tuple[np.ndarray, List[GruStepCache]]:
    hidden = params[prefix + "bz"].shape[0]
    h = np.zeros(hidden)
    states = np.zeros((xs.shape[0], hidden))
    caches: List[GruStepCache] = []
    for t in range(xs.shape[0]):
        h, cache = gru_cell(xs[t], h, params, prefix)
        states[t] = h
        caches.append(cache)
    return states, caches


def gru_run_backward(dstates: np.ndarray, caches: List[GruStepCache], params: Params, prefix: str, grads: Grads) -> np.ndarray:
    dxs = np.zeros((len(caches), caches[0].x.shape[0]))
    dh_next = np.zeros(dstates.shape[1])
    for t in range(len(caches) - 1, -1, -1):
        dx, dh_next = gru_cell_backward(dstates[t] + dh_next, caches[t], params, prefix, grads)
        dxs[t] = dx
    return dxs


# -- Bi-GRU --------------------------------------------------------------------


@dataclass
class BiGruCache:
    fwd_states: np.ndarray
    bwd_states: np.ndarray
    fwd_caches: List[GruStepCache]
    bwd_caches: List[GruStepCache]


def bigru_encode(seq: np.ndarray, params: Params, prefix: str) -> Tuple[np.ndarray, BiGruCache]:
    """Per-position ``Wf h_fwd + Wb h_bwd + b``; output length equals input length."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise DataError("bigru_encode needs a nonempty (T, d_in) sequence")
    fwd_states, fwd_caches = gru_run(seq, params, prefix + "fwd.")
    rev_states, bwd_caches = gru_run(seq[::-1], params, prefix + "bwd.")
    bwd_states = rev_states[::-1]
    Wf, Wb, b = params[prefix + "Wf"], params[prefix + "Wb"], params[prefix + "b"]
    out = fwd_states @ Wf.T + bwd_states @ Wb.T + b
    return out, BiGruCache(fwd_states, bwd_states, fwd_caches, bwd_caches)


def bigru_backward(dout: np.ndarray, cache: BiGruCache, params: Params, prefix: str, grads: Grads) -> np.ndarray:
    Wf, Wb = params[prefix + "Wf"], params[prefix + "Wb"]
    _add(grads, prefix + "Wf", dout.T @ cache.fwd_states)
    _add(grads, prefix + "Wb", dout.T @ cache.bwd_states)
    _add(grads, prefix + "b", dout.sum(axis=0))
    dfwd = dout @ Wf
    dbwd = dout @ Wb
    dx = gru_run_backward(dfwd, cache.fwd_caches, params, prefix + "fwd.", grads)
    # backward direction ran over the reversed sequence
    dx_rev = gru_run_backward(dbwd[::-1], cache.bwd_caches, params, prefix + "bwd.", grads)
    return dx + dx_rev[::-1]


# -- multi-head self-attention ---------------------------------------------------


@dataclass
class AttentionCache:
    x: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    concat: np.ndarray


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def multi_head_attention(states: np.ndarray, params: Params, prefix: str) -> Tuple[np.ndarray, AttentionCache]:
    """Self-attention with Q = K = V = states, projected per head.

    ``Wq``/``Wk``/``Wv`` have shape (heads, d, d_k) and ``Wo`` (d, d).
    """
    x = np.asarray(states, dtype=np.float64)
    Wq, Wk, Wv, Wo = params[prefix + "Wq"], params[prefix + "Wk"], params[prefix + "Wv"], params[prefix + "Wo"]
    heads, d, dk = Wq.shape
    if x.ndim != 2 or x.shape[1] != d:
        raise ShapeError(f"attention input has shape {x.shape}, expected (T, {d})")
    if heads * dk != d:
        raise ShapeError(f"{heads} heads of width {dk} do not tile d={d}")

    q = np.einsum("td,hdk->htk", x, Wq)
    k = np.einsum("td,hdk->htk", x, Wk)
    v = np.einsum("td,hdk->htk", x, Wv)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dk)
    weights = softmax_rows(scores)
    head_out = weights @ v
    concat = head_out.transpose(1, 0, 2).reshape(x.shape[0], d)
    out = concat @ Wo
    return out, AttentionCache(x, q, k, v, weights, concat)


def attention_backward(dout: np.ndarray, cache: AttentionCache, params: Params, prefix: str, grads: Grads) -> np.ndarray:
    Wq, Wk, Wv, Wo = params[prefix + "Wq"], params[prefix + "Wk"], params[prefix + "Wv"], params[prefix + "Wo"]
    heads, d, dk = Wq.shape
    T = cache.x.shape[0]
    _add(grads, prefix + "Wo", cache.concat.T @ dout)
    dconcat = dout @ Wo.T
    dhead = dconcat.reshape(T, heads, dk).transpose(1, 0, 2)

    A = cache.weights
    dA = dhead @ cache.v.transpose(0, 2, 1)
    dv = A.transpose(0, 2, 1) @ dhead
    dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) / np.sqrt(dk)
    dq = dS @ cache.k
    dk_ = dS.transpose(0, 2, 1) @ cache.q

    _add(grads, prefix + "Wq", np.einsum("td,htk->hdk", cache.x, dq))
    _add(grads, prefix + "Wk", np.einsum("td,htk->hdk", cache.x, dk_))
    _add(grads, prefix + "Wv", np.einsum("td,htk->hdk", cache.x, dv))
    dx = (
        np.einsum("htk,hdk->td", dq, Wq)
        + np.einsum("htk,hdk->td", dk_, Wk)
        + np.einsum("htk,hdk->td", dv, Wv)
    )
    return dx


# -- classifier and loss ---------------------------------------------------------


@dataclass
class ClassifierCache:
    features: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    p: float


def classifier_forward(c: np.ndarray, m: np.ndarray, params: Params, prefix: str = "clf.") -> Tuple[float, ClassifierCache]:
    """p = sigmoid(w2 . relu(W1 [c; m] + b1) + b2)."""
    c = np.asarray(c, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(m))):
        raise DataError("classifier input is not finite")
    features = np.concatenate([c, m])
    W1, b1, w2, b2 = params[prefix + "W1"], params[prefix + "b1"], params[prefix + "w2"], params[prefix + "b2"]
    _check("[c; m]", features, (W1.shape[1],))
    pre = W1 @ features + b1
    hidden = np.maximum(pre, 0.0)
    p = float(sigmoid(w2 @ hidden + b2[0]))
    return p, ClassifierCache(features, pre, hidden, p)


def classifier_backward(dlogit: float, cache: ClassifierCache, params: Params, prefix: str, grads: Grads) -> Tuple[np.ndarray, np.ndarray]:
    W1, w2 = params[prefix + "W1"], params[prefix + "w2"]
    _add(grads, prefix + "w2", dlogit * cache.hidden)
    _add(grads, prefix + "b2", np.array([dlogit]))
    dpre = dlogit * w2 * (cache.pre > 0)
    _add(grads, prefix + "W1", np.outer(dpre, cache.features))
    _add(grads, prefix + "b1", dpre)
    dfeat = W1.T @ dpre
    half = dfeat.shape[0] // 2
    return dfeat[:half], dfeat[half:]


def cosine(c: np.ndarray, m: np.ndarray) -> float:
    nc, nm = np.linalg.norm(c), np.linalg.norm(m)
    if nc < COS_NORM_FLOOR or nm < COS_NORM_FLOOR:
        return 0.0
    return float(c @ m / (nc * nm))


def cosine_grad(c: np.ndarray, m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    nc, nm = np.linalg.norm(c), np.linalg.norm(m)
    if nc < COS_NORM_FLOOR or nm < COS_NORM_FLOOR:
        return np.zeros_like(c), np.zeros_like(m)
    cos = c @ m / (nc * nm)
    return m / (nc * nm) - cos * c / nc**2, c / (nc * nm) - cos * m / nm**2


def similarity_signs(labels: np.ndarray, mode: str) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if mode == "label":
        return 1.0 - 2.0 * labels
    return np.ones_like(labels)


def bce(probs, labels, eps: float = 1e-7) -> float:
    p = np.clip(np.asarray(probs, dtype=np.float64), eps, 1.0 - eps)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def joint_loss(probs, labels, cs, ms, lam: float, eps: float = 1e-7, mode: str = "unsigned") -> float:
    """Mean BCE plus ``lam * (1 - mean cosine(c_i, m_i))``.

    In ``mode="label"`` each cosine is signed by ``1 - 2 y_i`` so consistent
    pairs are pulled together and inconsistent ones pushed apart.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size == 0:
        raise DataError("loss needs at least one sample")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != probs.shape or len(cs) != probs.size or len(ms) != probs.size:
        raise ShapeError("loss inputs are not aligned")
    signs = similarity_signs(labels, mode)
    cos = np.array([cosine(np.asarray(c, dtype=np.float64), np.asarray(m, dtype=np.float64)) for c, m in zip(cs, ms)])
    return bce(probs, labels, eps) + lam * (1.0 - float(np.mean(signs * cos)))
