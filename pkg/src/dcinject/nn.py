"""One-hidden-layer classifier with a per-feature affine normalization front.

flatten -> x * norm_scale + norm_shift -> relu(. @ w1 + b1) -> . @ w2 + b2 -> softmax

Gradients are derived by hand. The normalization pair is the personal
parameter group (kept local under FedBN); everything else is shared.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .tensorimg import Image, ShapeError

PERSONAL_KEYS = ("norm_scale", "norm_shift")
SHARED_KEYS = ("w1", "b1", "w2", "b2")
PARAM_KEYS = PERSONAL_KEYS + SHARED_KEYS


@dataclass(frozen=True, eq=False)
class ModelParams:
    norm_scale: np.ndarray
    norm_shift: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        d, hdim = np.shape(self.w1)
        k = np.shape(self.w2)[1]
        expected = {
            "norm_scale": (d,), "norm_shift": (d,), "w1": (d, hdim),
            "b1": (hdim,), "w2": (hdim, k), "b2": (k,),
        }
        for f in fields(self):
            arr = np.array(getattr(self, f.name), dtype=np.float64)
            if arr.shape != expected[f.name]:
                raise ShapeError(f"{f.name} has shape {arr.shape}, expected {expected[f.name]}")
            arr.flags.writeable = False
            object.__setattr__(self, f.name, arr)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w2.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_KEYS}

    def group(self, keys) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in keys}

    def with_tensors(self, **tensors) -> "ModelParams":
        return replace(self, **tensors)

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.tensors().values())

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.tensors().values(), other.tensors().values()))


# Gradients share the parameter layout.
Gradients = ModelParams


def init_params(input_dim: int, hidden_dim: int, num_classes: int, seed: int) -> ModelParams:
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (input_dim + hidden_dim))
    lim2 = np.sqrt(6.0 / (hidden_dim + num_classes))
    return ModelParams(
        norm_scale=np.ones(input_dim),
        norm_shift=np.zeros(input_dim),
        w1=rng.uniform(-lim1, lim1, size=(input_dim, hidden_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.uniform(-lim2, lim2, size=(hidden_dim, num_classes)),
        b2=np.zeros(num_classes),
    )


def _flatten(params: ModelParams, x) -> np.ndarray:
    if isinstance(x, Image):
        x = x.data[None]
    x = np.asarray(x, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"input has {x.shape[1]} features, model expects {params.input_dim}")
    return x


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def logits(params: ModelParams, x) -> np.ndarray:
    x = _flatten(params, x)
    z0 = x * params.norm_scale + params.norm_shift
    h = np.maximum(z0 @ params.w1 + params.b1, 0.0)
    return h @ params.w2 + params.b2


def predict_proba(params: ModelParams, x) -> np.ndarray:
    """Class probabilities for a batch ``(N, ...)``."""
    return _softmax(logits(params, x))


def predict(params: ModelParams, x) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(logits(params, x), axis=1)


def forward(params: ModelParams, img: Image) -> np.ndarray:
    return predict_proba(params, img)[0]


def _ce_and_grads(params: ModelParams, x: np.ndarray, y: np.ndarray, weight: float):
    n = x.shape[0]
    z0 = x * params.norm_scale + params.norm_shift
    a1 = z0 @ params.w1 + params.b1
    h = np.maximum(a1, 0.0)
    out = h @ params.w2 + params.b2
    shifted = out - out.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), y]))

    dout = np.exp(shifted - log_norm[:, None])
    dout[np.arange(n), y] -= 1.0
    dout *= weight / n
    dh = dout @ params.w2.T
    da1 = dh * (a1 > 0)
    dz0 = da1 @ params.w1.T
    grads = {
        "norm_scale": (dz0 * x).sum(axis=0),
        "norm_shift": dz0.sum(axis=0),
        "w1": z0.T @ da1,
        "b1": da1.sum(axis=0),
        "w2": h.T @ dout,
        "b2": dout.sum(axis=0),
    }
    return weight * loss, grads


def loss_and_grad(
    params: ModelParams,
    batch,
    labels,
    triggered_batch=None,
    target_label: int | None = None,
    alpha_poison: float = 0.0,
) -> tuple[float, Gradients]:
    """Mixture ``(1 - a) * CE(clean, labels) + a * CE(triggered, target)``.

    With ``alpha_poison == 0`` the triggered inputs are ignored entirely.
    """
    if not 0.0 <= alpha_poison <= 1.0:
        raise ValueError("alpha_poison must lie in [0, 1]")
    x = _flatten(params, batch)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0 or y.shape[0] != x.shape[0]:
        raise ShapeError("clean batch must be nonempty and match its labels")
    if np.any((y < 0) | (y >= params.num_classes)):
        raise ValueError("label out of range")

    total = {k: np.zeros_like(v) for k, v in params.tensors().items()}
    loss = 0.0
    parts = []
    if alpha_poison < 1.0:
        parts.append((x, y, 1.0 - alpha_poison))
    if alpha_poison > 0.0:
        if triggered_batch is None or len(triggered_batch) == 0:
            raise ValueError("alpha_poison > 0 requires a nonempty triggered batch")
        if target_label is None or not 0 <= target_label < params.num_classes:
            raise ValueError(f"invalid target label {target_label}")
        xt = _flatten(params, triggered_batch)
        parts.append((xt, np.full(xt.shape[0], target_label, dtype=np.int64), alpha_poison))
    for xs, ys, weight in parts:
        part_loss, grads = _ce_and_grads(params, xs, ys, weight)
        loss += part_loss
        for k in total:
            total[k] += grads[k]
    return loss, Gradients(**total)


def sgd_step(params: ModelParams, grads: Gradients, lr: float) -> ModelParams:
    return ModelParams(**{k: getattr(params, k) - lr * getattr(grads, k) for k in PARAM_KEYS})
