"""Student network: ReLU hidden layer, linear feature layer (matches the
teacher dimension), linear classifier head. Manual forward/backward plus
SGD with velocity-form momentum, and the on-disk checkpoint format."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import FormatError, InvalidInputError, NumericError
from .rng import Stream

PARAM_FIELDS = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class StudentModel:
    W1: np.ndarray  # (h, d_x)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (D, h)
    b2: np.ndarray  # (D,)
    W3: np.ndarray  # (K, D)
    b3: np.ndarray  # (K,)
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W2.shape[0]

    @property
    def num_classes(self) -> int:
        return self.W3.shape[0]

    def params(self):
        return [getattr(self, name) for name in PARAM_FIELDS]

    def copy(self) -> "StudentModel":
        return StudentModel(*[p.copy() for p in self.params()], seed=self.seed)

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def load_flat(self, flat: np.ndarray) -> None:
        expected = sum(p.size for p in self.params())
        if flat.size != expected:
            raise InvalidInputError(f"expected {expected} parameters, got {flat.size}")
        offset = 0
        for p in self.params():
            p[...] = flat[offset : offset + p.size].reshape(p.shape)
            offset += p.size


@dataclass
class Gradients:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def params(self):
        return [getattr(self, name) for name in PARAM_FIELDS]


@dataclass
class OptimizerState:
    """SGD momentum state: v <- m*v + g; theta <- theta - lr*v."""

    lr: float
    momentum: float
    velocity: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr < 0:
            raise InvalidInputError("lr must be >= 0")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must be in [0, 1)")

    @classmethod
    def for_model(cls, model: StudentModel, lr: float, momentum: float):
        return cls(lr=lr, momentum=momentum,
                   velocity=[np.zeros_like(p) for p in model.params()])


@dataclass
class ForwardCache:
    x: np.ndarray
    h: np.ndarray
    z_s: np.ndarray
    logits: np.ndarray
    model_id: int


def _glorot(stream: Stream, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    u = stream.uniform(fan_out * fan_in).reshape(fan_out, fan_in)
    return (2.0 * u - 1.0) * limit


def init_model(d_x: int, h: int, D: int, K: int, seed: int) -> StudentModel:
    """Glorot-uniform weights, zero biases; deterministic given seed."""
    if min(d_x, h, D, K) < 1:
        raise InvalidInputError(f"all dims must be >= 1, got ({d_x}, {h}, {D}, {K})")
    return StudentModel(
        W1=_glorot(Stream(seed, "init", "W1"), h, d_x),
        b1=np.zeros(h),
        W2=_glorot(Stream(seed, "init", "W2"), D, h),
        b2=np.zeros(D),
        W3=_glorot(Stream(seed, "init", "W3"), K, D),
        b3=np.zeros(K),
        seed=int(seed),
    )


def forward(model: StudentModel, x) -> tuple:
    """Single-sample forward pass; returns (z_S, logits, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise InvalidInputError(
            f"input shape {x.shape} != ({model.input_dim},)"
        )
    H, ZS, LOGITS = kernels.forward_batch(
        model.W1, model.b1, model.W2, model.b2, model.W3, model.b3,
        np.ascontiguousarray(x[None, :]),
    )
    if not (np.all(np.isfinite(ZS)) and np.all(np.isfinite(LOGITS))):
        raise NumericError("non-finite activation in forward pass")
    cache = ForwardCache(x=x, h=H[0], z_s=ZS[0], logits=LOGITS[0], model_id=id(model))
    return ZS[0].copy(), LOGITS[0].copy(), cache


def forward_batch(model: StudentModel, X) -> tuple:
    """Batched forward; returns (H, ZS, LOGITS) for an (n, d_x) input block."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InvalidInputError(f"batch shape {X.shape} incompatible with model")
    H, ZS, LOGITS = kernels.forward_batch(
        model.W1, model.b1, model.W2, model.b2, model.W3, model.b3, X
    )
    if not np.all(np.isfinite(LOGITS)):
        raise NumericError("non-finite activation in forward pass")
    return H, ZS, LOGITS


def backward(model: StudentModel, cache: ForwardCache, d_logits, d_zS) -> Gradients:
    """Exact reverse-mode gradients; d_zS enters at the feature layer,
    d_logits at the head."""
    if cache.model_id != id(model):
        raise InvalidInputError("cache does not belong to this model")
    d_logits = np.asarray(d_logits, dtype=np.float64)
    d_zS = np.asarray(d_zS, dtype=np.float64)
    if d_logits.shape != (model.num_classes,) or d_zS.shape != (model.feature_dim,):
        raise InvalidInputError("upstream gradient shapes do not match model")
    grads = kernels.backward_batch(
        model.W2, model.W3,
        np.ascontiguousarray(cache.x[None, :]),
        np.ascontiguousarray(cache.h[None, :]),
        np.ascontiguousarray(cache.z_s[None, :]),
        np.ascontiguousarray(d_logits[None, :]),
        np.ascontiguousarray(d_zS[None, :]),
    )
    return Gradients(*grads)


def backward_batch(model: StudentModel, X, H, ZS, dLOGITS, dZS) -> Gradients:
    """Batched reverse-mode gradients (summed over rows)."""
    grads = kernels.backward_batch(
        model.W2, model.W3,
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(H, dtype=np.float64),
        np.ascontiguousarray(ZS, dtype=np.float64),
        np.ascontiguousarray(dLOGITS, dtype=np.float64),
        np.ascontiguousarray(dZS, dtype=np.float64),
    )
    return Gradients(*grads)


def sgd_step(model: StudentModel, opt: OptimizerState, grads: Gradients) -> None:
    for p, v, g in zip(model.params(), opt.velocity, grads.params()):
        if p.shape != g.shape:
            raise InvalidInputError(f"gradient shape {g.shape} != parameter {p.shape}")
        v *= opt.momentum
        v += g
        p -= opt.lr * v


def save_checkpoint(model: StudentModel, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    meta = {
        "format_version": 1,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "feature_dim": model.feature_dim,
        "num_classes": model.num_classes,
        "seed": model.seed,
    }
    with open(os.path.join(path, "model.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    model.flatten().astype("<f8").tofile(os.path.join(path, "params.f64"))


def load_checkpoint(path: str) -> StudentModel:
    meta_path = os.path.join(path, "model.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed checkpoint header {meta_path}: {exc}") from exc
    try:
        d_x, h = int(meta["input_dim"]), int(meta["hidden_dim"])
        D, K = int(meta["feature_dim"]), int(meta["num_classes"])
        seed = int(meta.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{meta_path}: bad or missing dimension keys") from exc
    model = init_model(d_x, h, D, K, seed)
    expected = model.flatten().size
    blob_path = os.path.join(path, "params.f64")
    try:
        raw = np.fromfile(blob_path, dtype="<f8")
    except OSError as exc:
        raise FormatError(f"cannot read {blob_path}: {exc}") from exc
    if raw.size != expected:
        raise FormatError(
            f"{blob_path}: expected {expected * 8} bytes, got {raw.size * 8}"
        )
    model.load_flat(raw.astype(np.float64))
    return model
