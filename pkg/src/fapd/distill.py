"""The three client loss terms and their gradients w.r.t. logits / features:
cross-entropy, feature-distribution KL (teacher || student, both sides
L2-normalized then softmaxed), and InfoNCE against per-class anchors.

Per-sample functions are the reference implementations; *_batch variants are
the vectorized training-path equivalents and are tested against them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import FederatedDataset
from .errors import DegenerateSimilarityError, InvalidInputError
from .linalg import as_matrix, as_vector

NORM_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_kd: float = 0.5
    lambda_cl: float = 0.5
    tau: float = 0.04

    def __post_init__(self):
        if self.lambda_kd < 0 or self.lambda_cl < 0:
            raise InvalidInputError("loss weights must be >= 0")
        if not self.tau > 0:
            raise InvalidInputError("tau must be positive")


@dataclass(frozen=True)
class ClassAnchors:
    """One teacher-space vector per class (rows), frozen for a whole run."""

    anchors: np.ndarray  # (K, D)


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def ce_loss(logits, y: int):
    """Cross-entropy with stable log-softmax; returns (loss, d_logits)."""
    logits = as_vector(logits, "logits")
    K = logits.shape[0]
    if not 0 <= y < K:
        raise InvalidInputError(f"class index {y} out of range [0, {K})")
    shifted = logits - logits.max()
    logZ = np.log(np.exp(shifted).sum())
    p = np.exp(shifted - logZ)
    loss = float(logZ - shifted[y])
    grad = p.copy()
    grad[y] -= 1.0
    return loss, grad


def _normalize_rows(Z: np.ndarray) -> tuple:
    norms = np.linalg.norm(Z, axis=-1, keepdims=True)
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    unit = np.where(norms > NORM_EPS, Z / safe, 0.0)
    return unit, norms[..., 0]


def kd_loss(zS_k, zT_k, direction: str = "teacher_student"):
    """Feature-distribution KL over softmaxed, L2-normalized projections.

    The default direction is KL(teacher || student), zero-forcing toward
    teacher mass; "student_teacher" selects the reverse divergence. Returns
    (loss, d_zS_k); the teacher side is a constant either way.
    """
    zS_k = as_vector(zS_k, "zS_k")
    zT_k = as_vector(zT_k, "zT_k")
    if zS_k.shape != zT_k.shape:
        raise InvalidInputError("student/teacher projections differ in length")
    if zS_k.shape[0] < 1:
        raise InvalidInputError("projected dimension must be >= 1")
    a, norm_s = _normalize_rows(zS_k)
    b, _ = _normalize_rows(zT_k)
    q = _softmax(a)
    p = _softmax(b)
    r = np.log(q) - np.log(p)
    if direction == "teacher_student":
        loss = float(np.sum(-p * r))
        d_a = q - p
    elif direction == "student_teacher":
        loss = float(np.sum(q * r))
        d_a = q * (r - float(np.dot(q, r)))
    else:
        raise InvalidInputError(f"unknown kd direction '{direction}'")
    if norm_s > NORM_EPS:
        d_z = (d_a - a * np.dot(d_a, a)) / norm_s
    else:
        d_z = np.zeros_like(zS_k)
    return loss, d_z


def infonce_loss(zS_k, anchors_k, y: int, tau: float):
    """InfoNCE over cosine similarities to class anchors; the denominator sums
    over every class including the positive. Returns (loss, d_zS_k)."""
    z = as_vector(zS_k, "zS_k")
    A = as_matrix(anchors_k, "anchors_k")
    K = A.shape[0]
    if not 0 <= y < K:
        raise InvalidInputError(f"class index {y} out of range [0, {K})")
    if A.shape[1] != z.shape[0]:
        raise InvalidInputError("anchor width does not match projected feature")
    if not tau > 0:
        raise InvalidInputError("tau must be positive")
    z_norm = float(np.linalg.norm(z))
    a_norms = np.linalg.norm(A, axis=1)
    if z_norm <= NORM_EPS or np.any(a_norms <= NORM_EPS):
        raise DegenerateSimilarityError("zero-norm feature or anchor in cosine similarity")
    z_hat = z / z_norm
    A_hat = A / a_norms[:, None]
    s = A_hat @ z_hat
    scaled = s / tau
    shifted = scaled - scaled.max()
    logZ = np.log(np.exp(shifted).sum())
    pi = np.exp(shifted - logZ)
    loss = float(logZ - shifted[y])
    d_s = pi.copy()
    d_s[y] -= 1.0
    d_s /= tau
    d_z = (d_s @ A_hat) / z_norm - float(np.dot(d_s, s)) * z / (z_norm * z_norm)
    return loss, d_z


def total_loss(ce: float, kd: float, cl: float, weights: LossWeights) -> float:
    """ce + lambda_kd * kd + lambda_cl * cl."""
    out = ce + weights.lambda_kd * kd + weights.lambda_cl * cl
    if not np.isfinite(out):
        raise InvalidInputError("loss components must be finite")
    return float(out)


def build_class_anchors(dataset: FederatedDataset) -> ClassAnchors:
    """Per-class mean of teacher features, one anchor row per class."""
    K = dataset.num_classes
    anchors = np.zeros((K, dataset.teacher_dim))
    for j in range(K):
        mask = dataset.y == j
        if not mask.any():
            raise InvalidInputError(f"class {j} has no samples for anchor construction")
        anchors[j] = dataset.zt[mask].mean(axis=0)
    return ClassAnchors(anchors=anchors)


# -- vectorized training-path variants ---------------------------------------

def ce_loss_batch(LOGITS, y):
    LOGITS = np.asarray(LOGITS, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    B = LOGITS.shape[0]
    shifted = LOGITS - LOGITS.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(shifted).sum(axis=1))
    losses = logZ - shifted[np.arange(B), y]
    grads = np.exp(shifted - logZ[:, None])
    grads[np.arange(B), y] -= 1.0
    return losses, grads


def kd_loss_batch(ZS_k, ZT_k, direction: str = "teacher_student"):
    ZS_k = np.asarray(ZS_k, dtype=np.float64)
    ZT_k = np.asarray(ZT_k, dtype=np.float64)
    a, norm_s = _normalize_rows(ZS_k)
    b, _ = _normalize_rows(ZT_k)
    q = _softmax(a)
    p = _softmax(b)
    r = np.log(q) - np.log(p)
    if direction == "teacher_student":
        losses = np.sum(-p * r, axis=1)
        d_a = q - p
    elif direction == "student_teacher":
        losses = np.sum(q * r, axis=1)
        d_a = q * (r - np.sum(q * r, axis=1, keepdims=True))
    else:
        raise InvalidInputError(f"unknown kd direction '{direction}'")
    safe = np.where(norm_s > NORM_EPS, norm_s, 1.0)
    d_z = (d_a - a * np.sum(d_a * a, axis=1, keepdims=True)) / safe[:, None]
    d_z[norm_s <= NORM_EPS] = 0.0
    return losses, d_z


def infonce_loss_batch(ZS_k, anchors_k, y, tau: float):
    Z = np.asarray(ZS_k, dtype=np.float64)
    A = np.asarray(anchors_k, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    B = Z.shape[0]
    z_norms = np.linalg.norm(Z, axis=1)
    a_norms = np.linalg.norm(A, axis=1)
    if np.any(z_norms <= NORM_EPS) or np.any(a_norms <= NORM_EPS):
        raise DegenerateSimilarityError("zero-norm feature or anchor in cosine similarity")
    Z_hat = Z / z_norms[:, None]
    A_hat = A / a_norms[:, None]
    S = Z_hat @ A_hat.T  # (B, K)
    scaled = S / tau
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(shifted).sum(axis=1))
    losses = logZ - shifted[np.arange(B), y]
    d_S = np.exp(shifted - logZ[:, None])
    d_S[np.arange(B), y] -= 1.0
    d_S /= tau
    d_Z = (d_S @ A_hat) / z_norms[:, None] \
        - (np.sum(d_S * S, axis=1) / z_norms**2)[:, None] * Z
    return losses, d_Z
