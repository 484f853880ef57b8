"""Synthetic data generation, Dirichlet non-IID partitioning, calibration
sampling, and the on-disk dataset format.

A dataset directory holds `meta.json` plus three little-endian blobs:
`x.f64` (inputs), `zt.f64` (teacher features), `y.u32` (labels).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidInputError, PartitionError
from .rng import Stream

FORMAT_VERSION = 1
MAX_PARTITION_RETRIES = 100
TEACHER_SPECTRUM_DECAY = 0.9
CLASS_MEAN_SCALE = 3.0


@dataclass
class FederatedDataset:
    """Dense sample store: inputs x, labels y, precomputed teacher features zt."""

    x: np.ndarray  # (n, input_dim)
    y: np.ndarray  # (n,) int labels in [0, num_classes)
    zt: np.ndarray  # (n, teacher_dim)
    num_classes: int

    def __post_init__(self):
        if self.x.ndim != 2 or self.zt.ndim != 2 or self.y.ndim != 1:
            raise InvalidInputError("dataset arrays have wrong rank")
        n = self.x.shape[0]
        if self.y.shape[0] != n or self.zt.shape[0] != n:
            raise InvalidInputError("dataset arrays disagree on sample count")
        if n and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise InvalidInputError("label outside [0, num_classes)")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.zt))):
            raise InvalidInputError("dataset contains non-finite values")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    @property
    def teacher_dim(self) -> int:
        return self.zt.shape[1]

    def subset(self, indices) -> "FederatedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return FederatedDataset(
            x=self.x[idx].copy(),
            y=self.y[idx].copy(),
            zt=self.zt[idx].copy(),
            num_classes=self.num_classes,
        )


@dataclass
class Partition:
    """Disjoint per-client index lists covering a training set."""

    assignments: list = field(default_factory=list)  # list of int64 arrays
    alpha: float = 0.5
    seed: int = 0


def _orthonormal(stream: Stream, n: int) -> np.ndarray:
    """Random n x n orthonormal matrix via QR with a positive-diagonal fix."""
    G = stream.normal(n * n).reshape(n, n)
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def generate_synthetic(K, d_x, D, n_train, n_test, noise_sigma, seed):
    """Gaussian class clusters with a fixed linear teacher.

    Class means are drawn once from a scaled unit Gaussian; inputs are
    mean + isotropic noise. The teacher map U diag(s) B^T has geometrically
    decaying singular values, so teacher features carry a genuine
    variance hierarchy. Returns (train, test).
    """
    if K < 2 or d_x < K or D < 2 or n_train < 1 or n_test < 1:
        raise InvalidInputError(
            f"invalid sizes: K={K}, d_x={d_x}, D={D}, n_train={n_train}, n_test={n_test}"
        )
    if not noise_sigma > 0:
        raise InvalidInputError("noise_sigma must be positive")

    means = CLASS_MEAN_SCALE * Stream(seed, "class-means").normal(K * d_x).reshape(K, d_x)
    r = min(D, d_x)
    U = _orthonormal(Stream(seed, "teacher-left"), D)[:, :r]
    B = _orthonormal(Stream(seed, "teacher-right"), d_x)[:, :r]
    s = TEACHER_SPECTRUM_DECAY ** np.arange(r)
    W_T = (U * s) @ B.T  # (D, d_x)

    def draw(split: str, n: int) -> FederatedDataset:
        u = Stream(seed, "labels", split).uniform(n)
        y = np.minimum((u * K).astype(np.int64), K - 1)
        noise = Stream(seed, "noise", split).normal(n * d_x).reshape(n, d_x)
        x = means[y] + noise_sigma * noise
        return FederatedDataset(x=x, y=y, zt=x @ W_T.T, num_classes=K)

    return draw("train", n_train), draw("test", n_test)


def _largest_remainder(p: np.ndarray, total: int) -> np.ndarray:
    ideal = p * total
    counts = np.floor(ideal).astype(np.int64)
    frac = ideal - counts
    leftover = total - int(counts.sum())
    if leftover > 0:
        for i in np.argsort(-frac, kind="stable")[:leftover]:
            counts[i] += 1
    return counts


def dirichlet_partition(labels, num_clients: int, alpha: float, seed: int) -> Partition:
    """Split indices per class by Dir(alpha) proportions; redraw (up to 100
    times, with a bumped stream label) whenever a client comes out empty."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise InvalidInputError("labels must be non-empty")
    if num_clients < 1:
        raise InvalidInputError("num_clients must be >= 1")
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")

    classes = np.unique(labels)
    for attempt in range(MAX_PARTITION_RETRIES):
        stream = Stream(seed, "dirichlet-partition", attempt)
        assignments = [[] for _ in range(num_clients)]
        for k in classes:
            idx = np.flatnonzero(labels == k)
            p = stream.dirichlet(alpha, num_clients)
            counts = _largest_remainder(p, idx.size)
            offset = 0
            for c in range(num_clients):
                assignments[c].extend(idx[offset : offset + counts[c]])
                offset += counts[c]
        if all(len(a) > 0 for a in assignments):
            return Partition(
                assignments=[np.array(sorted(a), dtype=np.int64) for a in assignments],
                alpha=float(alpha),
                seed=int(seed),
            )
    raise PartitionError(
        f"no non-empty partition for C={num_clients}, alpha={alpha} "
        f"after {MAX_PARTITION_RETRIES} redraws"
    )


def sample_calibration(dataset: FederatedDataset, M: int, seed: int) -> np.ndarray:
    """Uniform sample (without replacement) of M teacher-feature rows."""
    n = len(dataset)
    if M < 2 or M > n:
        raise InvalidInputError(f"calibration size {M} out of range [2, {n}]")
    order = Stream(seed, "calibration").permutation(n)
    return dataset.zt[order[:M]].copy()


def save_dataset(dataset: FederatedDataset, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "num_samples": len(dataset),
        "num_classes": int(dataset.num_classes),
        "input_dim": int(dataset.input_dim),
        "teacher_dim": int(dataset.teacher_dim),
    }
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    dataset.x.astype("<f8").tofile(os.path.join(path, "x.f64"))
    dataset.zt.astype("<f8").tofile(os.path.join(path, "zt.f64"))
    dataset.y.astype("<u4").tofile(os.path.join(path, "y.u32"))


def _read_blob(path: str, dtype, expected_count: int) -> np.ndarray:
    itemsize = np.dtype(dtype).itemsize
    expected_bytes = expected_count * itemsize
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(raw) != expected_bytes:
        raise FormatError(
            f"{path}: expected {expected_bytes} bytes, got {len(raw)} "
            f"(mismatch from byte offset {min(len(raw), expected_bytes)})"
        )
    return np.frombuffer(raw, dtype=dtype).copy()


def load_dataset(path: str) -> FederatedDataset:
    meta_path = os.path.join(path, "meta.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed dataset header {meta_path}: {exc}") from exc

    required = ("format_version", "num_samples", "num_classes", "input_dim", "teacher_dim")
    for key in required:
        if key not in meta:
            raise FormatError(f"{meta_path}: missing key '{key}'")
    if meta["format_version"] != FORMAT_VERSION:
        raise FormatError(f"{meta_path}: unsupported format_version {meta['format_version']}")
    n, K = int(meta["num_samples"]), int(meta["num_classes"])
    d_x, D = int(meta["input_dim"]), int(meta["teacher_dim"])

    x = _read_blob(os.path.join(path, "x.f64"), "<f8", n * d_x).reshape(n, d_x)
    zt = _read_blob(os.path.join(path, "zt.f64"), "<f8", n * D).reshape(n, D)
    y = _read_blob(os.path.join(path, "y.u32"), "<u4", n).astype(np.int64)
    if n and y.max() >= K:
        raise FormatError(f"{path}: label {int(y.max())} exceeds num_classes={K}")
    return FederatedDataset(x=x, y=y, zt=zt, num_classes=K)
