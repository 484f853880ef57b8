"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or when FAPD_BACKEND=python.
Signatures and semantics mirror `_core` exactly; see kernels/__init__.py.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def jacobi_eigh(A, tol, max_sweeps):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues, eigenvector_columns, converged). `tol` is the
    absolute off-diagonal threshold; sorting and sign conventions are applied
    by the caller.
    """
    A = np.array(A, dtype=np.float64, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return np.diag(A).copy(), V, True
    converged = _offdiag_max(A) <= tol
    for _ in range(max_sweeps):
        if converged:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                _rotate(A, V, p, q, c, s)
        converged = _offdiag_max(A) <= tol
    return np.diag(A).copy(), V, bool(converged)


def _offdiag_max(A):
    off = A - np.diag(np.diag(A))
    return np.abs(off).max()


def _rotate(A, V, p, q, c, s):
    rp = A[p, :].copy()
    rq = A[q, :].copy()
    A[p, :] = c * rp - s * rq
    A[q, :] = s * rp + c * rq
    cp = A[:, p].copy()
    cq = A[:, q].copy()
    A[:, p] = c * cp - s * cq
    A[:, q] = s * cp + c * cq
    A[p, q] = 0.0
    A[q, p] = 0.0
    vp = V[:, p].copy()
    vq = V[:, q].copy()
    V[:, p] = c * vp - s * vq
    V[:, q] = s * vp + c * vq


def forward_batch(W1, b1, W2, b2, W3, b3, X):
    """Batched student forward pass: ReLU hidden, linear feature, linear head."""
    H = np.maximum(X @ W1.T + b1, 0.0)
    ZS = H @ W2.T + b2
    LOGITS = ZS @ W3.T + b3
    return H, ZS, LOGITS


def backward_batch(W2, W3, X, H, ZS, dLOGITS, dZS):
    """Reverse-mode gradients for forward_batch.

    dLOGITS/dZS are per-sample upstream gradients (already scaled by any batch
    reduction); returns summed parameter gradients in declaration order.
    """
    dZS_total = dLOGITS @ W3 + dZS
    gW3 = dLOGITS.T @ ZS
    gb3 = dLOGITS.sum(axis=0)
    gW2 = dZS_total.T @ H
    gb2 = dZS_total.sum(axis=0)
    dH = dZS_total @ W2
    dPre = dH * (H > 0.0)
    gW1 = dPre.T @ X
    gb1 = dPre.sum(axis=0)
    return gW1, gb1, gW2, gb2, gW3, gb3
