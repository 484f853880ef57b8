# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: cyclic Jacobi eigensolver and batched MLP passes."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

BACKEND_NAME = "compiled"


def jacobi_eigh(A, double tol, int max_sweeps):
    """Cyclic Jacobi diagonalization; returns (eigenvalues, V columns, converged)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] M = np.array(A, dtype=np.float64, copy=True)
    cdef int n = M.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] V = np.eye(n)
    cdef int sweep, p, q, i
    cdef double apq, theta, t, c, s, off, rp, rq
    if n == 1:
        return np.diag(M).copy(), V, True

    off = _offdiag_max(M, n)
    cdef bint converged = off <= tol
    for sweep in range(max_sweeps):
        if converged:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = M[p, q]
                if apq == 0.0:
                    continue
                theta = (M[q, q] - M[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif theta > 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for i in range(n):
                    rp = M[p, i]
                    rq = M[q, i]
                    M[p, i] = c * rp - s * rq
                    M[q, i] = s * rp + c * rq
                for i in range(n):
                    rp = M[i, p]
                    rq = M[i, q]
                    M[i, p] = c * rp - s * rq
                    M[i, q] = s * rp + c * rq
                M[p, q] = 0.0
                M[q, p] = 0.0
                for i in range(n):
                    rp = V[i, p]
                    rq = V[i, q]
                    V[i, p] = c * rp - s * rq
                    V[i, q] = s * rp + c * rq
        off = _offdiag_max(M, n)
        converged = off <= tol
    return np.diag(M).copy(), V, bool(converged)


cdef double _offdiag_max(cnp.float64_t[:, :] M, int n):
    cdef double best = 0.0
    cdef int i, j
    for i in range(n):
        for j in range(n):
            if i != j and fabs(M[i, j]) > best:
                best = fabs(M[i, j])
    return best


cdef void _gemm_nt(cnp.float64_t[:, :] X, cnp.float64_t[:, :] W,
                   cnp.float64_t[:] b, cnp.float64_t[:, :] out,
                   bint relu) noexcept:
    # out[i, j] = sum_k X[i, k] * W[j, k] + b[j], optionally clamped at 0
    cdef int B = X.shape[0], D = X.shape[1], O = W.shape[0]
    cdef int i, j, k
    cdef double acc
    for i in range(B):
        for j in range(O):
            acc = b[j]
            for k in range(D):
                acc += X[i, k] * W[j, k]
            if relu and acc < 0.0:
                acc = 0.0
            out[i, j] = acc


def forward_batch(cnp.ndarray[cnp.float64_t, ndim=2] W1,
                  cnp.ndarray[cnp.float64_t, ndim=1] b1,
                  cnp.ndarray[cnp.float64_t, ndim=2] W2,
                  cnp.ndarray[cnp.float64_t, ndim=1] b2,
                  cnp.ndarray[cnp.float64_t, ndim=2] W3,
                  cnp.ndarray[cnp.float64_t, ndim=1] b3,
                  cnp.ndarray[cnp.float64_t, ndim=2] X):
    """Batched student forward pass: ReLU hidden, linear feature, linear head."""
    cdef int B = X.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] H = np.empty((B, W1.shape[0]))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ZS = np.empty((B, W2.shape[0]))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] LOGITS = np.empty((B, W3.shape[0]))
    _gemm_nt(X, W1, b1, H, True)
    _gemm_nt(H, W2, b2, ZS, False)
    _gemm_nt(ZS, W3, b3, LOGITS, False)
    return H, ZS, LOGITS


def backward_batch(cnp.ndarray[cnp.float64_t, ndim=2] W2,
                   cnp.ndarray[cnp.float64_t, ndim=2] W3,
                   cnp.ndarray[cnp.float64_t, ndim=2] X,
                   cnp.ndarray[cnp.float64_t, ndim=2] H,
                   cnp.ndarray[cnp.float64_t, ndim=2] ZS,
                   cnp.ndarray[cnp.float64_t, ndim=2] dLOGITS,
                   cnp.ndarray[cnp.float64_t, ndim=2] dZS):
    """Reverse-mode parameter gradients for forward_batch (summed over batch)."""
    cdef int B = X.shape[0]
    cdef int dx = X.shape[1], h = H.shape[1], D = ZS.shape[1], K = dLOGITS.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gW1 = np.zeros((h, dx))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gb1 = np.zeros(h)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gW2 = np.zeros((D, h))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gb2 = np.zeros(D)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gW3 = np.zeros((K, D))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gb3 = np.zeros(K)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dz = np.empty(D)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dh = np.empty(h)
    cdef int i, j, k
    cdef double acc, g
    for i in range(B):
        for j in range(D):
            acc = dZS[i, j]
            for k in range(K):
                acc += dLOGITS[i, k] * W3[k, j]
            dz[j] = acc
        for k in range(K):
            g = dLOGITS[i, k]
            gb3[k] += g
            for j in range(D):
                gW3[k, j] += g * ZS[i, j]
        for j in range(D):
            g = dz[j]
            gb2[j] += g
            for k in range(h):
                gW2[j, k] += g * H[i, k]
        for j in range(h):
            if H[i, j] > 0.0:
                acc = 0.0
                for k in range(D):
                    acc += dz[k] * W2[k, j]
                dh[j] = acc
            else:
                dh[j] = 0.0
        for j in range(h):
            g = dh[j]
            if g != 0.0:
                gb1[j] += g
                for k in range(dx):
                    gW1[j, k] += g * X[i, k]
    return gW1, gb1, gW2, gb2, gW3, gb3
