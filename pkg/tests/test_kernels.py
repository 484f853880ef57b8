import numpy as np
import pytest

from fapd.kernels import _fallback

compiled = pytest.importorskip("fapd.kernels._core")


def random_symmetric(rng, n):
    A = rng.normal(size=(n, n))
    return (A + A.T) / 2.0


class TestBackendAgreement:
    @pytest.mark.parametrize("n", [2, 3, 8, 17])
    def test_jacobi_matches_fallback(self, n):
        rng = np.random.default_rng(n)
        for _ in range(5):
            A = random_symmetric(rng, n)
            tol = 1e-12 * np.abs(A).max()
            w_c, V_c, ok_c = compiled.jacobi_eigh(A.copy(), tol, 100)
            w_p, V_p, ok_p = _fallback.jacobi_eigh(A.copy(), tol, 100)
            assert ok_c and ok_p
            # both diagonalize the same matrix; compare via reconstruction
            R_c = V_c @ np.diag(w_c) @ V_c.T
            R_p = V_p @ np.diag(w_p) @ V_p.T
            assert np.abs(R_c - A).max() < 1e-10
            assert np.abs(R_p - A).max() < 1e-10
            assert np.abs(np.sort(w_c) - np.sort(w_p)).max() < 1e-10

    def test_forward_matches_fallback(self):
        rng = np.random.default_rng(0)
        W1 = rng.normal(size=(6, 4))
        W2 = rng.normal(size=(5, 6))
        W3 = rng.normal(size=(3, 5))
        b1, b2, b3 = rng.normal(size=6), rng.normal(size=5), rng.normal(size=3)
        X = rng.normal(size=(11, 4))
        out_c = compiled.forward_batch(W1, b1, W2, b2, W3, b3, X)
        out_p = _fallback.forward_batch(W1, b1, W2, b2, W3, b3, X)
        for a, b in zip(out_c, out_p):
            assert np.abs(a - b).max() < 1e-12

    def test_backward_matches_fallback(self):
        rng = np.random.default_rng(1)
        W1 = rng.normal(size=(6, 4))
        W2 = rng.normal(size=(5, 6))
        W3 = rng.normal(size=(3, 5))
        b1, b2, b3 = np.zeros(6), np.zeros(5), np.zeros(3)
        X = rng.normal(size=(11, 4))
        H, ZS, LOGITS = _fallback.forward_batch(W1, b1, W2, b2, W3, b3, X)
        dLOG = rng.normal(size=LOGITS.shape)
        dZS = rng.normal(size=ZS.shape)
        g_c = compiled.backward_batch(W2, W3, X, H, ZS, dLOG, dZS)
        g_p = _fallback.backward_batch(W2, W3, X, H, ZS, dLOG, dZS)
        for a, b in zip(g_c, g_p):
            assert np.abs(a - b).max() < 1e-12
