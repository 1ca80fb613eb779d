"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment
variable ``BLINDOFDM_DISABLE_NUMBA`` is unset (or ``0``). Both paths are
always importable under explicit names (``*_numba`` / ``*_numpy``) so the
test-suite and the benchmark can compare them directly.
"""

import os

import numpy as np

_DISABLED = os.environ.get("BLINDOFDM_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED

# relative slack for demapper ties; keeps exact midpoints deterministic
TIE_RTOL = 1e-12


# ---------------------------------------------------------------------------
# MIMO FIR filtering: out[j, t] = sum_i sum_l h[i, j, l] * s[i, t - l]
# ---------------------------------------------------------------------------

def fir_mimo_numpy(s, h):
    n_tx, T = s.shape
    _, n_rx, L = h.shape
    out = np.zeros((n_rx, T), dtype=np.complex128)
    for i in range(n_tx):
        for j in range(n_rx):
            out[j] += np.convolve(s[i], h[i, j])[:T]
    return out


def _fir_mimo_loop(s, h):
    n_tx, T = s.shape
    n_rx = h.shape[1]
    L = h.shape[2]
    out = np.zeros((n_rx, T), dtype=np.complex128)
    for j in range(n_rx):
        for i in range(n_tx):
            for t in range(T):
                acc = 0j
                lmax = min(L, t + 1)
                for l in range(lmax):
                    acc += h[i, j, l] * s[i, t - l]
                out[j, t] += acc
    return out


# ---------------------------------------------------------------------------
# Nearest-point demapping with lowest-index tie break
# ---------------------------------------------------------------------------

def demap_nearest_numpy(y, points):
    d = np.abs(y[:, None] - points[None, :]) ** 2
    dmin = d.min(axis=1, keepdims=True)
    # first index within the tie band
    return np.argmax(d <= dmin * (1.0 + TIE_RTOL) + 1e-300, axis=1).astype(np.int64)


def _demap_nearest_loop(y, points):
    n = y.shape[0]
    m = points.shape[0]
    out = np.empty(n, dtype=np.int64)
    d = np.empty(m)
    for k in range(n):
        dmin = np.inf
        for p in range(m):
            dr = y[k].real - points[p].real
            di = y[k].imag - points[p].imag
            d[p] = dr * dr + di * di
            if d[p] < dmin:
                dmin = d[p]
        thr = dmin * (1.0 + TIE_RTOL) + 1e-300
        for p in range(m):
            if d[p] <= thr:
                out[k] = p
                break
    return out


# ---------------------------------------------------------------------------
# Windowed sample covariance: (1/n) sum_w x_w x_w^H, x_w are rows of X
# ---------------------------------------------------------------------------

def covariance_numpy(X):
    return (X.T @ X.conj()) / X.shape[0]


def _covariance_loop(X):
    n, d = X.shape
    R = np.zeros((d, d), dtype=np.complex128)
    for w in range(n):
        for a in range(d):
            xa = X[w, a]
            for b in range(a, d):
                R[a, b] += xa * np.conj(X[w, b])
    for a in range(d):
        for b in range(a + 1, d):
            R[b, a] = np.conj(R[a, b])
    return R / n


# ---------------------------------------------------------------------------
# Shift operator for one noise vector
#
# Phi[i*N + tau, i*Mr*L + j*L + l] = g[j*R + (tau + l - L)]
# whenever L <= tau + l < N, with N = J(K+P) and R = N - L.
# ---------------------------------------------------------------------------

def phi_numpy(g, n_tx, n_rx, L, N):
    R = N - L
    block = np.zeros((N, n_rx * L), dtype=np.complex128)
    gj = g.reshape(n_rx, R)
    for l in range(L):
        # tau runs over [L - l, N - l)
        block[L - l:N - l, l::L] = gj.T
    return np.kron(np.eye(n_tx), block)


def _phi_loop(g, n_tx, n_rx, L, N):
    R = N - L
    out = np.zeros((n_tx * N, n_tx * n_rx * L), dtype=np.complex128)
    for i in range(n_tx):
        for j in range(n_rx):
            for l in range(L):
                col = i * n_rx * L + j * L + l
                for tau in range(L - l, N - l):
                    out[i * N + tau, col] = g[j * R + tau + l - L]
    return out


# ---------------------------------------------------------------------------
# Per-transmitter quadratic form
#
# Q0 = sum_c M_c M_c^H, M_c[(j,l), k] = sum_{t=L}^{N-1} conj(G[j*R + t - L, c]) * C[t - l, k]
# where C = I_J kron W (N x JK). This is sum_c Phi_c^H C C^H Phi_c restricted
# to one transmitter block.
# ---------------------------------------------------------------------------

def quad_form_numpy(G, C, n_rx, L):
    N, JK = C.shape
    R = N - L
    g = G.shape[1]
    Gj = G.reshape(n_rx, R, g)
    M = np.empty((g, n_rx, L, JK), dtype=np.complex128)
    for l in range(L):
        Cl = C[L - l:N - l]  # rows t - l for t in [L, N)
        M[:, :, l, :] = np.einsum("jtc,tk->cjk", Gj.conj(), Cl)
    M = M.reshape(g, n_rx * L, JK)
    Q0 = np.einsum("cak,cbk->ab", M, M.conj())
    return 0.5 * (Q0 + Q0.conj().T)


def _quad_form_loop(G, C, n_rx, L):
    N, JK = C.shape
    R = N - L
    g = G.shape[1]
    D = n_rx * L
    Q0 = np.zeros((D, D), dtype=np.complex128)
    M = np.empty((D, JK), dtype=np.complex128)
    for c in range(g):
        for j in range(n_rx):
            for l in range(L):
                a = j * L + l
                for k in range(JK):
                    acc = 0j
                    for t in range(L, N):
                        acc += np.conj(G[j * R + t - L, c]) * C[t - l, k]
                    M[a, k] = acc
        for a in range(D):
            for b in range(a, D):
                acc = 0j
                for k in range(JK):
                    acc += M[a, k] * np.conj(M[b, k])
                Q0[a, b] += acc
    for a in range(D):
        for b in range(a + 1, D):
            Q0[b, a] = np.conj(Q0[a, b])
    return Q0


if HAVE_NUMBA:
    fir_mimo_numba = njit(cache=True)(_fir_mimo_loop)
    demap_nearest_numba = njit(cache=True)(_demap_nearest_loop)
    covariance_numba = njit(cache=True)(_covariance_loop)
    phi_numba = njit(cache=True)(_phi_loop)
    quad_form_numba = njit(cache=True)(_quad_form_loop)
else:  # pragma: no cover
    fir_mimo_numba = _fir_mimo_loop
    demap_nearest_numba = _demap_nearest_loop
    covariance_numba = _covariance_loop
    phi_numba = _phi_loop
    quad_form_numba = _quad_form_loop


def _pick(nb, npy):
    return nb if USE_NUMBA else npy


fir_mimo = _pick(fir_mimo_numba, fir_mimo_numpy)
demap_nearest = _pick(demap_nearest_numba, demap_nearest_numpy)
covariance = _pick(covariance_numba, covariance_numpy)
phi_kernel = _pick(phi_numba, phi_numpy)
quad_form = _pick(quad_form_numba, quad_form_numpy)


def backend():
    """Name of the active kernel backend."""
    return "numba" if USE_NUMBA else "numpy"
