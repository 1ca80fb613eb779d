"""Blind subspace channel estimation from received second-order statistics.

Pipeline: windows -> sample covariance -> eigendecomposition -> noise
subspace -> quadratic form in the (conjugated) channel taps -> unit-norm
minimizer -> ambiguity resolution.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from . import _accel
from .channel import filtering_matrix
from .sysmodel import precoder_matrix

# relative tolerance for calling two eigenvalues of Q equal
MULTIPLICITY_RTOL = 1e-6
# signal/noise boundary eigenvalues closer than this (relative) are a tie
BOUNDARY_TIE_RTOL = 1e-9
GAP_WARN_RATIO = 1.05


class SubspaceError(RuntimeError):
    """The signal/noise split is not determined by the covariance."""


@dataclass(frozen=True)
class SampleCovariance:
    matrix: np.ndarray
    count: int


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray  # descending
    vectors: np.ndarray


@dataclass(frozen=True)
class NoiseSubspace:
    basis: np.ndarray  # (W_len, g), orthonormal columns
    g: int
    gap_ratio: float


@dataclass(frozen=True)
class QuadraticForm:
    """Cost matrix of the blind criterion in conj(h).

    ``Q`` is the full (Mt*Mr*L)^2 matrix. It is block diagonal with Mt
    identical blocks ``Q0`` because every transmitter sees the same
    precoder, so ``Q0`` alone holds the information.
    """

    Q: np.ndarray
    Q0: np.ndarray
    n_tx: int


@dataclass(frozen=True)
class ChannelEstimate:
    h_vec: np.ndarray
    residual: float
    multiplicity: int
    null_basis: np.ndarray  # (Mt*Mr*L, multiplicity), conjugated back to h
    tx_basis: np.ndarray  # (Mr*L, Mt): span of the per-transmitter responses

    @property
    def degenerate(self):
        return self.multiplicity > 1


@dataclass(frozen=True)
class PilotBlock:
    """One known block: transmitted symbols (K, Mt) and demodulated tones (K, Mr)."""

    symbols: np.ndarray
    tones: np.ndarray


def extract_windows(rx, cfg, max_windows=None):
    """Cut the stream into non-overlapping J-block windows.

    Window w keeps samples [w*J(K+P) + L, (w+1)*J(K+P)) of each receive
    antenna, stacked antenna-major. Returns an array (n_windows, W_len).
    """
    r = getattr(rx, "samples", rx)
    N, L = cfg.span, cfg.chan_taps
    n = r.shape[1] // N
    if max_windows is not None:
        n = min(n, int(max_windows))
    if n == 0:
        return np.empty((0, cfg.window_len), dtype=np.complex128)
    blocks = r[:, :n * N].reshape(r.shape[0], n, N)[:, :, L:]
    return np.ascontiguousarray(blocks.transpose(1, 0, 2).reshape(n, -1))


def sample_covariance(windows):
    X = np.ascontiguousarray(np.asarray(windows, dtype=np.complex128))
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need at least one window")
    R = _accel.covariance(X)
    return SampleCovariance(0.5 * (R + R.conj().T), X.shape[0])


def eigendecompose(cov):
    R = getattr(cov, "matrix", cov)
    scale = max(np.abs(R).max(), np.finfo(float).tiny)
    if np.abs(R - R.conj().T).max() > 1e-10 * scale:
        raise ValueError("covariance is not Hermitian")
    w, U = np.linalg.eigh(0.5 * (R + R.conj().T))
    return EigenSystem(w[::-1].copy(), U[:, ::-1].copy())


def noise_subspace(es, cfg):
    """Eigenvectors of the g smallest eigenvalues.

    The split is fixed by dimension (J*K*Mt signal eigenvalues). An exact
    tie across the boundary raises; a weak gap under noise only warns.
    """
    d = cfg.signal_dim
    g = cfg.noise_dim
    if g < 1 or d < 1 or d + g != len(es.values):
        raise ValueError(f"inconsistent subspace split: {d} + {g} != {len(es.values)}")
    lam = np.maximum(es.values, 0.0)
    top = max(lam[0], np.finfo(float).tiny)
    if lam[d - 1] - lam[d] <= BOUNDARY_TIE_RTOL * top:
        raise SubspaceError(
            f"eigenvalues {d} and {d + 1} coincide ({lam[d - 1]:.3e} vs {lam[d]:.3e}); "
            "signal subspace is not identifiable")
    ratio = lam[d - 1] / lam[d] if lam[d] > 0 else np.inf
    if ratio < GAP_WARN_RATIO:
        warnings.warn(f"weak signal/noise eigenvalue gap (ratio {ratio:.4f})", RuntimeWarning, stacklevel=2)
    return NoiseSubspace(np.ascontiguousarray(es.vectors[:, d:]), g, float(ratio))


def phi_operator(g_vec, cfg):
    """Rearrange a window-space vector so that H^H g = Phi conj(h_vec).

    Shape (Mt*J(K+P), Mt*Mr*L); h_vec runs tap-fastest, then rx, then tx.
    """
    g_vec = np.asarray(g_vec, dtype=np.complex128)
    if g_vec.shape != (cfg.window_len,):
        raise ValueError(f"expected a vector of length {cfg.window_len}, got shape {g_vec.shape}")
    return _accel.phi_kernel(np.ascontiguousarray(g_vec), cfg.tx_antennas, cfg.rx_antennas,
                             cfg.chan_taps, cfg.span)


def build_quadratic_form(ns, pre, cfg):
    """Q = sum_i Phi_i^H (W~ W~^H) Phi_i over the noise-subspace columns."""
    C = np.ascontiguousarray(pre.W_tilde)
    G = np.ascontiguousarray(getattr(ns, "basis", ns))
    if C.shape != (cfg.span, cfg.smoothing * cfg.subcarriers):
        raise ValueError(f"precoder shape {C.shape} does not match the configuration")
    if G.shape[0] != cfg.window_len:
        raise ValueError(f"noise basis has {G.shape[0]} rows, expected {cfg.window_len}")
    Q0 = _accel.quad_form(G, C, cfg.rx_antennas, cfg.chan_taps)
    Q = np.kron(np.eye(cfg.tx_antennas), Q0)
    return QuadraticForm(Q, Q0, cfg.tx_antennas)


def _fix_phase(v):
    k = np.argmax(np.abs(v))
    if np.abs(v[k]) == 0:
        return v
    return v * (np.conj(v[k]) / np.abs(v[k]))


def estimate_channel(qf):
    """Unit-norm minimizer of conj(h)^H Q conj(h), conjugated back to h."""
    Q = getattr(qf, "Q", qf)
    Q0 = getattr(qf, "Q0", Q)
    n_tx = getattr(qf, "n_tx", 1)
    w, V = np.linalg.eigh(0.5 * (Q + Q.conj().T))
    scale = max(abs(w[-1]), np.finfo(float).tiny)
    mult = int(np.count_nonzero(w - w[0] <= MULTIPLICITY_RTOL * scale))
    h = _fix_phase(np.conj(V[:, 0]))
    h = h / np.linalg.norm(h)

    w0, V0 = np.linalg.eigh(0.5 * (Q0 + Q0.conj().T))
    tx_basis = np.stack([_fix_phase(np.conj(V0[:, m])) for m in range(n_tx)], axis=1)
    return ChannelEstimate(h, float(w[0]), mult, np.conj(V[:, :mult]), tx_basis)


def _pilot_design(tx_basis, pilot, cfg):
    """Columns are (tx i, basis m); rows are (tone k, rx j)."""
    K, Mr, Mt, L = cfg.subcarriers, cfg.rx_antennas, cfg.tx_antennas, cfg.chan_taps
    V = tx_basis.reshape(Mr, L, -1)
    Vf = np.fft.fft(V, n=K, axis=1)  # (Mr, K, m)
    s = np.asarray(pilot.symbols).reshape(K, Mt)
    D = np.einsum("jkm,ki->kjim", Vf, s)
    return D.reshape(K * Mr, Mt * V.shape[2])


def resolve_ambiguity(est, reference, mode="oracle_scalar", cfg=None):
    """Fix the blind ambiguity; returns (aligned h_vec, mixing).

    oracle_scalar: ``reference`` is the true h_vec; mixing is the scalar
        alpha minimizing ||alpha h_hat - h_true||.
    oracle_subspace: ``reference`` is the true h_vec; each transmitter's
        response is projected onto ``est.tx_basis`` (diagnostic only).
    pilot_block: ``reference`` is a PilotBlock; the Mt x Mt mixing of
        ``est.tx_basis`` is fit by least squares to the pilot tones. For a
        single transmitter this is the scalar alpha.
    """
    h_hat = est.h_vec
    if mode == "oracle_scalar":
        h_true = np.asarray(reference).ravel()
        alpha = np.vdot(h_hat, h_true) / np.vdot(h_hat, h_hat).real
        return alpha * h_hat, np.array([[alpha]])
    V = est.tx_basis
    if mode == "oracle_subspace":
        h_true = np.asarray(reference).ravel()
        n_tx = h_true.size // V.shape[0]
        Ht = h_true.reshape(n_tx, V.shape[0]).T  # (Mr*L, Mt)
        mix, *_ = np.linalg.lstsq(V, Ht, rcond=None)
        return (V @ mix).T.reshape(-1), mix
    if mode == "pilot_block":
        if reference is None or cfg is None:
            raise ValueError("pilot_block mode needs a PilotBlock and the configuration")
        D = _pilot_design(V, reference, cfg)
        y = np.asarray(reference.tones).reshape(-1)
        coef, *_ = np.linalg.lstsq(D, y, rcond=None)
        mix = coef.reshape(cfg.tx_antennas, V.shape[1]).T  # column i mixes tx i
        return (V @ mix).T.reshape(-1), mix
    raise ValueError(f"unknown ambiguity mode {mode!r}")


def signal_matrix(ch, cfg, pre=None):
    """A = H (I_Mt kron W~): maps the stacked data of one window to the window."""
    if pre is None:
        pre = precoder_matrix(cfg.subcarriers, cfg.cp_len, cfg.smoothing)
    H = filtering_matrix(ch, cfg)
    return H @ np.kron(np.eye(cfg.tx_antennas), pre.W_tilde)


def exact_covariance(ch, cfg, pre=None):
    """Model covariance sigma_s^2 A A^H + sigma_b^2 I, with no sampling."""
    A = signal_matrix(ch, cfg, pre)
    R = cfg.signal_power * (A @ A.conj().T) + cfg.noise_power * np.eye(A.shape[0])
    return SampleCovariance(0.5 * (R + R.conj().T), 0)


def orthogonality_residual(ns, A):
    """||G^H A||_F, zero when the noise basis is exactly orthogonal to the signal range."""
    return float(np.linalg.norm(ns.basis.conj().T @ A))


def blind_estimate(cov, cfg, pre=None):
    """Run the full subspace chain on a covariance; returns (estimate, subspace, form)."""
    if pre is None:
        pre = precoder_matrix(cfg.subcarriers, cfg.cp_len, cfg.smoothing)
    ns = noise_subspace(eigendecompose(cov), cfg)
    qf = build_quadratic_form(ns, pre, cfg)
    return estimate_channel(qf), ns, qf
