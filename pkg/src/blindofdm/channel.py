"""Frequency-selective Rayleigh channels, packet-level Doppler and transmission."""

from dataclasses import dataclass
from decimal import Decimal, localcontext
import math

import numpy as np

from . import _accel


@dataclass(frozen=True)
class ChannelSet:
    """Impulse responses of every tx -> rx link.

    taps has shape (Mt, Mr, L); ``taps[i, j]`` is the L-tap response from
    transmit antenna i to receive antenna j.
    """

    taps: np.ndarray
    pdp: np.ndarray

    def __post_init__(self):
        if self.taps.ndim != 3:
            raise ValueError("taps must have shape (Mt, Mr, L)")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("channel taps must be finite")
        if self.pdp.shape != (self.taps.shape[2],):
            raise ValueError("pdp length must equal the tap count")

    @property
    def shape(self):
        return self.taps.shape

    def vector(self):
        """Flatten with tap fastest, then rx antenna, then tx antenna."""
        return self.taps.reshape(-1).copy()

    @classmethod
    def from_vector(cls, h_vec, n_tx, n_rx, L, pdp=None):
        if pdp is None:
            pdp = np.full(L, 1.0 / L)
        return cls(np.asarray(h_vec, dtype=np.complex128).reshape(n_tx, n_rx, L), np.asarray(pdp, float))


@dataclass(frozen=True)
class NoiseModel:
    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"noise variance must be >= 0, got {self.variance}")


def make_pdp(L, kind="uniform", decay=1.0):
    """Power-delay profile normalized to unit total power."""
    if kind == "uniform":
        p = np.ones(L)
    elif kind == "exponential":
        p = np.exp(-np.arange(L) / decay)
    else:
        raise ValueError(f"unknown pdp kind {kind!r}")
    return p / p.sum()


def _check_pdp(pdp, L):
    pdp = np.asarray(pdp, dtype=float)
    if pdp.shape != (L,) or np.any(pdp < 0) or not np.isclose(pdp.sum(), 1.0, atol=1e-9):
        raise ValueError("pdp must be a nonnegative length-L vector summing to 1")
    return pdp


def _cn(rng, shape, var):
    """Circularly-symmetric complex Gaussian samples with per-element variance ``var``."""
    z = rng.standard_normal(shape + (2,))
    return np.sqrt(np.asarray(var) / 2.0) * (z[..., 0] + 1j * z[..., 1])


def draw_channel(rng, cfg, pdp=None):
    L = cfg.channel_taps
    if pdp is None:
        pdp = make_pdp(L, cfg.pdp, cfg.pdp_decay)
    pdp = _check_pdp(pdp, L)
    taps = _cn(rng, (cfg.tx_antennas, cfg.rx_antennas, L), pdp)
    return ChannelSet(taps, pdp)


def doppler_rho(fdT):
    """Packet correlation J0(2*pi*fdT), summed as a power series.

    The series alternates with terms as large as ~exp(x), so it is summed in
    decimal arithmetic with enough guard digits to keep the absolute error
    far below 1e-10.
    """
    if fdT < 0:
        raise ValueError("fdT must be >= 0")
    x = 2.0 * math.pi * fdT
    guard = 30 + int(x / math.log(10)) + 1
    with localcontext() as ctx:
        ctx.prec = guard
        q = -(Decimal(x) / 2) ** 2
        term = Decimal(1)
        total = Decimal(1)
        k = 0
        eps = Decimal(10) ** (-guard + 5)
        while True:
            k += 1
            term = term * q / (k * k)
            total += term
            if k > q.copy_abs() and term.copy_abs() < eps:
                break
        return float(total)


def evolve_channel(ch, rho, rng):
    """One AR(1) step: h' = rho h + sqrt(1 - rho^2) w, w ~ CN(0, pdp)."""
    if abs(rho) > 1:
        raise ValueError(f"|rho| must be <= 1, got {rho}")
    if rho == 1:
        return ch
    w = _cn(rng, ch.taps.shape, ch.pdp)
    return ChannelSet(rho * ch.taps + math.sqrt(1.0 - rho * rho) * w, ch.pdp)


def convolution_matrix(h, N, L_cut):
    """(N - L_cut) x N Toeplitz filter of taps ``h`` keeping outputs t in [L_cut, N)."""
    h = np.asarray(h)
    T = np.zeros((N - L_cut, N), dtype=np.complex128)
    rows = np.arange(L_cut, N)
    for l, hl in enumerate(h):
        cols = rows - l
        ok = cols >= 0
        T[np.nonzero(ok)[0], cols[ok]] = hl
    return T


def filtering_matrix(ch, cfg):
    """Stacked MIMO convolution over one J-block window.

    Row blocks are receive antennas, column blocks transmit antennas; each
    block keeps the J(K+P) - L outputs that depend only on in-window inputs.
    The estimator's L (``cfg.chan_taps``) sets the cut, so a channel given
    with fewer taps is treated as zero-padded.
    """
    taps = getattr(ch, "taps", ch)
    n_tx, n_rx, L_true = taps.shape
    N, L = cfg.span, cfg.chan_taps
    if L_true > L:
        raise ValueError(f"channel has {L_true} taps but the window assumes {L}")
    R = N - L
    H = np.zeros((n_rx * R, n_tx * N), dtype=np.complex128)
    for i in range(n_tx):
        for j in range(n_rx):
            H[j * R:(j + 1) * R, i * N:(i + 1) * N] = convolution_matrix(taps[i, j], N, L)
    return H


@dataclass(frozen=True)
class RxStream:
    samples: np.ndarray  # (Mr, T)

    @property
    def length(self):
        return self.samples.shape[1]


def transmit(s_streams, ch, noise, rng):
    """Pass the Mt transmit streams through the channel and add AWGN.

    Inputs before t = 0 are taken as zero.
    """
    if not isinstance(s_streams, np.ndarray) and len({len(x) for x in s_streams}) > 1:
        raise ValueError("transmit streams differ in length")
    s = np.asarray(s_streams, dtype=np.complex128)
    if s.ndim != 2:
        raise ValueError("expected a (Mt, T) array of equal-length streams")
    taps = ch.taps
    if s.shape[0] != taps.shape[0]:
        raise ValueError(f"{s.shape[0]} streams for {taps.shape[0]} transmit antennas")
    if s.shape[1] < taps.shape[2]:
        raise ValueError("streams shorter than the channel")
    r = _accel.fir_mimo(np.ascontiguousarray(s), np.ascontiguousarray(taps))
    var = noise.variance if isinstance(noise, NoiseModel) else float(noise)
    if var > 0:
        r = r + _cn(rng, r.shape, var)
    return RxStream(r)
