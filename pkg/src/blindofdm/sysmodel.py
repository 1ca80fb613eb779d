"""Deterministic signal-model layer.

Constellations, OFDM modulation, DFT/circulant algebra and the block
precoder that maps J frequency-domain blocks to J cyclic-prefixed time
blocks.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
import math

import numpy as np

from . import _accel


class ConfigError(ValueError):
    """Raised for scenario parameters that violate a model invariant."""


class ConstellationKind(str, Enum):
    QPSK = "QPSK"
    QAM16 = "QAM16"


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters of one simulated link.

    ``chan_taps`` is the channel length L assumed by the estimator. The
    simulated channel uses ``true_taps`` when given, otherwise the same L.
    """

    tx_antennas: int
    rx_antennas: int
    subcarriers: int
    cp_len: int
    chan_taps: int
    smoothing: int = 1
    constellation: ConstellationKind = ConstellationKind.QAM16
    signal_power: float = 1.0
    noise_power: float = 0.0
    doppler_fdT: float = 0.0
    blocks_per_packet: int = 16
    packets: int = 1
    seed: int = 0
    true_taps: int | None = None
    pdp: str = "uniform"
    pdp_decay: float = 1.0
    equalizer: str = "zf"

    def __post_init__(self):
        object.__setattr__(self, "constellation", ConstellationKind(self.constellation))
        self.validate()

    def validate(self):
        for name in ("tx_antennas", "rx_antennas", "chan_taps", "smoothing",
                     "blocks_per_packet", "packets", "cp_len"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.subcarriers < 2:
            raise ConfigError(f"subcarriers must be >= 2, got {self.subcarriers}")
        if self.cp_len > self.subcarriers:
            raise ConfigError(f"cp_len={self.cp_len} exceeds subcarriers={self.subcarriers}")
        if not self.signal_power > 0:
            raise ConfigError(f"signal_power must be > 0, got {self.signal_power}")
        if not self.noise_power >= 0:
            raise ConfigError(f"noise_power must be >= 0, got {self.noise_power}")
        if not self.doppler_fdT >= 0:
            raise ConfigError(f"doppler_fdT must be >= 0, got {self.doppler_fdT}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.cp_len < self.chan_taps:
            raise ConfigError(
                f"cyclic prefix too short: cp_len={self.cp_len} < chan_taps={self.chan_taps}")
        if self.true_taps is not None:
            if self.true_taps < 1:
                raise ConfigError("true_taps must be a positive integer")
            if self.cp_len < self.true_taps:
                raise ConfigError(
                    f"cyclic prefix too short: cp_len={self.cp_len} < true_taps={self.true_taps}")
        if self.pdp not in ("uniform", "exponential"):
            raise ConfigError(f"pdp must be 'uniform' or 'exponential', got {self.pdp!r}")
        if self.equalizer not in ("zf", "mmse"):
            raise ConfigError(f"equalizer must be 'zf' or 'mmse', got {self.equalizer!r}")
        if self.noise_dim < 1:
            J, K, P, L = self.smoothing, self.subcarriers, self.cp_len, self.chan_taps
            Mt, Mr = self.tx_antennas, self.rx_antennas
            raise ConfigError(
                "noise subspace is empty: g = J*K*(Mr-Mt) + J*P*Mr - L*Mr = "
                f"{J}*{K}*({Mr}-{Mt}) + {J}*{P}*{Mr} - {L}*{Mr} = {self.noise_dim} < 1")

    @property
    def block_len(self):
        return self.subcarriers + self.cp_len

    @property
    def span(self):
        """Samples per window per antenna before the channel-memory cut, J(K+P)."""
        return self.smoothing * self.block_len

    @property
    def window_len(self):
        return self.rx_antennas * (self.span - self.chan_taps)

    @property
    def signal_dim(self):
        return self.smoothing * self.subcarriers * self.tx_antennas

    @property
    def noise_dim(self):
        return self.window_len - self.signal_dim

    @property
    def channel_taps(self):
        """Length of the simulated (true) channel."""
        return self.chan_taps if self.true_taps is None else self.true_taps

    @property
    def snr_db(self):
        if self.noise_power == 0:
            return math.inf
        return 10.0 * math.log10(self.signal_power / self.noise_power)

    def with_snr(self, snr_db):
        return replace(self, noise_power=self.signal_power * 10.0 ** (-snr_db / 10.0))

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class Constellation:
    points: np.ndarray
    bit_labels: np.ndarray  # (M, bits_per_symbol) uint8
    bits_per_symbol: int

    @property
    def size(self):
        return len(self.points)


# Gray labels per axis, listed in level order (-3, -1, +1, +3)
_GRAY2 = ((0, 0), (0, 1), (1, 1), (1, 0))


def _build_constellation(kind):
    kind = ConstellationKind(kind)
    if kind is ConstellationKind.QPSK:
        levels = np.array([-1.0, 1.0])
        labels = ((0,), (1,))
        scale = math.sqrt(2.0)
    else:
        levels = np.array([-3.0, -1.0, 1.0, 3.0])
        labels = _GRAY2
        scale = math.sqrt(10.0)
    points, bits = [], []
    for iq, i_lab in zip(levels, labels):
        for qq, q_lab in zip(levels, labels):
            points.append(complex(iq, qq) / scale)
            bits.append(i_lab + q_lab)
    return Constellation(np.array(points), np.array(bits, dtype=np.uint8), 2 * len(labels[0]))


_CONSTELLATIONS = {k: _build_constellation(k) for k in ConstellationKind}


def constellation(kind):
    """Gray-mapped unit-energy constellation (first half of the label drives I)."""
    return _CONSTELLATIONS[ConstellationKind(kind)]


def qam_modulate(bits, c):
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    k = c.bits_per_symbol
    if bits.size % k:
        raise ValueError(f"bit count {bits.size} is not a multiple of {k}")
    groups = bits.reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    label_ids = c.bit_labels @ weights
    lookup = np.empty(1 << k, dtype=np.int64)
    lookup[label_ids] = np.arange(c.size)
    return c.points[lookup[groups @ weights]]


def qam_demodulate(symbols, c):
    """Hard decision: bits of the nearest point, ties to the lowest index."""
    y = np.ascontiguousarray(np.asarray(symbols, dtype=np.complex128).ravel())
    idx = _accel.demap_nearest(y, np.ascontiguousarray(c.points))
    return c.bit_labels[idx].ravel()


def dft_matrix(K):
    if K < 1:
        raise ValueError("DFT size must be >= 1")
    n = np.arange(K)
    return np.exp(-2j * np.pi * np.outer(n, n) / K) / np.sqrt(K)


def ofdm_modulate(d, F, P):
    """IFFT one block (x = F^H d) and prepend its last P samples."""
    d = np.asarray(d)
    K = F.shape[0]
    if d.shape[0] != K:
        raise ValueError(f"expected {K} symbols, got {d.shape[0]}")
    if not 0 <= P <= K:
        raise ValueError(f"cyclic prefix length {P} outside [0, {K}]")
    x = F.conj().T @ d
    return np.concatenate([x[K - P:], x])


@dataclass(frozen=True)
class Precoder:
    F: np.ndarray
    W: np.ndarray
    W_tilde: np.ndarray
    smoothing: int = field(default=1)


def precoder_matrix(K, P, J):
    if K < 1 or J < 1 or not 0 <= P <= K:
        raise ValueError(f"invalid precoder dimensions K={K}, P={P}, J={J}")
    F = dft_matrix(K)
    Fh = F.conj().T
    W = np.vstack([Fh[K - P:], Fh])
    return Precoder(F, W, np.kron(np.eye(J), W), J)


def freq_response(h, K):
    """Unnormalized K-point DFT of the zero-padded taps."""
    h = np.asarray(h, dtype=np.complex128)
    if h.shape[-1] > K:
        raise ValueError(f"{h.shape[-1]} taps do not fit in {K} subcarriers")
    return np.fft.fft(h, n=K, axis=-1)


def circulant_matrix(h, K):
    h = np.asarray(h, dtype=np.complex128)
    if h.size > K:
        raise ValueError(f"{h.size} taps do not fit in {K} subcarriers")
    h0 = np.zeros(K, dtype=np.complex128)
    h0[:h.size] = h
    idx = (np.arange(K)[:, None] - np.arange(K)[None, :]) % K
    return h0[idx]


def per_tone_channel(taps, K):
    """Frequency-domain MIMO matrices, shape (K, Mr, Mt).

    ``taps`` is the (Mt, Mr, L) impulse-response grid; entry (j, i) of tone k
    is the response of the tx i -> rx j link.
    """
    taps = getattr(taps, "taps", taps)
    Hf = freq_response(taps, K)  # (Mt, Mr, K)
    return np.transpose(Hf, (2, 1, 0))
