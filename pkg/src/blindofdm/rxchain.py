"""Receiver evaluation: OFDM demodulation, per-tone equalization, NMSE/BER
metrics and the Monte Carlo trial/sweep drivers."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import itertools

import numpy as np

from .channel import NoiseModel, doppler_rho, draw_channel, evolve_channel, transmit
from .estimator import (PilotBlock, blind_estimate, extract_windows, resolve_ambiguity,
                        sample_covariance)
from .sysmodel import constellation, per_tone_channel, precoder_matrix, qam_demodulate, qam_modulate

CSI_MODES = ("blind", "blind_pilot", "perfect")

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TrialRecord:
    seed: int
    snr_db: float
    packets: int
    windows_used: int
    nmse: float
    ber: float
    residual: float
    estimator_L: int
    true_L: int
    doppler_fdT: float
    csi_mode: str
    error: str = ""

    @property
    def ok(self):
        return not self.error


class EqualizerError(np.linalg.LinAlgError):
    pass


def ofdm_demodulate_block(rx_block, F, P):
    """Drop the cyclic prefix and apply F. Works on (..., K+P) arrays."""
    rx_block = np.asarray(rx_block)
    K = F.shape[0]
    if rx_block.shape[-1] != K + P:
        raise ValueError(f"expected blocks of {K + P} samples, got {rx_block.shape[-1]}")
    return rx_block[..., P:] @ F.T


def equalize(tones, chan, method="zf", noise_power=0.0, signal_power=1.0):
    """Per-tone linear MIMO equalizer.

    tones: (..., K, Mr) received tones; chan: (K, Mr, Mt) tone matrices.
    Returns (..., K, Mt).
    """
    tones = np.asarray(tones)
    chan = np.asarray(chan)
    if method == "zf":
        s = np.linalg.svd(chan, compute_uv=False)
        tol = s[:, :1] * max(chan.shape[1:]) * np.finfo(float).eps
        rank = np.count_nonzero(s > tol, axis=1)
        bad = np.nonzero(rank < chan.shape[2])[0]
        if bad.size:
            raise EqualizerError(f"tone {int(bad[0])} channel is rank deficient; ZF undefined")
        G = np.linalg.pinv(chan)  # (K, Mt, Mr)
    elif method == "mmse":
        Hh = np.conj(np.swapaxes(chan, 1, 2))
        reg = (noise_power / signal_power) * np.eye(chan.shape[2])
        G = np.linalg.solve(Hh @ chan + reg, Hh)
    else:
        raise ValueError(f"unknown equalizer {method!r}")
    return np.einsum("kij,...kj->...ki", G, tones)


def nmse(est, truth, align=True):
    """||alpha est - truth||^2 / ||truth||^2 with the best complex scalar alpha."""
    est = np.asarray(est, dtype=np.complex128).ravel()
    truth = np.asarray(truth, dtype=np.complex128).ravel()
    if est.shape != truth.shape:
        raise ValueError("estimate and truth differ in length")
    energy = np.vdot(truth, truth).real
    if energy == 0:
        raise ValueError("true channel has zero energy")
    if align:
        denom = np.vdot(est, est).real
        est = est * (np.vdot(est, truth) / denom) if denom > 0 else est
    return float(np.vdot(est - truth, est - truth).real / energy)


def ber(tx_bits, rx_bits):
    tx_bits = np.asarray(tx_bits).ravel()
    rx_bits = np.asarray(rx_bits).ravel()
    if tx_bits.size != rx_bits.size or tx_bits.size == 0:
        raise ValueError("bit sequences must be non-empty and of equal length")
    return float(np.count_nonzero(tx_bits != rx_bits) / tx_bits.size)


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master, index):
    """Seed of replicate ``index`` under ``master``."""
    return splitmix64((splitmix64(master & _MASK64) + index) & _MASK64)


def _truth_at(taps, L):
    """Pad or cut true taps to the estimator length; returns (vector, cut-off energy)."""
    n_tx, n_rx, Lt = taps.shape
    out = np.zeros((n_tx, n_rx, L), dtype=np.complex128)
    m = min(L, Lt)
    out[:, :, :m] = taps[:, :, :m]
    tail = float(np.sum(np.abs(taps[:, :, m:]) ** 2))
    return out.reshape(-1), tail


@dataclass(frozen=True)
class Packet:
    channel: object  # ChannelSet in force for the whole packet
    bits: np.ndarray  # (B, K, Mt, bits_per_symbol)
    symbols: np.ndarray  # (B, K, Mt), scaled by sqrt(signal_power)
    rx: object  # RxStream


def simulate_packets(cfg, rng, pre=None, channel=None):
    """Generate ``cfg.packets`` packets of random data through a fading channel.

    The channel is drawn from ``rng`` unless given, then evolves between
    packets with correlation J0(2 pi fdT).
    """
    if pre is None:
        pre = precoder_matrix(cfg.subcarriers, cfg.cp_len, cfg.smoothing)
    c = constellation(cfg.constellation)
    Mt, K, P, B = cfg.tx_antennas, cfg.subcarriers, cfg.cp_len, cfg.blocks_per_packet
    amp = np.sqrt(cfg.signal_power)
    noise = NoiseModel(cfg.noise_power)
    rho = doppler_rho(cfg.doppler_fdT)
    Fh = pre.F.conj().T
    ch = draw_channel(rng, cfg) if channel is None else channel
    packets = []
    for p in range(cfg.packets):
        if p:
            ch = evolve_channel(ch, rho, rng)
        bits = rng.integers(0, 2, size=B * K * Mt * c.bits_per_symbol, dtype=np.uint8)
        d = amp * qam_modulate(bits, c).reshape(B, K, Mt)
        x = np.einsum("ak,bki->iba", Fh, d)  # (Mt, B, K)
        s = np.concatenate([x[:, :, K - P:], x], axis=2).reshape(Mt, B * (K + P))
        rx = transmit(s, ch, noise, rng)
        packets.append(Packet(ch, bits.reshape(B, K, Mt, c.bits_per_symbol), d, rx))
    return packets


def run_trial(cfg, csi_mode="blind_pilot", seed=None, channel=None):
    """One Monte Carlo trial of the full link; deterministic in (cfg, seed).

    ``channel`` replaces the random Rayleigh draw for the first packet.
    """
    if csi_mode not in CSI_MODES:
        raise ValueError(f"csi_mode must be one of {CSI_MODES}, got {csi_mode!r}")
    if csi_mode == "blind_pilot" and cfg.blocks_per_packet < 2:
        raise ValueError("blind_pilot needs at least 2 blocks per packet (1 pilot + data)")
    seed = cfg.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    c = constellation(cfg.constellation)
    K, P, Mt, Mr, L = cfg.subcarriers, cfg.cp_len, cfg.tx_antennas, cfg.rx_antennas, cfg.chan_taps
    pre = precoder_matrix(K, P, cfg.smoothing)
    packets = simulate_packets(cfg, rng, pre, channel)

    windows_used = 0
    est = None
    residual = 0.0
    if csi_mode != "perfect":
        W = np.concatenate([extract_windows(pk.rx, cfg) for pk in packets])
        windows_used = W.shape[0]
        if windows_used == 0:
            raise ValueError("packets too short for a single estimation window")
        est, _, _ = blind_estimate(sample_covariance(W), cfg, pre)
        residual = est.residual

    errors = total = 0
    nmses = []
    first = 1 if csi_mode == "blind_pilot" else 0
    amp = np.sqrt(cfg.signal_power)
    for pk in packets:
        ch, bits, d = pk.channel, pk.bits, pk.symbols
        blocks = pk.rx.samples.reshape(Mr, cfg.blocks_per_packet, K + P).transpose(1, 0, 2)
        tones = np.swapaxes(ofdm_demodulate_block(blocks, pre.F, P), 1, 2)  # (B, K, Mr)
        truth, tail = _truth_at(ch.taps, L)
        if csi_mode == "perfect":
            h_use = ch.taps
        else:
            mode = "oracle_scalar" if Mt == 1 else "oracle_subspace"
            aligned, _ = resolve_ambiguity(est, truth, mode)
            err = np.vdot(aligned - truth, aligned - truth).real + tail
            nmses.append(err / (np.vdot(truth, truth).real + tail))
            if csi_mode == "blind_pilot":
                aligned, _ = resolve_ambiguity(est, PilotBlock(d[0], tones[0]), "pilot_block", cfg)
            h_use = aligned.reshape(Mt, Mr, L)
        Hk = per_tone_channel(h_use, K)
        s_hat = equalize(tones[first:], Hk, cfg.equalizer, cfg.noise_power, cfg.signal_power)
        rx_bits = qam_demodulate(s_hat / amp, c)
        tx_bits = bits[first:].ravel()
        errors += np.count_nonzero(rx_bits != tx_bits)
        total += tx_bits.size

    return TrialRecord(
        seed=seed,
        snr_db=cfg.snr_db,
        packets=cfg.packets,
        windows_used=windows_used,
        nmse=float(np.mean(nmses)) if nmses else 0.0,
        ber=errors / total,
        residual=float(residual),
        estimator_L=L,
        true_L=cfg.channel_taps,
        doppler_fdT=cfg.doppler_fdT,
        csi_mode=csi_mode,
    )


@dataclass(frozen=True)
class SweepGrid:
    """Axes of a sweep; empty axes fall back to the base configuration."""

    snr_db: tuple = ()
    taps: tuple = ()
    doppler_fdT: tuple = ()
    seeds: int = 1
    csi_modes: tuple = ("blind_pilot",)
    follow_true_taps: bool = field(default=True)

    def cells(self, cfg):
        snrs = self.snr_db or (cfg.snr_db,)
        taps = self.taps or (cfg.chan_taps,)
        dops = self.doppler_fdT or (cfg.doppler_fdT,)
        return list(itertools.product(snrs, taps, dops, self.csi_modes, range(self.seeds)))


def _cell_config(cfg, grid, snr, L, fdT):
    changes = {"chan_taps": int(L), "doppler_fdT": float(fdT)}
    if grid.follow_true_taps and grid.taps:
        changes["true_taps"] = None
    out = cfg.replace(**changes)
    return out if snr == out.snr_db else out.with_snr(float(snr))


def _run_cell(args):
    cfg, grid, (snr, L, fdT, mode, rep) = args
    seed = derive_seed(cfg.seed, rep)
    try:
        cell = _cell_config(cfg, grid, snr, L, fdT)
        return run_trial(cell, mode, seed)
    except Exception as exc:  # recorded per cell, the sweep continues
        true_L = cfg.channel_taps if not (grid.follow_true_taps and grid.taps) else int(L)
        return TrialRecord(seed, float(snr), cfg.packets, 0, float("nan"), float("nan"), float("nan"),
                           int(L), true_L, float(fdT), mode, error=f"{type(exc).__name__}: {exc}")


def sort_key(r):
    return (r.snr_db, r.estimator_L, r.doppler_fdT, r.csi_mode, r.seed)


def run_sweep(cfg, grid, jobs=1):
    """Evaluate every grid cell; records come back sorted by (snr, L, fdT, mode, seed)."""
    cells = grid.cells(cfg)
    if not cells or grid.seeds < 1 or not grid.csi_modes:
        raise ValueError("empty sweep grid")
    args = [(cfg, grid, cell) for cell in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell, args))
    else:
        records = [_run_cell(a) for a in args]
    return sorted(records, key=sort_key)
