import math
import warnings

import numpy as np
import pytest

from blindofdm.channel import ChannelSet
from blindofdm.rxchain import (EqualizerError, SweepGrid, ber, derive_seed, equalize, nmse,
                               ofdm_demodulate_block, run_sweep, run_trial, splitmix64)
from blindofdm.sysmodel import (SystemConfig, circulant_matrix, dft_matrix, freq_response,
                                ofdm_modulate)

from conftest import crandn


def gray16_awgn_ber(snr_db):
    """Exact bit error rate of unit-energy Gray 16-QAM on AWGN (Es/N0 = snr)."""
    snr = 10 ** (snr_db / 10)
    x = math.sqrt(snr / 5)  # half-spacing over the per-dimension noise std
    q = lambda v: 0.5 * math.erfc(v / math.sqrt(2))
    return 0.25 * (3 * q(x) + 2 * q(3 * x) - q(5 * x))


def flat_channel(Mt=1, Mr=1):
    return ChannelSet(np.ones((Mt, Mr, 1), complex), np.ones(1))


class TestDemod:
    def test_round_trip(self, rng):
        F = dft_matrix(16)
        d = crandn(rng, 16)
        np.testing.assert_allclose(ofdm_demodulate_block(ofdm_modulate(d, F, 4), F, 4), d, atol=1e-12)

    def test_flat(self, rng):
        F = dft_matrix(8)
        d = crandn(rng, 8)
        c = 0.4 - 0.9j
        np.testing.assert_allclose(ofdm_demodulate_block(c * ofdm_modulate(d, F, 2), F, 2), c * d, atol=1e-12)

    def test_two_tap(self, rng):
        K, P = 16, 3
        F = dft_matrix(K)
        h = crandn(rng, 2)
        d = crandn(rng, K)
        y = np.convolve(ofdm_modulate(d, F, P), h)[:K + P]
        np.testing.assert_allclose(ofdm_demodulate_block(y, F, P), freq_response(h, K) * d, atol=1e-10)
        # same thing through the circulant model
        np.testing.assert_allclose(F @ circulant_matrix(h, K) @ F.conj().T @ d,
                                   freq_response(h, K) * d, atol=1e-10)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            ofdm_demodulate_block(np.zeros(7), dft_matrix(4), 2)


class TestEqualize:
    def test_siso_flat(self, rng):
        y = crandn(rng, 8, 1)
        np.testing.assert_allclose(equalize(y, np.ones((8, 1, 1))), y)

    def test_diagonal(self):
        out = equalize(np.array([[1.0, 2.0]]), np.array([[[1.0, 0.0], [0.0, 2.0]]]))
        np.testing.assert_allclose(out, [[1.0, 1.0]])

    def test_mmse_limit(self, rng):
        H = crandn(rng, 6, 2, 2)
        y = crandn(rng, 3, 6, 2)
        zf = equalize(y, H, "zf")
        np.testing.assert_allclose(equalize(y, H, "mmse", 0.0), zf, atol=1e-10)
        assert np.abs(equalize(y, H, "mmse", 1e-13) - zf).max() < 1e-8

    def test_tall_channel(self, rng):
        H = crandn(rng, 4, 3, 2)
        s = crandn(rng, 4, 2)
        y = np.einsum("kij,kj->ki", H, s)
        np.testing.assert_allclose(equalize(y, H), s, atol=1e-10)

    def test_rank_deficient_names_tone(self, rng):
        H = crandn(rng, 5, 2, 2)
        H[3] = np.outer([1, 2], [1, 1])
        with pytest.raises(EqualizerError, match="tone 3"):
            equalize(crandn(rng, 5, 2), H)


class TestMetrics:
    def test_nmse_cases(self, rng):
        h = crandn(rng, 12)
        assert nmse(h, h) == 0.0
        assert nmse(2 * h, h) < 1e-28
        assert nmse(np.exp(1.3j) * h, h) < 1e-28
        e = np.zeros(3, complex)
        assert nmse(np.array([0, 1, 0]), np.array([1, 0, 0])) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            nmse(h, np.zeros(12))
        with pytest.raises(ValueError):
            nmse(e, h)

    def test_ber_cases(self, rng):
        b = rng.integers(0, 2, 1000)
        assert ber(b, b) == 0.0
        assert ber(b, 1 - b) == 1.0
        flipped = b.copy()
        flipped[17] ^= 1
        assert ber(b, flipped) == pytest.approx(0.001)
        with pytest.raises(ValueError):
            ber(b, b[:-1])


class TestSeeds:
    def test_splitmix_reference(self):
        # first outputs of the reference splitmix64 generator seeded with 0
        state = 0
        outs = []
        for _ in range(3):
            outs.append(splitmix64(state))
            state = (state + 0x9E3779B97F4A7C15) & (2**64 - 1)
        assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    def test_distinct(self):
        assert len({derive_seed(7, i) for i in range(1000)}) == 1000


class TestTrial:
    def test_perfect_noiseless_is_error_free(self):
        cfg = SystemConfig(4, 4, 16, 8, 8, smoothing=2, blocks_per_packet=40, packets=2)
        rec = run_trial(cfg, "perfect", 3)
        assert rec.ber == 0.0

    def test_deterministic(self):
        cfg = SystemConfig(2, 3, 8, 3, 2, smoothing=2, blocks_per_packet=60, packets=2,
                           doppler_fdT=0.02).with_snr(15)
        assert run_trial(cfg, "blind_pilot", 11) == run_trial(cfg, "blind_pilot", 11)

    def test_record_fields(self):
        cfg = SystemConfig(1, 2, 8, 2, 2, smoothing=2, blocks_per_packet=100).with_snr(20)
        rec = run_trial(cfg, "blind_pilot", 1)
        assert rec.windows_used == 50 and rec.packets == 1
        assert rec.estimator_L == rec.true_L == 2
        assert 0 <= rec.ber <= 1 and rec.nmse >= 0 and rec.ok

    def test_length_mismatch_supported(self):
        cfg = SystemConfig(1, 2, 8, 3, 3, true_taps=2, smoothing=2, blocks_per_packet=200).with_snr(30)
        rec = run_trial(cfg, "blind", 2)
        assert rec.true_L == 2 and rec.estimator_L == 3
        assert rec.nmse < 0.1

    def test_blind_pilot_needs_two_blocks(self):
        cfg = SystemConfig(1, 2, 8, 2, 2, smoothing=2, blocks_per_packet=1)
        with pytest.raises(ValueError):
            run_trial(cfg, "blind_pilot")

    def test_awgn_16qam_20db(self):
        cfg = SystemConfig(1, 1, 64, 2, 1, blocks_per_packet=3907).with_snr(20.0)
        rec = run_trial(cfg, "perfect", 0, channel=flat_channel())
        expected = gray16_awgn_ber(20.0)
        assert expected / 2 <= rec.ber <= 2 * expected

    @pytest.mark.parametrize("snr_db", [8.0, 14.0, 17.0])
    def test_awgn_16qam_curve(self, snr_db):
        # error counts here are in the hundreds or more, so 5% is a tight check
        cfg = SystemConfig(1, 1, 64, 2, 1, blocks_per_packet=3907).with_snr(snr_db)
        rec = run_trial(cfg, "perfect", 0, channel=flat_channel())
        assert rec.ber == pytest.approx(gray16_awgn_ber(snr_db), rel=0.05)

    def test_more_windows_better(self):
        base = SystemConfig(1, 2, 8, 2, 2, smoothing=2).with_snr(30)
        short = [run_trial(base.replace(blocks_per_packet=200), "blind", s).nmse for s in range(10)]
        long = [run_trial(base.replace(blocks_per_packet=2000), "blind", s).nmse for s in range(10)]
        assert np.median(long) < np.median(short)


class TestSweep:
    def test_cardinality_and_order(self):
        cfg = SystemConfig(1, 2, 8, 4, 2, smoothing=2, blocks_per_packet=100, seed=4)
        grid = SweepGrid(snr_db=(25.0, 5.0, 15.0), taps=(2, 3), seeds=5)
        recs = run_sweep(cfg, grid)
        assert len(recs) == 30
        keys = [(r.snr_db, r.estimator_L, r.seed) for r in recs]
        assert keys == sorted(keys)
        assert all(r.ok for r in recs)

    def test_empty(self):
        cfg = SystemConfig(1, 2, 8, 2, 2, smoothing=2)
        with pytest.raises(ValueError):
            run_sweep(cfg, SweepGrid(seeds=0))

    def test_errors_are_recorded(self):
        cfg = SystemConfig(1, 2, 8, 2, 2, smoothing=2, blocks_per_packet=1)
        recs = run_sweep(cfg, SweepGrid(seeds=2, csi_modes=("blind_pilot",)))
        assert len(recs) == 2 and not any(r.ok for r in recs)
        assert "pilot" in recs[0].error

    def test_parallel_matches_serial(self):
        cfg = SystemConfig(2, 3, 8, 3, 2, smoothing=2, blocks_per_packet=120, seed=9)
        grid = SweepGrid(snr_db=(10.0, 20.0), seeds=3)
        assert run_sweep(cfg, grid, jobs=1) == run_sweep(cfg, grid, jobs=3)

    @pytest.mark.slow
    def test_perfect_csi_waterfall(self):
        cfg = SystemConfig(4, 4, 16, 8, 4, smoothing=2, blocks_per_packet=50, seed=1)
        recs = run_sweep(cfg, SweepGrid(snr_db=(5.0, 15.0, 25.0), seeds=10, csi_modes=("perfect",)))
        meds = [np.median([r.ber for r in recs if r.snr_db == s]) for s in (5.0, 15.0, 25.0)]
        assert meds[0] > meds[1] > meds[2]
