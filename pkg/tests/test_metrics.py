import math

import numpy as np
import pytest

from binauralkit.audio import AudioBuffer, BinauralBuffer
from binauralkit.metrics import (
    MetricConfig,
    iacc,
    ild,
    ipd,
    isd,
    itd,
    spatial_report,
)
from conftest import noise_buffer
from oracles import oracle_iacc, oracle_ild, oracle_ipd, oracle_isd, oracle_itd

FS = 16000


def stereo(left, right, rate=FS):
    return BinauralBuffer(AudioBuffer(np.asarray(left, float), rate),
                          AudioBuffer(np.asarray(right, float), rate))


def dup(x, rate=FS):
    return stereo(x, np.array(x, float).copy(), rate)


class TestTrivialValues:
    def test_identical_channels(self, rng):
        b = dup(rng.standard_normal(8000))
        assert iacc(b) == pytest.approx(1.0)
        assert ild(b) == pytest.approx(0.0, abs=1e-12)
        assert itd(b) == 0.0
        assert isd(b) == pytest.approx(0.0, abs=1e-12)
        assert ipd(b) == pytest.approx(0.0, abs=1e-12)

    def test_scaled_channel_ild(self, rng):
        x = rng.standard_normal(8000)
        b = stereo(x, 2.0 * x)
        # energy ratio 1/4 per frame
        assert ild(b) == pytest.approx(10.0 * math.log10(4.0), rel=1e-6)
        assert iacc(b) == pytest.approx(1.0)
        assert itd(b) == 0.0
        assert isd(b) == pytest.approx(math.log10(2.0), rel=1e-3)
        assert ipd(b) == pytest.approx(0.0, abs=1e-9)

    def test_pure_delay_itd(self, rng):
        x = rng.standard_normal(8000)
        d = 5
        right = np.concatenate([np.zeros(d), x[:-d]])
        b = stereo(x, right)
        assert itd(b) == pytest.approx(d / FS * 1e3, rel=1e-6)
        assert iacc(b) > 0.95

    def test_delayed_sine_ipd_closed_form(self):
        # 500 Hz delayed by 2 samples: phase difference 2*pi*500*2/16000 = pi/8
        n = np.arange(16000)
        x = np.sin(2.0 * np.pi * 500.0 * n / FS)
        y = np.sin(2.0 * np.pi * 500.0 * (n - 2.0) / FS)
        b = stereo(x, y)
        assert ipd(b) == pytest.approx(math.pi / 8.0, rel=1e-3)

    def test_silence_rejected(self):
        b = dup(np.zeros(8000))
        with pytest.raises(ValueError):
            iacc(b)
        with pytest.raises(ValueError):
            ild(b)
        with pytest.raises(ValueError):
            itd(b)
        with pytest.raises(ValueError):
            isd(b)
        with pytest.raises(ValueError):
            ipd(b)

    def test_antiphase_ipd(self, rng):
        x = rng.standard_normal(8000)
        b = stereo(x, -x)
        assert ipd(b) == pytest.approx(math.pi, abs=1e-9)
        assert iacc(b) == pytest.approx(1.0)  # peak of |correlation|


class TestProperties:
    def _random_pair(self, rng, n=4000):
        shared = rng.standard_normal(n)
        left = shared + 0.3 * rng.standard_normal(n)
        right = np.concatenate([np.zeros(3), shared[:-3]]) + 0.3 * rng.standard_normal(n)
        # splice in silence so gating participates
        left[1200:2000] = 0.0
        right[1200:2000] = 0.0
        return stereo(left, right)

    def test_channel_swap_invariance(self, rng):
        b = self._random_pair(rng)
        swapped = BinauralBuffer(b.right, b.left)
        for fn in (iacc, ild, itd, isd, ipd):
            assert fn(b) == pytest.approx(fn(swapped), rel=1e-9)

    def test_common_gain_invariance(self, rng):
        b = self._random_pair(rng)
        loud = stereo(8.0 * b.left.samples, 8.0 * b.right.samples)
        for fn, tol in ((iacc, 1e-9), (ild, 1e-6), (itd, 1e-9), (ipd, 1e-9)):
            assert fn(b) == pytest.approx(fn(loud), rel=1e-4, abs=tol)

    def test_ranges(self, rng):
        for _ in range(5):
            b = self._random_pair(rng)
            assert 0.0 <= iacc(b) <= 1.0
            assert ild(b) >= 0.0
            assert itd(b) >= 0.0
            assert isd(b) >= 0.0
            assert 0.0 <= ipd(b) <= math.pi

    def test_itd_bounded_by_max_lag(self, rng):
        b = self._random_pair(rng)
        cfg = MetricConfig()
        assert itd(b, cfg) <= cfg.max_lag_ms


class TestOracleEquivalence:
    def test_all_metrics_match_direct_summation(self, rng):
        shared = rng.standard_normal(4000)
        left = shared + 0.4 * rng.standard_normal(4000)
        right = np.concatenate([np.zeros(4), shared[:-4]]) + 0.4 * rng.standard_normal(4000)
        left[800:1600] = 0.0
        right[800:1600] = 0.0
        b = stereo(left, right)
        cfg = MetricConfig()
        lag = cfg.max_lag_samples(FS)
        assert iacc(b, cfg) == pytest.approx(oracle_iacc(left, right, lag), rel=1e-9)
        assert ild(b, cfg) == pytest.approx(
            oracle_ild(left, right, cfg.frame_size, cfg.hop,
                       cfg.silence_gate_db, cfg.epsilon), rel=1e-9)
        assert itd(b, cfg) == pytest.approx(
            oracle_itd(left, right, cfg.frame_size, cfg.hop, lag,
                       cfg.silence_gate_db, FS), rel=1e-9)
        assert isd(b, cfg) == pytest.approx(
            oracle_isd(left, right, cfg.stft_frame, cfg.stft_hop,
                       cfg.silence_gate_db, cfg.epsilon), rel=1e-9)
        assert ipd(b, cfg) == pytest.approx(
            oracle_ipd(left, right, cfg.stft_frame, cfg.stft_hop,
                       cfg.silence_gate_db), rel=1e-9)


class TestReport:
    def test_report_fields_consistent(self, rng):
        b = dup(rng.standard_normal(8000))
        rep = spatial_report(b)
        assert rep.iacc == pytest.approx(iacc(b))
        assert rep.ild_db == pytest.approx(ild(b))
        assert rep.itd_ms == itd(b)
        assert rep.isd == pytest.approx(isd(b))
        assert rep.ipd_rad == pytest.approx(ipd(b))
        assert rep.frames_used == 1 + (8000 - 400) // 160

    def test_json_sorted_keys(self, rng):
        rep = spatial_report(dup(rng.standard_normal(8000)))
        text = rep.to_json()
        keys = ["frames_used", "iacc", "ild_db", "ipd_rad", "isd", "itd_ms"]
        positions = [text.index(f'"{k}"') for k in keys]
        assert positions == sorted(positions)

    def test_gated_frames_excluded_from_count(self, rng):
        x = rng.standard_normal(8000)
        x[:4000] = 0.0
        rep = spatial_report(dup(x))
        assert rep.frames_used < 1 + (8000 - 400) // 160
