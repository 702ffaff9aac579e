"""Unit tests for transmitter frame synthesis and the channel model."""
import math

import numpy as np
import pytest

from ponqkd.errors import GateScheduleError, WaveformConfigError
from ponqkd.security import UserChannelParams
from ponqkd.waveform import (
    TRUNC3_EXCESS_KURTOSIS,
    TRUNC3_VARIANCE,
    ComplexWaveform,
    FrameLayout,
    WaveformConfig,
    apply_channel,
    build_frame,
    gate_calibration_frames,
    generate_gaussian_symbols,
    load_waveform,
    rrc_shape_and_shift,
    rrc_taps,
    save_waveform,
)

WCFG = WaveformConfig()


class TestWaveformConfig:
    def test_defaults_valid(self):
        assert WCFG.sample_rate_hz == 80e6

    def test_nyquist_violation(self):
        with pytest.raises(WaveformConfigError):
            WaveformConfig(symbol_rate_hz=10e6, oversampling=2, if_offset_hz=9e6)


class TestFrameLayout:
    def test_ratio_arithmetic(self):
        layout = FrameLayout(800, 0.2)
        assert layout.n_total == 1000
        assert layout.n_pilots == 200

    def test_zero_ratio_passthrough(self):
        layout = FrameLayout(100, 0.0)
        assert layout.n_total == 100
        assert layout.n_pilots == 0
        syms = np.arange(100) + 0j
        np.testing.assert_array_equal(build_frame(syms, layout), syms)

    def test_pattern_repetition(self):
        layout = FrameLayout(800, 0.2, pattern_period=64)
        pilots = layout.pilot_symbols(1.0)
        assert len(pilots) == 200  # 3 full periods + 8
        np.testing.assert_allclose(pilots[:64], pilots[64:128])
        np.testing.assert_allclose(pilots[128:136], pilots[:8])

    def test_incompatible_count_rejected(self):
        with pytest.raises(ValueError):
            FrameLayout(801, 0.2)

    def test_deterministic_positions(self):
        layout = FrameLayout(80, 0.2)
        pos = layout.pilot_positions()
        assert pos[0] == 0
        assert np.all(np.diff(pos) == 5)


class TestGaussianSymbols:
    def test_variance_target(self):
        rng = np.random.default_rng(1)
        s = generate_gaussian_symbols(1_000_000, 4.3, rng)
        band = 3.0 * 4.3 * math.sqrt(2.0 / 1e6)
        assert abs(np.var(s.real) - 4.3) < band
        assert abs(np.var(s.imag) - 4.3) < band

    def test_truncation_bound(self):
        rng = np.random.default_rng(2)
        s = generate_gaussian_symbols(200_000, 4.3, rng)
        bound = 3.0 * math.sqrt(4.3 / TRUNC3_VARIANCE)
        assert np.max(np.abs(s.real)) <= bound + 1e-12
        assert np.max(np.abs(s.imag)) <= bound + 1e-12

    def test_deterministic(self):
        a = generate_gaussian_symbols(1000, 4.3, np.random.default_rng(7))
        b = generate_gaussian_symbols(1000, 4.3, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)

    def test_kurtosis_matches_truncated_normal(self):
        rng = np.random.default_rng(3)
        s = generate_gaussian_symbols(1_000_000, 1.0, rng)
        for quad in (s.real, s.imag):
            kurt = np.mean(quad**4) / np.var(quad) ** 2 - 3.0
            assert abs(kurt - TRUNC3_EXCESS_KURTOSIS) < 3.0 * math.sqrt(24.0 / len(quad))


class TestBuildFrame:
    def test_pilot_amplitude_matches_quantum_rms(self):
        rng = np.random.default_rng(4)
        layout = FrameLayout(8000, 0.2)
        syms = generate_gaussian_symbols(layout.n_quantum, 4.3, rng)
        frame = build_frame(syms, layout)
        mask = layout.pilot_mask()
        rms_q = math.sqrt(0.5 * np.mean(np.abs(frame[~mask]) ** 2))
        rms_p = math.sqrt(0.5 * np.mean(np.abs(frame[mask]) ** 2))
        assert rms_p == pytest.approx(rms_q, rel=1e-12)

    def test_wrong_count_rejected(self):
        with pytest.raises(ValueError):
            build_frame(np.zeros(10, complex), FrameLayout(800, 0.2))


class TestRrcShaping:
    def test_impulse_response(self):
        cfg = WaveformConfig(pilot_tone_power_db=-300.0)
        w = rrc_shape_and_shift(np.array([1.0 + 0j]), cfg)
        taps = rrc_taps(cfg.oversampling, cfg.rrc_rolloff, cfg.rrc_span_symbols)
        np.testing.assert_allclose(w.samples[: len(taps)], taps, atol=1e-7)

    def test_nyquist_isi(self):
        taps = rrc_taps(8, 0.3, 16)
        rc = np.convolve(taps, taps)
        mid = len(rc) // 2
        peak = rc[mid]
        others = np.concatenate([rc[mid::-8][1:], rc[mid::8][1:]])
        isi = np.sum(others**2) / peak**2
        assert 10 * math.log10(isi) <= -40.0

    def test_pilot_tone_peak_position(self):
        rng = np.random.default_rng(5)
        layout = FrameLayout(4000, 0.2)
        frame = build_frame(generate_gaussian_symbols(layout.n_quantum, 4.3, rng), layout)
        w = rrc_shape_and_shift(frame, WCFG)
        spec = np.abs(np.fft.fft(w.samples)) ** 2
        freqs = np.fft.fftfreq(len(w.samples), 1.0 / w.sample_rate_hz)
        peak = freqs[int(np.argmax(spec))]
        bin_width = w.sample_rate_hz / len(w.samples)
        assert abs(peak - WCFG.pilot_shift_hz) <= bin_width

    def test_energy_accounting(self):
        rng = np.random.default_rng(6)
        layout = FrameLayout(40_000, 0.2)
        frame = build_frame(generate_gaussian_symbols(layout.n_quantum, 4.3, rng), layout)
        w = rrc_shape_and_shift(frame, WCFG)
        spec = np.abs(np.fft.fft(w.samples)) ** 2 / len(w.samples) ** 2
        freqs = np.fft.fftfreq(len(w.samples), 1.0 / w.sample_rate_hz)
        pilot_band = np.abs(freqs - WCFG.pilot_shift_hz) < 0.5e6
        quantum_band = np.abs(freqs) < 7.0e6
        total = np.mean(np.abs(w.samples) ** 2)
        parts = spec[pilot_band].sum() + spec[quantum_band].sum()
        assert parts == pytest.approx(total, rel=1e-3)


class TestGating:
    def test_all_on_identity(self):
        w = ComplexWaveform(np.ones(100, complex), 1.0)
        out = gate_calibration_frames(w, [])
        np.testing.assert_array_equal(out.samples, w.samples)

    def test_extinction(self):
        w = ComplexWaveform(np.ones(100, complex), 1.0)
        out = gate_calibration_frames(w, [(0, 50)])
        assert np.all(np.abs(out.samples[:50]) == pytest.approx(1e-5))
        assert np.all(out.samples[50:] == 1.0)
        assert out.segments[0].gated and not out.segments[1].gated

    def test_overlap_rejected(self):
        w = ComplexWaveform(np.ones(100, complex), 1.0)
        with pytest.raises(GateScheduleError):
            gate_calibration_frames(w, [(0, 50), (40, 60)])

    def test_annotation_roundtrip(self, tmp_path):
        w = ComplexWaveform(np.exp(1j * np.arange(64)), 8.0)
        gated = gate_calibration_frames(w, [(8, 16), (32, 40)])
        path = save_waveform(gated, tmp_path / "wf")
        back = load_waveform(path)
        assert [(s.start, s.stop, s.gated) for s in back.segments] == [
            (s.start, s.stop, s.gated) for s in gated.segments
        ]
        np.testing.assert_allclose(back.samples, gated.samples)
        assert back.sample_rate_hz == 8.0


class TestApplyChannel:
    def test_identity_without_impairments(self):
        cfg = WaveformConfig(if_offset_hz=0.0, laser_linewidth_hz=0.0)
        w = ComplexWaveform(np.exp(1j * np.arange(4096) / 50.0), cfg.sample_rate_hz)
        out = apply_channel(
            w,
            UserChannelParams(1.0),
            cfg,
            np.random.default_rng(0),
            include_heterodyne_split=False,
            shot_noise=False,
            excess_noise=False,
        )
        np.testing.assert_allclose(out.samples, w.samples, atol=1e-12)

    def test_heterodyne_split_scale(self):
        cfg = WaveformConfig(if_offset_hz=0.0, laser_linewidth_hz=0.0)
        w = ComplexWaveform(np.ones(1024, complex), cfg.sample_rate_hz)
        out = apply_channel(
            w, UserChannelParams(0.5), cfg, np.random.default_rng(0),
            shot_noise=False, excess_noise=False,
        )
        np.testing.assert_allclose(out.samples, math.sqrt(0.25) * w.samples, atol=1e-12)

    def test_gated_region_is_pure_unit_noise(self):
        """Signal-off intervals carry exactly the shot-noise floor at the
        matched-filter symbol grid (calibration-frame definition)."""
        rng = np.random.default_rng(8)
        layout = FrameLayout(40_000, 0.2)
        frame = build_frame(generate_gaussian_symbols(layout.n_quantum, 4.3, rng), layout)
        w = rrc_shape_and_shift(frame, WCFG)
        gated = gate_calibration_frames(w, [(0, len(w.samples))])
        out = apply_channel(gated, UserChannelParams(0.5, 0.05), WCFG, rng, layout=layout)
        from ponqkd.waveform import _basis_projections

        taps = rrc_taps(WCFG.oversampling, WCFG.rrc_rolloff, WCFG.rrc_span_symbols)
        t = np.arange(len(out.samples)) / out.sample_rate_hz
        base = out.samples * np.exp(-2j * np.pi * WCFG.if_offset_hz * t)
        pos = w.meta["symbol0_sample"] + 8 * np.arange(64, layout.n_total - 64)
        proj = _basis_projections(base, taps, pos)
        assert 0.5 * np.mean(np.abs(proj) ** 2) == pytest.approx(1.0, abs=1e-3)

    def test_deterministic(self):
        rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
        layout = FrameLayout(4000, 0.2)
        frame = build_frame(generate_gaussian_symbols(layout.n_quantum, 4.3, np.random.default_rng(1)), layout)
        w = rrc_shape_and_shift(frame, WCFG)
        out_a = apply_channel(w, UserChannelParams(0.1), WCFG, rng_a, layout=layout)
        out_b = apply_channel(w, UserChannelParams(0.1), WCFG, rng_b, layout=layout)
        np.testing.assert_array_equal(out_a.samples, out_b.samples)


class TestWaveformIO:
    def test_roundtrip(self, tmp_path):
        w = ComplexWaveform(np.random.default_rng(0).normal(size=256) + 1j, 80e6, meta={"symbol0_sample": 3})
        path = save_waveform(w, tmp_path / "case")
        back = load_waveform(path)
        np.testing.assert_array_equal(back.samples, w.samples)
        assert back.meta["symbol0_sample"] == 3

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        (tmp_path / "x.bin").write_bytes(b"")
        with pytest.raises(ValueError):
            load_waveform(tmp_path / "x")
