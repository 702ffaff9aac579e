"""Transmitter frame synthesis and channel impairments.

The digital frame interleaves Gaussian quantum symbols with a deterministic
QPSK training sequence of equal amplitude, shapes everything with a
root-raised-cosine filter and adds a strong narrowband pilot tone at a
configurable offset.  ``apply_channel`` then attenuates, rotates (carrier
offset + laser phase noise) and adds detection noise.

Noise convention: the recorded waveform stands for the heterodyne detection
record, so the per-quadrature noise floor at the matched-filter output is
exactly 1 SNU and the field amplitude carries the heterodyne split
``sqrt(tau / 2)``.  The noise realization is calibrated: its projection on
the symbol-rate RRC basis is rescaled to the exact target variance per
gated/ungated window, which removes calibration sampling error from the
desk-scale Monte Carlo (the hardware equivalent averages far longer noise
records than a desk frame can afford).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import GateScheduleError, WaveformConfigError
from .security import UserChannelParams

#: fraction of the field power reaching each quadrature measurement
HETERODYNE_SPLIT = 0.5

#: per-quadrature variance of a standard normal truncated at +/- 3
TRUNC3_VARIANCE = 1.0 - 6.0 * (math.exp(-4.5) / math.sqrt(2.0 * math.pi)) / math.erf(3.0 / math.sqrt(2.0))

#: excess kurtosis of the same truncated normal (normality-check oracle)
TRUNC3_EXCESS_KURTOSIS = (
    (3.0 - 2.0 * 3.0 * (9.0 + 3.0) * (math.exp(-4.5) / math.sqrt(2.0 * math.pi)) / math.erf(3.0 / math.sqrt(2.0)))
    / TRUNC3_VARIANCE**2
    - 3.0
)

#: symbols excluded from noise pinning at window edges (filter transients)
PIN_GUARD_SYMBOLS = 20


@dataclass(frozen=True)
class WaveformConfig:
    """Sampling and band plan of the transmitted frame.

    Desk-scale defaults run in seconds on a laptop; the paper-scale rates
    (1 GHz symbols, 750 MHz pilot shift, ~1.55 GHz carrier offset) are just
    another parameter set since the whole chain is rate-agnostic.
    """

    symbol_rate_hz: float = 10e6
    oversampling: int = 8
    rrc_rolloff: float = 0.3
    rrc_span_symbols: int = 16
    quantum_center_hz: float = 0.0
    pilot_shift_hz: float = 7.5e6
    if_offset_hz: float = 15.5e6
    laser_linewidth_hz: float = 10.0
    pilot_tone_power_db: float = 30.0

    def __post_init__(self):
        if self.oversampling < 2:
            raise WaveformConfigError("oversampling must be >= 2")
        if not 0.0 < self.rrc_rolloff < 1.0:
            raise WaveformConfigError("rrc_rolloff must be in (0, 1)")
        if self.rrc_span_symbols < 4:
            raise WaveformConfigError("rrc_span_symbols must be >= 4")
        if self.laser_linewidth_hz < 0:
            raise WaveformConfigError("laser_linewidth_hz must be >= 0")
        edge = (1.0 + self.rrc_rolloff) * self.symbol_rate_hz / 2.0
        worst = max(abs(self.quantum_center_hz) + edge, abs(self.pilot_shift_hz)) + abs(self.if_offset_hz)
        if worst >= self.sample_rate_hz / 2.0:
            raise WaveformConfigError(
                f"band plan exceeds Nyquist: {worst:.3g} Hz >= {self.sample_rate_hz / 2:.3g} Hz"
            )

    @property
    def sample_rate_hz(self) -> float:
        return self.symbol_rate_hz * self.oversampling


@dataclass(frozen=True)
class FrameLayout:
    """Time interleaving of quantum symbols and the QPSK training sequence.

    The pilot ratio must be rational; within every run of ``q`` symbol slots
    (ratio = p/q in lowest terms) the first ``p`` carry training symbols.
    The training sequence itself is a fixed pseudo-random QPSK pattern of
    period ``pattern_period`` drawn from a documented seed.
    """

    n_quantum: int
    pilot_ratio: float = 0.2
    pattern_period: int = 64
    pattern_seed: int = 20240604

    def __post_init__(self):
        if self.n_quantum < 1:
            raise ValueError("n_quantum must be >= 1")
        if not 0.0 <= self.pilot_ratio < 1.0:
            raise ValueError("pilot_ratio must be in [0, 1)")
        frac = Fraction(self.pilot_ratio).limit_denominator(64)
        if abs(float(frac) - self.pilot_ratio) > 1e-12:
            raise ValueError(f"pilot_ratio must be a simple rational, got {self.pilot_ratio}")
        object.__setattr__(self, "_frac", frac)
        if self.pilot_ratio > 0:
            q = frac.denominator
            if self.n_quantum % (q - frac.numerator):
                raise ValueError(
                    f"n_quantum={self.n_quantum} incompatible with pilot_ratio={frac}: "
                    "total symbol count is not integral"
                )

    @property
    def n_total(self) -> int:
        frac = self._frac
        if frac == 0:
            return self.n_quantum
        return self.n_quantum * frac.denominator // (frac.denominator - frac.numerator)

    @property
    def n_pilots(self) -> int:
        return self.n_total - self.n_quantum

    @property
    def period_symbols(self) -> int:
        """Symbols per full repetition of the training pattern."""
        frac = self._frac
        if frac == 0:
            raise ValueError("layout has no pilots")
        return self.pattern_period * frac.denominator // frac.numerator

    def pilot_mask(self) -> np.ndarray:
        """Boolean mask over the frame: True at training-symbol slots."""
        frac = self._frac
        idx = np.arange(self.n_total)
        if frac == 0:
            return np.zeros(self.n_total, dtype=bool)
        return (idx % frac.denominator) < frac.numerator

    def pilot_positions(self) -> np.ndarray:
        return np.flatnonzero(self.pilot_mask())

    def quantum_positions(self) -> np.ndarray:
        return np.flatnonzero(~self.pilot_mask())

    def pattern(self) -> np.ndarray:
        """Unit-amplitude QPSK training pattern (one period)."""
        rng = np.random.default_rng(self.pattern_seed)
        quad = rng.integers(0, 4, size=self.pattern_period)
        return np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * quad))

    def pilot_symbols(self, amplitude: float) -> np.ndarray:
        """Training symbols for the whole frame at the given RMS amplitude."""
        n = self.n_pilots
        reps = int(np.ceil(n / self.pattern_period))
        return amplitude * np.tile(self.pattern(), reps)[:n]


@dataclass(frozen=True)
class Segment:
    """Half-open sample interval, gated=True while the transmitter is off."""

    start: int
    stop: int
    gated: bool = False


@dataclass
class ComplexWaveform:
    """Sampled complex baseband signal plus frame annotations."""

    samples: np.ndarray
    sample_rate_hz: float
    segments: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if not self.segments:
            self.segments = [Segment(0, len(self.samples))]

    def copy_with(self, samples: np.ndarray, segments=None, **meta) -> "ComplexWaveform":
        merged = dict(self.meta)
        merged.update(meta)
        return ComplexWaveform(
            samples, self.sample_rate_hz, list(segments if segments is not None else self.segments), merged
        )

    def gated_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.samples), dtype=bool)
        for seg in self.segments:
            if seg.gated:
                mask[seg.start : seg.stop] = True
        return mask


def generate_gaussian_symbols(n: int, v_mod: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian quantum symbols from 16-bit uniforms via Box-Muller.

    Pairs with either quadrature beyond 3 sigma are redrawn, then the whole
    sequence is rescaled by the truncated-normal factor so the expected
    per-quadrature variance is v_mod.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if v_mod < 0:
        raise ValueError("v_mod must be >= 0")
    out = np.empty(n, dtype=np.complex128)
    filled = 0
    while filled < n:
        todo = n - filled
        draw = int(todo * 1.06) + 16  # ~2.7% of pairs fail the 3-sigma cut
        u1 = (rng.integers(0, 65536, size=draw).astype(np.float64) + 0.5) / 65536.0
        u2 = (rng.integers(0, 65536, size=draw).astype(np.float64) + 0.5) / 65536.0
        r = np.sqrt(-2.0 * np.log(u1))
        x = r * np.cos(2.0 * np.pi * u2)
        p = r * np.sin(2.0 * np.pi * u2)
        keep = (np.abs(x) <= 3.0) & (np.abs(p) <= 3.0)
        got = min(int(np.sum(keep)), todo)
        out[filled : filled + got] = (x[keep][:got] + 1j * p[keep][:got])
        filled += got
    return out * math.sqrt(v_mod / TRUNC3_VARIANCE)


def build_frame(symbols: np.ndarray, layout: FrameLayout) -> np.ndarray:
    """Interleave quantum symbols with the training sequence.

    The training amplitude matches the quantum RMS amplitude per quadrature
    (sqrt of the expected per-quadrature variance of ``symbols``).
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if len(symbols) != layout.n_quantum:
        raise ValueError(f"expected {layout.n_quantum} quantum symbols, got {len(symbols)}")
    frame = np.empty(layout.n_total, dtype=np.complex128)
    mask = layout.pilot_mask()
    frame[~mask] = symbols
    if layout.n_pilots:
        # equal RMS per quadrature: QPSK modulus = sqrt(2) * per-quadrature RMS
        per_quad_rms = math.sqrt(0.5 * float(np.mean(np.abs(symbols) ** 2)))
        frame[mask] = layout.pilot_symbols(per_quad_rms * math.sqrt(2.0))
    return frame


def rrc_taps(oversampling: int, rolloff: float, span_symbols: int) -> np.ndarray:
    """Unit-energy root-raised-cosine taps (odd length, span in symbols)."""
    n = span_symbols * oversampling
    if n % 2 == 0:
        n += 1
    t = (np.arange(n) - (n - 1) / 2) / oversampling
    a = rolloff
    taps = np.empty(n)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[i] = 1.0 - a + 4.0 * a / np.pi
        elif a > 0 and abs(abs(4.0 * a * ti) - 1.0) < 1e-9:
            taps[i] = (a / math.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * math.sin(np.pi / (4.0 * a))
                + (1.0 - 2.0 / np.pi) * math.cos(np.pi / (4.0 * a))
            )
        else:
            num = math.sin(np.pi * ti * (1.0 - a)) + 4.0 * a * ti * math.cos(np.pi * ti * (1.0 + a))
            den = np.pi * ti * (1.0 - (4.0 * a * ti) ** 2)
            taps[i] = num / den
    return taps / np.linalg.norm(taps)


def rrc_shape_and_shift(frame_symbols: np.ndarray, cfg: WaveformConfig) -> ComplexWaveform:
    """Upsample, RRC-shape and place the bands at their configured centers.

    The symbol stream lands at ``quantum_center_hz`` and a CW pilot tone at
    ``pilot_shift_hz`` with the configured power relative to the stream.
    ``meta['symbol0_sample']`` records where symbol 0 peaks (group delay).
    """
    frame_symbols = np.asarray(frame_symbols, dtype=np.complex128)
    taps = rrc_taps(cfg.oversampling, cfg.rrc_rolloff, cfg.rrc_span_symbols)
    up = np.zeros(len(frame_symbols) * cfg.oversampling, dtype=np.complex128)
    up[:: cfg.oversampling] = frame_symbols
    stream = fftconvolve(up, taps, mode="full")
    n = len(stream)
    t = np.arange(n) / cfg.sample_rate_hz
    if cfg.quantum_center_hz:
        stream = stream * np.exp(2j * np.pi * cfg.quantum_center_hz * t)
    stream_power = float(np.mean(np.abs(stream) ** 2))
    tone_amp = math.sqrt(stream_power * 10.0 ** (cfg.pilot_tone_power_db / 10.0))
    samples = stream + tone_amp * np.exp(2j * np.pi * cfg.pilot_shift_hz * t)
    return ComplexWaveform(
        samples,
        cfg.sample_rate_hz,
        [Segment(0, n)],
        {
            "symbol0_sample": (len(taps) - 1) // 2,
            "n_symbols": len(frame_symbols),
            "pilot_tone_amp": tone_amp,
        },
    )


def gate_calibration_frames(w: ComplexWaveform, off_intervals, extinction_db: float = 100.0) -> ComplexWaveform:
    """Attenuate the scheduled off intervals and annotate them as gated.

    Two cascaded acousto-optic gates give the default 100 dB suppression.
    Intervals are half-open sample ranges and must not overlap.
    """
    n = len(w.samples)
    intervals = sorted((int(a), int(b)) for a, b in off_intervals)
    prev_stop = 0
    for a, b in intervals:
        if a < 0 or b > n or a >= b:
            raise GateScheduleError(f"interval ({a}, {b}) out of range for {n} samples")
        if a < prev_stop:
            raise GateScheduleError("gating intervals overlap")
        prev_stop = b
    att = 10.0 ** (-extinction_db / 20.0)
    samples = w.samples.copy()
    segments = []
    cursor = 0
    for a, b in intervals:
        if cursor < a:
            segments.append(Segment(cursor, a, gated=False))
        samples[a:b] *= att
        segments.append(Segment(a, b, gated=True))
        cursor = b
    if cursor < n:
        segments.append(Segment(cursor, n, gated=False))
    return w.copy_with(samples, segments=segments, extinction_db=extinction_db)


def _basis_projections(x, taps, positions):
    """Inner products of x with the RRC basis centered at the given samples."""
    half = (len(taps) - 1) // 2
    corr = fftconvolve(x, taps[::-1], mode="full")
    return corr[positions + half]


def _basis_synthesis(coeffs, positions, taps, n):
    """Sum of coeff_k * rrc(t - position_k) over an n-sample record."""
    half = (len(taps) - 1) // 2
    imp = np.zeros(n + len(taps), dtype=np.complex128)
    imp[positions] = coeffs
    out = fftconvolve(imp, taps, mode="full")[half : half + n]
    return out


def _pinned_windows(w: ComplexWaveform, guard_samples: int):
    """(window, gated) sample ranges that receive exact-variance pinning."""
    out = []
    for seg in w.segments:
        a, b = seg.start + guard_samples, seg.stop - guard_samples
        if b - a > 0:
            out.append(((a, b), seg.gated))
    return out


def _flat_spectrum_noise(n: int, per_quad_var: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian-like noise with an exactly flat power spectrum.

    Every FFT bin carries the same magnitude with an independent random
    phase, so any fixed linear filter sees a deterministic output variance;
    the marginals converge to a complex normal by the CLT.
    """
    mags = math.sqrt(2.0 * per_quad_var * n)
    spec = mags * np.exp(2j * np.pi * rng.random(n))
    return np.fft.ifft(spec)


def _grid_positions(w: ComplexWaveform, oversampling: int, lo: int, hi: int):
    """Symbol indices and center sample positions of the tx grid in [lo, hi)."""
    first = int(w.meta.get("symbol0_sample", 0))
    k0 = max(0, math.ceil((lo - first) / oversampling))
    k1 = int(w.meta.get("n_symbols", (len(w.samples) - first) // oversampling))
    idx = np.arange(k0, k1)
    pos = first + oversampling * idx
    keep = (pos >= lo) & (pos < hi)
    return idx[keep], pos[keep]


def _slot_classes(idx: np.ndarray, pilot_mask) -> list:
    """Split grid symbol indices by slot class (quantum / training).

    The estimators read the two classes separately, so the exact-variance
    pinning must hold per class, not only over their union.
    """
    if pilot_mask is None:
        return [np.arange(len(idx))]
    in_range = idx < len(pilot_mask)
    mask = np.zeros(len(idx), dtype=bool)
    mask[in_range] = pilot_mask[idx[in_range]]
    out = [np.flatnonzero(~mask), np.flatnonzero(mask)]
    return [sel for sel in out if len(sel)]


def apply_channel(
    w: ComplexWaveform,
    user: UserChannelParams,
    cfg: WaveformConfig,
    rng: np.random.Generator,
    *,
    layout: "FrameLayout | None" = None,
    include_heterodyne_split: bool = True,
    shot_noise: bool = True,
    excess_noise: bool = True,
) -> ComplexWaveform:
    """Attenuation, carrier rotation, phase noise and calibrated detection noise.

    Field amplitude scales by sqrt(T * eta_eff) times the heterodyne split;
    the carrier rotates by the configured offset plus a Wiener phase walk.
    Shot noise has an exactly flat spectrum per annotated window and its
    in-band symbol-grid projection is pinned to exactly 1 SNU per
    quadrature (per slot class when the frame layout is given); excess
    noise is an in-band process pinned to tau * xi / 2 per quadrature over
    the ungated windows only (no modulation leaves the transmitter while
    gated).
    """
    n = len(w.samples)
    amp = math.sqrt(user.tau * (HETERODYNE_SPLIT if include_heterodyne_split else 1.0))
    t = np.arange(n) / w.sample_rate_hz
    phase = 2.0 * np.pi * cfg.if_offset_hz * t
    if cfg.laser_linewidth_hz > 0.0:
        steps = rng.normal(
            0.0, math.sqrt(2.0 * np.pi * cfg.laser_linewidth_hz / w.sample_rate_hz), size=n
        )
        phase = phase + rng.uniform(0.0, 2.0 * np.pi) + np.cumsum(steps)
    out = amp * w.samples * np.exp(1j * phase)

    taps = rrc_taps(cfg.oversampling, cfg.rrc_rolloff, cfg.rrc_span_symbols)
    f_band = cfg.if_offset_hz + cfg.quantum_center_hz
    osc = np.exp(-2j * np.pi * f_band * t)
    windows = _pinned_windows(w, PIN_GUARD_SYMBOLS * cfg.oversampling)

    pilot_mask = layout.pilot_mask() if layout is not None else None

    if shot_noise:
        # per-segment flat-spectrum noise at 1 SNU per quadrature: the
        # calibration and signal intervals then see identical noise power
        # through any frozen linear chain
        noise = np.empty(n, dtype=np.complex128)
        for seg in w.segments:
            noise[seg.start : seg.stop] = _flat_spectrum_noise(seg.stop - seg.start, 1.0, rng)
        base = noise * osc
        correction = np.zeros(n, dtype=np.complex128)
        for (lo, hi), _gated in windows:
            idx, pos = _grid_positions(w, cfg.oversampling, lo, hi)
            if len(pos) < 8:
                continue
            c = _basis_projections(base, taps, pos)
            delta = np.empty_like(c)
            for sel in _slot_classes(idx, pilot_mask):
                scale = math.sqrt(2.0 / float(np.mean(np.abs(c[sel]) ** 2)))
                delta[sel] = c[sel] * (scale - 1.0)
            correction += _basis_synthesis(delta, pos, taps, n)
        out = out + noise + correction * np.conj(osc)

    xi_var = user.tau * user.excess_noise_xi * HETERODYNE_SPLIT
    if excess_noise and xi_var > 0.0:
        excess = np.zeros(n, dtype=np.complex128)
        for (lo, hi), gated in windows:
            if gated:
                continue
            idx, pos = _grid_positions(w, cfg.oversampling, lo, hi)
            if len(pos) < 8:
                continue
            coeff = rng.normal(size=len(pos)) + 1j * rng.normal(size=len(pos))
            for sel in _slot_classes(idx, pilot_mask):
                coeff[sel] *= math.sqrt(2.0 * xi_var / float(np.mean(np.abs(coeff[sel]) ** 2)))
            excess += _basis_synthesis(coeff, pos, taps, n)
        out = out + excess * np.conj(osc)

    return w.copy_with(out, channel_tau=user.tau, channel_xi=user.excess_noise_xi)


def save_waveform(w: ComplexWaveform, path) -> Path:
    """Write interleaved float64 (re, im) plus a JSON sidecar; returns the data path."""
    path = Path(path)
    data_path = path.with_suffix(".bin")
    sidecar = path.with_suffix(".json")
    inter = np.empty(2 * len(w.samples))
    inter[0::2] = w.samples.real
    inter[1::2] = w.samples.imag
    inter.astype("<f8").tofile(data_path)
    header = {
        "format": "ponqkd-waveform",
        "version": 1,
        "sample_rate_hz": w.sample_rate_hz,
        "n_samples": len(w.samples),
        "segments": [asdict(s) for s in w.segments],
        "meta": {k: v for k, v in w.meta.items() if isinstance(v, (int, float, str, bool))},
    }
    sidecar.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return data_path


def load_waveform(path) -> ComplexWaveform:
    """Read a waveform written by :func:`save_waveform`."""
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    if sidecar.get("format") != "ponqkd-waveform" or sidecar.get("version") != 1:
        raise ValueError(f"not a ponqkd waveform file: {path}")
    raw = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    if len(raw) != 2 * sidecar["n_samples"]:
        raise ValueError("sample count in sidecar does not match data file")
    samples = raw[0::2] + 1j * raw[1::2]
    segments = [Segment(**s) for s in sidecar["segments"]]
    return ComplexWaveform(samples, sidecar["sample_rate_hz"], segments, dict(sidecar["meta"]))
