"""Receiver DSP: recover quantum-symbol quadratures from the impaired waveform.

The chain mirrors a pilot-aided coherent receiver: (1) frequency-offset
estimation on the pilot tone, (2) frequency-domain bandpass split of the
quantum and pilot bands, (3+4) digital downconversion and carrier recovery
against the pilot tone phase, (5) root-raised-cosine matched filtering with
pilot-pattern frame sync, retaining 4 samples per symbol, and (6) a
real-valued 2x2 fractionally spaced FIR equalizer trained by (normalized)
LMS on the time-superposed training sequence, then frozen over the frame.

Training symbols share the quantum amplitude, so a single repetition is far
below the noise; coherent superposition of the repeated pattern raises the
training SNR by the repetition count before the equalizer ever sees it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.signal import fftconvolve

from .errors import (
    EqualizerDivergenceError,
    FrameSyncError,
    LockFailureError,
    PilotAlignmentError,
    WaveformConfigError,
)
from .waveform import ComplexWaveform, FrameLayout, WaveformConfig, rrc_taps


@dataclass(frozen=True)
class DspConfig:
    """Receiver-side parameters; bandwidths follow the waveform's band plan."""

    quantum_bw_hz: float = 13e6
    pilot_bw_hz: float = 200e3
    eq_taps: int = 9
    lms_step: float = 0.4
    eq_oversampling: int = 4
    superposition_count: int | None = None  # None: use every available repetition
    max_epochs: int = 300
    constrain_proper: bool = True
    ridge_factor: float = 1.0
    guard_symbols: int = 48
    sync_search_symbols: int = 8
    sync_window_symbols: int = 50_000
    sync_z_threshold: float = 8.0
    lock_threshold: float = 50.0

    def __post_init__(self):
        if self.eq_taps % 2 == 0 or self.eq_taps < 3:
            raise WaveformConfigError("eq_taps must be odd and >= 3")
        if self.lms_step <= 0:
            raise WaveformConfigError("lms_step must be positive")
        if self.eq_oversampling < 2:
            raise WaveformConfigError("eq_oversampling must be >= 2")
        if self.quantum_bw_hz <= 0 or self.pilot_bw_hz <= 0:
            raise WaveformConfigError("bandwidths must be positive")


@dataclass
class RecoveredSymbols:
    """Per-frame demodulation output in detector units.

    ``x``/``p`` cover every symbol slot of the frame layout; the boolean
    masks say which slots are training symbols, which fall in gated
    (signal-off) intervals and which sit too close to a segment edge or the
    record boundary to trust (``guard``).
    """

    x: np.ndarray
    p: np.ndarray
    is_pilot: np.ndarray
    is_gated: np.ndarray
    is_guard: np.ndarray
    freq_offset_hz: float
    phase_trace: np.ndarray
    phase_trace_stride: int
    metrics: dict = field(default_factory=dict)
    frame_id: int = 0

    @property
    def n_symbols(self) -> int:
        return len(self.x)

    def quantum_clean(self):
        """(indices, x, p) of usable quantum symbols."""
        m = ~self.is_pilot & ~self.is_gated & ~self.is_guard
        idx = np.flatnonzero(m)
        return idx, self.x[idx], self.p[idx]

    def calibration_clean(self):
        """(x, p) of usable gated (noise-only) symbol outputs."""
        m = self.is_gated & ~self.is_guard
        return self.x[m], self.p[m]

    def pilots_clean(self):
        """(indices, x, p) of usable training symbols."""
        m = self.is_pilot & ~self.is_gated & ~self.is_guard
        idx = np.flatnonzero(m)
        return idx, self.x[idx], self.p[idx]


def estimate_frequency_offset(
    w: ComplexWaveform,
    pilot_shift_hz: float = 0.0,
    lock_threshold: float = 50.0,
    max_samples: int = 1 << 21,
) -> float:
    """Carrier offset from the strongest spectral line, refined to < 0.1 bin.

    The pilot tone sits ``pilot_shift_hz`` above the unknown offset, so the
    returned value is (peak frequency - pilot_shift_hz).  Raises
    LockFailureError when no line stands above ``lock_threshold`` times the
    median bin power.
    """
    x = w.samples[: min(len(w.samples), max_samples)]
    n = len(x)
    spec = np.fft.fft(x)
    power = np.abs(spec) ** 2
    k = int(np.argmax(power))
    if power[k] < lock_threshold * float(np.median(power)):
        raise LockFailureError(
            f"strongest line only {power[k] / max(float(np.median(power)), 1e-300):.1f}x median power"
        )
    fs = w.sample_rate_hz
    f0 = k * fs / n
    if f0 > fs / 2:
        f0 -= fs
    # local maximization of |DFT| on shrinking grids, well below 0.1 bin
    t = np.arange(n) / fs
    span = fs / n
    for _ in range(3):
        grid = np.linspace(f0 - span, f0 + span, 9)
        amps = np.abs(np.exp(-2j * np.pi * grid[:, None] * t[None, :]) @ x)
        f0 = float(grid[int(np.argmax(amps))])
        span /= 4.0
    return f0 - pilot_shift_hz


def bandpass_and_split(
    w: ComplexWaveform, wcfg: WaveformConfig, dcfg: DspConfig, offset_hz: float
):
    """Brickwall-isolate the quantum and pilot bands and shift both to baseband.

    The downconversion is a time-domain multiply by the exact estimated
    center, so both streams carry the identical residual offset and the
    carrier-recovery stage cancels it exactly.
    """
    f_q = offset_hz + wcfg.quantum_center_hz
    f_p = offset_hz + wcfg.pilot_shift_hz
    if abs(f_p - f_q) < (dcfg.quantum_bw_hz + dcfg.pilot_bw_hz) / 2.0:
        raise WaveformConfigError("quantum and pilot bands overlap after offset correction")
    n = len(w.samples)
    fs = w.sample_rate_hz
    if dcfg.quantum_bw_hz >= fs or dcfg.pilot_bw_hz >= fs:
        raise WaveformConfigError("band wider than the sampled spectrum")
    spec = np.fft.fft(w.samples)
    freqs = np.fft.fftfreq(n, 1.0 / fs)
    t = np.arange(n) / fs

    def extract(center, bw):
        sel = np.abs((freqs - center + fs / 2.0) % fs - fs / 2.0) <= bw / 2.0
        band = np.fft.ifft(np.where(sel, spec, 0.0))
        return band * np.exp(-2j * np.pi * center * t)

    quantum = w.copy_with(extract(f_q, dcfg.quantum_bw_hz), band="quantum")
    pilot = w.copy_with(extract(f_p, dcfg.pilot_bw_hz), band="pilot")
    return quantum, pilot


def carrier_recovery(quantum: ComplexWaveform, pilot: ComplexWaveform, hold_mask=None):
    """Remove carrier phase (offset residual + laser phase noise) per sample.

    The narrowband pilot is normalized to a unit phasor and conjugated onto
    the quantum stream.  Samples under ``hold_mask`` (reference gated off,
    so its phase is meaningless noise) are passed through uncorrected.  A
    ``degraded_lock`` flag is set in the returned metrics when the tone
    power does not clearly dominate the quantum band.
    """
    p = pilot.samples
    mag = np.abs(p)
    floor = max(float(np.max(mag)) * 1e-6, 1e-300)
    unit = p / np.maximum(mag, floor)
    if hold_mask is not None:
        unit = np.where(hold_mask, 1.0 + 0.0j, unit)
    corrected = quantum.copy_with(quantum.samples * np.conj(unit))
    live = ~hold_mask if hold_mask is not None else slice(None)
    pilot_power = float(np.mean(mag[live] ** 2))
    metrics = {
        "pilot_power": pilot_power,
        "degraded_lock": bool(
            pilot_power < 10.0 * float(np.mean(np.abs(quantum.samples[live]) ** 2))
        ),
    }
    return corrected, np.angle(unit), metrics


def matched_filter_downsample(
    stream: ComplexWaveform,
    wcfg: WaveformConfig,
    dcfg: DspConfig,
    layout: FrameLayout,
):
    """RRC-matched filter plus pilot-correlation frame sync.

    Returns (stream4, sync) where ``stream4`` holds ``eq_oversampling``
    samples per symbol starting exactly at symbol 0 and ``sync`` maps symbol
    indices back to input samples.
    """
    u = wcfg.oversampling
    if u % dcfg.eq_oversampling:
        raise WaveformConfigError(
            f"eq_oversampling {dcfg.eq_oversampling} must divide waveform oversampling {u}"
        )
    taps = rrc_taps(u, wcfg.rrc_rolloff, wcfg.rrc_span_symbols)
    mf = fftconvolve(stream.samples, taps, mode="full")
    nominal = len(taps) - 1  # tx shaping delay + rx matched-filter delay
    pilots = layout.pilot_positions()
    # correlate only against pilots that are live (not gated) at their
    # nominal positions, with margin for the timing search itself
    margin = (dcfg.sync_search_symbols + wcfg.rrc_span_symbols) * u
    tx_delay = (len(taps) - 1) // 2
    live = np.zeros(len(pilots), dtype=bool)
    for seg in stream.segments:
        if not seg.gated:
            center = tx_delay + pilots * u
            live |= (center >= seg.start + margin) & (center < seg.stop - margin)
    usable = pilots[live]
    if len(usable) == 0:
        raise FrameSyncError("no live training symbols to correlate against")
    window = usable[: max(int(dcfg.sync_window_symbols * len(pilots) / layout.n_total), 1)]
    pattern = layout.pilot_symbols(1.0)[np.searchsorted(pilots, window)]
    lags = np.arange(-dcfg.sync_search_symbols * u, dcfg.sync_search_symbols * u + 1)
    corr = np.empty(len(lags))
    base = nominal + window * u
    for i, lag in enumerate(lags):
        idx = base + lag
        corr[i] = np.abs(np.vdot(pattern, mf[idx]))
    peak = int(np.argmax(corr))
    others = np.abs(lags - lags[peak]) > 2
    bg_med = float(np.median(corr[others]))
    bg_mad = float(np.median(np.abs(corr[others] - bg_med))) + 1e-300
    z = (corr[peak] - bg_med) / (1.4826 * bg_mad)
    if z < dcfg.sync_z_threshold:
        raise FrameSyncError(f"pilot correlation z-score {z:.1f} below {dcfg.sync_z_threshold}")
    offset = nominal + int(lags[peak])
    step = u // dcfg.eq_oversampling
    stream4 = mf[offset::step]
    sync = {
        "offset_samples": offset,
        "rx_delay": (len(taps) - 1) // 2,
        "sync_z": float(z),
        "step": step,
        "n_symbols": int((len(mf) - offset - 1) // u) + 1,
    }
    return stream4, sync


def superpose_pilots(blocks: np.ndarray, m: int | None = None, pattern=None, positions=None):
    """Coherent average of aligned repetitions of the training superblock.

    ``blocks`` is (repetitions, block_len).  When the expected pattern and
    its in-block sample positions are supplied, the averaged block must
    correlate with the pattern (normalized magnitude >= 0.5), otherwise a
    PilotAlignmentError is raised.  Averaging M repetitions raises the
    training SNR by a factor M.
    """
    blocks = np.asarray(blocks)
    if blocks.ndim != 2 or len(blocks) < 1:
        raise ValueError("need a (repetitions, block_len) array")
    m_used = len(blocks) if m is None else min(m, len(blocks))
    if m_used < 1:
        raise ValueError("need at least one repetition")
    avg = blocks[:m_used].mean(axis=0)
    if pattern is not None and positions is not None:
        got = avg[np.asarray(positions)]
        denom = float(np.linalg.norm(got) * np.linalg.norm(pattern)) + 1e-300
        quality = abs(np.vdot(np.asarray(pattern), got)) / denom
        if quality < 0.5:
            raise PilotAlignmentError(f"averaged pilots correlate at {quality:.2f} < 0.5")
    return avg, m_used


@njit(cache=True)
def _symmetrize_proper(taps):  # pragma: no cover
    """Project onto the proper-complex (no image response) subspace."""
    length = taps.shape[2]
    for l in range(length):
        diag = 0.5 * (taps[0, 0, l] + taps[1, 1, l])
        cross = 0.5 * (taps[1, 0, l] - taps[0, 1, l])
        taps[0, 0, l] = diag
        taps[1, 1, l] = diag
        taps[1, 0, l] = cross
        taps[0, 1, l] = -cross


@njit(cache=True)
def _nlms_train(sig_re, sig_im, des_x, des_p, centers, taps, mu, epochs, proper):  # pragma: no cover
    """Normalized LMS with a 3-phase step schedule and tap averaging.

    Steps mu, mu/4, mu/16 over equal thirds; the returned tap matrix is the
    Polyak average over the final third, which strips the gradient-noise
    ripple that would otherwise inflate the frozen filter's noise gain.
    """
    half = (taps.shape[2] - 1) // 2
    length = taps.shape[2]
    mse = np.zeros(epochs)
    avg = np.zeros_like(taps)
    phase2 = 2 * (epochs // 3)
    n_avg = 0
    for e in range(epochs):
        if e < epochs // 3:
            step = mu
        elif e < phase2:
            step = mu / 4.0
        else:
            step = mu / 16.0
        acc = 0.0
        for i in range(len(centers)):
            c = centers[i]
            ox = 0.0
            op = 0.0
            power = 1e-12
            for l in range(length):
                s = c - half + l
                xr = sig_re[s]
                xi = sig_im[s]
                ox += taps[0, 0, l] * xr + taps[0, 1, l] * xi
                op += taps[1, 0, l] * xr + taps[1, 1, l] * xi
                power += xr * xr + xi * xi
            ex = des_x[i] - ox
            ep = des_p[i] - op
            gain = step / power
            for l in range(length):
                s = c - half + l
                xr = sig_re[s]
                xi = sig_im[s]
                taps[0, 0, l] += gain * ex * xr
                taps[0, 1, l] += gain * ex * xi
                taps[1, 0, l] += gain * ep * xr
                taps[1, 1, l] += gain * ep * xi
            acc += ex * ex + ep * ep
        if proper:
            _symmetrize_proper(taps)
        mse[e] = acc / (2.0 * len(centers))
        if e >= phase2:
            avg += taps
            n_avg += 1
    if n_avg > 0:
        taps[:] = avg / n_avg
    return mse


def _ridge_refine(tiled, centers, desired, taps, row_weights, lam, proper):
    """Weighted, regularized block least squares on the training windows.

    The deterministic limit of the adaptation on the averaged block:
    minimize the weighted |d - W u|^2 over every slot plus a ridge.  The
    zero-reference payload slots force an ISI-free (flat folded) response;
    rows are whitened by their own residual level, so in a clean loopback
    the near-noiseless reference slots dominate while at quantum-level SNR
    all slots weigh equally.  The ridge pins the weakly excited directions
    (image band, off-center taps) that stochastic adaptation leaves
    jittering; it must stay at the training-residual scale - a ridge at the
    raw payload noise level would turn the solution into a second matched
    filter, whose folded spectrum is no longer flat.
    """
    length = taps.shape[2]
    half = (length - 1) // 2
    idx = centers[:, None] + np.arange(-half, half + 1)[None, :]
    windows = tiled[idx] * row_weights[:, None]
    target = desired * row_weights
    if proper:
        # proper-complex solution: one complex tap vector
        gram = windows.conj().T @ windows + lam * np.eye(length)
        w = np.linalg.solve(gram, windows.conj().T @ target)
        taps[0, 0, :] = w.real
        taps[0, 1, :] = -w.imag
        taps[1, 0, :] = w.imag
        taps[1, 1, :] = w.real
    else:
        feats = np.concatenate([windows.real, windows.imag], axis=1)
        gram = feats.T @ feats + 0.5 * lam * np.eye(2 * length)
        wx = np.linalg.solve(gram, feats.T @ target.real)
        wp = np.linalg.solve(gram, feats.T @ target.imag)
        taps[0, 0, :] = wx[:length]
        taps[0, 1, :] = wx[length:]
        taps[1, 0, :] = wp[:length]
        taps[1, 1, :] = wp[length:]


def lms_equalize(
    stream4: np.ndarray,
    training_block: np.ndarray,
    block_centers: np.ndarray,
    desired: np.ndarray,
    dcfg: DspConfig,
    noise_std: float = 0.0,
):
    """Train the 2x2 real fractionally spaced FIR, freeze it, apply it.

    Acquisition adapts by normalized LMS on the reference slots of the
    superposed (averaged) training block, which is tiled for window
    context; ``block_centers`` are symbol-slot sample positions inside it
    and ``desired`` the reference values.  The taps are then refined by a
    regularized block least squares over every slot: zero-reference slots
    (payload slots, which superposition averages toward zero) pin the
    composite response at neighboring-symbol instants, i.e. they carry the
    anti-ISI constraints, while the ridge - scaled to the measured
    zero-slot residual power (a noise floor of ``noise_std`` backs it up) -
    pins the weakly excited directions that adaptation leaves jittering at
    low payload SNR.  Returns (x4, p4, info).  Raises
    EqualizerDivergenceError when the adaptation error grows instead of
    settling.
    """
    block = np.asarray(training_block)
    nb = len(block)
    tiled = np.concatenate([block, block, block])
    centers = np.asarray(block_centers, dtype=np.int64) + nb
    desired = np.asarray(desired)

    taps = np.zeros((2, 2, dcfg.eq_taps))
    ref = np.abs(desired) > 0
    u = tiled[centers[ref]]
    gain = np.vdot(u, desired[ref]) / max(float(np.vdot(u, u).real), 1e-300)
    center = (dcfg.eq_taps - 1) // 2
    taps[0, 0, center] = gain.real
    taps[0, 1, center] = -gain.imag
    taps[1, 0, center] = gain.imag
    taps[1, 1, center] = gain.real

    mse = _nlms_train(
        np.ascontiguousarray(tiled.real),
        np.ascontiguousarray(tiled.imag),
        np.ascontiguousarray(desired[ref].real),
        np.ascontiguousarray(desired[ref].imag),
        centers[ref],
        taps,
        dcfg.lms_step,
        dcfg.max_epochs,
        dcfg.constrain_proper,
    )
    if not np.all(np.isfinite(mse)):
        raise EqualizerDivergenceError("training error diverged (non-finite MSE)")
    tail = float(np.mean(mse[-max(dcfg.max_epochs // 10, 1) :]))
    if tail > 2.0 * float(np.min(mse)) + 1e-300:
        raise EqualizerDivergenceError(
            f"training error grew: tail MSE {tail:.3e} vs best {float(np.min(mse)):.3e}"
        )

    # the least-squares refinement needs the measured noise floor to whiten
    # its rows; without one (clean bench loopback, nothing gated) the
    # adapted taps are already at their optimum and refinement would only
    # fit payload leakage
    if noise_std > 0.0:
        block_power = float(np.mean(np.abs(block) ** 2))
        ref_var = max(2.0 * tail, 1e-9 * block_power, 1e-30)
        if np.any(~ref):
            zero_var = max(
                float(np.mean(np.abs(tiled[centers[~ref]]) ** 2)), 1e-9 * block_power, 1e-30
            )
        else:
            zero_var = ref_var
        weights = np.where(ref, 1.0 / math.sqrt(ref_var), 1.0 / math.sqrt(zero_var))
        _ridge_refine(
            tiled, centers, desired, taps, weights,
            dcfg.ridge_factor * len(centers), dcfg.constrain_proper,
        )
        if not np.all(np.isfinite(taps)):
            raise EqualizerDivergenceError("least-squares refinement produced non-finite taps")

    sr = np.ascontiguousarray(np.asarray(stream4).real)
    si = np.ascontiguousarray(np.asarray(stream4).imag)
    x4 = fftconvolve(sr, taps[0, 0][::-1], mode="same") + fftconvolve(si, taps[0, 1][::-1], mode="same")
    p4 = fftconvolve(sr, taps[1, 0][::-1], mode="same") + fftconvolve(si, taps[1, 1][::-1], mode="same")
    info = {
        "pilot_mse": tail,
        "mse_first": float(mse[0]),
        "mse_best": float(np.min(mse)),
        "epochs": int(dcfg.max_epochs),
        "taps": taps,
    }
    return x4, p4, info


def demodulate_frame(
    w: ComplexWaveform,
    wcfg: WaveformConfig,
    layout: FrameLayout,
    dcfg: DspConfig,
    pilot_modulus: float = 1.0,
    frame_id: int = 0,
) -> RecoveredSymbols:
    """Run the full six-step chain on one frame.

    ``pilot_modulus`` is the known transmitted training-symbol modulus; it
    only sets the output units (any frozen linear gain cancels after
    shot-noise normalization downstream).
    """
    offset = estimate_frequency_offset(w, wcfg.pilot_shift_hz, dcfg.lock_threshold)
    quantum, pilot = bandpass_and_split(w, wcfg, dcfg, offset)
    corrected, phase, cr_metrics = carrier_recovery(quantum, pilot, hold_mask=w.gated_mask())
    stream4, sync = matched_filter_downsample(corrected, wcfg, dcfg, layout)

    r = dcfg.eq_oversampling
    n_sym = min(layout.n_total, sync["n_symbols"])

    # classify symbols: gated if the symbol center falls in a gated segment,
    # guarded near segment edges, record edges and unpinned regions
    centers_in = sync["offset_samples"] + np.arange(n_sym) * (r * sync["step"]) - sync["rx_delay"]
    is_gated = np.zeros(layout.n_total, dtype=bool)
    is_guard = np.ones(layout.n_total, dtype=bool)
    guard_samples = dcfg.guard_symbols * wcfg.oversampling
    for seg in w.segments:
        inside = (centers_in >= seg.start) & (centers_in < seg.stop)
        clean = (centers_in >= seg.start + guard_samples) & (centers_in < seg.stop - guard_samples)
        is_gated[np.flatnonzero(inside)] = seg.gated
        is_guard[np.flatnonzero(clean)] = False
    is_guard[n_sym:] = True

    # superposition of training superblocks that lie in clean signal-on spans
    period = layout.period_symbols
    block_len = period * r
    pil_in_period = layout.pilot_positions()[layout.pilot_positions() < period]
    pattern = layout.pilot_symbols(pilot_modulus)[: len(pil_in_period)]
    ok_sym = ~is_gated & ~is_guard
    blocks = []
    k = 0
    max_blocks = dcfg.superposition_count
    while (k + 1) * period <= n_sym:
        sl = slice(k * period, (k + 1) * period)
        if bool(np.all(ok_sym[sl])):
            start = k * period * r
            blocks.append(stream4[start : start + block_len])
            if max_blocks is not None and len(blocks) >= max_blocks:
                break
        k += 1
    if not blocks:
        raise FrameSyncError("no clean training superblock available")
    avg, m_used = superpose_pilots(
        np.asarray(blocks), max_blocks, pattern, pil_in_period * r
    )

    # equalizer-input noise level from the gated region (symbol-center samples)
    gated_syms = np.flatnonzero(is_gated & ~is_guard)
    gated_syms = gated_syms[gated_syms * r < len(stream4)]
    if len(gated_syms) >= 256:
        gated_vals = stream4[gated_syms * r]
        noise_std = math.sqrt(0.5 * float(np.mean(np.abs(gated_vals) ** 2)))
    else:
        noise_std = 0.0

    # train on every slot of the averaged superblock: known references at
    # pilot slots, zeros at payload slots (the anti-ISI constraints)
    desired_block = np.zeros(period, dtype=np.complex128)
    desired_block[pil_in_period] = pattern
    x4, p4, eq_info = lms_equalize(
        stream4,
        avg,
        np.arange(period) * r,
        desired_block,
        dcfg,
        noise_std=noise_std,
    )
    sym_idx = np.arange(layout.n_total) * r
    valid = sym_idx < len(x4)
    x = np.zeros(layout.n_total)
    p = np.zeros(layout.n_total)
    x[valid] = x4[sym_idx[valid]]
    p[valid] = p4[sym_idx[valid]]
    is_guard |= ~valid

    stride = 512
    metrics = {
        "freq_offset_hz": float(offset),
        "sync_z": sync["sync_z"],
        "n_superposed": int(m_used),
        "pilot_mse": eq_info["pilot_mse"],
        "mse_best": eq_info["mse_best"],
        "degraded_lock": cr_metrics["degraded_lock"],
        "pilot_power": cr_metrics["pilot_power"],
    }
    return RecoveredSymbols(
        x=x,
        p=p,
        is_pilot=layout.pilot_mask(),
        is_gated=is_gated,
        is_guard=is_guard,
        freq_offset_hz=float(offset),
        phase_trace=phase[::stride].copy(),
        phase_trace_stride=stride,
        metrics=metrics,
        frame_id=frame_id,
    )


def write_symbols_csv(rs: RecoveredSymbols, path) -> Path:
    """Columnar CSV (index, x, p) of the usable quantum symbols plus a metrics JSON."""
    path = Path(path)
    idx, x, p = rs.quantum_clean()
    with path.open("w") as fh:
        fh.write("index,x,p\n")
        for i, xv, pv in zip(idx, x, p):
            fh.write(f"{i},{xv!r},{pv!r}\n")
    meta = dict(rs.metrics)
    meta["frame_id"] = rs.frame_id
    path.with_suffix(".metrics.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path
