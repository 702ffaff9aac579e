"""Calibration, normalization, channel estimation and reconciliation planning.

Everything downstream of the DSP works in shot-noise units: the variance of
the gated (signal-off) record through the same frozen receiver chain
defines the SNU, which under one-time calibration already contains the
electronic noise.  Any frozen linear gain of the chain cancels in the
normalized statistics.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    CalibrationError,
    NoSignalError,
    SnrOutOfRangeError,
    StaleCalibrationError,
    UnphysicalEstimateError,
)
from .gaussian import CovarianceMatrix, _raw_symplectic_eigenvalues
from .security import ProtocolParams

#: SNR interval covered by the reconciliation code set
SNR_RANGE = (0.041, 0.048)
N_SNR_BINS = 12
DEFAULT_BETA = 0.92
MIN_CALIBRATION_SAMPLES = 10_000


@dataclass(frozen=True)
class CalibrationResult:
    """Shot-plus-electronic noise variance in detector units."""

    snu_variance: float
    var_x: float
    var_p: float
    n_samples: int
    frame_id: int

    @property
    def stderr(self) -> float:
        """Large-sample standard error of the pooled variance estimate."""
        return self.snu_variance * math.sqrt(2.0 / (2.0 * self.n_samples))


@dataclass(frozen=True)
class ChannelEstimate:
    """Per-user channel estimate from SNU-normalized data.

    tau includes the heterodyne half: tau = T * eta_eff / 2, so that unit
    noise is exactly 1 SNU per quadrature.  Excess noise is input-referred.
    """

    tau_x: float
    tau_p: float
    xi_x: float
    xi_p: float
    n_samples: int
    frame_id: int = 0

    @property
    def tau_hat(self) -> float:
        return 0.5 * (self.tau_x + self.tau_p)

    @property
    def xi_hat(self) -> float:
        return 0.5 * (self.xi_x + self.xi_p)

    def snr(self, v_mod: float) -> float:
        """Per-quadrature SNR: signal tau*v_mod over unit-plus-excess noise."""
        return self.tau_hat * v_mod / (1.0 + self.tau_hat * max(self.xi_hat, 0.0))


@dataclass(frozen=True)
class ReconciliationPlan:
    bin_index: int
    beta_effective: float
    snr_min: float
    snr_max: float
    clamped: bool = False


@dataclass(frozen=True)
class ExcessNoiseSummary:
    mean_x: float
    mean_p: float
    min_x: float
    min_p: float
    max_x: float
    max_p: float
    n_frames: int


def calibrate_snu(
    x: np.ndarray,
    p: np.ndarray,
    frame_id: int = 0,
    tx_reference: np.ndarray | None = None,
    min_samples: int = MIN_CALIBRATION_SAMPLES,
) -> CalibrationResult:
    """Per-quadrature variance of the gated record, x and p averaged.

    When the transmitted symbols scheduled during the gated interval are
    supplied, a correlation test rejects frames where the gate leaked
    signal: residual modulation correlates with the known sequence far more
    sensitively than any power threshold at quantum-level SNR.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(x) != len(p):
        raise ValueError("x and p must have equal length")
    if len(x) < min_samples:
        raise CalibrationError(f"need >= {min_samples} gated samples, got {len(x)}")
    var_x = float(np.var(x))
    var_p = float(np.var(p))
    snu = 0.5 * (var_x + var_p)
    if snu <= 0:
        raise CalibrationError("gated record has zero variance")
    if tx_reference is not None:
        ref = np.asarray(tx_reference, dtype=np.complex128)
        if len(ref) != len(x):
            raise ValueError("tx_reference length mismatch")
        y = x + 1j * p
        z = abs(np.vdot(ref, y)) / max(
            math.sqrt(float(np.vdot(ref, ref).real) * snu * 2.0), 1e-300
        )
        if z > 6.0:
            raise CalibrationError(
                f"gated record correlates with the transmitted sequence (z={z:.1f}); "
                "calibration contaminated"
            )
    return CalibrationResult(snu, var_x, var_p, len(x), frame_id)


def normalize(
    x: np.ndarray, p: np.ndarray, cal: CalibrationResult, frame_id: int | None = None
):
    """Divide quadratures by sqrt(SNU); gated data normalizes to unit variance."""
    if frame_id is not None and frame_id != cal.frame_id:
        raise StaleCalibrationError(
            f"calibration from frame {cal.frame_id} applied to frame {frame_id}"
        )
    scale = 1.0 / math.sqrt(cal.snu_variance)
    return np.asarray(x, dtype=float) * scale, np.asarray(p, dtype=float) * scale


def estimate_channel(
    alice: np.ndarray,
    y_x: np.ndarray,
    y_p: np.ndarray,
    v_mod: float,
    frame_id: int = 0,
) -> ChannelEstimate:
    """Effective transmittance and input-referred excess noise per quadrature.

    sqrt(tau) = <x y> / v_mod against the known modulation variance; the
    excess noise comes from the regression-residual variance minus the unit
    shot noise, divided by tau.
    """
    alice = np.asarray(alice, dtype=np.complex128)
    n = len(alice)
    if n < 1000:
        raise ValueError("need at least 1000 paired symbols")
    if len(y_x) != n or len(y_p) != n:
        raise ValueError("alice and bob sequences must be aligned")
    if v_mod <= 0:
        raise ValueError("v_mod must be positive")
    out = {}
    for quad, (a, y) in {"x": (alice.real, np.asarray(y_x, float)),
                          "p": (alice.imag, np.asarray(y_p, float))}.items():
        cross = float(np.mean(a * y))
        # detection threshold: 4 sigma of the no-signal cross moment
        noise_se = math.sqrt(float(np.var(y)) * float(np.var(a)) / n)
        if cross < 4.0 * noise_se:
            raise NoSignalError(
                f"{quad}-quadrature correlation {cross:.3e} below noise floor {noise_se:.3e}"
            )
        sqrt_tau = cross / v_mod
        tau = sqrt_tau**2
        c_fit = cross / float(np.mean(a * a))
        resid_var = float(np.var(y - c_fit * a))
        out[quad] = (tau, (resid_var - 1.0) / tau)
    return ChannelEstimate(
        tau_x=out["x"][0],
        tau_p=out["p"][0],
        xi_x=out["x"][1],
        xi_p=out["p"][1],
        n_samples=n,
        frame_id=frame_id,
    )


def estimate_joint_covariance(
    alice: np.ndarray,
    users_xy: list,
    p: ProtocolParams,
    physicality_sigma: float = 6.0,
) -> CovarianceMatrix:
    """Empirical (N+1)-mode covariance in entanglement-based coordinates.

    Alice's modulation data maps to the retained source mode through the
    replacement scale k (p correlations flip sign); measured second moments
    M of the heterodyne outcomes give gamma = 2 M - I.  The estimate is
    validated against a sampling-error physicality band and minimally
    lifted onto the physical cone before security use; beyond the band it
    is refused.
    """
    alice = np.asarray(alice, dtype=np.complex128)
    n = len(alice)
    k = p.source_scale_k
    if k <= 0:
        raise NoSignalError("zero modulation variance: no source replacement possible")
    cols = [alice.real / k, -alice.imag / k]
    for y_x, y_p in users_xy:
        if len(y_x) != n or len(y_p) != n:
            raise ValueError("user sequences must align with alice's")
        cols.extend([np.asarray(y_x, float), np.asarray(y_p, float)])
    moments = np.cov(np.vstack(cols), bias=True)
    gamma = 2.0 * moments - np.eye(len(cols))
    nu_min = float(_raw_symplectic_eigenvalues(0.5 * (gamma + gamma.T))[-1])
    band = physicality_sigma * math.sqrt(2.0 / n) * float(np.max(np.diag(gamma)))
    if nu_min < 1.0 - band:
        raise UnphysicalEstimateError(
            f"estimated matrix unphysical beyond tolerance: nu_min={nu_min:.6f}, band={band:.2g}"
        )
    if nu_min < 1.0:
        gamma = gamma + (1.0 - nu_min + 1e-12) * np.eye(len(cols))
    return CovarianceMatrix(gamma)


def detector_efficiency(
    responsivity_a_per_w: float, wavelength_nm: float, trusted_loss_alpha: float = 1.0
) -> float:
    """Quantum efficiency 1240 * R / lambda times the trusted internal loss."""
    if responsivity_a_per_w <= 0 or wavelength_nm <= 0 or trusted_loss_alpha <= 0:
        raise ValueError("responsivity, wavelength and loss factor must be positive")
    eta = 1240.0 * responsivity_a_per_w / wavelength_nm * trusted_loss_alpha
    if eta > 1.0:
        raise ValueError(f"efficiency {eta:.4f} > 1: inconsistent parameters")
    return eta


def snr_classify(snr: float, beta_table: list | None = None) -> ReconciliationPlan:
    """Pick the reconciliation code bin for a measured SNR.

    Twelve uniform bins partition [0.041, 0.048].  Below the range no code
    achieves a positive rate; above it the stiffest code is used and the
    plan is flagged as clamped.
    """
    if snr <= 0:
        raise ValueError("snr must be positive")
    lo, hi = SNR_RANGE
    if snr < lo:
        raise SnrOutOfRangeError(f"SNR {snr:.4f} below supported range [{lo}, {hi}]")
    width = (hi - lo) / N_SNR_BINS
    clamped = snr > hi
    if clamped:
        warnings.warn(f"SNR {snr:.4f} above calibrated range; clamping to bin {N_SNR_BINS}")
        idx = N_SNR_BINS
    else:
        idx = min(int(math.floor((snr - lo) / width)) + 1, N_SNR_BINS)
    if beta_table is not None:
        if len(beta_table) != N_SNR_BINS:
            raise ValueError(f"beta_table must have {N_SNR_BINS} entries")
        beta = float(beta_table[idx - 1])
    else:
        beta = DEFAULT_BETA
    return ReconciliationPlan(
        bin_index=idx,
        beta_effective=beta,
        snr_min=lo + (idx - 1) * width,
        snr_max=lo + idx * width,
        clamped=clamped,
    )


def excess_noise_statistics(frames: list) -> ExcessNoiseSummary:
    """Mean and spread of per-quadrature excess-noise estimates across frames."""
    if not frames:
        raise ValueError("need at least one frame estimate")
    xs = np.array([f.xi_x for f in frames])
    ps = np.array([f.xi_p for f in frames])
    return ExcessNoiseSummary(
        mean_x=float(xs.mean()),
        mean_p=float(ps.mean()),
        min_x=float(xs.min()),
        min_p=float(ps.min()),
        max_x=float(xs.max()),
        max_p=float(ps.max()),
        n_frames=len(frames),
    )
