"""Exception hierarchy shared across the toolkit."""


class PonqkdError(Exception):
    """Base class for all toolkit-specific errors."""


class InvalidCovarianceError(PonqkdError, ValueError):
    """Matrix is not a valid covariance matrix (asymmetric, indefinite, unphysical)."""


class UnphysicalEigenvalueError(PonqkdError, ValueError):
    """Symplectic eigenvalue below the vacuum limit beyond tolerance."""


class WaveformConfigError(PonqkdError, ValueError):
    """Waveform or DSP configuration violates a sampling/band constraint."""


class GateScheduleError(PonqkdError, ValueError):
    """Gating schedule has overlapping or out-of-range intervals."""


class LockFailureError(PonqkdError, RuntimeError):
    """No pilot tone detectable above the noise threshold."""


class FrameSyncError(PonqkdError, RuntimeError):
    """Pilot-pattern correlation too weak to establish symbol timing."""


class PilotAlignmentError(PonqkdError, RuntimeError):
    """Pilot repetitions failed the alignment check before superposition."""


class EqualizerDivergenceError(PonqkdError, RuntimeError):
    """Adaptive equalizer error power grew during training (step size too large)."""


class CalibrationError(PonqkdError, ValueError):
    """Shot-noise calibration input rejected (too short or contaminated)."""


class StaleCalibrationError(PonqkdError, ValueError):
    """Normalization attempted with a calibration from a different frame."""


class NoSignalError(PonqkdError, RuntimeError):
    """Alice-Bob correlation below the noise floor; channel estimate impossible."""


class SnrOutOfRangeError(PonqkdError, ValueError):
    """Measured SNR below the supported reconciliation range (no positive key)."""


class UnphysicalEstimateError(PonqkdError, ValueError):
    """Estimated covariance matrix unphysical beyond the statistical tolerance."""


class ScenarioConfigError(PonqkdError, ValueError):
    """Scenario configuration inconsistent or incomplete."""
