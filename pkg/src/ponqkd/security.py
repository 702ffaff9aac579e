"""Security analysis of the point-to-multipoint network with trusted receivers.

Builds the (N+1)-mode covariance matrix of the splitter network in the
entanglement-based picture and evaluates, per user, the asymptotic
reverse-reconciliation key rate

    K_N = beta * I(A:B_N) - max( max_{i != N} I(B_N:B_i), chi_{B_N,E} ).

The Holevo term is evaluated on the reduced two-mode state (A, B_N): the
other receivers are trusted but their modes are conservatively handed to
the purifying environment, which collapses the bound to the usual
point-to-point expression whenever it dominates the inter-user terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidCovarianceError
from .gaussian import (
    CovarianceMatrix,
    heterodyne_condition,
    scalar_gaussian_mutual_info,
    von_neumann_entropy,
)


@dataclass(frozen=True)
class ProtocolParams:
    """Transmitter-side protocol parameters.

    v_mod is the per-quadrature modulation variance in SNU.  The
    entanglement-based source variance is V = v_mod + 1 and the source
    replacement scale is k = sqrt(2 (V-1) / (V+1)).
    """

    v_mod: float
    beta: float = 0.92
    symbol_rate_hz: float = 1e9
    pilot_ratio: float = 0.2
    duty_cycle: float = 1.0

    def __post_init__(self):
        if self.v_mod < 0.0:
            raise ValueError(f"v_mod must be >= 0, got {self.v_mod}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.symbol_rate_hz <= 0.0:
            raise ValueError("symbol_rate_hz must be positive")
        if not 0.0 <= self.pilot_ratio < 1.0:
            raise ValueError(f"pilot_ratio must be in [0, 1), got {self.pilot_ratio}")
        if not 0.0 < self.duty_cycle <= 1.0:
            raise ValueError(f"duty_cycle must be in (0, 1], got {self.duty_cycle}")

    @property
    def v(self) -> float:
        """Entanglement-based source variance V = v_mod + 1."""
        return self.v_mod + 1.0

    @property
    def source_scale_k(self) -> float:
        """Scale k = sqrt(2 (V-1) / (V+1)) linking modulation data to mode A."""
        return math.sqrt(2.0 * self.v_mod / (self.v + 1.0))

    @property
    def effective_symbol_rate_hz(self) -> float:
        """Key-bearing symbols per second after pilots and duty cycle."""
        return self.symbol_rate_hz * (1.0 - self.pilot_ratio) * self.duty_cycle


@dataclass(frozen=True)
class UserChannelParams:
    """Per-user channel and receiver parameters.

    Excess noise is referred to the channel input.  Electronic noise is
    folded into an untrusted loss through the one-time calibration
    redefinition of the shot-noise unit: eta_eff = eta / (1 + v_elec).
    """

    transmittance_t: float
    excess_noise_xi: float = 0.0
    eta_trusted: float = 1.0
    v_elec: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.transmittance_t <= 1.0:
            raise ValueError(f"transmittance_t must be in (0, 1], got {self.transmittance_t}")
        if self.excess_noise_xi < 0.0:
            raise ValueError(f"excess_noise_xi must be >= 0, got {self.excess_noise_xi}")
        if not 0.0 < self.eta_trusted <= 1.0:
            raise ValueError(f"eta_trusted must be in (0, 1], got {self.eta_trusted}")
        if self.v_elec < 0.0:
            raise ValueError(f"v_elec must be >= 0, got {self.v_elec}")

    @property
    def eta_eff(self) -> float:
        """Detector efficiency after folding electronic noise into loss."""
        return self.eta_trusted / (1.0 + self.v_elec)

    @property
    def tau(self) -> float:
        """Effective transmittance T * eta_eff seen by the covariance matrix."""
        return self.transmittance_t * self.eta_eff


@dataclass(frozen=True)
class NetworkTopology:
    """Feeder + 1xN splitter + drop fibers, losses in dB."""

    splitter_fanout: int
    feeder_length_km: float = 0.0
    attenuation_db_per_km: float = 0.2
    splitter_excess_loss_db: float = 0.0
    drop_lengths_km: tuple = ()

    def __post_init__(self):
        if self.splitter_fanout < 1:
            raise ValueError("splitter_fanout must be >= 1")
        if self.feeder_length_km < 0 or self.attenuation_db_per_km < 0:
            raise ValueError("lengths and attenuation must be >= 0")
        drops = tuple(self.drop_lengths_km) or (0.0,) * self.splitter_fanout
        if len(drops) != self.splitter_fanout:
            raise ValueError("drop_lengths_km must have one entry per splitter port")
        if any(d < 0 for d in drops):
            raise ValueError("drop lengths must be >= 0")
        object.__setattr__(self, "drop_lengths_km", drops)


@dataclass(frozen=True)
class UserRate:
    """Per-user security figures; rates in bits/symbol and bits/s."""

    user: int
    i_ab: float
    chi_be: float
    max_inter_bob: float
    limited_by: str
    k_bits_per_symbol: float
    skr_bps: float


@dataclass(frozen=True)
class SecurityResult:
    users: tuple

    def rate(self, user: int) -> UserRate:
        return self.users[user]

    @property
    def mean_skr_bps(self) -> float:
        return float(np.mean([u.skr_bps for u in self.users]))


def channel_transmittance(topology: NetworkTopology, user: int) -> float:
    """Modeled power transmittance of one splitter branch.

    T = 10^(-(alpha*(L_feeder + L_drop) + 10 log10 N + excess) / 10).
    """
    if not 0 <= user < topology.splitter_fanout:
        raise IndexError(f"user {user} out of range for fanout {topology.splitter_fanout}")
    loss_db = (
        topology.attenuation_db_per_km
        * (topology.feeder_length_km + topology.drop_lengths_km[user])
        + 10.0 * math.log10(topology.splitter_fanout)
        + topology.splitter_excess_loss_db
    )
    return 10.0 ** (-loss_db / 10.0)


def build_ptmp_covariance(p: ProtocolParams, users: list) -> CovarianceMatrix:
    """Covariance matrix of mode A and the N receiver modes after the splitter.

    Mode A is V*I2; branch i couples to A through sqrt(tau_i (V^2-1)) Z and
    to branch j through sqrt(tau_i tau_j) (V-1) I2 (the shared modulation);
    its own block carries tau_i (V-1) + 1 + tau_i xi_i.
    """
    if not users:
        raise ValueError("need at least one user")
    v = p.v
    n = len(users)
    z = np.diag([1.0, -1.0])
    gamma = np.zeros((2 * (n + 1), 2 * (n + 1)))
    gamma[0:2, 0:2] = v * np.eye(2)
    taus = [u.tau for u in users]
    for i, u in enumerate(users):
        b = 2 * (i + 1)
        gamma[b : b + 2, b : b + 2] = (taus[i] * (v - 1.0) + 1.0 + taus[i] * u.excess_noise_xi) * np.eye(2)
        coupling = math.sqrt(taus[i] * (v * v - 1.0)) * z
        gamma[0:2, b : b + 2] = coupling
        gamma[b : b + 2, 0:2] = coupling
        for j in range(i):
            bj = 2 * (j + 1)
            cross = math.sqrt(taus[i] * taus[j]) * (v - 1.0) * np.eye(2)
            gamma[b : b + 2, bj : bj + 2] = cross
            gamma[bj : bj + 2, b : b + 2] = cross
    try:
        return CovarianceMatrix(gamma)
    except InvalidCovarianceError as exc:
        raise InvalidCovarianceError(f"channel parameters give an unphysical network state: {exc}") from exc


def _outcome_moments(gamma: CovarianceMatrix, mode: int):
    """Heterodyne-outcome variances (x, p) of one mode: (gamma_mm + 1) / 2."""
    blk = gamma.block(mode, mode)
    return (blk[0, 0] + 1.0) / 2.0, (blk[1, 1] + 1.0) / 2.0


def mutual_info_alice_bob(gamma: CovarianceMatrix, user: int) -> float:
    """I(A:B_user) in bits/symbol for heterodyne detection on both sides.

    Built from measured variances (gamma_mm + 1)/2 and cross covariances
    gamma_AB/2 per quadrature; the two quadratures are summed.  Equals
    log2(1 + SNR) for the symmetric model matrix.
    """
    if not 1 <= user + 1 <= gamma.modes - 1:
        raise IndexError(f"user {user} out of range for {gamma.modes - 1} receivers")
    mode = user + 1
    va_x, va_p = _outcome_moments(gamma, 0)
    vb_x, vb_p = _outcome_moments(gamma, mode)
    cross = gamma.block(0, mode) / 2.0
    total = 0.0
    for (va, vb, c) in ((va_x, vb_x, cross[0, 0]), (va_p, vb_p, cross[1, 1])):
        rho2 = c * c / (va * vb)
        rho2 = min(rho2, 1.0 - 1e-15)
        total += scalar_gaussian_mutual_info(vb, vb * (1.0 - rho2))
    return total


def holevo_bound(gamma: CovarianceMatrix, user: int) -> float:
    """Eve's Holevo information on user's heterodyne outcome, in bits/symbol.

    Eve holds the purification of the state described by gamma, so
    chi = S(gamma) - S(gamma | heterodyne on the user's mode).
    """
    if not 1 <= user + 1 <= gamma.modes - 1:
        raise IndexError(f"user {user} out of range for {gamma.modes - 1} receivers")
    chi = von_neumann_entropy(gamma) - von_neumann_entropy(heterodyne_condition(gamma, user + 1))
    if chi < -1e-9:
        raise InvalidCovarianceError(f"negative Holevo bound {chi}; inconsistent input matrix")
    return max(chi, 0.0)


def inter_user_mutual_info(gamma: CovarianceMatrix, i: int, j: int) -> float:
    """Classical mutual information between two users' heterodyne outcomes.

    Per quadrature I = -1/2 log2(1 - rho^2), rho from the measured moments
    (cross covariance gamma_ij/2, variances (gamma_mm + 1)/2); x and p summed.
    """
    if i == j:
        raise ValueError("need two distinct users")
    n_users = gamma.modes - 1
    for u in (i, j):
        if not 0 <= u < n_users:
            raise IndexError(f"user {u} out of range for {n_users} receivers")
    vi_x, vi_p = _outcome_moments(gamma, i + 1)
    vj_x, vj_p = _outcome_moments(gamma, j + 1)
    cross = gamma.block(i + 1, j + 1) / 2.0
    total = 0.0
    for (vi, vj, c) in ((vi_x, vj_x, cross[0, 0]), (vi_p, vj_p, cross[1, 1])):
        rho2 = min(c * c / (vi * vj), 1.0 - 1e-15)
        total += -0.5 * math.log2(1.0 - rho2)
    return total


def secret_key_rate(gamma: CovarianceMatrix, user: int, p: ProtocolParams) -> UserRate:
    """Asymptotic reverse-reconciliation key rate of one user.

    The Holevo term is evaluated on the reduced (A, B_user) state; the
    inter-user terms come from the pairwise blocks of the full matrix.
    Negative rates are clamped to zero in bits/s only.
    """
    n_users = gamma.modes - 1
    i_ab = mutual_info_alice_bob(gamma, user)
    chi = holevo_bound(gamma.reduce([0, user + 1]), 0)
    inter = [inter_user_mutual_info(gamma, user, o) for o in range(n_users) if o != user]
    max_inter = max(inter) if inter else 0.0
    if chi >= max_inter:
        limited_by, removed = "holevo", chi
    else:
        limited_by, removed = "inter_user", max_inter
    k = p.beta * i_ab - removed
    skr = max(k, 0.0) * p.effective_symbol_rate_hz
    return UserRate(
        user=user,
        i_ab=i_ab,
        chi_be=chi,
        max_inter_bob=max_inter,
        limited_by=limited_by,
        k_bits_per_symbol=k,
        skr_bps=skr,
    )


def evaluate_network(gamma: CovarianceMatrix, p: ProtocolParams) -> SecurityResult:
    """secret_key_rate for every receiver mode of the matrix."""
    return SecurityResult(tuple(secret_key_rate(gamma, u, p) for u in range(gamma.modes - 1)))


def plob_bound(transmittance: float) -> float:
    """Repeaterless secret-key capacity of a lossy channel: -log2(1 - T)."""
    if transmittance <= 0.0:
        raise ValueError(f"transmittance must be positive, got {transmittance}")
    if transmittance >= 1.0:
        raise ValueError("bound diverges for transmittance >= 1")
    return -math.log2(1.0 - transmittance)
