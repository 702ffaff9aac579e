"""Gaussian-state linear algebra on covariance matrices in shot-noise units.

Conventions used throughout the package:

* quadrature ordering is interleaved, ``(x1, p1, ..., xM, pM)``;
* the vacuum quadrature variance is 1 SNU (not hbar/2);
* a matrix is physical when every symplectic eigenvalue is >= 1 up to a
  small clamp tolerance, which finite-sample estimates need.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidCovarianceError, UnphysicalEigenvalueError

#: relative tolerance for the symmetry check of covariance matrices
SYMMETRY_RTOL = 1e-10
#: symplectic eigenvalues may sit this far below 1 and are clamped to 1
PHYSICALITY_TOL = 1e-9
#: eigenvalues of i*Omega*gamma closer than this are treated as one pair
DEDUP_TOL = 1e-7


def symplectic_form(modes: int) -> np.ndarray:
    """Block-diagonal symplectic form Omega with 2x2 blocks [[0, 1], [-1, 0]]."""
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    omega = np.zeros((2 * modes, 2 * modes))
    for m in range(modes):
        omega[2 * m : 2 * m + 2, 2 * m : 2 * m + 2] = block
    return omega


def _raw_symplectic_eigenvalues(data: np.ndarray) -> np.ndarray:
    """Moduli of the eigenvalues of i*Omega*gamma, one per mode, descending."""
    modes = data.shape[0] // 2
    try:
        eig = np.linalg.eigvals(1j * symplectic_form(modes) @ data)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - solver failure
        raise InvalidCovarianceError(f"eigen-solver did not converge: {exc}") from exc
    mods = np.sort(np.abs(eig))[::-1]
    # eigenvalues come in +/- pairs; adjacent after sorting
    paired = mods[::2]
    if np.any(np.abs(mods[::2] - mods[1::2]) > DEDUP_TOL * np.maximum(mods[::2], 1.0)):
        raise InvalidCovarianceError("eigenvalues of i*Omega*gamma do not pair up")
    return paired


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """2M x 2M real symmetric covariance matrix of an M-mode Gaussian state.

    Validated at construction: symmetry, positive definiteness and
    physicality (symplectic spectrum >= 1 - ``physicality_tol``).
    ``physicality_tol`` is widened for finite-sample estimates, which sit
    near the vacuum boundary.
    """

    data: np.ndarray
    physicality_tol: float = PHYSICALITY_TOL
    _spectrum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] % 2:
            raise InvalidCovarianceError(f"expected a 2Mx2M matrix, got shape {data.shape}")
        scale = max(float(np.max(np.abs(data))), 1.0)
        if np.max(np.abs(data - data.T)) > SYMMETRY_RTOL * scale:
            raise InvalidCovarianceError("matrix is not symmetric within tolerance")
        data = 0.5 * (data + data.T)
        try:
            np.linalg.cholesky(data)
        except np.linalg.LinAlgError as exc:
            raise InvalidCovarianceError("matrix is not positive definite") from exc
        spectrum = _raw_symplectic_eigenvalues(data)
        if spectrum[-1] < 1.0 - self.physicality_tol:
            raise InvalidCovarianceError(
                f"unphysical state: smallest symplectic eigenvalue {spectrum[-1]!r} "
                f"below 1 - {self.physicality_tol}"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "_spectrum", spectrum)

    @property
    def modes(self) -> int:
        return self.data.shape[0] // 2

    def block(self, i: int, j: int) -> np.ndarray:
        """2x2 block coupling mode i and mode j."""
        return self.data[2 * i : 2 * i + 2, 2 * j : 2 * j + 2]

    def reduce(self, keep: Sequence[int]) -> "CovarianceMatrix":
        """Covariance of the reduced state on the given modes (partial trace)."""
        keep = list(keep)
        if len(set(keep)) != len(keep):
            raise ValueError("duplicate mode indices")
        for m in keep:
            if not 0 <= m < self.modes:
                raise IndexError(f"mode index {m} out of range for {self.modes} modes")
        idx = np.concatenate([[2 * m, 2 * m + 1] for m in keep])
        return CovarianceMatrix(self.data[np.ix_(idx, idx)], self.physicality_tol)


def _as_cov(gamma: "CovarianceMatrix | np.ndarray") -> CovarianceMatrix:
    if isinstance(gamma, CovarianceMatrix):
        return gamma
    return CovarianceMatrix(np.asarray(gamma, dtype=float))


def symplectic_eigenvalues(gamma: "CovarianceMatrix | np.ndarray") -> np.ndarray:
    """Symplectic spectrum of a physical covariance matrix, descending.

    One value per mode, each >= 1 - PHYSICALITY_TOL.
    """
    return _as_cov(gamma)._spectrum.copy()


def entropy_g(nu) -> float:
    """Bosonic entropy g(nu) in bits for symplectic eigenvalue(s) nu.

    g(x) = ((x+1)/2) log2((x+1)/2) - ((x-1)/2) log2((x-1)/2); g(1) = 0.
    Values within PHYSICALITY_TOL below 1 are clamped to 1; anything lower
    raises UnphysicalEigenvalueError.
    """
    arr = np.asarray(nu, dtype=float)
    if np.any(arr < 1.0 - PHYSICALITY_TOL):
        raise UnphysicalEigenvalueError(
            f"symplectic eigenvalue below vacuum limit: {float(np.min(arr))!r}"
        )
    arr = np.maximum(arr, 1.0)
    up = (arr + 1.0) / 2.0
    dn = (arr - 1.0) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        term_dn = np.where(dn > 0.0, dn * np.log2(np.where(dn > 0.0, dn, 1.0)), 0.0)
    out = up * np.log2(up) - term_dn
    if out.ndim == 0:
        return float(out)
    return out


def von_neumann_entropy(gamma: "CovarianceMatrix | np.ndarray") -> float:
    """Von Neumann entropy in bits: sum of g over the symplectic spectrum."""
    return float(np.sum(entropy_g(symplectic_eigenvalues(gamma))))


def heterodyne_condition(
    gamma: "CovarianceMatrix | np.ndarray", measured_mode: int
) -> CovarianceMatrix:
    """Covariance of the remaining modes after ideal heterodyne on one mode.

    gamma' = gamma_R - sigma (gamma_B + I)^-1 sigma^T, where gamma_B is the
    measured mode's block and sigma the cross covariance.  (gamma_B + I) is
    positive definite for any physical state, so the inverse always exists.
    """
    cov = _as_cov(gamma)
    if cov.modes < 2:
        raise ValueError("need at least two modes to condition on one")
    if not 0 <= measured_mode < cov.modes:
        raise IndexError(f"measured_mode {measured_mode} out of range for {cov.modes} modes")
    idx = np.arange(2 * cov.modes)
    mb = idx[2 * measured_mode : 2 * measured_mode + 2]
    keep = np.setdiff1d(idx, mb)
    gamma_r = cov.data[np.ix_(keep, keep)]
    sigma = cov.data[np.ix_(keep, mb)]
    gamma_b = cov.data[np.ix_(mb, mb)]
    cond = gamma_r - sigma @ np.linalg.inv(gamma_b + np.eye(2)) @ sigma.T
    return CovarianceMatrix(cond, cov.physicality_tol)


def scalar_gaussian_mutual_info(var_b: float, var_b_given_a: float) -> float:
    """Mutual information (bits) between jointly Gaussian scalars.

    Per-quadrature form 0.5 * log2(var_b / var_b_given_a).
    """
    if var_b_given_a <= 0.0 or var_b <= 0.0:
        raise ValueError("variances must be positive")
    if var_b < var_b_given_a:
        raise ValueError("conditioning cannot increase a Gaussian variance")
    return 0.5 * float(np.log2(var_b / var_b_given_a))


def random_symplectic(modes: int, rng: np.random.Generator, max_squeeze: float = 0.6) -> np.ndarray:
    """Random symplectic matrix (Euler decomposition: passive-squeeze-passive)."""

    def passive() -> np.ndarray:
        z = rng.normal(size=(modes, modes)) + 1j * rng.normal(size=(modes, modes))
        q, r = np.linalg.qr(z)
        u = q * (np.diag(r) / np.abs(np.diag(r)))
        out = np.zeros((2 * modes, 2 * modes))
        for a in range(modes):
            for b in range(modes):
                out[2 * a, 2 * b] = u[a, b].real
                out[2 * a, 2 * b + 1] = -u[a, b].imag
                out[2 * a + 1, 2 * b] = u[a, b].imag
                out[2 * a + 1, 2 * b + 1] = u[a, b].real
        return out

    r = rng.uniform(-max_squeeze, max_squeeze, size=modes)
    squeeze = np.diag(np.repeat(np.exp(r), 2) ** np.tile([1.0, -1.0], modes))
    return passive() @ squeeze @ passive()


def random_physical_covariance(
    modes: int,
    rng: np.random.Generator,
    nu_max: float = 3.0,
    max_squeeze: float = 0.6,
) -> CovarianceMatrix:
    """Random physical covariance matrix S diag(nu_i I2) S^T with nu_i >= 1."""
    nu = rng.uniform(1.0, nu_max, size=modes)
    diag = np.diag(np.repeat(nu, 2))
    s = random_symplectic(modes, rng, max_squeeze)
    return CovarianceMatrix(s @ diag @ s.T)
