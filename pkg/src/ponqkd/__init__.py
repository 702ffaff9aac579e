"""Point-to-multipoint CV-QKD access-network simulator and security toolkit."""

from .gaussian import (
    CovarianceMatrix,
    entropy_g,
    heterodyne_condition,
    scalar_gaussian_mutual_info,
    symplectic_eigenvalues,
    symplectic_form,
    von_neumann_entropy,
)
from .security import (
    NetworkTopology,
    ProtocolParams,
    SecurityResult,
    UserChannelParams,
    UserRate,
    build_ptmp_covariance,
    channel_transmittance,
    evaluate_network,
    holevo_bound,
    inter_user_mutual_info,
    mutual_info_alice_bob,
    plob_bound,
    secret_key_rate,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceMatrix",
    "NetworkTopology",
    "ProtocolParams",
    "SecurityResult",
    "UserChannelParams",
    "UserRate",
    "build_ptmp_covariance",
    "channel_transmittance",
    "entropy_g",
    "evaluate_network",
    "heterodyne_condition",
    "holevo_bound",
    "inter_user_mutual_info",
    "mutual_info_alice_bob",
    "plob_bound",
    "scalar_gaussian_mutual_info",
    "secret_key_rate",
    "symplectic_eigenvalues",
    "symplectic_form",
    "von_neumann_entropy",
]
