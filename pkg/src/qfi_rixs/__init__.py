"""QFI entanglement witnesses for spin-orbital systems probed by RIXS."""

from qfi_rixs.errors import (
    ConfigError,
    DomainError,
    LoadError,
    QfiRixsError,
    ResourceError,
)
from qfi_rixs.geometry import BeamGeometry, PolarizationVector, momentum_transfer
from qfi_rixs.angular import DipoleMatrix, OrbitalBasis, SpinOrbital, clebsch_gordan, dipole_matrix
from qfi_rixs.scattering import TMatrix, eigenvalue_spread, local_generator, optimal_phase, t_matrix
from qfi_rixs.bounds import commutator_offset, k_producible_bound, mixed_pol_bound
from qfi_rixs.manybody import LatticeSpec, ManyBodyState, PartitionSpec, qfi_pure

__version__ = "0.1.0"

__all__ = [
    "BeamGeometry",
    "ConfigError",
    "DipoleMatrix",
    "DomainError",
    "LatticeSpec",
    "LoadError",
    "ManyBodyState",
    "OrbitalBasis",
    "PartitionSpec",
    "PolarizationVector",
    "QfiRixsError",
    "ResourceError",
    "SpinOrbital",
    "TMatrix",
    "clebsch_gordan",
    "commutator_offset",
    "dipole_matrix",
    "eigenvalue_spread",
    "k_producible_bound",
    "local_generator",
    "mixed_pol_bound",
    "momentum_transfer",
    "optimal_phase",
    "qfi_pure",
    "t_matrix",
]
