"""Scattering geometry: beam directions, photon polarizations, momentum transfer.

Frame convention: the sample surface is the x-y plane with normal along z.
At ``phi = 0`` the scattering plane is x-z. The incident and scattered grazing
angles are measured from the sample plane on opposite sides, so the angle
between the two beams is ``pi - (theta_i + theta_s)`` and
``k_i . k_s = -cos(theta_i + theta_s)``. A nonzero ``phi`` rigidly rotates the
scattering plane about z.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from qfi_rixs.errors import DomainError

UNIT_TOL = 1e-12

Beam = Literal["incident", "scattered"]
PolLabel = Literal["pi", "sigma"]


def _rot_z(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class BeamGeometry:
    """Grazing angles (radians) and photon wavevector magnitudes.

    ``phi`` is reduced into ``[0, 2*pi)``; the grazing angles must lie in
    ``[0, pi/2]``.
    """

    theta_i: float
    theta_s: float
    phi: float = 0.0
    k_magnitude_i: float = 1.0
    k_magnitude_s: float = 1.0

    def __post_init__(self):
        for name in ("theta_i", "theta_s"):
            val = float(getattr(self, name))
            if not np.isfinite(val) or val < -1e-15 or val > np.pi / 2 + 1e-15:
                raise DomainError(f"{name}={val!r} outside [0, pi/2]")
            object.__setattr__(self, name, min(max(val, 0.0), np.pi / 2))
        phi = float(self.phi)
        if not np.isfinite(phi):
            raise DomainError(f"phi={phi!r} is not finite")
        object.__setattr__(self, "phi", phi % (2 * np.pi))
        for name in ("k_magnitude_i", "k_magnitude_s"):
            val = float(getattr(self, name))
            if not np.isfinite(val) or val <= 0:
                raise DomainError(f"{name}={val!r} must be positive")
            object.__setattr__(self, name, val)

    @classmethod
    def from_degrees(cls, theta_i_deg, theta_s_deg, phi_deg=0.0, k_in=1.0, k_out=1.0):
        return cls(
            np.deg2rad(theta_i_deg), np.deg2rad(theta_s_deg), np.deg2rad(phi_deg), k_in, k_out
        )


@dataclass(frozen=True)
class PolarizationVector:
    """Unit complex 3-vector in the sample frame."""

    components: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.components, dtype=complex).reshape(-1)
        if v.shape != (3,):
            raise DomainError(f"polarization needs 3 components, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("polarization has non-finite components")
        norm = np.sqrt(np.sum(np.abs(v) ** 2))
        if abs(norm - 1.0) > UNIT_TOL:
            raise DomainError(f"polarization is not unit norm (|eps| = {norm!r})")
        v.setflags(write=False)
        object.__setattr__(self, "components", v)

    @classmethod
    def normalized(cls, components: Sequence[complex], label: str = "") -> "PolarizationVector":
        v = np.asarray(components, dtype=complex)
        n = np.linalg.norm(v)
        if n == 0:
            raise DomainError("cannot normalize a zero polarization vector")
        return cls(v / n, label)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)


@dataclass(frozen=True)
class MomentumTransfer:
    q: np.ndarray
    q_chain: float


def beam_directions(geom: BeamGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Unit wavevectors ``(k_i, k_s)`` of the incident and scattered beams."""
    ti, ts = geom.theta_i, geom.theta_s
    k_i = np.array([np.cos(ti), 0.0, -np.sin(ti)])
    k_s = np.array([-np.cos(ts), 0.0, -np.sin(ts)])
    rot = _rot_z(geom.phi)
    return rot @ k_i, rot @ k_s


def sigma_direction(geom: BeamGeometry) -> np.ndarray:
    return _rot_z(geom.phi) @ np.array([0.0, 1.0, 0.0])


def polarization_vector(geom: BeamGeometry, beam: Beam, label: PolLabel) -> PolarizationVector:
    """pi (in-plane, ``k x sigma``) or sigma (plane normal) polarization of a beam."""
    if beam not in ("incident", "scattered"):
        raise DomainError(f"unknown beam {beam!r}")
    sigma = sigma_direction(geom)
    if label == "sigma":
        return PolarizationVector(sigma.astype(complex), "sigma")
    if label != "pi":
        raise DomainError(f"unknown polarization label {label!r}")
    k_i, k_s = beam_directions(geom)
    k = k_i if beam == "incident" else k_s
    pi_vec = np.cross(k, sigma)
    pi_vec /= np.linalg.norm(pi_vec)
    return PolarizationVector(pi_vec.astype(complex), "pi")


def momentum_transfer(geom: BeamGeometry, lattice_direction=(1.0, 0.0, 0.0)) -> MomentumTransfer:
    d = np.asarray(lattice_direction, dtype=float)
    if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise DomainError(f"lattice_direction must be a unit 3-vector, got {d!r}")
    k_i, k_s = beam_directions(geom)
    q = geom.k_magnitude_i * k_i - geom.k_magnitude_s * k_s
    return MomentumTransfer(q=q, q_chain=float(q @ d))


def channel_polarizations(geom: BeamGeometry, channel: str) -> tuple[PolarizationVector, PolarizationVector]:
    """Parse ``"pi-sigma"`` style channel names into (incident, scattered) vectors."""
    try:
        inc, sca = channel.split("-")
    except ValueError:
        raise DomainError(f"channel {channel!r} is not of the form '<inc>-<sca>'") from None
    return polarization_vector(geom, "incident", inc), polarization_vector(geom, "scattered", sca)
