"""Single-site scattering matrices and the phase-symmetrized Hermitian generator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qfi_rixs.angular import DipoleMatrix
from qfi_rixs.errors import DomainError
from qfi_rixs.geometry import PolarizationVector

HERMITIAN_TOL = 1e-10
DEGENERATE_T2 = 1e-12


@dataclass(frozen=True)
class TMatrix:
    """Valence x valence matrix ``T[a, b] = sum_g conj(M_s[g, a]) M_i[g, b]``."""

    entries: np.ndarray
    eps_i: PolarizationVector | None = None
    eps_s: PolarizationVector | None = None

    def __post_init__(self):
        t = np.asarray(self.entries, dtype=complex)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise DomainError(f"T matrix must be square, got shape {t.shape}")
        object.__setattr__(self, "entries", t)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def dagger(self) -> np.ndarray:
        return self.entries.conj().T

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def t_matrix(m_i: DipoleMatrix, m_s: DipoleMatrix) -> TMatrix:
    if m_i.basis.core != m_s.basis.core or m_i.basis.valence != m_s.basis.valence:
        raise DomainError("incident and scattered dipole matrices use different bases")
    a, b = np.asarray(m_i.entries), np.asarray(m_s.entries)
    if a.shape != b.shape:
        raise DomainError(f"dipole shapes differ: {a.shape} vs {b.shape}")
    return TMatrix(b.conj().T @ a, m_i.polarization, m_s.polarization)


def conjugate_t(t: TMatrix) -> TMatrix:
    """``T(eps_s, eps_i) = T(eps_i, eps_s)^dagger``; polarizations swap."""
    return TMatrix(t.dagger, t.eps_s, t.eps_i)


def optimal_phase(t_sq_expectation: complex) -> float:
    """Phase that makes ``Re[exp(2i phi) <T_q^2>]`` vanish, reduced to ``[0, pi)``.

    Returns ``pi/4`` when ``|<T_q^2>| < 1e-12``.
    """
    z = complex(t_sq_expectation)
    if abs(z) < DEGENERATE_T2:
        return np.pi / 4
    return float((np.pi / 4 - 0.5 * np.angle(z)) % np.pi)


def local_generator(t: TMatrix, q_chain: float, r_j: float, phase: float) -> np.ndarray:
    """Hermitian ``e^{i a} T + e^{-i a} T^dagger`` with ``a = q r_j + phase``."""
    arg = q_chain * r_j + phase
    e = np.exp(1j * arg)
    tm = t.entries
    return e * tm + np.conj(e) * tm.conj().T


def check_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {h.shape}")
    asym = float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0
    if asym > tol:
        raise DomainError(f"matrix is not Hermitian (max |H - H^dagger| = {asym:.3e})")
    return h


def eigenvalue_spread(h: np.ndarray) -> float:
    """``lambda_max - lambda_min`` of a Hermitian matrix."""
    h = check_hermitian(h)
    w = np.linalg.eigvalsh(0.5 * (h + h.conj().T))
    return float(max(w[-1] - w[0], 0.0))


def commutator(t: TMatrix) -> np.ndarray:
    """``[T^dagger, T]``, Hermitian and traceless."""
    tm = t.entries
    td = tm.conj().T
    return td @ tm - tm @ td


@dataclass(frozen=True)
class HermitianGenerator:
    """``O_q = (e^{i phase} T_q + e^{-i phase} T_q^dagger) / sqrt2`` on a chain.

    ``T_q = sum_j exp(i q r_j) T_j`` with ``T_j`` the single-site matrix acting
    on site ``j``.
    """

    t: TMatrix
    q_chain: float
    phase: float
    site_positions: Sequence[float]

    @property
    def n_sites(self) -> int:
        return len(self.site_positions)

    def local(self, j: int) -> np.ndarray:
        """Site term of ``O_q``; equals ``local_generator(...) / sqrt2``."""
        return local_generator(self.t, self.q_chain, self.site_positions[j], self.phase) / np.sqrt(2)

    def dense(self) -> np.ndarray:
        """Explicit many-body matrix; only for small clusters."""
        d = self.t.dim
        n = self.n_sites
        out = np.zeros((d**n, d**n), dtype=complex)
        for j in range(n):
            op = np.eye(1)
            for i in range(n):
                op = np.kron(op, self.local(j) if i == j else np.eye(d))
            out += op
        return out
