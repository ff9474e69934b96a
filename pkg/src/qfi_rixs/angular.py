"""Angular-momentum algebra and core-to-valence dipole matrices.

Phases follow the Condon-Shortley convention. Dipole matrices are built from
Gaunt factors ``<l' m'| C^1_q |l m>`` written through Clebsch-Gordan
coefficients, times a radial integral (default 1, which puts every derived
quantity in units of f0).

Spin-orbital ordering within a shell is ``(m_l, spin)`` with spin fastest and
``m_l`` ascending, e.g. for 2p: (-1,up), (-1,down), (0,up), ... .
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from qfi_rixs.errors import DomainError, LoadError
from qfi_rixs.geometry import PolarizationVector

SPINS = ("up", "down")

# Real (cubic) d orbitals labelled by the real-harmonic index m.
CUBIC_D_LABELS = {-2: "xy", -1: "yz", 0: "z2", 1: "xz", 2: "x2-y2"}
CUBIC_D_ORDER = ("x2-y2", "z2", "xy", "xz", "yz")


def _twice(x) -> int:
    """Convert an integer or half-integer to twice its value, exactly."""
    f = Fraction(x).limit_denominator(4) if isinstance(x, float) else Fraction(x)
    t = 2 * f
    if t.denominator != 1 or (isinstance(x, float) and abs(float(f) - x) > 1e-12):
        raise DomainError(f"{x!r} is not an integer or half-integer")
    return int(t)


@lru_cache(maxsize=None)
def _cg_twice(j1: int, m1: int, j2: int, m2: int, J: int, M: int) -> float:
    # Racah closed form; all arguments are doubled quantum numbers.
    if m1 + m2 != M:
        return 0.0
    if J < abs(j1 - j2) or J > j1 + j2 or (j1 + j2 + J) % 2:
        return 0.0
    f = math.factorial

    def h(x):
        return x // 2

    a = h(j1 + j2 - J)
    pre = Fraction(
        (J + 1) * f(h(J + j1 - j2)) * f(h(J - j1 + j2)) * f(a),
        f(h(j1 + j2 + J) + 1),
    )
    pre *= (
        f(h(J + M)) * f(h(J - M)) * f(h(j1 - m1)) * f(h(j1 + m1)) * f(h(j2 - m2)) * f(h(j2 + m2))
    )
    kmin = max(0, h(j2 - J - m1), h(j1 - J + m2))
    kmax = min(a, h(j1 - m1), h(j2 + m2))
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = (
            f(k)
            * f(a - k)
            * f(h(j1 - m1) - k)
            * f(h(j2 + m2) - k)
            * f(h(J - j2 + m1) + k)
            * f(h(J - j1 - m2) + k)
        )
        total += Fraction((-1) ** k, den)
    if total == 0:
        return 0.0
    sign = 1.0 if total > 0 else -1.0
    return sign * math.sqrt(pre * total * total)


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """Clebsch-Gordan coefficient ``<j1 m1; j2 m2 | J M>``.

    Arguments may be ints, floats or ``Fraction`` values; half-integers are
    accepted. Returns an exact zero when ``m1 + m2 != M`` or the triangle rule
    fails.

    Raises
    ------
    DomainError
        If any ``|m| > j``, ``j < 0`` or ``j - m`` is not an integer.
    """
    t = [_twice(x) for x in (j1, m1, j2, m2, J, M)]
    for j, m in ((t[0], t[1]), (t[2], t[3]), (t[4], t[5])):
        if j < 0 or abs(m) > j or (j - m) % 2:
            raise DomainError(f"invalid angular momentum pair j={j / 2}, m={m / 2}")
    return _cg_twice(*t)


def gaunt_c(l_bra: int, m_bra: int, k: int, q: int, l_ket: int, m_ket: int) -> float:
    """Matrix element ``<l_bra m_bra | C^k_q | l_ket m_ket>`` of a Racah tensor."""
    if m_bra != m_ket + q:
        return 0.0
    return (
        math.sqrt((2 * l_ket + 1) / (2 * l_bra + 1))
        * clebsch_gordan(l_ket, m_ket, k, q, l_bra, m_bra)
        * clebsch_gordan(l_ket, 0, k, 0, l_bra, 0)
    )


def spherical_tensor_components(eps) -> np.ndarray:
    """Coefficients ``(c_-1, c_0, c_+1)`` with ``eps . r_hat = sum_q c_q C^1_q``.

    ``c_q = e_q^* . eps`` for the standard spherical basis
    ``e_{+1} = -(x + i y)/sqrt2``, ``e_0 = z``, ``e_{-1} = (x - i y)/sqrt2``.
    """
    e = np.asarray(eps, dtype=complex).reshape(3)
    s = np.sqrt(2.0)
    return np.array([(e[0] + 1j * e[1]) / s, e[2], -(e[0] - 1j * e[1]) / s])


@dataclass(frozen=True)
class SpinOrbital:
    n: int
    l: int
    ml: int
    spin: str

    def __post_init__(self):
        if self.l < 0 or abs(self.ml) > self.l:
            raise DomainError(f"invalid orbital l={self.l}, ml={self.ml}")
        if self.spin not in SPINS:
            raise DomainError(f"spin must be 'up' or 'down', got {self.spin!r}")

    def to_json(self) -> dict:
        return {"n": self.n, "l": self.l, "ml": self.ml, "spin": self.spin}

    @classmethod
    def from_json(cls, d: dict) -> "SpinOrbital":
        try:
            return cls(int(d["n"]), int(d["l"]), int(d["ml"]), str(d["spin"]))
        except (KeyError, TypeError) as exc:
            raise LoadError(f"bad basis entry {d!r}: {exc}") from None


def shell(n: int, l: int) -> tuple[SpinOrbital, ...]:
    return tuple(SpinOrbital(n, l, m, s) for m in range(-l, l + 1) for s in SPINS)


def cubic_d_transform() -> np.ndarray:
    """Unitary ``U`` (spherical m=-2..2 rows, cubic orbitals columns in
    ``CUBIC_D_ORDER``) so that ``d_cubic_k = sum_m U[m, k] Y_2m``."""
    r = 1 / np.sqrt(2.0)
    cols = {
        "x2-y2": {-2: r, 2: r},
        "z2": {0: 1.0},
        "xy": {-2: 1j * r, 2: -1j * r},
        "xz": {-1: r, 1: -r},
        "yz": {-1: 1j * r, 1: 1j * r},
    }
    u = np.zeros((5, 5), dtype=complex)
    for k, name in enumerate(CUBIC_D_ORDER):
        for m, c in cols[name].items():
            u[m + 2, k] = c
    return u


_CUBIC_INDEX = {v: k for k, v in CUBIC_D_LABELS.items()}


@dataclass(frozen=True)
class OrbitalBasis:
    """Core and valence spin-orbital lists.

    With ``valence_frame="cubic"`` the valence columns are real d orbitals and
    ``transform`` (shape ``(len(spherical_valence), len(valence))``) maps the
    full spherical valence shell onto them; it is unitary for the full shell and
    an isometry for orbital subsets.
    """

    core: tuple[SpinOrbital, ...]
    valence: tuple[SpinOrbital, ...]
    valence_frame: str = "spherical"
    transform: np.ndarray | None = field(default=None, compare=False)
    spherical_valence: tuple[SpinOrbital, ...] | None = None

    def __post_init__(self):
        for name in ("core", "valence"):
            entries = tuple(getattr(self, name))
            if len(set(entries)) != len(entries):
                raise DomainError(f"duplicate entries in {name} basis")
            object.__setattr__(self, name, entries)
        if self.valence_frame not in ("spherical", "cubic"):
            raise DomainError(f"unknown valence frame {self.valence_frame!r}")
        if self.valence_frame == "cubic":
            if self.transform is None or self.spherical_valence is None:
                raise DomainError("cubic frame needs a transform and the spherical shell")
            u = np.asarray(self.transform, dtype=complex)
            if u.shape != (len(self.spherical_valence), len(self.valence)):
                raise DomainError(
                    f"transform shape {u.shape} does not match "
                    f"({len(self.spherical_valence)}, {len(self.valence)})"
                )
            if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[1]))) > 1e-12:
                raise DomainError("cubic transform is not an isometry")

    @property
    def n_core(self) -> int:
        return len(self.core)

    @property
    def n_valence(self) -> int:
        return len(self.valence)


def l_edge_basis(frame: str = "spherical", orbitals: Sequence[str] | None = None) -> OrbitalBasis:
    """2p core (6 spin-orbitals) and 3d valence basis.

    ``orbitals`` selects a subset of cubic d orbitals (names from
    ``CUBIC_D_ORDER``) and implies ``frame="cubic"``.
    """
    core = shell(2, 1)
    sph = shell(3, 2)
    if orbitals is None and frame == "spherical":
        return OrbitalBasis(core, sph)
    if frame not in ("spherical", "cubic"):
        raise DomainError(f"unknown valence frame {frame!r}")
    names = tuple(orbitals) if orbitals is not None else CUBIC_D_ORDER
    unknown = [o for o in names if o not in CUBIC_D_ORDER]
    if unknown:
        raise DomainError(f"unknown cubic orbitals {unknown}; choose from {CUBIC_D_ORDER}")
    u5 = cubic_d_transform()
    cols = [CUBIC_D_ORDER.index(o) for o in names]
    u = np.kron(u5[:, cols], np.eye(2))
    valence = tuple(SpinOrbital(3, 2, _CUBIC_INDEX[o], s) for o in names for s in SPINS)
    return OrbitalBasis(core, valence, "cubic", u, sph)


@dataclass(frozen=True)
class DipoleMatrix:
    """Core x valence dipole amplitudes ``M[alpha, beta] = <core alpha| eps.r |valence beta>``."""

    entries: np.ndarray
    polarization: PolarizationVector | None
    basis: OrbitalBasis
    radial_integral: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.basis.n_core, self.basis.n_valence):
            raise DomainError(
                f"dipole matrix shape {m.shape} does not match basis "
                f"({self.basis.n_core}, {self.basis.n_valence})"
            )
        object.__setattr__(self, "entries", m)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def _spherical_block(eps_c: np.ndarray, core: Sequence[SpinOrbital], valence: Sequence[SpinOrbital]) -> np.ndarray:
    out = np.zeros((len(core), len(valence)), dtype=complex)
    for a, oc in enumerate(core):
        for b, ov in enumerate(valence):
            if oc.spin != ov.spin or abs(oc.l - ov.l) != 1:
                continue
            q = oc.ml - ov.ml
            if abs(q) > 1:
                continue
            out[a, b] = eps_c[q + 1] * gaunt_c(oc.l, oc.ml, 1, q, ov.l, ov.ml)
    return out


def dipole_matrix(eps: PolarizationVector, basis: OrbitalBasis | None = None, radial: float = 1.0) -> DipoleMatrix:
    """Atomic dipole matrix for polarization ``eps`` (Wigner-Eckart path)."""
    basis = l_edge_basis() if basis is None else basis
    c = spherical_tensor_components(eps)
    if basis.valence_frame == "cubic":
        m = _spherical_block(c, basis.core, basis.spherical_valence) @ basis.transform
    else:
        m = _spherical_block(c, basis.core, basis.valence)
    return DipoleMatrix(radial * m, eps, basis, float(radial))


def cartesian_dipole_matrices(basis: OrbitalBasis | None = None, radial: float = 1.0) -> np.ndarray:
    """Stack ``(3, n_core, n_valence)`` with ``M(eps) = sum_a eps_a M_a``."""
    return np.stack(
        [dipole_matrix(PolarizationVector(np.eye(3)[a]), basis, radial).entries for a in range(3)]
    )


# --- JSON import/export -----------------------------------------------------

def _matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _pairs_to_complex(arr: np.ndarray) -> np.ndarray:
    # keeps signed zeros, unlike re + 1j * im
    out = np.empty(arr.shape[:-1], dtype=complex)
    out.real, out.imag = arr[..., 0], arr[..., 1]
    return out


def _matrix_from_json(raw, name: str) -> np.ndarray:
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise LoadError(f"matrix {name!r} is malformed: {exc}") from None
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise LoadError(f"matrix {name!r} must be rows of [re, im] pairs, got shape {arr.shape}")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        r, c, _ = bad[0]
        raise LoadError(f"matrix {name!r} has a non-finite entry at row {r}, column {c}")
    return _pairs_to_complex(arr)


def dipole_to_json(m_i: DipoleMatrix, m_s: DipoleMatrix) -> dict:
    basis = m_i.basis
    doc = {
        "core_basis": [o.to_json() for o in basis.core],
        "valence_basis": [o.to_json() for o in basis.valence],
        "radial_integral": m_i.radial_integral,
        "matrices": {"eps_i": _matrix_to_json(m_i.entries), "eps_s": _matrix_to_json(m_s.entries)},
    }
    if basis.valence_frame == "cubic":
        doc["valence_frame"] = "cubic"
    pols = {}
    for key, m in (("eps_i", m_i), ("eps_s", m_s)):
        if m.polarization is not None:
            pols[key] = {
                "label": m.polarization.label,
                "components": [[float(z.real), float(z.imag)] for z in m.polarization.components],
            }
    if pols:
        doc["polarizations"] = pols
    return doc


def save_dipole_matrix(path, m_i: DipoleMatrix, m_s: DipoleMatrix) -> None:
    Path(path).write_text(json.dumps(dipole_to_json(m_i, m_s), indent=1) + "\n")


def _basis_from_doc(doc: dict) -> OrbitalBasis:
    try:
        core = tuple(SpinOrbital.from_json(d) for d in doc["core_basis"])
        valence = tuple(SpinOrbital.from_json(d) for d in doc["valence_basis"])
    except (KeyError, TypeError) as exc:
        raise LoadError(f"missing basis key: {exc}") from None
    except DomainError as exc:
        raise LoadError(str(exc)) from None
    frame = doc.get("valence_frame", "spherical")
    if frame == "cubic":
        names = [CUBIC_D_LABELS.get(o.ml) for o in valence[::2]]
        if all(o.l == 2 for o in valence) and None not in names and len(valence) == 2 * len(names):
            try:
                b = l_edge_basis(orbitals=names)
            except DomainError:
                b = None
            if b is not None and b.valence == valence and b.core == core:
                return b
        # Imported frames without a known transform are kept as opaque labels.
        frame = "spherical"
    try:
        return OrbitalBasis(core, valence, frame)
    except DomainError as exc:
        raise LoadError(str(exc)) from None


def _pol_from_doc(doc: dict, key: str) -> PolarizationVector | None:
    p = doc.get("polarizations", {}).get(key)
    if p is None:
        return None
    comps = np.array(p["components"], dtype=float)
    return PolarizationVector(_pairs_to_complex(comps), p.get("label", ""))


def dipole_from_json(doc: dict) -> tuple[DipoleMatrix, DipoleMatrix]:
    basis = _basis_from_doc(doc)
    try:
        mats = doc["matrices"]
        raw_i, raw_s = mats["eps_i"], mats["eps_s"]
    except (KeyError, TypeError) as exc:
        raise LoadError(f"missing matrices entry: {exc}") from None
    radial = float(doc.get("radial_integral", 1.0))
    out = []
    for key, raw in (("eps_i", raw_i), ("eps_s", raw_s)):
        m = _matrix_from_json(raw, key)
        if m.shape != (basis.n_core, basis.n_valence):
            raise LoadError(
                f"matrix {key!r} has shape {m.shape} but the basis needs "
                f"({basis.n_core}, {basis.n_valence})"
            )
        out.append(DipoleMatrix(m, _pol_from_doc(doc, key), basis, radial))
    return out[0], out[1]


def load_dipole_matrix(path) -> tuple[DipoleMatrix, DipoleMatrix]:
    """Read ``(M(eps_i), M(eps_s))`` from a dipole JSON file."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise LoadError(f"dipole file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: invalid JSON ({exc})") from None
    return dipole_from_json(doc)


def load_cartesian_dipoles(path) -> tuple[np.ndarray, OrbitalBasis, float]:
    """Read a dipole file carrying Cartesian components ``matrices.{x,y,z}``.

    These let angular sweeps evaluate ``M(eps) = sum_a eps_a M_a`` for
    imported (non-atomic) orbitals.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise LoadError(f"dipole file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: invalid JSON ({exc})") from None
    basis = _basis_from_doc(doc)
    mats = doc.get("matrices", {})
    if not all(k in mats for k in ("x", "y", "z")):
        raise LoadError(f"{path}: angular sweeps need Cartesian matrices 'x', 'y', 'z'")
    stack = []
    for k in ("x", "y", "z"):
        m = _matrix_from_json(mats[k], k)
        if m.shape != (basis.n_core, basis.n_valence):
            raise LoadError(f"matrix {k!r} has shape {m.shape}, basis needs ({basis.n_core}, {basis.n_valence})")
        stack.append(m)
    return np.stack(stack), basis, float(doc.get("radial_integral", 1.0))


def cartesian_to_json(stack: np.ndarray, basis: OrbitalBasis, radial: float = 1.0) -> dict:
    doc = {
        "core_basis": [o.to_json() for o in basis.core],
        "valence_basis": [o.to_json() for o in basis.valence],
        "radial_integral": radial,
        "matrices": {k: _matrix_to_json(stack[a]) for a, k in enumerate("xyz")},
    }
    if basis.valence_frame == "cubic":
        doc["valence_frame"] = "cubic"
    return doc


def dipole_from_cartesian(stack: np.ndarray, eps: PolarizationVector, basis: OrbitalBasis, radial: float = 1.0) -> DipoleMatrix:
    m = np.tensordot(np.asarray(eps.components), stack, axes=(0, 0))
    return DipoleMatrix(m, eps, basis, radial)


def spin_flip_mask(basis: OrbitalBasis) -> np.ndarray:
    """Boolean mask of (core, valence) entries that connect opposite spins."""
    return np.array([[oc.spin != ov.spin for ov in basis.valence] for oc in basis.core])
