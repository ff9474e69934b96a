"""Exact-diagonalization Kramers-Heisenberg RIXS on small spin-orbital clusters.

Hole language: each site carries one valence hole in ``2 * n_orb``
spin-orbitals. The dipole operator ``D_j = sum M[a, b] h_ja^dag c_jb`` removes
the valence hole at site ``j`` and creates a core hole there, so an
intermediate state with the core hole on site ``j`` lives in a product space
where site ``j`` has the core dimension (6 for a 2p shell) instead of the
valence one. All resolvents are applied exactly through full
eigendecompositions.

Energies are in units of the spin exchange (J = 1). The intensity unit f0 is
set to 1.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from qfi_rixs.angular import DipoleMatrix, OrbitalBasis, dipole_matrix, l_edge_basis
from qfi_rixs.errors import DomainError, LoadError, ResourceError
from qfi_rixs.geometry import PolarizationVector
from qfi_rixs.manybody import LatticeSpec, ManyBodyState, apply_site, apply_t_q
from qfi_rixs.scattering import TMatrix

log = logging.getLogger(__name__)

DEFAULT_DIAG_CAP = 5000
ELASTIC_CUT = 1e-9
CACHE_ENV = "QFI_RIXS_CACHE"

DEFAULT_ORBITALS = {
    1: ("x2-y2",),
    2: ("x2-y2", "z2"),
    3: ("xy", "xz", "yz"),
    4: ("x2-y2", "z2", "xy", "xz"),
    5: ("x2-y2", "z2", "xy", "xz", "yz"),
}

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
SPIN_OPS = {a: 0.5 * m for a, m in _PAULI.items()}


def _l1_ops() -> dict[str, np.ndarray]:
    # l = 1, basis m = -1, 0, +1
    lz = np.diag([-1.0, 0.0, 1.0]).astype(complex)
    lp = np.zeros((3, 3), dtype=complex)
    lp[1, 0] = lp[2, 1] = np.sqrt(2.0)
    lm = lp.conj().T
    return {"x": 0.5 * (lp + lm), "y": -0.5j * (lp - lm), "z": lz}


def core_spin_orbit() -> np.ndarray:
    """``L.S`` on the 2p shell in the (m_l, spin) basis, spin fastest."""
    lops = _l1_ops()
    return sum(np.kron(lops[a], SPIN_OPS[a]) for a in "xyz")


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])


def _embed(terms: Mapping[int, np.ndarray], dims: Sequence[int]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for i, d in enumerate(dims):
        out = np.kron(out, terms.get(i, np.eye(d)))
    return out


@dataclass
class ClusterModel:
    """Configurable spin-orbital chain.

    Valence Hamiltonian::

        H = J_s sum_<ij> S_i.S_j + sum_j sum_l delta_cf[l] n_jl + h_z sum_j S^z_j
            + J_so sum_<ij> (S_i.S_j + 1/4) P^orb_ij

    where ``P^orb`` swaps the orbital labels of two sites. The intermediate
    Hamiltonian with a core hole on site ``j`` drops every bond touching ``j``,
    adds ``e_edge + xi_c L.S + h_z S^z`` on the core and shifts the first
    orbital of each neighbour of ``j`` by ``u_c``.
    """

    lattice: LatticeSpec
    j_s: float = 1.0
    delta_cf: Sequence[float] | None = None
    j_so: float = 0.0
    h_z: float = 0.0
    periodic: bool = False
    e_edge: float = 10.0
    xi_c: float = 1.0
    u_c: float = 1.0
    gamma: float = 1.0
    basis: OrbitalBasis | None = None
    diag_cap: int = DEFAULT_DIAG_CAP
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def __post_init__(self):
        n_orb = self.lattice.n_orb
        if self.delta_cf is None:
            self.delta_cf = tuple(0.0 for _ in range(n_orb))
        self.delta_cf = tuple(float(x) for x in self.delta_cf)
        if len(self.delta_cf) != n_orb:
            raise DomainError(f"delta_cf needs {n_orb} entries, got {len(self.delta_cf)}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if self.basis is None:
            if n_orb not in DEFAULT_ORBITALS:
                raise DomainError(f"no default 3d orbital set for n_orb={n_orb}; pass a basis")
            self.basis = l_edge_basis(orbitals=DEFAULT_ORBITALS[n_orb])
        if self.basis.n_valence != self.lattice.local_dim:
            raise DomainError(
                f"basis has {self.basis.n_valence} valence spin-orbitals, lattice needs {self.lattice.local_dim}"
            )

    # -- structure -----------------------------------------------------------

    @property
    def n_core(self) -> int:
        return self.basis.n_core

    def bonds(self) -> list[tuple[int, int]]:
        n = self.lattice.n_sites
        b = [(i, i + 1) for i in range(n - 1)]
        if self.periodic and n > 2:
            b.append((n - 1, 0))
        return b

    def neighbours(self, j: int) -> list[int]:
        return sorted({b for a, b in self.bonds() if a == j} | {a for a, b in self.bonds() if b == j})

    def _local_ops(self) -> dict:
        n_orb = self.lattice.n_orb
        i_orb, i_s = np.eye(n_orb), np.eye(2)
        ops = {"S" + a: np.kron(i_orb, SPIN_OPS[a]) for a in "xyz"}
        ops["n"] = [np.kron(np.diag(np.eye(n_orb)[l]), i_s) for l in range(n_orb)]
        ops["E"] = {
            (l, m): np.kron(np.outer(np.eye(n_orb)[l], np.eye(n_orb)[m]), i_s)
            for l in range(n_orb)
            for m in range(n_orb)
        }
        ops["SE"] = {
            (a, l, m): np.kron(np.outer(np.eye(n_orb)[l], np.eye(n_orb)[m]), SPIN_OPS[a])
            for a in "xyz"
            for l in range(n_orb)
            for m in range(n_orb)
        }
        return ops

    def _hamiltonian(self, core_site: int | None) -> np.ndarray:
        n = self.lattice.n_sites
        d = self.lattice.local_dim
        dims = [d] * n
        if core_site is not None:
            dims[core_site] = self.n_core
        dim = int(np.prod(dims))
        if dim > self.diag_cap:
            raise ResourceError(f"sector dimension {dim} exceeds the diagonalization cap of {self.diag_cap}")
        ops = self._local_ops()
        n_orb = self.lattice.n_orb
        h = np.zeros((dim, dim), dtype=complex)
        valence_sites = [j for j in range(n) if j != core_site]
        for j in valence_sites:
            onsite = sum(self.delta_cf[l] * ops["n"][l] for l in range(n_orb)) + self.h_z * ops["Sz"]
            h += _embed({j: onsite}, dims)
        for i, j in self.bonds():
            if core_site in (i, j):
                continue
            if self.j_s:
                for a in "xyz":
                    h += self.j_s * _embed({i: ops["S" + a], j: ops["S" + a]}, dims)
            if self.j_so:
                for l in range(n_orb):
                    for m in range(n_orb):
                        h += 0.25 * self.j_so * _embed({i: ops["E"][(l, m)], j: ops["E"][(m, l)]}, dims)
                        for a in "xyz":
                            h += self.j_so * _embed({i: ops["SE"][(a, l, m)], j: ops["SE"][(a, m, l)]}, dims)
        if core_site is not None:
            core = self.e_edge * np.eye(self.n_core) + self.xi_c * core_spin_orbit()
            core = core + self.h_z * np.kron(np.eye(self.n_core // 2), SPIN_OPS["z"])
            h += _embed({core_site: core}, dims)
            for i in self.neighbours(core_site):
                h += self.u_c * _embed({i: ops["n"][0]}, dims)
        return 0.5 * (h + h.conj().T)

    def valence_hamiltonian(self) -> np.ndarray:
        return self._hamiltonian(None)

    def intermediate_hamiltonian(self, site: int) -> np.ndarray:
        if not 0 <= site < self.lattice.n_sites:
            raise DomainError(f"site {site} outside the cluster")
        return self._hamiltonian(site)

    def sector_shape(self, core_site: int | None) -> tuple[int, ...]:
        dims = [self.lattice.local_dim] * self.lattice.n_sites
        if core_site is not None:
            dims[core_site] = self.n_core
        return tuple(dims)

    # -- cached decompositions ----------------------------------------------

    def decomposition(self, sector: str | int = "valence") -> SpectralDecomposition:
        """``"valence"`` or an integer site index for the core-hole sector."""
        key = "valence" if sector == "valence" else int(sector)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        dec = diagonalize(self, key)
        with self._lock:
            self._cache.setdefault(key, dec)
        return dec

    def ground_state(self) -> ManyBodyState:
        dec = self.decomposition()
        return ManyBodyState(dec.eigenvectors[:, 0], self.lattice)

    def bandwidth(self) -> float:
        """Width of the valence spectrum (1.0 if fully degenerate)."""
        ev = self.decomposition().eigenvalues
        w = float(ev[-1] - ev[0])
        return w if w > 0 else 1.0

    def ground_degeneracy(self) -> int:
        ev = self.decomposition().eigenvalues
        return int(np.sum(ev - ev[0] <= ELASTIC_CUT * self.bandwidth()))

    def resonance(self) -> float:
        """Incident energy at the centre of the site-0 intermediate spectrum."""
        ev = self.decomposition(0).eigenvalues
        return float(0.5 * (ev[0] + ev[-1]) - self.decomposition().ground_energy)

    def dipole(self, eps: PolarizationVector, radial: float = 1.0) -> DipoleMatrix:
        return dipole_matrix(eps, self.basis, radial)

    def fingerprint(self) -> dict:
        return {
            "n_sites": self.lattice.n_sites,
            "n_orb": self.lattice.n_orb,
            "site_positions": list(self.lattice.site_positions),
            "j_s": self.j_s,
            "delta_cf": list(self.delta_cf),
            "j_so": self.j_so,
            "h_z": self.h_z,
            "periodic": self.periodic,
            "e_edge": self.e_edge,
            "xi_c": self.xi_c,
            "u_c": self.u_c,
            "gamma": self.gamma,
        }


def _cache_dir() -> Path | None:
    d = os.environ.get(CACHE_ENV)
    if not d:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def diagonalize(model: ClusterModel, sector: str | int = "valence") -> SpectralDecomposition:
    """Full Hermitian eigendecomposition of the valence or a core-hole sector.

    When ``QFI_RIXS_CACHE`` names a directory, results are stored there keyed
    by a hash of the sector Hamiltonian.
    """
    h = model.valence_hamiltonian() if sector == "valence" else model.intermediate_hamiltonian(int(sector))
    cache = _cache_dir()
    path = None
    if cache is not None:
        digest = hashlib.sha256(np.ascontiguousarray(h).tobytes()).hexdigest()[:32]
        path = cache / f"eig_{h.shape[0]}_{digest}.npz"
        if path.exists():
            with np.load(path) as z:
                return SpectralDecomposition(z["w"], z["v"])
    w, v = np.linalg.eigh(h)
    resid = np.max(np.linalg.norm(h @ v - v * w, axis=0)) if w.size else 0.0
    if resid > 1e-9 * max(1.0, float(np.max(np.abs(w)))):
        raise DomainError(f"eigendecomposition residual {resid:.3e} too large")
    if path is not None:
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, w=w, v=v)
        os.replace(tmp, path)
    return SpectralDecomposition(w, v)


# --- final state --------------------------------------------------------------

def final_state(model: ClusterModel, m_i: DipoleMatrix, m_s: DipoleMatrix, q_chain: float,
                omega_in: float | None = None, gamma: float | None = None) -> np.ndarray:
    """Kramers-Heisenberg final state

    ``sum_j e^{i q r_j} D_j(eps_s)^dag (H' - E_G - w_in - i Gamma)^-1 D_j(eps_i) |G>``.
    """
    gamma = model.gamma if gamma is None else float(gamma)
    omega_in = model.resonance() if omega_in is None else float(omega_in)
    mi = np.asarray(m_i.entries)
    ms_dag = np.asarray(m_s.entries).conj().T
    if mi.shape != (model.n_core, model.lattice.local_dim) or ms_dag.shape != mi.shape[::-1]:
        raise DomainError("dipole matrices do not match the model's core/valence dimensions")
    val = model.decomposition()
    g = val.eigenvectors[:, 0]
    e_g = val.ground_energy
    vshape = model.sector_shape(None)
    out = np.zeros(model.lattice.dim, dtype=complex)
    for j, r in enumerate(model.lattice.site_positions):
        dec = model.decomposition(j)
        x = apply_site(g, mi, j, vshape)
        c = dec.eigenvectors.conj().T @ x
        c /= dec.eigenvalues - e_g - omega_in - 1j * gamma
        y = dec.eigenvectors @ c
        out += np.exp(1j * q_chain * r) * apply_site(y, ms_dag, j, model.sector_shape(j))
    return out


def ucl_final_state(model: ClusterModel, t: TMatrix, q_chain: float, gamma: float | None = None) -> np.ndarray:
    """Ultrashort-lifetime limit ``i T_q |G> / Gamma``."""
    gamma = model.gamma if gamma is None else float(gamma)
    return 1j * apply_t_q(model.ground_state(), t, q_chain) / gamma


# --- spectra ------------------------------------------------------------------

META_KEYS = ("q_chain", "eps_i", "eps_s", "omega_in", "gamma")


@dataclass(frozen=True)
class Spectrum:
    """Pole list (``kind="poles"``: values are weights) or sampled grid
    (``kind="grid"``: values are intensities). ``omega`` is ascending."""

    omega: np.ndarray
    values: np.ndarray
    kind: str = "poles"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if w.shape != v.shape:
            raise DomainError(f"omega and values differ in length ({w.size} vs {v.size})")
        if self.kind not in ("poles", "grid"):
            raise DomainError(f"unknown spectrum kind {self.kind!r}")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def weights(self) -> np.ndarray:
        return self.values

    def total(self) -> float:
        if self.kind == "poles":
            return float(np.sum(self.values))
        return float(np.trapezoid(self.values, self.omega)) if self.omega.size > 1 else 0.0

    def elastic_cut(self) -> float:
        bw = self.meta.get("bandwidth")
        if bw is None:
            bw = float(self.omega[-1] - self.omega[0]) if self.omega.size > 1 else 1.0
        return ELASTIC_CUT * (bw if bw > 0 else 1.0)


def spectrum(final: np.ndarray, valence: SpectralDecomposition, meta: Mapping | None = None) -> Spectrum:
    """Pole decomposition ``omega_n = E_n - E_G``, ``w_n = |<n|Psi_f>|^2``."""
    ev = valence.eigenvalues
    omega = ev - ev[0]
    weights = np.abs(valence.eigenvectors.conj().T @ np.asarray(final, dtype=complex)) ** 2
    bw = float(ev[-1] - ev[0]) if ev.size > 1 else 1.0
    info = dict(meta or {})
    info.setdefault("bandwidth", bw if bw > 0 else 1.0)
    cut = ELASTIC_CUT * info["bandwidth"]
    degen = int(np.sum(omega <= cut))
    if degen > 1:
        warnings.warn(
            f"ground state is {degen}-fold degenerate within the elastic cut; "
            "the Stokes integral excludes all degenerate poles",
            RuntimeWarning,
            stacklevel=2,
        )
        info["ground_degeneracy"] = degen
    return Spectrum(omega, weights, "poles", info)


def broaden(spec: Spectrum, grid: np.ndarray, eta: float) -> Spectrum:
    """Lorentzian rendering of a pole spectrum on ``grid`` (half width ``eta``)."""
    if spec.kind != "poles":
        raise DomainError("only pole spectra can be broadened")
    g = np.asarray(grid, dtype=float)
    diff = g[:, None] - spec.omega[None, :]
    inten = (eta / np.pi) * np.sum(spec.values[None, :] / (diff**2 + eta**2), axis=1)
    meta = dict(spec.meta)
    meta["eta"] = float(eta)
    return Spectrum(g, inten, "grid", meta)


def positive_integral(spec: Spectrum) -> float:
    """Integrated intensity over the Stokes side ``omega > 0``.

    Poles: sum of weights above the elastic cut. Grids: trapezoid over
    ``omega >= 0`` with linear interpolation at ``omega = 0``.
    """
    if spec.kind == "poles":
        return float(np.sum(spec.values[spec.omega > spec.elastic_cut()]))
    w, v = spec.omega, spec.values
    mask = w > 0
    if not np.any(mask):
        return 0.0
    ws, vs = w[mask], v[mask]
    first = int(np.argmax(mask))
    if first > 0:
        w0, w1, v0, v1 = w[first - 1], w[first], v[first - 1], v[first]
        v_at0 = v0 + (v1 - v0) * (0.0 - w0) / (w1 - w0)
        ws = np.concatenate([[0.0], ws])
        vs = np.concatenate([[v_at0], vs])
    if ws.size < 2:
        return 0.0
    return float(np.trapezoid(vs, ws))


def stokes_integral(spec: Spectrum, gamma: float) -> float:
    """``Gamma^2`` times the inelastic (Stokes) spectral weight."""
    return float(gamma) ** 2 * positive_integral(spec)


def _same(a, b, tol=1e-12) -> bool:
    a, b = float(a), float(b)
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def check_conjugate_pair(fwd: Spectrum, rev: Spectrum, gamma: float | None = None) -> None:
    """Raise ``DomainError`` unless ``rev`` is the (-q, eps_s, eps_i) partner of ``fwd``."""
    fm, rm = fwd.meta, rev.meta
    if gamma is not None:
        for name, m in (("forward", fm), ("reverse", rm)):
            if "gamma" in m and not _same(m["gamma"], gamma):
                raise DomainError(f"{name} spectrum has gamma={m['gamma']} but {gamma} was supplied")
    if "gamma" in fm and "gamma" in rm and not _same(fm["gamma"], rm["gamma"]):
        raise DomainError(f"gamma mismatch between pair: {fm['gamma']} vs {rm['gamma']}")
    if "q_chain" in fm and "q_chain" in rm and not _same(fm["q_chain"], -float(rm["q_chain"])):
        raise DomainError(f"momenta are not reversed: q={fm['q_chain']} vs {rm['q_chain']}")
    if all(k in fm and k in rm for k in ("eps_i", "eps_s")):
        if fm["eps_i"] != rm["eps_s"] or fm["eps_s"] != rm["eps_i"]:
            raise DomainError(
                f"polarizations are not exchanged: ({fm['eps_i']}, {fm['eps_s']}) vs ({rm['eps_i']}, {rm['eps_s']})"
            )


def qfi_from_spectra(spec_fwd: Spectrum, spec_rev: Spectrum, gamma: float) -> float:
    """``2 Gamma^2 [int I(q, eps_i, eps_s) + int I(-q, eps_s, eps_i)]`` over ``omega > 0``."""
    check_conjugate_pair(spec_fwd, spec_rev, gamma)
    return 2.0 * (stokes_integral(spec_fwd, gamma) + stokes_integral(spec_rev, gamma))


def mixed_spectrum(specs: Sequence[Spectrum], weights: Sequence[float]) -> Spectrum:
    """Incoherent mixture ``sum_c w_c I_c`` of polarization channels."""
    specs = list(specs)
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(specs),):
        raise DomainError(f"{w.size} weights for {len(specs)} spectra")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise DomainError(f"weights must be non-negative and sum to 1, got {w.tolist()}")
    kinds = {s.kind for s in specs}
    if len(kinds) != 1:
        raise DomainError("cannot mix pole and grid spectra")
    for key in ("q_chain", "omega_in", "gamma"):
        vals = [s.meta[key] for s in specs if key in s.meta]
        if vals and not all(_same(v, vals[0]) for v in vals):
            raise DomainError(f"spectra disagree on {key}: {vals}")
    meta = {k: specs[0].meta[k] for k in ("q_chain", "omega_in", "gamma", "bandwidth") if k in specs[0].meta}
    meta.update(
        eps_i="mixed",
        eps_s="mixed",
        weights=[float(x) for x in w],
        channels=[f"{s.meta.get('eps_i', '?')}-{s.meta.get('eps_s', '?')}" for s in specs],
    )
    if kinds == {"grid"}:
        grid = specs[0].omega
        if any(s.omega.shape != grid.shape or np.any(s.omega != grid) for s in specs):
            raise DomainError("grid spectra must share the same omega grid")
        return Spectrum(grid, sum(wc * s.values for wc, s in zip(w, specs)), "grid", meta)
    omega = np.concatenate([s.omega for s in specs])
    vals = np.concatenate([wc * s.values for wc, s in zip(w, specs)])
    order = np.argsort(omega, kind="stable")
    omega, vals = omega[order], vals[order]
    uniq, inv = np.unique(omega, return_inverse=True)
    merged = np.zeros(uniq.size)
    np.add.at(merged, inv, vals)
    return Spectrum(uniq, merged, "poles", meta)


# --- CSV export/import ----------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_spectrum(path, spec: Spectrum, sidecar: bool = True) -> None:
    """Write ``omega,weight`` (with a ``# poles`` sentinel) or ``omega,intensity``."""
    lines = []
    if spec.kind == "poles":
        lines += ["# poles", "omega,weight"]
    else:
        lines.append("omega,intensity")
    lines += [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(spec.omega, spec.values)]
    Path(path).write_text("\n".join(lines) + "\n")
    if sidecar:
        meta = {k: _jsonable(v) for k, v in spec.meta.items()}
        sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def read_spectrum(path, clip_negative: bool = True) -> Spectrum:
    """Parse a spectrum CSV (and its JSON sidecar when present).

    Negative intensities are clipped to zero and counted in
    ``meta["clipped"]`` when ``clip_negative`` is set.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise LoadError(f"spectrum file not found: {path}") from None
    kind = "grid"
    header_seen = False
    omega, vals, linenos = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().lower() == "poles":
                kind = "poles"
            continue
        if not header_seen:
            cols = [c.strip().lower() for c in line.split(",")]
            if cols in (["omega", "intensity"], ["omega", "weight"]):
                header_seen = True
                if cols[1] == "weight":
                    kind = "poles"
                continue
            raise LoadError(f"{path}:{lineno}: expected header 'omega,intensity' or 'omega,weight'")
        parts = line.split(",")
        if len(parts) != 2:
            raise LoadError(f"{path}:{lineno}: expected 2 columns, found {len(parts)}")
        try:
            a, b = float(parts[0]), float(parts[1])
        except ValueError:
            raise LoadError(f"{path}:{lineno}: cannot parse {line!r}") from None
        if not (math.isfinite(a) and math.isfinite(b)):
            raise LoadError(f"{path}:{lineno}: non-finite value")
        omega.append(a)
        vals.append(b)
        linenos.append(lineno)
    if not header_seen:
        raise LoadError(f"{path}: missing header line")
    if not omega:
        raise LoadError(f"{path}: no data rows")
    for n in range(1, len(omega)):
        bad = omega[n] < omega[n - 1] if kind == "poles" else omega[n] <= omega[n - 1]
        if bad:
            raise LoadError(f"{path}:{linenos[n]}: omega is not ascending ({omega[n]} after {omega[n - 1]})")
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise LoadError(f"{side}: invalid JSON ({exc})") from None
    v = np.array(vals)
    if clip_negative:
        neg = int(np.sum(v < 0))
        if neg:
            log.warning("%s: clipped %d negative intensities to zero", path, neg)
            v = np.where(v < 0, 0.0, v)
        meta["clipped"] = neg
    return Spectrum(np.array(omega), v, kind, meta)


# --- convenience drivers --------------------------------------------------------

def channel_meta(q_chain: float, eps_i: str, eps_s: str, omega_in: float, gamma: float, bandwidth: float) -> dict:
    return {
        "q_chain": float(q_chain),
        "eps_i": eps_i,
        "eps_s": eps_s,
        "omega_in": float(omega_in),
        "gamma": float(gamma),
        "bandwidth": float(bandwidth),
    }


def simulate_pair(model: ClusterModel, eps_i: PolarizationVector, eps_s: PolarizationVector, q_chain: float,
                  omega_in: float | None = None, gamma: float | None = None) -> tuple[Spectrum, Spectrum]:
    """Forward ``(q, eps_i, eps_s)`` and reverse ``(-q, eps_s, eps_i)`` pole spectra."""
    gamma = model.gamma if gamma is None else float(gamma)
    omega_in = model.resonance() if omega_in is None else float(omega_in)
    m_i, m_s = model.dipole(eps_i), model.dipole(eps_s)
    val = model.decomposition()
    bw = model.bandwidth()
    li, ls = eps_i.label or "eps_i", eps_s.label or "eps_s"
    fwd = spectrum(final_state(model, m_i, m_s, q_chain, omega_in, gamma), val,
                   channel_meta(q_chain, li, ls, omega_in, gamma, bw))
    rev = spectrum(final_state(model, m_s, m_i, -q_chain, omega_in, gamma), val,
                   channel_meta(-q_chain, ls, li, omega_in, gamma, bw))
    return fwd, rev
