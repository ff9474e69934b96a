"""k-producibility QFI bounds: polarization-resolved, mixed-polarization, and angular sweeps."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from qfi_rixs.angular import (
    DipoleMatrix,
    OrbitalBasis,
    cartesian_dipole_matrices,
    dipole_from_cartesian,
    l_edge_basis,
)
from qfi_rixs.errors import ConfigError, DomainError
from qfi_rixs.geometry import BeamGeometry, momentum_transfer, polarization_vector
from qfi_rixs.scattering import (
    TMatrix,
    check_hermitian,
    commutator,
    eigenvalue_spread,
    local_generator,
    optimal_phase,
    t_matrix,
)

log = logging.getLogger(__name__)

CONFIGS = ("pi-pi", "pi-sigma", "sigma-pi", "sigma-sigma")
RESOLVED_CHANNELS = CONFIGS
# Mixed channels list the polarization configurations they blend.
MIXED_CHANNELS = {
    "mixed": CONFIGS,
    "pi-mixed": ("pi-pi", "pi-sigma"),
    "sigma-mixed": ("sigma-pi", "sigma-sigma"),
    "mixed-pi": ("pi-pi", "sigma-pi"),
    "mixed-sigma": ("pi-sigma", "sigma-sigma"),
}


@dataclass(frozen=True)
class BoundResult:
    k: int
    value: float
    per_site_spreads: tuple[float, ...]
    geometry: BeamGeometry | None = None
    polarization_labels: tuple[str, str] = ("", "")


@dataclass(frozen=True)
class MixedBoundResult:
    k: int
    envelope_term: float
    offset_term: float
    total: float
    dominant_config: str = ""


def k_producible_bound(t: TMatrix, q_chain: float, sites: Sequence[float], phase: float, k: int,
                       geometry: BeamGeometry | None = None, labels: tuple[str, str] = ("", "")) -> BoundResult:
    """``k * sum_j spread(Tbar_j)^2`` over the chain sites."""
    n = len(sites)
    if not 1 <= k <= n:
        raise DomainError(f"k={k} outside 1..{n}")
    spreads = tuple(eigenvalue_spread(local_generator(t, q_chain, r, phase)) for r in sites)
    value = float(k * sum(s * s for s in spreads))
    return BoundResult(k, value, spreads, geometry, labels)


def _as_config_map(t_set) -> dict[str, TMatrix]:
    if isinstance(t_set, Mapping):
        return dict(t_set)
    t_list = list(t_set)
    if len(t_list) != 4:
        raise DomainError(f"expected 4 T matrices for {CONFIGS}, got {len(t_list)}")
    return dict(zip(CONFIGS, t_list))


def commutator_offset(t_set, n_sites: int) -> float:
    """``2 N max_c lambda_max([T_c^dagger, T_c])`` over the polarization configs."""
    tmap = _as_config_map(t_set)
    dims = {t.dim for t in tmap.values()}
    if len(dims) != 1:
        raise DomainError(f"T matrices have different dimensions {sorted(dims)}")
    best = 0.0
    for name, t in tmap.items():
        scale = max(1.0, float(np.linalg.norm(t.entries)) ** 2)
        c = check_hermitian(commutator(t), 1e-12 * scale)
        tr = abs(np.trace(c))
        if tr > 1e-12 * scale:
            raise DomainError(f"commutator for {name} is not traceless (|tr| = {tr:.3e})")
        best = max(best, float(np.linalg.eigvalsh(c)[-1]))
    return 2.0 * n_sites * best


def mixed_pol_bound(t_set, q_chain: float, sites: Sequence[float], phases, k: int) -> MixedBoundResult:
    """Envelope of the resolved bounds plus the commutator offset."""
    tmap = _as_config_map(t_set)
    phase_map = dict(phases) if isinstance(phases, Mapping) else dict(zip(tmap, phases))
    missing = set(tmap) - set(phase_map)
    if missing:
        raise DomainError(f"no phase given for configs {sorted(missing)}")
    envelope, dominant = -1.0, ""
    for name, t in tmap.items():
        v = k_producible_bound(t, q_chain, sites, phase_map[name], k).value
        if v > envelope:
            envelope, dominant = v, name
    offset = commutator_offset(tmap, len(sites))
    return MixedBoundResult(k, envelope, offset, envelope + offset, dominant)


# --- angular sweeps ---------------------------------------------------------

@dataclass
class SweepConfig:
    """Angular sweep settings.

    The per-site phase argument is ``q_chain * r_j + phase``; by default the
    momentum is fixed (``q_chain``) and the phase comes from ``t_sq`` (0 gives
    ``pi/4``), so the maps isolate the polarization dependence. Set
    ``q_from_geometry`` to derive ``q_chain`` at each grid point instead.
    """

    grid: int = 25
    channels: Sequence[str] = ("pi-pi", "pi-sigma", "sigma-pi", "sigma-sigma")
    k_list: Sequence[int] = (1,)
    n_sites: int = 1
    q_chain: float = 0.0
    t_sq: complex = 0.0
    phi: float = 0.0
    q_from_geometry: bool = False
    lattice_direction: Sequence[float] = (1.0, 0.0, 0.0)
    k_in: float = 1.0
    k_out: float = 1.0
    basis: OrbitalBasis | None = None
    cartesian: np.ndarray | None = None
    radial: float = 1.0
    threads: int | None = None
    theta_max: float = field(default=np.pi / 2)

    def validate(self) -> None:
        if int(self.grid) < 2:
            raise ConfigError(f"grid resolution must be >= 2, got {self.grid}")
        if self.n_sites < 1:
            raise ConfigError("n_sites must be >= 1")
        for k in self.k_list:
            if not 1 <= int(k) <= self.n_sites:
                raise ConfigError(f"k={k} outside 1..n_sites={self.n_sites}")
        for ch in self.channels:
            if ch not in RESOLVED_CHANNELS and ch not in MIXED_CHANNELS:
                raise ConfigError(f"unknown channel {ch!r}")
        if not self.channels or not self.k_list:
            raise ConfigError("channels and k list must be non-empty")


@dataclass(frozen=True)
class SweepRow:
    theta_i_deg: float
    theta_s_deg: float
    channel: str
    k: int
    bound: float
    offset: float
    total: float


def config_t_matrices(geom: BeamGeometry, stack: np.ndarray, basis: OrbitalBasis, radial: float = 1.0,
                      configs: Sequence[str] = CONFIGS) -> dict[str, TMatrix]:
    """T matrices for each polarization configuration at one geometry."""
    dips: dict[tuple[str, str], DipoleMatrix] = {}
    for beam in ("incident", "scattered"):
        for lab in ("pi", "sigma"):
            eps = polarization_vector(geom, beam, lab)
            dips[(beam, lab)] = dipole_from_cartesian(stack, eps, basis, radial)
    out = {}
    for c in configs:
        inc, sca = c.split("-")
        out[c] = t_matrix(dips[("incident", inc)], dips[("scattered", sca)])
    return out


def _point_rows(cfg: SweepConfig, stack, basis, ti: float, ts: float) -> list[SweepRow]:
    geom = BeamGeometry(ti, ts, cfg.phi, cfg.k_in, cfg.k_out)
    q = momentum_transfer(geom, cfg.lattice_direction).q_chain if cfg.q_from_geometry else cfg.q_chain
    sites = [float(j) for j in range(cfg.n_sites)]
    phase = optimal_phase(cfg.t_sq)
    tmats = config_t_matrices(geom, stack, basis, cfg.radial)
    rows = []
    ti_deg, ts_deg = float(np.rad2deg(ti)), float(np.rad2deg(ts))
    for ch in cfg.channels:
        for k in cfg.k_list:
            k = int(k)
            if ch in MIXED_CHANNELS:
                sub = {c: tmats[c] for c in MIXED_CHANNELS[ch]}
                res = mixed_pol_bound(sub, q, sites, {c: phase for c in sub}, k)
                rows.append(SweepRow(ti_deg, ts_deg, ch, k, res.envelope_term, res.offset_term, res.total))
            else:
                v = k_producible_bound(tmats[ch], q, sites, phase, k).value
                rows.append(SweepRow(ti_deg, ts_deg, ch, k, v, 0.0, v))
    return rows


def angular_sweep(cfg: SweepConfig) -> list[SweepRow]:
    """Bounds on a dense ``(theta_i, theta_s)`` grid over ``[0, pi/2]^2``.

    Rows are ordered by ``theta_i`` index, then ``theta_s`` index, then
    channel, then k, independent of the thread count.
    """
    cfg.validate()
    basis = cfg.basis if cfg.basis is not None else l_edge_basis()
    stack = cfg.cartesian if cfg.cartesian is not None else cartesian_dipole_matrices(basis, cfg.radial)
    thetas = np.linspace(0.0, cfg.theta_max, int(cfg.grid))
    points = [(a, b) for a in thetas for b in thetas]
    log.info("sweep: %d points x %d channels x %d depths", len(points), len(cfg.channels), len(cfg.k_list))

    def work(p):
        return _point_rows(cfg, stack, basis, p[0], p[1])

    if cfg.threads == 1 or len(points) < 64:
        chunks = [work(p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(pool.map(work, points))
    return [row for chunk in chunks for row in chunk]


def sweep_grid(rows: Sequence[SweepRow], channel: str, k: int, column: str = "total") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reshape sweep rows for one (channel, k) into ``(theta_i, theta_s, values)`` grids."""
    sel = [r for r in rows if r.channel == channel and r.k == k]
    ti = sorted({r.theta_i_deg for r in sel})
    ts = sorted({r.theta_s_deg for r in sel})
    vals = np.full((len(ti), len(ts)), np.nan)
    ii = {v: n for n, v in enumerate(ti)}
    jj = {v: n for n, v in enumerate(ts)}
    for r in sel:
        vals[ii[r.theta_i_deg], jj[r.theta_s_deg]] = getattr(r, column)
    return np.array(ti), np.array(ts), vals
