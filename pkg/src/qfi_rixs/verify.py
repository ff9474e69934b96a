"""Seeded property/oracle suite behind ``qfi-rixs verify``.

Each check returns a plain dict so the summary serializes deterministically.
Nothing here records wall-clock times.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from qfi_rixs.angular import dipole_matrix, l_edge_basis
from qfi_rixs.bounds import CONFIGS, SweepConfig, angular_sweep, k_producible_bound, mixed_pol_bound, sweep_grid
from qfi_rixs.geometry import BeamGeometry, channel_polarizations, momentum_transfer
from qfi_rixs.manybody import (
    LatticeSpec,
    apply_t_q,
    ghz_block_state,
    qfi_pure,
    random_k_producible_state,
    random_partition,
    t_sq_cumulant,
    t_sq_expectation,
)
from qfi_rixs.rixssim import ClusterModel, final_state, mixed_spectrum, simulate_pair, stokes_integral, qfi_from_spectra
from qfi_rixs.scattering import TMatrix, optimal_phase, t_matrix

PhaseFn = Callable[[complex], float]


@dataclass
class VerifyConfig:
    seed: int = 0
    bound_samples: int = 600
    phase_cases: int = 1000
    identity_cases: int = 4
    mixed_trials: int = 200
    grid: int = 12


def random_geometry(rng: np.random.Generator) -> BeamGeometry:
    return BeamGeometry(rng.uniform(0, np.pi / 2), rng.uniform(0, np.pi / 2), rng.uniform(0, 2 * np.pi))


def random_channel(rng: np.random.Generator) -> str:
    return CONFIGS[int(rng.integers(len(CONFIGS)))]


def channel_t(geom: BeamGeometry, channel: str, basis=None) -> TMatrix:
    basis = l_edge_basis() if basis is None else basis
    ei, es = channel_polarizations(geom, channel)
    return t_matrix(dipole_matrix(ei, basis), dipole_matrix(es, basis))


def random_cluster(rng: np.random.Generator, n_sites: int, n_orb: int, gamma: float = 1.0,
                   min_gap: float = 1e-6) -> ClusterModel:
    """Random chain model with a non-degenerate ground state."""
    for _ in range(100):
        model = ClusterModel(
            LatticeSpec(n_sites, n_orb),
            j_s=rng.uniform(0.5, 1.5),
            delta_cf=tuple(np.concatenate([[0.0], rng.uniform(0.0, 1.0, n_orb - 1)])),
            j_so=rng.uniform(0.0, 0.6),
            h_z=rng.uniform(0.1, 0.4),
            e_edge=10.0,
            xi_c=rng.uniform(0.5, 1.5),
            u_c=rng.uniform(0.0, 1.0),
            gamma=gamma,
        )
        ev = model.decomposition().eigenvalues
        if ev.size == 1 or ev[1] - ev[0] > min_gap:
            return model
    raise RuntimeError("could not draw a model with a unique ground state")


def _check(name: str, passed: bool, metric: float, threshold: float, cases: int, **extra) -> dict:
    out = {"name": name, "passed": bool(passed), "metric": float(metric), "threshold": float(threshold), "cases": int(cases)}
    out.update(extra)
    return out


def check_bound_soundness(rng, samples: int) -> dict:
    worst = -np.inf
    violations = 0
    tight = 0.0
    geoms = [(random_geometry(rng), random_channel(rng)) for _ in range(20)]
    tmats = [channel_t(g, c) for g, c in geoms]
    for n in range(samples):
        n_sites = (2, 3, 4)[n % 3]
        k = int(rng.integers(1, n_sites + 1))
        idx = int(rng.integers(len(tmats)))
        g = geoms[idx][0]
        q = momentum_transfer(g).q_chain
        phase = rng.uniform(0, np.pi)
        lat = LatticeSpec(n_sites, 5)
        part = random_partition(n_sites, k, rng)
        if n % 4 == 0:
            state = ghz_block_state(lat, part, tmats[idx], q, phase)
        else:
            state = random_k_producible_state(lat, part, rng)
        f = qfi_pure(state, tmats[idx], q, phase)
        b = k_producible_bound(tmats[idx], q, lat.site_positions, phase, part.k).value
        ratio = f / b if b > 0 else 0.0
        worst = max(worst, ratio)
        if n % 4 == 0:
            tight = max(tight, ratio)
        if f > b * (1 + 1e-9):
            violations += 1
    return _check("bound-soundness", violations == 0, worst, 1.0, samples,
                  violations=violations, max_ratio_extremal=float(tight))


def check_phase_nullification(rng, cases: int, phase_fn: PhaseFn) -> dict:
    worst = 0.0
    for n in range(cases):
        n_sites = (1, 2, 3)[n % 3]
        lat = LatticeSpec(n_sites, 2)
        raw = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        t = TMatrix(raw / 2)
        q = rng.uniform(-np.pi, np.pi) if n % 5 else 0.0
        state = random_k_producible_state(lat, random_partition(n_sites, n_sites, rng), rng)
        t2 = t_sq_expectation(state, t, q)
        phi = phase_fn(t2)
        worst = max(worst, abs((np.exp(2j * phi) * t2).real))
    return _check("phase-nullification", worst < 1e-12, worst, 1e-12, cases)


def check_spectral_identity(rng, cases: int, phase_fn: PhaseFn) -> dict:
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for n in range(cases):
            model = random_cluster(rng, (2, 3)[n % 2], 2)
            gamma = 1e10 * model.bandwidth()
            geom = random_geometry(rng)
            ch = random_channel(rng)
            ei, es = channel_polarizations(geom, ch)
            q = momentum_transfer(geom).q_chain
            fwd, rev = simulate_pair(model, ei, es, q, None, gamma)
            f_spec = qfi_from_spectra(fwd, rev, gamma)
            t = t_matrix(model.dipole(ei), model.dipole(es))
            g = model.ground_state()
            f_var = qfi_pure(g, t, q, phase_fn(t_sq_cumulant(g, t, q)))
            worst = max(worst, abs(f_spec - f_var) / max(abs(f_var), 1e-300))
    return _check("qfi-spectral-identity", worst < 1e-8, worst, 1e-8, cases)


def check_ucl_convergence(rng) -> dict:
    model = random_cluster(rng, 2, 2)
    geom = random_geometry(rng)
    ei, es = channel_polarizations(geom, random_channel(rng))
    q = momentum_transfer(geom).q_chain
    t = t_matrix(model.dipole(ei), model.dipole(es))
    ref = 1j * apply_t_q(model.ground_state(), t, q)
    bw = model.bandwidth()
    facs = np.array([1e1, 1e2, 1e3, 1e4])
    devs = []
    for f in facs:
        gamma = f * bw
        psi = final_state(model, model.dipole(ei), model.dipole(es), q, None, gamma)
        devs.append(np.linalg.norm(gamma * psi - ref) / np.linalg.norm(ref))
    slope = float(np.polyfit(np.log(facs), np.log(devs), 1)[0])
    return _check("ucl-convergence", abs(slope + 1) <= 0.1, slope, -1.0, len(facs))


def check_angular(grid: int) -> dict:
    rows = angular_sweep(SweepConfig(grid=grid, channels=("pi-pi", "pi-sigma", "sigma-pi"), threads=1))
    _, _, pp = sweep_grid(rows, "pi-pi", 1)
    _, _, ps = sweep_grid(rows, "pi-sigma", 1)
    _, _, sp = sweep_grid(rows, "sigma-pi", 1)
    n = pp.shape[0]
    anti = 0.0
    for s in range(2 * n - 1):
        vals = [pp[a, s - a] for a in range(max(0, s - n + 1), min(n, s + 1))]
        anti = max(anti, max(vals) - min(vals))
    const = max(np.ptp(ps), np.ptp(sp))
    match = abs(pp.max() - ps.mean())
    metric = max(anti, const, match)
    return _check("angular-symmetry", metric < 1e-10, metric, 1e-10, 3 * n * n)


def check_mixed_soundness(rng, trials: int, phase_fn: PhaseFn) -> dict:
    violations = 0
    worst = -np.inf
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = random_cluster(rng, 3, 2)
        gamma = 1e10 * model.bandwidth()
        geom = random_geometry(rng)
        q = momentum_transfer(geom).q_chain
        g = model.ground_state()
        specs, tmats, phases = [], {}, {}
        for ch in CONFIGS:
            ei, es = channel_polarizations(geom, ch)
            fwd, _ = simulate_pair(model, ei, es, q, None, gamma)
            specs.append(fwd)
            t = t_matrix(model.dipole(ei), model.dipole(es))
            tmats[ch] = t
            phases[ch] = phase_fn(t_sq_cumulant(g, t, q))
        n = model.lattice.n_sites
        bound = mixed_pol_bound(tmats, q, model.lattice.site_positions, phases, n).total
        for _ in range(trials):
            w = rng.dirichlet(np.ones(4))
            w = w / w.sum()
            val = 4.0 * stokes_integral(mixed_spectrum(specs, w), gamma)
            worst = max(worst, val / bound)
            if val > bound * (1 + 1e-9):
                violations += 1
    return _check("mixed-bound-soundness", violations == 0, worst, 1.0, trials, violations=violations)


def run_verify(cfg: VerifyConfig, phase_fn: PhaseFn = optimal_phase) -> dict:
    rng = np.random.default_rng(cfg.seed)
    checks = [
        check_bound_soundness(rng, cfg.bound_samples),
        check_phase_nullification(rng, cfg.phase_cases, phase_fn),
        check_spectral_identity(rng, cfg.identity_cases, phase_fn),
        check_ucl_convergence(rng),
        check_angular(cfg.grid),
        check_mixed_soundness(rng, cfg.mixed_trials, phase_fn),
    ]
    return {
        "format": 1,
        "seed": cfg.seed,
        "passed": all(c["passed"] for c in checks),
        "failed": [c["name"] for c in checks if not c["passed"]],
        "checks": checks,
    }
