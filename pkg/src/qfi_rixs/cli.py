"""Command-line entry point: ``qfi-rixs {dipole,bounds,simulate,witness,verify}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 resource cap,
5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Any

import numpy as np

from qfi_rixs.angular import (
    CUBIC_D_ORDER,
    cartesian_dipole_matrices,
    cartesian_to_json,
    dipole_matrix,
    l_edge_basis,
    load_cartesian_dipoles,
    load_dipole_matrix,
    save_dipole_matrix,
)
from qfi_rixs.bounds import (
    CONFIGS,
    MIXED_CHANNELS,
    SweepConfig,
    angular_sweep,
    config_t_matrices,
    k_producible_bound,
    mixed_pol_bound,
    sweep_grid,
)
from qfi_rixs.errors import ConfigError, DomainError, LoadError, QfiRixsError
from qfi_rixs.geometry import BeamGeometry, channel_polarizations, momentum_transfer
from qfi_rixs.manybody import LatticeSpec, qfi_pure, t_sq_cumulant
from qfi_rixs.rixssim import (
    DEFAULT_ORBITALS,
    ClusterModel,
    broaden,
    mixed_spectrum,
    simulate_pair,
    write_spectrum,
)
from qfi_rixs.scattering import optimal_phase, t_matrix
from qfi_rixs.svg import write_heatmap
from qfi_rixs.verify import VerifyConfig, random_cluster, run_verify
from qfi_rixs.witness import (
    certify,
    certify_mixed,
    load_measured_spectrum,
    measured_qfi,
    mixed_integral,
    refinement_change,
)

log = logging.getLogger("qfi_rixs")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RESOURCE, EXIT_VERIFY = 0, 2, 3, 4, 5


class VerificationFailed(QfiRixsError):
    exit_code = EXIT_VERIFY


# --- config handling ------------------------------------------------------------

def load_config(args) -> dict:
    cfg: dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"{path}: top level must be an object")
        cfg["_config_dir"] = str(path.parent)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.grid is not None:
        cfg["grid"] = args.grid
    if args.channels is not None:
        cfg["channels"] = [c.strip() for c in args.channels.split(",") if c.strip()]
    if args.k is not None:
        try:
            cfg["k"] = [int(x) for x in args.k.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"--k expects comma-separated integers, got {args.k!r}") from None
    if args.gamma is not None:
        cfg["gamma"] = args.gamma
    if args.dipole_file is not None:
        cfg["dipole_file"] = args.dipole_file
    return cfg


def _resolve(cfg: dict, p: str) -> Path:
    path = Path(p)
    if not path.is_absolute() and "_config_dir" in cfg and not path.exists():
        alt = Path(cfg["_config_dir"]) / path
        if alt.exists():
            return alt
    return path


def _require_file(cfg: dict, key: str) -> Path:
    p = _resolve(cfg, cfg[key])
    if not p.exists():
        raise ConfigError(f"{key}: file not found: {p}")
    return p


def _float(cfg: dict, key: str, default: float) -> float:
    try:
        val = float(cfg.get(key, default))
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {cfg.get(key)!r}") from None
    if not np.isfinite(val):
        raise ConfigError(f"{key} must be finite")
    return val


def geometry_from(cfg: dict) -> BeamGeometry:
    ti, ts, ph = _float(cfg, "theta_i_deg", 45.0), _float(cfg, "theta_s_deg", 45.0), _float(cfg, "phi_deg", 0.0)
    for name, v in (("theta_i_deg", ti), ("theta_s_deg", ts)):
        if not 0.0 <= v <= 90.0:
            raise ConfigError(f"{name}={v} outside [0, 90]")
    try:
        return BeamGeometry.from_degrees(ti, ts, ph, _float(cfg, "k_in", 1.0), _float(cfg, "k_out", 1.0))
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def lattice_direction(cfg: dict) -> np.ndarray:
    d = np.asarray(cfg.get("lattice_direction", [1.0, 0.0, 0.0]), dtype=float)
    if d.shape != (3,) or not np.linalg.norm(d) > 0:
        raise ConfigError("lattice_direction must be a nonzero 3-vector")
    return d / np.linalg.norm(d)


def _channels(cfg: dict, allowed) -> list[str]:
    chans = cfg.get("channels", list(CONFIGS))
    if isinstance(chans, str):
        chans = [c.strip() for c in chans.split(",")]
    bad = [c for c in chans if c not in allowed]
    if bad or not chans:
        raise ConfigError(f"unknown channels {bad}; allowed: {sorted(allowed)}")
    return list(chans)


def _orbitals(cfg: dict, n_orb: int | None = None):
    orbs = cfg.get("orbitals")
    if orbs is None and n_orb is not None:
        if n_orb not in DEFAULT_ORBITALS:
            raise ConfigError(f"no default orbital set for n_orb={n_orb}")
        orbs = DEFAULT_ORBITALS[n_orb]
    if orbs is not None:
        bad = [o for o in orbs if o not in CUBIC_D_ORDER]
        if bad:
            raise ConfigError(f"unknown orbitals {bad}; choose from {CUBIC_D_ORDER}")
    return orbs


def _basis(cfg: dict, n_orb: int | None = None):
    orbs = _orbitals(cfg, n_orb)
    frame = cfg.get("frame", "spherical")
    if frame not in ("spherical", "cubic"):
        raise ConfigError(f"frame must be 'spherical' or 'cubic', got {frame!r}")
    return l_edge_basis(frame, orbs)


def _t_sq(val) -> complex:
    if val is None:
        return 0.0
    if isinstance(val, (list, tuple)) and len(val) == 2:
        return complex(float(val[0]), float(val[1]))
    try:
        return complex(float(val))
    except (TypeError, ValueError):
        raise ConfigError(f"t_sq must be a number or [re, im], got {val!r}") from None


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# --- commands -------------------------------------------------------------------

def cmd_dipole(cfg: dict, out: Path, args) -> int:
    geom = geometry_from(cfg)
    channel = cfg.get("channel", "pi-pi")
    if channel not in CONFIGS:
        raise ConfigError(f"channel must be one of {CONFIGS}, got {channel!r}")
    if "dipole_file" in cfg:
        src = _require_file(cfg, "dipole_file")
        out.mkdir(parents=True, exist_ok=True)
        m_i, m_s = load_dipole_matrix(src)
        save_dipole_matrix(out / "dipole.json", m_i, m_s)
        return EXIT_OK
    basis = _basis(cfg)
    radial = _float(cfg, "radial", 1.0)
    out.mkdir(parents=True, exist_ok=True)
    ei, es = channel_polarizations(geom, channel)
    m_i, m_s = dipole_matrix(ei, basis, radial), dipole_matrix(es, basis, radial)
    save_dipole_matrix(out / "dipole.json", m_i, m_s)
    _write_json(out / "dipole_cartesian.json", cartesian_to_json(cartesian_dipole_matrices(basis, radial), basis, radial))
    return EXIT_OK


SWEEP_HEADER = ["theta_i_deg", "theta_s_deg", "channel", "k", "bound", "offset", "total"]


def cmd_bounds(cfg: dict, out: Path, args) -> int:
    allowed = set(CONFIGS) | set(MIXED_CHANNELS)
    channels = _channels(cfg, allowed)
    ks = cfg.get("k", [1])
    ks = [int(k) for k in (ks if isinstance(ks, list) else [ks])]
    n_sites = int(cfg.get("n_sites", max(ks)))
    geom = geometry_from(cfg)
    sweep = SweepConfig(
        grid=int(cfg.get("grid", 25)),
        channels=channels,
        k_list=ks,
        n_sites=n_sites,
        q_chain=_float(cfg, "q_chain", 0.0),
        t_sq=_t_sq(cfg.get("t_sq")),
        phi=geom.phi,
        q_from_geometry=bool(cfg.get("q_from_geometry", False)),
        lattice_direction=tuple(lattice_direction(cfg)),
        k_in=geom.k_magnitude_i,
        k_out=geom.k_magnitude_s,
        radial=_float(cfg, "radial", 1.0),
        threads=args.threads,
    )
    if "dipole_file" in cfg:
        stack, basis, radial = load_cartesian_dipoles(_require_file(cfg, "dipole_file"))
        sweep.cartesian, sweep.basis, sweep.radial = stack, basis, radial
    else:
        sweep.basis = _basis(cfg)
    sweep.validate()
    rows = angular_sweep(sweep)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([repr(r.theta_i_deg), repr(r.theta_s_deg), r.channel, r.k, repr(r.bound), repr(r.offset), repr(r.total)])
    (out / "bounds.csv").write_text(buf.getvalue())
    if cfg.get("svg", True):
        for ch in channels:
            for k in ks:
                ti, ts, vals = sweep_grid(rows, ch, k)
                write_heatmap(out / f"bounds_{ch}_k{k}.svg", ti, ts, vals, f"{ch}, k={k} (units of f0)")
    return EXIT_OK


def _model_from(cfg: dict, rng) -> ClusterModel:
    mcfg = dict(cfg.get("model", {}))
    n_sites = int(mcfg.get("n_sites", 2))
    n_orb = int(mcfg.get("n_orb", 2))
    if n_sites < 1 or n_orb not in DEFAULT_ORBITALS:
        raise ConfigError(f"model needs n_sites >= 1 and n_orb in 1..5, got {n_sites}, {n_orb}")
    if mcfg.get("random", False):
        return random_cluster(rng, n_sites, n_orb)
    basis = l_edge_basis(orbitals=_orbitals(mcfg, n_orb))
    lat = LatticeSpec(n_sites, n_orb)
    try:
        return ClusterModel(
            lat,
            j_s=float(mcfg.get("j_s", 1.0)),
            delta_cf=mcfg.get("delta_cf", [0.5 * l for l in range(n_orb)]),
            j_so=float(mcfg.get("j_so", 0.3)),
            h_z=float(mcfg.get("h_z", 0.2)),
            periodic=bool(mcfg.get("periodic", False)),
            e_edge=float(mcfg.get("e_edge", 10.0)),
            xi_c=float(mcfg.get("xi_c", 1.0)),
            u_c=float(mcfg.get("u_c", 0.5)),
            basis=basis,
            diag_cap=int(mcfg.get("diag_cap", 5000)),
        )
    except DomainError as exc:
        raise ConfigError(f"model: {exc}") from None


def cmd_simulate(cfg: dict, out: Path, args) -> int:
    rng = np.random.default_rng(cfg.get("seed", 0))
    geom = geometry_from(cfg)
    channels = _channels(cfg, set(CONFIGS))
    weights = cfg.get("weights")
    if weights is not None and len(weights) != 4:
        raise ConfigError("weights must list 4 values for pi-pi, pi-sigma, sigma-pi, sigma-sigma")
    model = _model_from(cfg, rng)
    mcfg = cfg.get("model", {})
    n_orb = model.lattice.n_orb
    bw = model.bandwidth()
    if "gamma" in cfg:
        gamma = _float(cfg, "gamma", 1.0)
        if gamma <= 0:
            raise ConfigError("gamma must be positive")
    else:
        gamma = _float(cfg, "gamma_factor", 1e10) * bw
    omega_in = _float(cfg, "omega_in", 0.0) if "omega_in" in cfg else model.resonance()
    q = _float(cfg, "q_chain", 0.0) if "q_chain" in cfg else momentum_transfer(geom, lattice_direction(cfg)).q_chain
    eta = _float(cfg, "eta", 0.05 * bw)
    n_grid = int(cfg.get("grid_points", 801))
    out.mkdir(parents=True, exist_ok=True)
    ground = model.ground_state()
    summary = {
        "model": model.fingerprint(),
        "gamma": gamma,
        "omega_in": omega_in,
        "q_chain": q,
        "ground_energy": model.decomposition().ground_energy,
        "bandwidth": bw,
        "ground_degeneracy": model.ground_degeneracy(),
        "channels": {},
    }
    grid = np.linspace(-0.5 * bw, 1.5 * bw, n_grid)
    fwd_specs = {}
    t_sq_by = {}
    geo_cfg = {k: cfg[k] for k in ("theta_i_deg", "theta_s_deg", "phi_deg", "k_in", "k_out", "lattice_direction") if k in cfg}
    orbitals = list(DEFAULT_ORBITALS[n_orb]) if "orbitals" not in mcfg else list(mcfg["orbitals"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for ch in CONFIGS:
            ei, es = channel_polarizations(geom, ch)
            t = t_matrix(model.dipole(ei), model.dipole(es))
            t2c = t_sq_cumulant(ground, t, q)
            t_sq_by[ch] = [t2c.real, t2c.imag]
            if ch not in channels and weights is None:
                continue
            fwd, rev = simulate_pair(model, ei, es, q, omega_in, gamma)
            extra = {"t_sq": [t2c.real, t2c.imag], "n_sites": model.lattice.n_sites,
                     "site_positions": list(model.lattice.site_positions)}
            fwd.meta.update(extra)
            rev.meta.update(extra)
            fwd_specs[ch] = fwd
            if ch not in channels:
                continue
            write_spectrum(out / f"spectrum_{ch}_fwd.csv", fwd)
            write_spectrum(out / f"spectrum_{ch}_rev.csv", rev)
            write_spectrum(out / f"spectrum_{ch}_fwd_grid.csv", broaden(fwd, grid, eta))
            write_spectrum(out / f"spectrum_{ch}_rev_grid.csv", broaden(rev, grid, eta))
            phase = optimal_phase(t2c)
            summary["channels"][ch] = {
                "qfi_oracle": qfi_pure(ground, t, q, phase),
                "phase": phase,
                "bound_k1": k_producible_bound(t, q, model.lattice.site_positions, phase, 1).value,
            }
            _write_json(out / f"witness_{ch}.json", {
                **geo_cfg,
                "fwd": f"spectrum_{ch}_fwd.csv",
                "rev": f"spectrum_{ch}_rev.csv",
                "channel": ch,
                "gamma": gamma,
                "orbitals": orbitals,
            })
    if weights is not None:
        mixed = mixed_spectrum([fwd_specs[c] for c in CONFIGS], [float(x) for x in weights])
        mixed.meta.update({"t_sq_by_channel": t_sq_by, "n_sites": model.lattice.n_sites,
                           "site_positions": list(model.lattice.site_positions)})
        write_spectrum(out / "spectrum_mixed.csv", mixed)
        _write_json(out / "witness_mixed.json", {
            **geo_cfg,
            "mixed": "spectrum_mixed.csv",
            "gamma": gamma,
            "orbitals": orbitals,
        })
    _write_json(out / "simulate.json", summary)
    return EXIT_OK


def _witness_tmats(cfg: dict, geom: BeamGeometry):
    if "dipole_file" in cfg:
        path = _require_file(cfg, "dipole_file")
        try:
            stack, basis, radial = load_cartesian_dipoles(path)
        except LoadError:
            m_i, m_s = load_dipole_matrix(path)
            return None, t_matrix(m_i, m_s)
        return config_t_matrices(geom, stack, basis, radial), None
    basis = _basis(cfg)
    stack = cartesian_dipole_matrices(basis, _float(cfg, "radial", 1.0))
    return config_t_matrices(geom, stack, basis), None


def cmd_witness(cfg: dict, out: Path, args) -> int:
    geom = geometry_from(cfg)
    pair = "fwd" in cfg or "rev" in cfg
    if pair == ("mixed" in cfg):
        raise ConfigError("give either a 'fwd'/'rev' spectrum pair or a single 'mixed' spectrum")
    if pair:
        if "fwd" not in cfg or "rev" not in cfg:
            raise ConfigError("a polarization-resolved witness needs both 'fwd' and 'rev'")
        fpath, rpath = _require_file(cfg, "fwd"), _require_file(cfg, "rev")
        fwd, rev = load_measured_spectrum(fpath), load_measured_spectrum(rpath)
        meta = fwd.meta
        gamma = float(cfg["gamma"]) if "gamma" in cfg else meta.get("gamma")
        if gamma is None:
            raise ConfigError("gamma is required (config, --gamma, or spectrum metadata)")
        f_q = measured_qfi(fwd, rev, gamma)
        n_sites = int(cfg.get("n_sites", meta.get("n_sites", 1)))
        sites = cfg.get("site_positions", meta.get("site_positions", list(range(n_sites))))
        q = float(cfg.get("q_chain", meta.get("q_chain", 0.0)))
        channel = cfg.get("channel") or f"{meta.get('eps_i', 'pi')}-{meta.get('eps_s', 'pi')}"
        t_sq = _t_sq(cfg.get("t_sq", meta.get("t_sq")))
        tmats, direct = _witness_tmats(cfg, geom)
        if direct is None and channel not in CONFIGS:
            raise ConfigError(f"cannot infer polarization channel from {channel!r}; set 'channel'")
        t = direct if direct is not None else tmats[channel]
        phase = optimal_phase(t_sq)
        report = certify(f_q, lambda k: k_producible_bound(t, q, sites, phase, k).value, n_sites, {
            "fwd": str(fpath), "rev": str(rpath), "gamma": gamma, "q_chain": q, "channel": channel,
            "phase": phase, "theta_i_deg": float(np.rad2deg(geom.theta_i)),
            "theta_s_deg": float(np.rad2deg(geom.theta_s)), "phi_deg": float(np.rad2deg(geom.phi)),
        })
        report.diagnostics["clipped_negative"] = int(fwd.meta.get("clipped", 0)) + int(rev.meta.get("clipped", 0))
        for name, s in (("fwd", fwd), ("rev", rev)):
            change = refinement_change(s)
            if change is not None:
                report.diagnostics[f"half_grid_change_{name}"] = change
                report.diagnostics[f"half_grid_flag_{name}"] = bool(change > 0.01)
    else:
        mpath = _require_file(cfg, "mixed")
        spec = load_measured_spectrum(mpath)
        meta = spec.meta
        gamma = float(cfg["gamma"]) if "gamma" in cfg else meta.get("gamma")
        if gamma is None:
            raise ConfigError("gamma is required (config, --gamma, or spectrum metadata)")
        value = mixed_integral(spec, gamma)
        n_sites = int(cfg.get("n_sites", meta.get("n_sites", 1)))
        sites = cfg.get("site_positions", meta.get("site_positions", list(range(n_sites))))
        q = float(cfg.get("q_chain", meta.get("q_chain", 0.0)))
        tmats, direct = _witness_tmats(cfg, geom)
        if tmats is None:
            raise ConfigError("mixed witness needs Cartesian dipole matrices (x, y, z) or the atomic path")
        t_sq_by = cfg.get("t_sq_by_channel", meta.get("t_sq_by_channel", {}))
        phases = {c: optimal_phase(_t_sq(t_sq_by.get(c))) for c in CONFIGS}
        report = certify_mixed(value, lambda k: mixed_pol_bound(tmats, q, sites, phases, k), n_sites, {
            "mixed": str(mpath), "gamma": gamma, "q_chain": q,
            "phases": phases, "theta_i_deg": float(np.rad2deg(geom.theta_i)),
            "theta_s_deg": float(np.rad2deg(geom.theta_s)), "phi_deg": float(np.rad2deg(geom.phi)),
        })
        report.diagnostics["clipped_negative"] = int(meta.get("clipped", 0))
    report.write(out)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_verify(cfg: dict, out: Path, args) -> int:
    vcfg = VerifyConfig(seed=int(cfg.get("seed", 0)))
    for key in ("bound_samples", "phase_cases", "identity_cases", "mixed_trials", "grid"):
        if key in cfg:
            setattr(vcfg, key, int(cfg[key]))
    summary = run_verify(vcfg)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "verify_summary.json", summary)
    for c in summary["checks"]:
        sys.stdout.write(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: metric={c['metric']:.3e} threshold={c['threshold']:.3e}\n")
    if not summary["passed"]:
        raise VerificationFailed("verification failed: " + ", ".join(summary["failed"]))
    return EXIT_OK


COMMANDS = {
    "dipole": cmd_dipole,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "witness": cmd_witness,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="random seed (u64)")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--grid", type=int, help="angular grid points per axis")
    common.add_argument("--channels", help="comma list, e.g. pi-pi,pi-sigma")
    common.add_argument("--k", help="comma list of entanglement depths, e.g. 1,2,3")
    common.add_argument("--gamma", type=float, help="inverse core-hole lifetime")
    common.add_argument("--dipole-file", help="dipole matrix JSON to import")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="qfi-rixs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        sys.stderr.write("error: --threads must be >= 1\n")
        return EXIT_CONFIG
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, Path(args.out), args)
    except QfiRixsError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except (KeyError, TypeError, ValueError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
