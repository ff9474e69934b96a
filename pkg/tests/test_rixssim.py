import warnings

import numpy as np
import pytest

from conftest import kron_site_op
from qfi_rixs.angular import DipoleMatrix, l_edge_basis
from qfi_rixs.errors import DomainError, LoadError, ResourceError
from qfi_rixs.geometry import BeamGeometry, channel_polarizations, momentum_transfer
from qfi_rixs.manybody import (
    LatticeSpec,
    apply_t_q,
    qfi_pure,
    t_expectation,
    t_sq_cumulant,
)
from qfi_rixs.rixssim import (
    CACHE_ENV,
    ClusterModel,
    Spectrum,
    broaden,
    check_conjugate_pair,
    diagonalize,
    final_state,
    mixed_spectrum,
    positive_integral,
    qfi_from_spectra,
    read_spectrum,
    simulate_pair,
    spectrum,
    stokes_integral,
    ucl_final_state,
    write_spectrum,
)
from qfi_rixs.scattering import optimal_phase, t_matrix
from qfi_rixs.verify import random_cluster

GEOM = BeamGeometry(0.35, 0.9, 0.2)


def model_n(n, n_orb=2, **kw):
    params = dict(j_s=1.0, delta_cf=[0.3 * l for l in range(n_orb)], j_so=0.2, h_z=0.25, u_c=0.4)
    params.update(kw)
    return ClusterModel(LatticeSpec(n, n_orb), **params)


def pair_t(model, channel="pi-sigma", geom=GEOM):
    ei, es = channel_polarizations(geom, channel)
    return ei, es, t_matrix(model.dipole(ei), model.dipole(es))


# --- diagonalization --------------------------------------------------------

def test_trivial_model_degenerate():
    m = ClusterModel(LatticeSpec(2, 2), j_s=0.0, delta_cf=[0, 0], j_so=0.0, h_z=0.0)
    ev = m.decomposition().eigenvalues
    assert np.ptp(ev) < 1e-14


def test_eigenvectors_unitary():
    m = model_n(3)
    for sector in ("valence", 1):
        v = m.decomposition(sector).eigenvectors
        assert np.abs(v.conj().T @ v - np.eye(v.shape[0])).max() < 1e-10


def test_heisenberg_gap():
    for js in (0.7, 1.0, 2.3):
        m = ClusterModel(LatticeSpec(2, 1), j_s=js)
        ev = m.decomposition().eigenvalues
        # analytic two-spin spectrum: singlet -3J/4, triplet J/4
        np.testing.assert_allclose(ev, [-0.75 * js] + [0.25 * js] * 3, atol=1e-14)


def test_hamiltonians_hermitian():
    m = model_n(3)
    for h in (m.valence_hamiltonian(), m.intermediate_hamiltonian(1)):
        assert np.abs(h - h.conj().T).max() < 1e-12
    with pytest.raises(DomainError):
        m.intermediate_hamiltonian(3)


def test_sector_cap():
    m = ClusterModel(LatticeSpec(4, 5), diag_cap=5000)
    with pytest.raises(ResourceError, match="cap"):
        m.decomposition()


def test_gamma_positive():
    with pytest.raises(DomainError):
        ClusterModel(LatticeSpec(2, 2), gamma=0.0)


def test_decomposition_cache(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    m = model_n(2)
    a = diagonalize(m, 0)
    assert len(list(tmp_path.glob("eig_*.npz"))) == 1
    b = diagonalize(m, 0)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


# --- final state ------------------------------------------------------------

def test_zero_dipoles_zero_final_state():
    m = model_n(2)
    z = DipoleMatrix(np.zeros((6, 4)), None, m.basis)
    assert np.all(final_state(m, z, z, 0.3) == 0)


def _dense_sector_h(model, site):
    return model.intermediate_hamiltonian(site)


def test_final_state_dense_oracle():
    # independent resolvent: explicit embedded dipoles and a linear solve
    for n in (1, 2):
        m = model_n(n)
        ei, es, _ = pair_t(m)
        mi, ms = m.dipole(ei).entries, m.dipole(es).entries
        q, w_in, gamma = (0.0 if n == 1 else 0.7), m.resonance() + 0.3, 0.8
        g = m.ground_state().amplitudes
        eg = m.decomposition().ground_energy
        ref = np.zeros_like(g)
        d = m.lattice.local_dim
        for j in range(n):
            dims = [d] * n
            dims[j] = 6
            emb_i = np.eye(1)
            emb_s = np.eye(1)
            for s in range(n):
                emb_i = np.kron(emb_i, mi if s == j else np.eye(d))
                emb_s = np.kron(emb_s, ms.conj().T if s == j else np.eye(d))
            hp = _dense_sector_h(m, j)
            x = np.linalg.solve(hp - (eg + w_in + 1j * gamma) * np.eye(hp.shape[0]), emb_i @ g)
            ref += np.exp(1j * q * j) * (emb_s @ x)
        got = final_state(m, m.dipole(ei), m.dipole(es), q, w_in, gamma)
        assert np.abs(got - ref).max() < 1e-10 * max(1, np.abs(ref).max())


def test_ucl_convergence_rate():
    m = model_n(2)
    ei, es, t = pair_t(m, "pi-pi")
    q = 0.6
    ref = 1j * apply_t_q(m.ground_state(), t, q)
    facs = np.array([1e1, 1e2, 1e3, 1e4])
    bw = m.bandwidth()
    dev = [
        np.linalg.norm(f * bw * final_state(m, m.dipole(ei), m.dipole(es), q, None, f * bw) - ref) / np.linalg.norm(ref)
        for f in facs
    ]
    slope = np.polyfit(np.log(facs), np.log(dev), 1)[0]
    assert abs(slope + 1) < 0.1
    norm_dev = [
        abs(f * bw * np.linalg.norm(final_state(m, m.dipole(ei), m.dipole(es), q, None, f * bw)) - np.linalg.norm(ref))
        for f in facs
    ]
    assert norm_dev[-1] < norm_dev[0]


def test_ucl_final_state_helper():
    m = model_n(2)
    _, _, t = pair_t(m)
    np.testing.assert_allclose(ucl_final_state(m, t, 0.2, 4.0), 1j * apply_t_q(m.ground_state(), t, 0.2) / 4.0)


# --- spectra ----------------------------------------------------------------

def test_ground_state_single_pole():
    m = model_n(2)
    s = spectrum(m.ground_state().amplitudes, m.decomposition())
    assert s.omega[0] == 0 and s.values[0] == pytest.approx(1.0, abs=1e-14)
    assert np.sum(s.values[1:]) < 1e-14


def test_total_weight_completeness(rng):
    m = model_n(3)
    psi = rng.standard_normal(m.lattice.dim) + 1j * rng.standard_normal(m.lattice.dim)
    s = spectrum(psi, m.decomposition())
    assert s.total() == pytest.approx(np.vdot(psi, psi).real, rel=1e-12)
    assert np.all(s.values >= -1e-14) and np.all(np.diff(s.omega) >= 0)


def test_broadened_integral():
    m = model_n(2)
    ei, es, _ = pair_t(m)
    fwd, _ = simulate_pair(m, ei, es, 0.4, None, 3.0)
    bw = m.bandwidth()
    eta = 0.01 * bw
    grid = np.arange(-200 * bw, 200 * bw, eta / 10)
    g = broaden(fwd, grid, eta)
    assert g.total() == pytest.approx(fwd.total(), rel=1e-3)
    with pytest.raises(DomainError):
        broaden(g, grid, eta)


def test_stokes_ucl_equals_cumulant():
    m = model_n(3)
    _, _, t = pair_t(m)
    q, gamma = 0.8, 1e6
    g = m.ground_state()
    s = spectrum(ucl_final_state(m, t, q, gamma), m.decomposition())
    tq = apply_t_q(g, t, q)
    ref = np.vdot(tq, tq).real - abs(t_expectation(g, t, q)) ** 2
    assert stokes_integral(s, gamma) == pytest.approx(ref, rel=1e-10)


def test_stokes_zero_when_ground_is_eigenstate():
    m = model_n(2)
    t = np.eye(4)
    s = spectrum(ucl_final_state(m, t, 0.0, 10.0), m.decomposition())
    assert stokes_integral(s, 10.0) < 1e-20


def test_translation_invariant_elastic_weight_zero():
    m = model_n(4, periodic=True)
    assert m.ground_degeneracy() == 1
    _, _, t = pair_t(m, "pi-pi")
    q = 2 * np.pi / 4
    g = m.ground_state()
    assert abs(t_expectation(g, t, q)) < 1e-12
    s = spectrum(ucl_final_state(m, t, q, 1.0), m.decomposition())
    tq = apply_t_q(g, t, q)
    assert stokes_integral(s, 1.0) == pytest.approx(np.vdot(tq, tq).real, rel=1e-10)


def test_degenerate_ground_warns():
    m = ClusterModel(LatticeSpec(2, 1), j_s=-1.0)
    with pytest.warns(RuntimeWarning, match="degenerate"):
        spectrum(m.ground_state().amplitudes, m.decomposition())


# --- paired-spectrum QFI ----------------------------------------------------

def test_qfi_identity_ucl_n3(rng):
    for n in range(4):
        m = random_cluster(rng, 3, 2)
        gamma = 1e10 * m.bandwidth()
        ch = ("pi-pi", "pi-sigma", "sigma-pi", "sigma-sigma")[n]
        ei, es, t = pair_t(m, ch)
        q = momentum_transfer(GEOM).q_chain
        fwd, rev = simulate_pair(m, ei, es, q, None, gamma)
        g = m.ground_state()
        ref = qfi_pure(g, t, q, optimal_phase(t_sq_cumulant(g, t, q)))
        assert qfi_from_spectra(fwd, rev, gamma) == pytest.approx(ref, rel=1e-8)


def test_qfi_finite_gamma_within_five_percent():
    m = model_n(3)
    ei, es, t = pair_t(m, "pi-pi")
    q = 0.5
    gamma = 100 * m.bandwidth()
    fwd, rev = simulate_pair(m, ei, es, q, None, gamma)
    g = m.ground_state()
    ref = qfi_pure(g, t, q, optimal_phase(t_sq_cumulant(g, t, q)))
    assert qfi_from_spectra(fwd, rev, gamma) == pytest.approx(ref, rel=0.05)


def test_qfi_empty_spectra():
    s = Spectrum([0.0, 1e-12], [0.3, 0.2], meta={"bandwidth": 1.0})
    assert qfi_from_spectra(s, s, 2.0) == 0.0


def test_pair_metadata_checks():
    m = model_n(2)
    ei, es, _ = pair_t(m)
    fwd, rev = simulate_pair(m, ei, es, 0.4, None, 5.0)
    check_conjugate_pair(fwd, rev, 5.0)
    with pytest.raises(DomainError, match="gamma"):
        qfi_from_spectra(fwd, rev, 6.0)
    with pytest.raises(DomainError, match="reversed"):
        check_conjugate_pair(fwd, fwd)
    bad = Spectrum(rev.omega, rev.values, meta={**rev.meta, "gamma": 7.0})
    with pytest.raises(DomainError, match="gamma"):
        check_conjugate_pair(fwd, bad)


# --- mixed spectra ----------------------------------------------------------

def _four_channels(m, q=0.4, gamma=5.0):
    out = []
    for ch in ("pi-pi", "pi-sigma", "sigma-pi", "sigma-sigma"):
        ei, es = channel_polarizations(GEOM, ch)
        out.append(simulate_pair(m, ei, es, q, None, gamma)[0])
    return out


def test_mixed_one_hot():
    specs = _four_channels(model_n(2))
    mix = mixed_spectrum(specs, [0, 1, 0, 0])
    ref = specs[1]
    u = np.unique(ref.omega)
    np.testing.assert_allclose(mix.omega, u)
    assert mix.total() == pytest.approx(ref.total(), rel=1e-14)
    assert positive_integral(mix) == pytest.approx(positive_integral(ref), rel=1e-13)


def test_mixed_identical_equal_weights():
    s = _four_channels(model_n(2))[0]
    mix = mixed_spectrum([s] * 4, [0.25] * 4)
    assert mix.total() == pytest.approx(s.total(), rel=1e-14)


def test_mixed_linearity(rng):
    specs = _four_channels(model_n(2))
    w = rng.dirichlet(np.ones(4))
    w = w / w.sum()
    mix = mixed_spectrum(specs, w)
    assert mix.total() == pytest.approx(sum(wc * s.total() for wc, s in zip(w, specs)), rel=1e-13)


@pytest.mark.parametrize("w", [[0.5, 0.5, 0.5, -0.5], [0.2, 0.2, 0.2, 0.2], [1.0, 0.0, 0.0]])
def test_mixed_invalid_weights(w):
    specs = _four_channels(model_n(2))
    with pytest.raises(DomainError):
        mixed_spectrum(specs, w)


def test_mixed_requires_matching_gamma():
    m = model_n(2)
    specs = _four_channels(m)
    specs[2] = _four_channels(m, gamma=6.0)[2]
    with pytest.raises(DomainError, match="gamma"):
        mixed_spectrum(specs, [0.25] * 4)


# --- CSV I/O ----------------------------------------------------------------

def test_csv_roundtrip_poles(tmp_path):
    m = model_n(2)
    ei, es, _ = pair_t(m)
    fwd, _ = simulate_pair(m, ei, es, 0.4, None, 5.0)
    fwd.meta["t_sq"] = complex(1.0, 2.0)
    write_spectrum(tmp_path / "a.csv", fwd)
    back = read_spectrum(tmp_path / "a.csv")
    assert back.kind == "poles"
    assert np.array_equal(back.omega, fwd.omega) and np.array_equal(back.values, fwd.values)
    assert back.meta["gamma"] == 5.0 and back.meta["t_sq"] == [1.0, 2.0]
    write_spectrum(tmp_path / "b.csv", back)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_csv_grid_and_clipping(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("omega,intensity\n-1,0.5\n0,-0.1\n1,2.0\n")
    s = read_spectrum(p)
    assert s.kind == "grid" and s.meta["clipped"] == 1 and s.values[1] == 0.0


@pytest.mark.parametrize(
    "text,match",
    [
        ("omega,intensity\n0,1\n2,1\n1,1\n", ":4:"),
        ("omega,intensity\n0,1\nfoo,1\n", ":3:"),
        ("omega,intensity\n0,1,2\n", ":2:"),
        ("w,i\n0,1\n", ":1:"),
        ("omega,intensity\n", "no data"),
        ("omega,intensity\n0,inf\n", "non-finite"),
    ],
)
def test_csv_errors(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(LoadError, match=match):
        read_spectrum(p)


def test_csv_missing(tmp_path):
    with pytest.raises(LoadError):
        read_spectrum(tmp_path / "none.csv")


def test_simulate_pair_metadata():
    m = model_n(2)
    ei, es, _ = pair_t(m)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fwd, rev = simulate_pair(m, ei, es, 0.4, None, 5.0)
    assert fwd.meta["eps_i"] == "pi" and fwd.meta["eps_s"] == "sigma"
    assert rev.meta["q_chain"] == -0.4 and rev.meta["eps_i"] == "sigma"
