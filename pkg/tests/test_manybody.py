import numpy as np
import pytest

from conftest import dense_t_q, kron_site_op, random_complex
from qfi_rixs.bounds import k_producible_bound
from qfi_rixs.errors import DomainError, LoadError, ResourceError
from qfi_rixs.geometry import BeamGeometry, channel_polarizations, momentum_transfer
from qfi_rixs.angular import dipole_matrix, l_edge_basis
from qfi_rixs.manybody import (
    LatticeSpec,
    ManyBodyState,
    PartitionSpec,
    apply_site,
    apply_t_q,
    apply_t_q_dagger,
    combine_blocks,
    extremal_product_state,
    ghz_block_state,
    load_state,
    local_generator_eigs,
    max_qfi_product_states,
    qfi_cumulant_terms,
    qfi_pure,
    random_k_producible_state,
    random_partition,
    save_state,
    t_sq_cumulant,
    t_sq_expectation,
)
from qfi_rixs.scattering import TMatrix, local_generator, optimal_phase, t_matrix


def dense_generator(t, q, pos, phase):
    tq = dense_t_q(t, q, pos)
    return (np.exp(1j * phase) * tq + np.exp(-1j * phase) * tq.conj().T) / np.sqrt(2)


def dense_qfi(psi, o):
    m = np.vdot(psi, o @ psi)
    return 4 * (np.vdot(psi, o @ (o @ psi)) - m * m).real


# --- lattice and states -----------------------------------------------------

def test_lattice_defaults_and_cap():
    lat = LatticeSpec(3, 2)
    assert lat.local_dim == 4 and lat.dim == 64 and lat.site_positions == (0.0, 1.0, 2.0)
    with pytest.raises(ResourceError, match="cap"):
        LatticeSpec(6, 5)
    LatticeSpec(4, 5)  # 10^4 fits
    with pytest.raises(DomainError):
        LatticeSpec(2, 2, (0.0,))


def test_partition_validation(rng):
    with pytest.raises(DomainError):
        PartitionSpec(((0, 1), (1, 2))).validate(3)
    with pytest.raises(DomainError):
        PartitionSpec(((0,), (2,))).validate(3)
    for n in (2, 3, 4):
        for k in range(1, n + 1):
            p = random_partition(n, k, rng)
            p.validate(n)
            assert p.k == k
    assert PartitionSpec.contiguous(5, 2).blocks == ((0, 1), (2, 3), (4,))


def test_seed_determinism():
    lat = LatticeSpec(3, 2)
    part = PartitionSpec(((0, 2), (1,)))
    a = random_k_producible_state(lat, part, 123)
    b = random_k_producible_state(lat, part, 123)
    assert np.array_equal(a.amplitudes, b.amplitudes)
    assert not np.array_equal(a.amplitudes, random_k_producible_state(lat, part, 124).amplitudes)
    assert abs(a.norm - 1) < 1e-12


def test_singletons_give_product_state(rng):
    lat = LatticeSpec(3, 1)
    psi = random_k_producible_state(lat, PartitionSpec.singletons(3), rng).tensor()
    for site in range(3):
        mat = np.moveaxis(psi, site, 0).reshape(2, -1)
        assert np.linalg.matrix_rank(mat, tol=1e-10) == 1


def test_single_block_is_generically_entangled(rng):
    lat = LatticeSpec(3, 1)
    psi = random_k_producible_state(lat, PartitionSpec(((0, 1, 2),)), rng).tensor()
    assert np.linalg.matrix_rank(psi.reshape(2, 4), tol=1e-10) == 2


def test_combine_blocks_orders_sites(rng):
    lat = LatticeSpec(3, 1)
    a, b = random_complex(rng, 4), random_complex(rng, 2)
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    psi = combine_blocks(lat, PartitionSpec(((0, 2), (1,))), [a, b]).tensor()
    ref = np.einsum("ac,b->abc", a.reshape(2, 2), b)
    np.testing.assert_allclose(psi, ref, atol=1e-15)


def test_apply_site_matches_kron(rng):
    psi = random_complex(rng, 4**3)
    op = random_complex(rng, (4, 4))
    for site in range(3):
        np.testing.assert_allclose(apply_site(psi, op, site, (4, 4, 4)), kron_site_op(op, site, 3) @ psi, atol=1e-12)


# --- T_q --------------------------------------------------------------------

def test_identity_t_q_zero():
    lat = LatticeSpec(3, 1)
    st = random_k_producible_state(lat, PartitionSpec.singletons(3), 0)
    np.testing.assert_allclose(apply_t_q(st, np.eye(2), 0.0), 3 * st.amplitudes, atol=1e-14)


def test_identity_t_q_phase_cancellation():
    lat = LatticeSpec(4, 1)
    st = random_k_producible_state(lat, PartitionSpec(((0, 1, 2, 3),)), 0)
    assert np.abs(apply_t_q(st, np.eye(2), 2 * np.pi / 4)).max() < 1e-14


def test_t_q_kron_oracle(rng):
    lat = LatticeSpec(2, 2, (0.0, 1.3))
    for _ in range(20):
        t = random_complex(rng, (4, 4))
        q = rng.uniform(-np.pi, np.pi)
        st = random_k_producible_state(lat, PartitionSpec(((0, 1),)), rng)
        tq = dense_t_q(t, q, lat.site_positions)
        np.testing.assert_allclose(apply_t_q(st, t, q), tq @ st.amplitudes, atol=1e-12)
        np.testing.assert_allclose(apply_t_q_dagger(st, t, q), tq.conj().T @ st.amplitudes, atol=1e-12)
        ref = np.vdot(st.amplitudes, tq @ tq @ st.amplitudes)
        assert abs(t_sq_expectation(st, t, q) - ref) < 1e-12 * max(1, abs(ref))


def test_t_sq_nilpotent_single_site():
    lat = LatticeSpec(1, 1)
    st = random_k_producible_state(lat, PartitionSpec.singletons(1), 7)
    assert t_sq_expectation(st, np.array([[0, 1.0], [0, 0]]), 0.0) == 0


def test_t_sq_hermitian_real(rng):
    lat = LatticeSpec(3, 1)
    a = random_complex(rng, (2, 2))
    st = random_k_producible_state(lat, PartitionSpec(((0, 1, 2),)), rng)
    assert abs(t_sq_expectation(st, a + a.conj().T, 0.0).imag) < 1e-12


def test_dimension_mismatch():
    st = random_k_producible_state(LatticeSpec(2, 2), PartitionSpec.singletons(2), 0)
    with pytest.raises(DomainError):
        apply_t_q(st, np.eye(3), 0.0)


# --- QFI --------------------------------------------------------------------

def test_qfi_kron_oracle(rng):
    lat = LatticeSpec(2, 2, (0.0, 1.0))
    for _ in range(20):
        t = random_complex(rng, (4, 4))
        q, ph = rng.uniform(-np.pi, np.pi), rng.uniform(0, np.pi)
        st = random_k_producible_state(lat, PartitionSpec(((0, 1),)), rng)
        ref = dense_qfi(st.amplitudes, dense_generator(t, q, lat.site_positions, ph))
        assert abs(qfi_pure(st, t, q, ph) - ref) < 1e-12 * max(1, abs(ref))


def test_qfi_eigenstate_zero(rng):
    lat = LatticeSpec(2, 1)
    t = random_complex(rng, (2, 2))
    o = dense_generator(t, 0.4, lat.site_positions, 0.2)
    _, v = np.linalg.eigh(o)
    assert abs(qfi_pure(ManyBodyState(v[:, 0], lat), t, 0.4, 0.2)) < 1e-12


def test_qfi_single_site_extremal(rng):
    lat = LatticeSpec(1, 2)
    t = TMatrix(random_complex(rng, (4, 4)))
    w, v = local_generator_eigs(t, 0.0, 0.0, 0.3)
    psi = (v[:, -1] + v[:, 0]) / np.sqrt(2)
    o_local = local_generator(t, 0.0, 0.0, 0.3) / np.sqrt(2)
    # direct variance on the 2-dim span
    assert qfi_pure(ManyBodyState(psi, lat), t, 0.0, 0.3) == pytest.approx((w[-1] - w[0]) ** 2, rel=1e-12)
    assert 4 * (np.vdot(psi, o_local @ o_local @ psi) - np.vdot(psi, o_local @ psi) ** 2).real == pytest.approx(
        (w[-1] - w[0]) ** 2, rel=1e-12
    )


def test_cumulant_form_equals_variance(rng):
    lat = LatticeSpec(3, 2)
    for n in range(100):
        t = random_complex(rng, (4, 4))
        q, ph = rng.uniform(-np.pi, np.pi), rng.uniform(0, np.pi)
        st = random_k_producible_state(lat, random_partition(3, 1 + n % 3, rng), rng)
        f = qfi_pure(st, t, q, ph)
        terms = qfi_cumulant_terms(st, t, q, ph)
        assert terms["total"] == pytest.approx(f, rel=1e-9, abs=1e-12)
        assert f >= -1e-12


def test_cumulant_phase_nullifies_cross_term(rng):
    lat = LatticeSpec(2, 2)
    for _ in range(50):
        t = random_complex(rng, (4, 4))
        q = rng.uniform(-np.pi, np.pi)
        st = random_k_producible_state(lat, PartitionSpec(((0, 1),)), rng)
        ph = optimal_phase(t_sq_cumulant(st, t, q))
        assert abs(qfi_cumulant_terms(st, t, q, ph)["cross"]) < 1e-12 * max(1, abs(t_sq_cumulant(st, t, q)))


def test_product_state_additivity(rng):
    lat = LatticeSpec(3, 2)
    t = random_complex(rng, (4, 4))
    q, ph = 0.7, 0.4
    blocks = [random_complex(rng, 4) for _ in range(3)]
    blocks = [b / np.linalg.norm(b) for b in blocks]
    st = combine_blocks(lat, PartitionSpec.singletons(3), blocks)
    parts = 0.0
    for j, b in enumerate(blocks):
        o = local_generator(TMatrix(t), q, lat.site_positions[j], ph) / np.sqrt(2)
        parts += 4 * (np.vdot(b, o @ o @ b) - np.vdot(b, o @ b) ** 2).real
    assert qfi_pure(st, t, q, ph) == pytest.approx(parts, rel=1e-9)


def test_qfi_requires_normalized():
    lat = LatticeSpec(1, 1)
    with pytest.raises(DomainError, match="normalized"):
        qfi_pure(ManyBodyState(np.array([1.0, 1.0]), lat), np.eye(2), 0.0, 0.0)


# --- extremal states --------------------------------------------------------

def test_max_product_zero_t():
    assert max_qfi_product_states(LatticeSpec(3, 2), np.zeros((4, 4)), 0.3, 0.1) == 0.0


def test_max_product_matches_extremal_state(rng):
    for n in (1, 2, 3):
        lat = LatticeSpec(n, 2)
        t = random_complex(rng, (4, 4))
        st = extremal_product_state(lat, t, 0.5, 0.2)
        assert qfi_pure(st, t, 0.5, 0.2) == pytest.approx(max_qfi_product_states(lat, t, 0.5, 0.2), rel=1e-10)


def test_max_product_beats_random_restarts(rng):
    lat = LatticeSpec(2, 2)
    t = random_complex(rng, (4, 4))
    best = max(
        qfi_pure(random_k_producible_state(lat, PartitionSpec.singletons(2), rng), t, 0.3, 0.6) for _ in range(300)
    )
    assert best <= max_qfi_product_states(lat, t, 0.3, 0.6) * (1 + 1e-12)


def test_max_product_below_bound_random_geometries(rng):
    basis = l_edge_basis()
    lat = LatticeSpec(2, 5)
    for _ in range(100):
        g = BeamGeometry(rng.uniform(0, np.pi / 2), rng.uniform(0, np.pi / 2), rng.uniform(0, 2 * np.pi))
        ei, es = channel_polarizations(g, ("pi-pi", "pi-sigma", "sigma-pi", "sigma-sigma")[rng.integers(4)])
        t = t_matrix(dipole_matrix(ei, basis), dipole_matrix(es, basis))
        q, ph = momentum_transfer(g).q_chain, rng.uniform(0, np.pi)
        m = max_qfi_product_states(lat, t, q, ph)
        b = k_producible_bound(t, q, lat.site_positions, ph, 1).value
        assert m <= b * (1 + 1e-12)
        assert m == pytest.approx(b / 2, rel=1e-12, abs=1e-15)


def test_ghz_block_saturates_block_sum(rng):
    lat = LatticeSpec(3, 2)
    t = random_complex(rng, (4, 4))
    part = PartitionSpec(((0, 1), (2,)))
    st = ghz_block_state(lat, part, t, 0.4, 0.9)
    spreads = [
        np.ptp(local_generator_eigs(TMatrix(t), 0.4, r, 0.9)[0]) for r in lat.site_positions
    ]
    expected = (spreads[0] + spreads[1]) ** 2 + spreads[2] ** 2
    assert qfi_pure(st, t, 0.4, 0.9) == pytest.approx(expected, rel=1e-10)


# --- binary dump ------------------------------------------------------------

def test_state_roundtrip(tmp_path, rng):
    lat = LatticeSpec(2, 2, (0.0, 1.5))
    st = random_k_producible_state(lat, PartitionSpec(((0, 1),)), rng)
    save_state(tmp_path / "s.bin", st)
    back = load_state(tmp_path / "s.bin")
    assert np.array_equal(back.amplitudes, st.amplitudes) and back.lattice == lat
    raw = (tmp_path / "s.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-16])
    with pytest.raises(LoadError):
        load_state(tmp_path / "t.bin")
