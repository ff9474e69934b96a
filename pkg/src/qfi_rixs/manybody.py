"""Dense N-site spin-orbital states and exact QFI evaluation.

Every site holds exactly one electron (or hole) in a ``2 * n_orb`` dimensional
local space. States are stored as flat complex vectors in the product basis
with site 0 as the slowest index; operators on one site are applied by tensor
contraction without forming global matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from qfi_rixs.errors import DomainError, LoadError, ResourceError
from qfi_rixs.scattering import TMatrix, eigenvalue_spread, local_generator

DEFAULT_DIM_CAP = 200_000
NORM_TOL = 1e-10


@dataclass(frozen=True)
class LatticeSpec:
    n_sites: int
    n_orb: int
    site_positions: tuple[float, ...] | None = None
    dim_cap: int = DEFAULT_DIM_CAP

    def __post_init__(self):
        if self.n_sites < 1 or self.n_orb < 1:
            raise DomainError("n_sites and n_orb must be >= 1")
        pos = self.site_positions
        pos = tuple(float(j) for j in range(self.n_sites)) if pos is None else tuple(float(p) for p in pos)
        if len(pos) != self.n_sites:
            raise DomainError(f"{len(pos)} site positions for {self.n_sites} sites")
        object.__setattr__(self, "site_positions", pos)
        if self.dim > self.dim_cap:
            raise ResourceError(
                f"Hilbert space dimension {self.dim} exceeds the cap of {self.dim_cap}"
            )

    @property
    def local_dim(self) -> int:
        return 2 * self.n_orb

    @property
    def dim(self) -> int:
        return self.local_dim**self.n_sites

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.local_dim,) * self.n_sites


@dataclass(frozen=True)
class PartitionSpec:
    """Disjoint blocks of site indices covering the lattice."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        if any(len(b) == 0 for b in blocks):
            raise DomainError("partition blocks must be non-empty")
        object.__setattr__(self, "blocks", blocks)

    @property
    def k(self) -> int:
        return max(len(b) for b in self.blocks)

    def validate(self, n_sites: int) -> None:
        flat = [i for b in self.blocks for i in b]
        if sorted(flat) != list(range(n_sites)):
            raise DomainError(f"partition {self.blocks} does not cover sites 0..{n_sites - 1} disjointly")

    @classmethod
    def singletons(cls, n_sites: int) -> "PartitionSpec":
        return cls(tuple((j,) for j in range(n_sites)))

    @classmethod
    def contiguous(cls, n_sites: int, k: int) -> "PartitionSpec":
        return cls(tuple(tuple(range(s, min(s + k, n_sites))) for s in range(0, n_sites, k)))


def random_partition(n_sites: int, k: int, rng: np.random.Generator) -> PartitionSpec:
    """Random partition whose largest block has exactly ``k`` sites."""
    if not 1 <= k <= n_sites:
        raise DomainError(f"k={k} outside 1..{n_sites}")
    perm = [int(i) for i in rng.permutation(n_sites)]
    blocks = [tuple(sorted(perm[:k]))]
    rest = perm[k:]
    while rest:
        size = int(rng.integers(1, min(k, len(rest)) + 1))
        blocks.append(tuple(sorted(rest[:size])))
        rest = rest[size:]
    return PartitionSpec(tuple(blocks))


@dataclass(frozen=True)
class ManyBodyState:
    amplitudes: np.ndarray
    lattice: LatticeSpec

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if a.size != self.lattice.dim:
            raise DomainError(f"state has {a.size} amplitudes, lattice needs {self.lattice.dim}")
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.lattice.shape)


def _require_normalized(state: ManyBodyState) -> None:
    if abs(state.norm - 1.0) > NORM_TOL:
        raise DomainError(f"state is not normalized (norm = {state.norm!r})")


def combine_blocks(lattice: LatticeSpec, partition: PartitionSpec, block_states: Sequence[np.ndarray]) -> ManyBodyState:
    """Tensor product of per-block states, reordered into site order."""
    partition.validate(lattice.n_sites)
    d = lattice.local_dim
    psi = np.ones((), dtype=complex)
    order: list[int] = []
    for block, vec in zip(partition.blocks, block_states):
        vec = np.asarray(vec, dtype=complex).reshape((d,) * len(block))
        psi = np.tensordot(psi, vec, axes=0)
        order.extend(block)
    # axis a of psi holds site order[a]
    psi = np.transpose(psi, np.argsort(order))
    return ManyBodyState(psi.reshape(-1), lattice)


def random_k_producible_state(lattice: LatticeSpec, partition: PartitionSpec, seed) -> ManyBodyState:
    """Product over blocks of Haar-random block states (normalized complex Gaussians)."""
    partition.validate(lattice.n_sites)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = lattice.local_dim
    blocks = []
    for block in partition.blocks:
        n = d ** len(block)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        blocks.append(v / np.linalg.norm(v))
    return combine_blocks(lattice, partition, blocks)


def apply_site(psi: np.ndarray, op: np.ndarray, site: int, shape: tuple[int, ...]) -> np.ndarray:
    """Apply a local matrix to one site of a flat product-basis vector."""
    t = psi.reshape(shape)
    out = np.tensordot(op, t, axes=([1], [site]))
    return np.moveaxis(out, 0, site).reshape(-1)


def _check_t(lattice: LatticeSpec, t) -> np.ndarray:
    tm = np.asarray(t.entries if isinstance(t, TMatrix) else t, dtype=complex)
    if tm.shape != (lattice.local_dim, lattice.local_dim):
        raise DomainError(f"T matrix shape {tm.shape} does not match local dimension {lattice.local_dim}")
    return tm


def _apply_sum(vec: np.ndarray, lattice: LatticeSpec, tm: np.ndarray, q_chain: float) -> np.ndarray:
    out = np.zeros_like(vec)
    for j, r in enumerate(lattice.site_positions):
        out += np.exp(1j * q_chain * r) * apply_site(vec, tm, j, lattice.shape)
    return out


def apply_t_q(state: ManyBodyState, t, q_chain: float) -> np.ndarray:
    """``T_q |psi>`` with ``T_q = sum_j exp(i q r_j) T_j`` (unnormalized vector)."""
    tm = _check_t(state.lattice, t)
    return _apply_sum(state.amplitudes, state.lattice, tm, q_chain)


def apply_t_q_dagger(state: ManyBodyState, t, q_chain: float) -> np.ndarray:
    tm = _check_t(state.lattice, t)
    return _apply_sum(state.amplitudes, state.lattice, tm.conj().T, -q_chain)


def t_expectation(state: ManyBodyState, t, q_chain: float) -> complex:
    return complex(np.vdot(state.amplitudes, apply_t_q(state, t, q_chain)))


def t_sq_expectation(state: ManyBodyState, t, q_chain: float) -> complex:
    """``<psi| T_q^2 |psi>`` via two applications of ``T_q``."""
    tm = _check_t(state.lattice, t)
    once = _apply_sum(state.amplitudes, state.lattice, tm, q_chain)
    twice = _apply_sum(once, state.lattice, tm, q_chain)
    return complex(np.vdot(state.amplitudes, twice))


def t_sq_cumulant(state: ManyBodyState, t, q_chain: float) -> complex:
    """``<T_q^2> - <T_q>^2``."""
    return t_sq_expectation(state, t, q_chain) - t_expectation(state, t, q_chain) ** 2


def apply_generator(state: ManyBodyState, t, q_chain: float, phase: float) -> np.ndarray:
    tq = apply_t_q(state, t, q_chain)
    tqd = apply_t_q_dagger(state, t, q_chain)
    return (np.exp(1j * phase) * tq + np.exp(-1j * phase) * tqd) / np.sqrt(2)


def qfi_pure(state: ManyBodyState, t, q_chain: float, phase: float) -> float:
    """Pure-state QFI ``4 Var(O_q)`` of the phase-symmetrized generator."""
    _require_normalized(state)
    psi = state.amplitudes
    o_psi = apply_generator(state, t, q_chain, phase)
    mean = np.vdot(psi, o_psi).real
    return float(4.0 * np.vdot(o_psi - mean * psi, o_psi - mean * psi).real)


def qfi_cumulant_terms(state: ManyBodyState, t, q_chain: float, phase: float) -> dict:
    """The three cumulant contributions to the QFI, evaluated separately.

    Keys: ``tdt`` (``2<T^dag T>_c``), ``ttd`` (``2<T T^dag>_c``),
    ``cross`` (``4 Re[e^{2i phase} <T^2>_c]``), ``cross_bare`` (same with the
    bare ``<T^2>``) and ``total`` (``tdt + ttd + cross``).
    """
    _require_normalized(state)
    psi = state.amplitudes
    tq = apply_t_q(state, t, q_chain)
    tqd = apply_t_q_dagger(state, t, q_chain)
    mean_t = np.vdot(psi, tq)
    mean_td = np.conj(mean_t)
    tdt = np.vdot(tq, tq).real - abs(mean_t) ** 2
    ttd = np.vdot(tqd, tqd).real - abs(mean_td) ** 2
    t2 = t_sq_expectation(state, t, q_chain)
    e2 = np.exp(2j * phase)
    cross = 4.0 * (e2 * (t2 - mean_t**2)).real
    return {
        "tdt": float(2 * tdt),
        "ttd": float(2 * ttd),
        "cross": float(cross),
        "cross_bare": float(4.0 * (e2 * t2).real),
        "total": float(2 * tdt + 2 * ttd + cross),
    }


def local_generator_eigs(t, q_chain: float, r_j: float, phase: float) -> tuple[np.ndarray, np.ndarray]:
    tt = t if isinstance(t, TMatrix) else TMatrix(t)
    h = local_generator(tt, q_chain, r_j, phase) / np.sqrt(2)
    return np.linalg.eigh(0.5 * (h + h.conj().T))


def extremal_product_state(lattice: LatticeSpec, t, q_chain: float, phase: float) -> ManyBodyState:
    """Product of ``(|v_max> + |v_min>)/sqrt2`` per site, the k=1 QFI maximizer."""
    tt = t if isinstance(t, TMatrix) else TMatrix(t)
    sites = []
    for r in lattice.site_positions:
        _, v = local_generator_eigs(tt, q_chain, r, phase)
        sites.append((v[:, -1] + v[:, 0]) / np.sqrt(2))
    return combine_blocks(lattice, PartitionSpec.singletons(lattice.n_sites), sites)


def ghz_block_state(lattice: LatticeSpec, partition: PartitionSpec, t, q_chain: float, phase: float) -> ManyBodyState:
    """Per block, the GHZ-like superposition of all-max and all-min local eigenvectors.

    This saturates ``(sum_{j in block} Delta_j)^2`` per block.
    """
    tt = t if isinstance(t, TMatrix) else TMatrix(t)
    pos = lattice.site_positions
    vecs = []
    for block in partition.blocks:
        hi = np.ones((), dtype=complex)
        lo = np.ones((), dtype=complex)
        for j in block:
            _, v = local_generator_eigs(tt, q_chain, pos[j], phase)
            hi = np.tensordot(hi, v[:, -1], axes=0)
            lo = np.tensordot(lo, v[:, 0], axes=0)
        vecs.append((hi + lo).reshape(-1) / np.sqrt(2))
    return combine_blocks(lattice, partition, vecs)


def max_qfi_product_states(lattice: LatticeSpec, t, q_chain: float, phase: float) -> float:
    """Largest QFI over product states: ``sum_j Delta(O_j)^2`` with ``O_j = Tbar_j / sqrt2``."""
    tt = t if isinstance(t, TMatrix) else TMatrix(t)
    total = 0.0
    for r in lattice.site_positions:
        total += eigenvalue_spread(local_generator(tt, q_chain, r, phase)) ** 2 / 2.0
    return float(total)


# --- binary state dump ------------------------------------------------------

def save_state(path, state: ManyBodyState) -> None:
    """JSON header line (lattice spec) followed by little-endian complex128 data."""
    lat = state.lattice
    header = {
        "format": 1,
        "n_sites": lat.n_sites,
        "n_orb": lat.n_orb,
        "site_positions": list(lat.site_positions),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(state.amplitudes.astype("<c16").tobytes())


def load_state(path) -> ManyBodyState:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise LoadError(f"{path}: missing JSON header line")
    try:
        header = json.loads(raw[:nl])
        lattice = LatticeSpec(header["n_sites"], header["n_orb"], tuple(header["site_positions"]))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise LoadError(f"{path}: bad header ({exc})") from None
    data = np.frombuffer(raw[nl + 1 :], dtype="<c16")
    if data.size != lattice.dim:
        raise LoadError(f"{path}: {data.size} amplitudes, header implies {lattice.dim}")
    return ManyBodyState(data.astype(complex), lattice)
