"""Shared oracles and fixtures."""

from functools import reduce

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def haar_unitary(rng, n):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_complex(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def kron_site_op(op, site, n_sites):
    """Dense ``1 x ... x op_site x ... x 1`` with site 0 slowest."""
    d = op.shape[0]
    mats = [op if j == site else np.eye(d) for j in range(n_sites)]
    return reduce(np.kron, mats)


def dense_t_q(t, q, positions):
    n = len(positions)
    return sum(np.exp(1j * q * r) * kron_site_op(t, j, n) for j, r in enumerate(positions))
