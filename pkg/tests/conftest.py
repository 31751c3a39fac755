import numpy as np
import pytest

from spinpassage.dynamics import prepare_dimer_state
from spinpassage.spin_ops import BBParams, modulated_hamiltonian, sector_basis


def n3_block(x, alpha=1.0):
    """Chain Hamiltonian at N=3 restricted to the symmetric/antisymmetric dimer pair."""
    params = BBParams(3, -np.pi / 2, alpha)
    L = prepare_dimer_state(params, "left_free").amplitudes.real
    R = prepare_dimer_state(params, "right_free").amplitudes.real
    b1 = np.sqrt(3) / (2 * np.sqrt(2)) * (L + R)
    b2 = np.sqrt(3) / 2 * (L - R)
    B = np.column_stack([b1, b2])
    H = modulated_hamiltonian(params, sector_basis(3, 1)).at(x).toarray()
    # the pair sits at energy offset -alpha/2; remove it
    return B.T @ H @ B + alpha / 2 * np.eye(2), B, H


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
