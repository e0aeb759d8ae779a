"""Gaussian moment transport for the quadrature chain."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qfikit.errors import QfikitError, UnsupportedStateError
from qfikit.models import qfi_chain_closed
from qfikit.phasespace import (
    GaussianState,
    LinearDynamics,
    chain_linear_dynamics,
    drift_powers,
    evolve_moments,
    gaussian_qfi,
    mean_sensitivity,
    squeezed_gaussian,
    symplectic_eigenvalues,
    vacuum_gaussian,
)


def test_vacuum_state_moments():
    st = vacuum_gaussian(3)
    assert_allclose(st.mean, np.zeros(6))
    assert_allclose(st.cov, np.eye(6))
    assert_allclose(symplectic_eigenvalues(st.cov), np.ones(3), atol=1e-12)


def test_squeezed_state_is_pure():
    st = squeezed_gaussian(2, 0.7)
    nus = symplectic_eigenvalues(st.cov)
    assert_allclose(nus, np.ones(2), atol=1e-10)
    # X variance shrinks, P grows, per site
    assert st.cov[0, 0] == pytest.approx(math.exp(-1.4))
    assert st.cov[1, 1] == pytest.approx(math.exp(1.4))


def test_state_validation():
    with pytest.raises(QfikitError):
        GaussianState(np.zeros(3), np.eye(3))  # odd length
    with pytest.raises(QfikitError):
        GaussianState(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_chain_drift_is_nilpotent():
    n = 4
    dyn = chain_linear_dynamics(n, 1.0)
    powers = drift_powers(dyn.M)
    # influence travels one way down the open chain, so M^(2n) = 0 and the
    # power list stops there
    assert len(powers) <= 2 * n
    last = np.linalg.matrix_power(dyn.M, 2 * n)
    assert np.max(np.abs(last)) == 0.0


def test_drive_hits_first_momentum():
    dyn = chain_linear_dynamics(3, 1.0)
    # H = -f X_1 pushes dP_1/dt = +2f and nothing else directly
    expected = np.zeros(6)
    expected[1] = 2.0
    assert_allclose(dyn.v, expected)


def test_evolve_moments_single_site_drive():
    # one site: X never moves, P ramps at 2 f T
    st = evolve_moments(vacuum_gaussian(1), chain_linear_dynamics(1, 1.0), 0.5, 2.0)
    assert st.mean[0] == pytest.approx(0.0, abs=1e-14)
    assert st.mean[1] == pytest.approx(2.0)
    assert_allclose(st.cov, np.eye(2), atol=1e-13)


def test_evolve_moments_preserves_purity():
    st0 = squeezed_gaussian(3, 0.4)
    st = evolve_moments(st0, chain_linear_dynamics(3, 1.2), 0.7, 1.9)
    assert_allclose(symplectic_eigenvalues(st.cov), np.ones(3), atol=1e-8)


def test_mean_sensitivity_is_linear_response():
    dyn = chain_linear_dynamics(2, 0.9)
    T = 1.3
    sens = mean_sensitivity(dyn, T)
    a = evolve_moments(vacuum_gaussian(2), dyn, 0.0, T)
    b = evolve_moments(vacuum_gaussian(2), dyn, 1.0, T)
    assert_allclose(b.mean - a.mean, sens, atol=1e-12)


@pytest.mark.parametrize("n,g,T", [(1, 1.0, 0.8), (2, 1.0, 1.0), (3, 0.7, 2.0), (50, 1.0, 5.0)])
def test_gaussian_qfi_matches_closed_form(n, g, T):
    est = gaussian_qfi(chain_linear_dynamics(n, g), vacuum_gaussian(n), T)
    closed = qfi_chain_closed(n, g, T, 1.0)
    assert est.value == pytest.approx(closed, rel=1e-12)
    assert est.method == "gaussian"


def test_gaussian_qfi_squeezed_input():
    r = 0.5
    est = gaussian_qfi(chain_linear_dynamics(2, 1.0), squeezed_gaussian(2, r), 1.0)
    closed = qfi_chain_closed(2, 1.0, 1.0, math.exp(-2 * r))
    assert est.value == pytest.approx(closed, rel=1e-12)


def test_gaussian_qfi_rejects_mixed_state():
    thermal = GaussianState(np.zeros(2), 2.0 * np.eye(2))
    with pytest.raises(UnsupportedStateError):
        gaussian_qfi(chain_linear_dynamics(1, 1.0), thermal, 1.0)


def test_dimension_mismatch_raises():
    with pytest.raises(QfikitError):
        evolve_moments(vacuum_gaussian(2), chain_linear_dynamics(3, 1.0), 0.0, 1.0)
    with pytest.raises(QfikitError):
        gaussian_qfi(chain_linear_dynamics(3, 1.0), vacuum_gaussian(2), 1.0)


def test_huge_chain_is_cheap_and_finite():
    est = gaussian_qfi(chain_linear_dynamics(100, 2.0), vacuum_gaussian(100), 20.0)
    closed = qfi_chain_closed(100, 2.0, 20.0, 1.0)
    assert est.value == pytest.approx(closed, rel=1e-9)
