"""Evolution, propagators, and the three generator constructions."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qfikit.dynamics import (
    check_ramsey_factorization,
    evolve,
    generator_from_propagator,
    generator_integral,
    generator_series,
    projected_difference,
    propagator,
)
from qfikit.errors import NonHermitianError
from qfikit.fockspace import (
    Operator,
    embed,
    expectation,
    identity,
    interior_mask,
    make_layout,
    product_state,
    quadratures,
    qubit_state,
    sigma_z,
    vacuum_state,
    variance,
)


def ramsey_pieces(dim, g, f):
    lay = make_layout(n_qubits=1, osc_dims=(dim,))
    X, P = quadratures(dim)
    H = g * (embed(sigma_z(), 0, lay) @ embed(P, 1, lay)) - f * embed(X, 1, lay)
    dH = -1.0 * embed(X, 1, lay)
    psi0 = product_state(lay, [qubit_state(1, 0), vacuum_state(dim)])
    return lay, H, dH, psi0


def test_evolve_t0_is_identity():
    _, H, _, psi0 = ramsey_pieces(20, 1.0, 0.0)
    out = evolve(H, psi0, 0.0)
    assert_allclose(out.amplitudes, psi0.amplitudes, atol=1e-14)


def test_evolve_preserves_norm():
    _, H, _, psi0 = ramsey_pieces(40, 1.0, 0.5)
    out = evolve(H, psi0, 1.3)
    assert np.linalg.norm(out.amplitudes) == pytest.approx(1.0, abs=1e-10)


def test_evolve_composes():
    _, H, _, psi0 = ramsey_pieces(40, 1.0, 0.2)
    one = evolve(H, evolve(H, psi0, 0.45), 0.15)
    direct = evolve(H, psi0, 0.6)
    assert np.linalg.norm(one.amplitudes - direct.amplitudes) < 1e-9


def test_evolve_matches_propagator():
    _, H, _, psi0 = ramsey_pieces(30, 0.8, 0.1)
    U = propagator(H, 0.7)
    via_U = U.matrix @ psi0.amplitudes
    assert_allclose(evolve(H, psi0, 0.7).amplitudes, via_U, atol=1e-11)
    # unitarity
    assert_allclose(U.matrix @ U.matrix.conj().T, np.eye(60), atol=1e-11)


def test_evolve_rejects_non_hermitian():
    lay = make_layout(n_qubits=0, osc_dims=(5,))
    bad = Operator(lay, np.triu(np.ones((5, 5))).astype(complex))
    with pytest.raises(NonHermitianError):
        evolve(bad, vacuum_state(5), 1.0)


def test_conditional_drift_anchor():
    # ground-state qubit, g=1, T=0.3: the oscillator mean X must sit at -0.6
    lay, H, _, psi0 = ramsey_pieces(40, 1.0, 0.0)
    X, _ = quadratures(40)
    psiT = evolve(H, psi0, 0.3)
    assert expectation(psiT, embed(X, 1, lay)) == pytest.approx(-0.6, abs=1e-9)


def test_generator_series_commuting_family_is_linear():
    # H = -f X commutes with its own f-derivative, so h = T dH exactly
    dim = 25
    lay = make_layout(n_qubits=0, osc_dims=(dim,))
    X, _ = quadratures(dim)
    H = -0.4 * X
    dH = -1.0 * X
    res = generator_series(H, dH, 1.7)
    assert res.terms_used == 1
    assert projected_difference(res.h_op, 1.7 * dH) < 1e-12


def test_generator_series_ramsey_truncates_fast():
    _, H, dH, _ = ramsey_pieces(40, 1.0, 0.3)
    res = generator_series(H, dH, 0.7)
    # the nested commutators die after the central term
    assert res.terms_used <= 3
    assert res.last_term_norm is not None
    assert res.anti_hermitian_residual < 1e-8
    assert res.h_op.is_hermitian()


def _interior_spectral_gap(a, b, buffer=None):
    mask = interior_mask(a.layout, buffer)
    diff = (a.matrix - b.matrix)[mask][:, mask]
    return float(np.linalg.norm(diff, 2))


def test_generator_routes_pairwise_agreement():
    """Series, quadrature, and propagator-derivative generators coincide on the
    buffered interior to operator norm 1e-6."""
    dim, g, f, T = 110, 0.6, 0.2, 0.5
    _, H, dH, _ = ramsey_pieces(dim, g, f)

    def H_of(fv):
        _, Hf, _, _ = ramsey_pieces(dim, g, fv)
        return Hf

    series = generator_series(H, dH, T)
    integral = generator_integral(H, dH, T)
    prop = generator_from_propagator(H_of, f, T)
    assert _interior_spectral_gap(series.h_op, integral.h_op) < 1e-6
    assert _interior_spectral_gap(series.h_op, prop.h_op) < 1e-6
    assert _interior_spectral_gap(integral.h_op, prop.h_op) < 1e-6
    assert integral.quadrature_points is not None
    assert prop.delta is not None


def test_generator_variance_reproduces_closed_form():
    # the quartic term needs qubit coherence: probe = post-pulse superposition
    dim, g, T = 60, 1.0, 0.6
    lay, H, dH, _ = ramsey_pieces(dim, g, 0.0)
    s = 1.0 / math.sqrt(2.0)
    psi0 = product_state(lay, [qubit_state(s, -1j * s), vacuum_state(dim)])
    res = generator_integral(H, dH, T)
    psiT = evolve(H, psi0, T)
    qfi = 4.0 * variance(psiT, res.h_op)
    assert qfi == pytest.approx(4.0 * (g * g * T**4 + T * T), rel=1e-8)


def test_projected_difference_zero_for_equal_operators():
    lay = make_layout(n_qubits=0, osc_dims=(8,))
    op = identity(lay)
    assert projected_difference(op, op) == 0.0


@pytest.mark.parametrize("T", [0.25, 0.5, 1.0])
def test_factorization_defect_small(T):
    assert check_ramsey_factorization(1.0, 0.5, T, dim=80, buffer=30) < 1e-8


def test_factorization_defect_grows_without_buffer():
    buffered = check_ramsey_factorization(1.0, 0.5, 1.0, dim=80, buffer=30)
    bare = check_ramsey_factorization(1.0, 0.5, 1.0, dim=80, buffer=0)
    assert bare > buffered
