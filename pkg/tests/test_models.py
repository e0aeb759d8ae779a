"""Model families: closed forms, dispatchers, bounds, and the site-count scan."""

import math

import numpy as np
import pytest

from qfikit.errors import BoundaryWarning, ConfigError, QfikitError
from qfikit.fockspace import oscillator_state, vacuum_state
from qfikit.models import (
    FAMILIES,
    ModelSpec,
    bound_site_count,
    build_hamiltonian,
    chain_average_qfi,
    chain_bound_check,
    chain_bound_onset,
    chain_fock_qfi_sparse,
    default_model_dim,
    initial_var_x,
    log_chain_average_qfi,
    log_chain_qfi_cap,
    log_qfi_chain_closed,
    model_qfi_closed,
    model_qfi_closed_estimate,
    model_qfi_fidelity,
    model_qfi_generator,
    optimal_n,
    power_reference_printed,
    qfi_chain_closed,
    qfi_nqubit_closed,
    qfi_power_series,
    qfi_ramsey_closed,
    qfi_rotated_qubit,
    relative_deviation,
)


# --- closed forms --------------------------------------------------------------

def test_ramsey_closed_reference_point():
    assert qfi_ramsey_closed(1.0, 1.0, 1.0) == pytest.approx(8.0)
    assert qfi_ramsey_closed(2.0, 0.5, 1.0) == pytest.approx(4 * (4 * 0.0625 + 0.25))


def test_nqubit_closed_reference_point():
    # two entangled probes: 4 (g^2 n^2 T^4 + T^2 n Var X)
    assert qfi_nqubit_closed(1.0, 1.0, 2, 1.0) == pytest.approx(24.0)
    assert qfi_nqubit_closed(1.0, 1.0, 1, 1.0) == pytest.approx(8.0)


def test_rotated_qubit_closed():
    assert qfi_rotated_qubit(1.0, 0.7) == pytest.approx(4 * math.sin(0.7) ** 2)
    assert qfi_rotated_qubit(1.0, math.pi) == pytest.approx(0.0, abs=1e-30)


@pytest.mark.parametrize(
    "n,T,expected",
    [(1, 1.0, 4.0), (2, 1.0, 8.0), (3, 1.0, 88.0 / 9.0), (3, 0.5, 1.2777777777777777)],
)
def test_chain_closed_small_cases(n, T, expected):
    assert qfi_chain_closed(n, 1.0, T, 1.0) == pytest.approx(expected, rel=1e-14)


def test_chain_closed_scalar_and_list_variances_agree():
    vals = qfi_chain_closed(3, 0.8, 0.6, [1.0, 1.0, 1.0])
    assert qfi_chain_closed(3, 0.8, 0.6, 1.0) == pytest.approx(vals, rel=1e-15)
    with pytest.raises(QfikitError):
        qfi_chain_closed(3, 0.8, 0.6, [1.0, 1.0])
    with pytest.raises(QfikitError):
        qfi_chain_closed(2, 0.8, 0.6, [1.0, -0.1])


def test_chain_closed_survives_huge_arguments():
    # the ratio recurrence must not overflow even though (4 g^2 T^2)^j would
    value = qfi_chain_closed(100, 2.0, 20.0, 1.0)
    assert math.isfinite(value)
    assert math.log(value) == pytest.approx(
        log_qfi_chain_closed(100, 2.0, 20.0, 1.0), rel=1e-12
    )


def test_chain_log_route_beyond_float_range():
    # the sum tops out near ln I0(4 g T) ~ 4 g T, so push g T past ~180
    logv = log_qfi_chain_closed(800, 2.0, 100.0, 1.0)
    assert logv > 700.0  # linear value would overflow
    assert math.isfinite(logv)
    assert logv <= log_chain_qfi_cap(2.0, 100.0) + 1e-9


def test_chain_cap_dominates_partial_sums():
    for T in (0.5, 2.0, 8.0):
        cap = log_chain_qfi_cap(1.0, T)
        assert log_qfi_chain_closed(80, 1.0, T, 1.0) <= cap + 1e-12


def test_chain_closed_raises_on_bad_n():
    with pytest.raises(QfikitError):
        qfi_chain_closed(0, 1.0, 1.0, 1.0)


# --- power-g exact polynomial --------------------------------------------------

def test_power_linear_case_is_classical():
    psi = vacuum_state(30)
    # exponent 1 reduces to a pure drive: QFI = 4 T^2 Var X
    assert qfi_power_series(1, 0.7, psi, -1.0, 0.5) == pytest.approx(4 * 0.49, rel=1e-12)


def test_power_printed_reference_scales_like_quarter_qfi():
    psi = vacuum_state(40)
    qfi = qfi_power_series(2, 0.5, psi, -1.0, 0.4)
    printed = power_reference_printed(2, 0.5, psi, -1.0, 0.4)
    assert printed == pytest.approx(qfi / 4.0, rel=1e-12)


# --- averages and the optimal site count --------------------------------------

def test_chain_average_reference_point():
    assert chain_average_qfi(2, 1.0) == pytest.approx(4.0)
    assert math.exp(log_chain_average_qfi(2, 1.0)) == pytest.approx(4.0, rel=1e-12)


def test_optimal_n_tie_breaks_small():
    # at T=1 the averages for n=1 and n=2 tie at 4 exactly; the scan must
    # prefer the smaller probe
    n_star, value = optimal_n(1.0, 1.0, 50)
    assert n_star == 1
    assert value == pytest.approx(4.0)


def test_optimal_n_grows_with_T():
    stars = [optimal_n(T, 1.0, 300)[0] for T in (0.5, 2.0, 5.0, 8.0)]
    assert stars == sorted(stars)
    assert stars[-1] > 1


def test_optimal_n_warns_at_scan_boundary():
    with pytest.warns(BoundaryWarning):
        optimal_n(6.0, 1.0, 3)


# --- exponential bounds --------------------------------------------------------

def test_bound_site_count_requires_a_above_three():
    assert bound_site_count(3.5, 1.0, 2.0) == 7
    with pytest.raises(QfikitError):
        bound_site_count(3.0, 1.0, 2.0)


def test_chain_bound_holds_in_working_regime():
    chk = chain_bound_check(bound_site_count(3.5, 1.0, 5.0), 1.0, 5.0, 1.0)
    assert chk.holds == (True, True)
    assert chk.log_lhs >= chk.log_mid >= chk.log_rhs


def test_chain_bound_onset_reported():
    grid = [0.5 + 0.25 * k for k in range(47)]  # 0.5 .. 12
    onset_mid, onset_lower = chain_bound_onset(3.5, 1.0, grid, 1.0)
    assert onset_mid is not None and onset_lower is not None
    assert onset_mid <= 2.0 and onset_lower <= 2.0
    with pytest.raises(QfikitError):
        chain_bound_onset(3.5, 1.0, [1.0, 1.0], 1.0)


# --- spec handling and dispatchers --------------------------------------------

def test_model_spec_validation():
    with pytest.raises(ConfigError):
        ModelSpec(family="unknown")
    with pytest.raises(ConfigError):
        ModelSpec(family="chain", n=0)
    with pytest.raises(ConfigError):
        ModelSpec(family="ramsey", g=0.0)
    assert set(FAMILIES) == {
        "classical-force", "ramsey", "nqubit-ramsey", "power-g", "chain", "rotated-qubit",
    }


def test_initial_var_x_values_and_errors():
    assert initial_var_x("vacuum") == 1.0
    assert initial_var_x(("coherent", 2.0)) == 1.0
    assert initial_var_x(("squeezed", 0.5)) == pytest.approx(math.exp(-1.0))
    with pytest.raises(ConfigError):
        initial_var_x("thermal")


def test_build_hamiltonian_shapes_and_hermiticity():
    cases = [
        (ModelSpec(family="ramsey"), 2),
        (ModelSpec(family="classical-force"), 1),
        (ModelSpec(family="chain", n=3, dim=6), 3),
        (ModelSpec(family="nqubit-ramsey", n=2, dim=8), 4),
        (ModelSpec(family="rotated-qubit", f=0.3), 1),
        (ModelSpec(family="power-g", n=2), 2),
    ]
    for spec, n_subsystems in cases:
        H, dH, psi0 = build_hamiltonian(spec, T_hint=0.5)
        assert H.is_hermitian()
        assert dH.is_hermitian()
        assert len(H.layout.subsystems) == n_subsystems
        assert np.linalg.norm(psi0.amplitudes) == pytest.approx(1.0, abs=1e-12)


def test_default_model_dim_grows_with_horizon():
    spec = ModelSpec(family="ramsey", g=1.0)
    assert default_model_dim(spec, 2.0) > default_model_dim(spec, 0.5)


def test_closed_estimate_record():
    est = model_qfi_closed_estimate(ModelSpec(family="ramsey"), 1.0)
    assert est.value == pytest.approx(8.0)
    assert est.method == "closed-form"
    assert est.model_id == "ramsey"
    assert est.T == 1.0


@pytest.mark.parametrize("family,kwargs,T", [
    ("ramsey", {}, 0.7),
    ("classical-force", {}, 1.3),
    ("nqubit-ramsey", {"n": 2, "dim": 15}, 0.4),
    ("rotated-qubit", {"f": 0.2}, 1.1),
])
def test_generator_route_tracks_closed_form(family, kwargs, T):
    spec = ModelSpec(family=family, **kwargs)
    closed = model_qfi_closed(spec, T)
    route = "integral" if family == "rotated-qubit" else "series"
    est = model_qfi_generator(spec, T, route=route)
    assert relative_deviation(est.value, closed) < 1e-3
    assert est.method == "generator-variance"
    assert est.diagnostics["route"] == route


def test_fidelity_route_tracks_closed_form():
    spec = ModelSpec(family="ramsey", g=0.5)
    closed = model_qfi_closed(spec, 1.5)
    est = model_qfi_fidelity(spec, 1.5)
    assert relative_deviation(est.value, closed) < 1e-4


def test_generator_route_rejects_unknown():
    with pytest.raises(ConfigError):
        model_qfi_generator(ModelSpec(family="ramsey"), 1.0, route="magic")


# --- sparse ladder oracle ------------------------------------------------------

def test_chain_sparse_oracle_single_site():
    est = chain_fock_qfi_sparse(1, 1.0, 0.5, 16)
    assert relative_deviation(est.value, qfi_chain_closed(1, 1.0, 0.5, 1.0)) < 1e-6
    assert est.method == "fidelity-fd"
    assert est.diagnostics["dim"] == 16


def test_chain_sparse_oracle_two_sites():
    est = chain_fock_qfi_sparse(2, 1.0, 0.5, 24)
    assert relative_deviation(est.value, qfi_chain_closed(2, 1.0, 0.5, 1.0)) < 1e-4


def test_relative_deviation_floor():
    assert relative_deviation(1e-12, 0.0) == pytest.approx(1e-12)
    assert relative_deviation(11.0, 10.0) == pytest.approx(0.1)
