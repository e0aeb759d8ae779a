"""Numerical toolkit for quantum Fisher information of affine Hamiltonian
families ``H(f) = f * H_drive + H_rest``.

Three independent QFI routes (generator series/integral/propagator, overlap
curvature, Gaussian moments) plus closed forms for the built-in families; the
``experiments`` module and the ``qfikit`` CLI drive the cross-checks.
"""

from .errors import (
    BoundaryWarning,
    ConfigError,
    DimensionError,
    InsensitiveOperatingPointError,
    LayoutMismatchError,
    NonHermitianError,
    QfikitError,
    StepSizeError,
    TruncationLeakError,
    UnsupportedStateError,
)
from .fockspace import (
    Operator,
    SpaceLayout,
    StateVector,
    basis_state,
    boundary_mass,
    coherent_state,
    commutator,
    default_buffer,
    default_fock_dim,
    embed,
    expectation,
    fock_state,
    identity,
    interior_projector,
    make_annihilation,
    make_layout,
    number_operator,
    oscillator_state,
    oscillator_var_x,
    product_state,
    quadratures,
    qubit_state,
    sigma_x,
    sigma_y,
    sigma_z,
    squeezed_vacuum_state,
    vacuum_state,
    variance,
)
from .dynamics import (
    GeneratorResult,
    check_ramsey_factorization,
    evolve,
    generator_from_propagator,
    generator_integral,
    generator_series,
    projected_difference,
    propagator,
)
from .metrology import (
    FringeFit,
    MeasurementRecord,
    OperatingPoint,
    QfiEstimate,
    default_fidelity_step,
    deltaf_at_optimum,
    error_propagation_deltaf,
    fidelity_curvature,
    find_operating_point,
    fringe_fit,
    fringe_period,
    measure_A,
    measurement_projector,
    qcrb,
    qfi_fidelity,
    qfi_from_generator,
    ramsey_sequence,
    visibility_coherent,
)
from .models import (
    FAMILIES,
    ChainBoundCheck,
    ModelSpec,
    bound_site_count,
    build_hamiltonian,
    chain_average_qfi,
    chain_bound_check,
    chain_bound_onset,
    chain_fock_qfi_sparse,
    default_model_dim,
    hamiltonian_fn,
    initial_var_x,
    log_chain_qfi_cap,
    log_qfi_chain_closed,
    model_qfi_closed,
    model_qfi_closed_estimate,
    model_qfi_fidelity,
    model_qfi_generator,
    optimal_n,
    qfi_chain_closed,
    qfi_nqubit_closed,
    qfi_power_series,
    qfi_ramsey_closed,
    qfi_rotated_qubit,
    relative_deviation,
)
from .phasespace import (
    GaussianState,
    LinearDynamics,
    chain_linear_dynamics,
    evolve_moments,
    gaussian_qfi,
    mean_sensitivity,
    squeezed_gaussian,
    symplectic_eigenvalues,
    vacuum_gaussian,
)

__version__ = "0.1.0"
