"""Time evolution and local-generator constructions for parametrized Hamiltonians.

For a Hamiltonian family ``H(f)`` evolved for time ``T``, the sensitivity of
the final state to ``f`` is carried by the Hermitian generator

    h = i (dU/df) U^dag,   U = exp(-i H(f) T),

which this module builds three independent ways: a nested-commutator series, a
quadrature of the conjugated derivative ``exp(-iHt) (dH/df) exp(+iHt)``, and a
finite-difference derivative of the propagator itself.  All three target the
same operator, so they cross-validate each other.

Truncation note: on a truncated ladder the canonical commutator fails at the
top level, and nested commutators of truncated operators acquire spurious
edge-supported terms that creep inward one ladder step per commutator.  The
series therefore measures its stopping criterion on the buffered interior
(see :func:`qfikit.fockspace.interior_mask`), where the first ideally-zero
term of a terminating series is still exactly zero.  Comparisons between
constructions should use :func:`projected_difference` for the same reason.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import LayoutMismatchError, NonHermitianError, StepSizeError
from .fockspace import (
    Operator,
    SpaceLayout,
    StateVector,
    interior_mask,
    make_layout,
    quadratures,
    sigma_z,
    embed,
)

__all__ = [
    "GeneratorResult",
    "evolve",
    "propagator",
    "generator_series",
    "generator_integral",
    "generator_from_propagator",
    "projected_difference",
    "check_ramsey_factorization",
]

SERIES_MAX_TERMS = 64
INTEGRAL_MIN_STEPS = 8
INTEGRAL_REFINE_TOL = 1e-9
INTEGRAL_MAX_STEPS = 6400
PROPAGATOR_RESIDUAL_LIMIT = 1e-4


def _require_hermitian(op: Operator, what: str) -> None:
    scale = 1.0 + float(np.max(np.abs(op.matrix))) if op.matrix.size else 1.0
    defect = op.hermiticity_defect()
    if defect > 1e-10 * scale:
        raise NonHermitianError(f"{what} must be Hermitian (defect {defect:.3e})")


def _eigh(op: Operator) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(op.matrix)


def evolve(H: Operator, psi: StateVector, T: float) -> StateVector:
    """Apply ``exp(-i H T)`` to ``psi`` via Hermitian eigendecomposition."""
    if H.layout != psi.layout:
        raise LayoutMismatchError("state and Hamiltonian layouts differ")
    _require_hermitian(H, "Hamiltonian")
    w, V = _eigh(H)
    amp = V @ (np.exp(-1j * w * T) * (V.conj().T @ psi.amplitudes))
    return StateVector(psi.layout, amp)


def propagator(H: Operator, T: float) -> Operator:
    """Unitary ``exp(-i H T)`` as a dense operator."""
    _require_hermitian(H, "Hamiltonian")
    w, V = _eigh(H)
    return Operator(H.layout, (V * np.exp(-1j * w * T)) @ V.conj().T)


@dataclass(frozen=True)
class GeneratorResult:
    """Generator operator plus diagnostics of how it was built."""

    h_op: Operator
    method: str  # "series" | "integral" | "propagator-derivative"
    terms_used: int | None = None
    last_term_norm: float | None = None
    quadrature_points: int | None = None
    delta: float | None = None
    anti_hermitian_residual: float = 0.0
    truncated: bool = False


def _masked_fnorm(mat: np.ndarray, mask: np.ndarray) -> float:
    return float(np.linalg.norm(mat[mask][:, mask]))


def generator_series(
    H: Operator,
    dH: Operator,
    T: float,
    tol: float | None = None,
    max_terms: int = SERIES_MAX_TERMS,
    buffer: int | None = None,
) -> GeneratorResult:
    """Nested-commutator series for ``h = i (dU/df) U^dag``.

    Accumulates ``sum_j T^(j+1)/(j+1)! * A_j`` with ``A_0 = dH`` and
    ``A_j = -i [H, A_(j-1)]`` (each ``A_j`` Hermitian), stopping when the
    interior-projected Frobenius norm of the next term drops below ``tol``.
    ``tol=None`` uses ``1e-12 * |partial| + 1e-14``.  Exactly terminating
    families (commuting generators, the dispersive and chain models here)
    stop at their algebraic term count; non-terminating ones may hit
    ``max_terms``, which sets the ``truncated`` flag and warns.
    """
    if H.layout != dH.layout:
        raise LayoutMismatchError("H and dH layouts differ")
    _require_hermitian(H, "H")
    _require_hermitian(dH, "dH")
    if tol is not None and tol <= 0:
        raise ValueError("tol must be positive")
    if max_terms < 1:
        raise ValueError("max_terms must be >= 1")

    mask = interior_mask(H.layout, buffer)
    Hm = H.matrix
    A = np.array(dH.matrix)
    partial = np.zeros_like(A)
    coef = float(T)
    terms_used = 0
    last_term_norm = None
    truncated = False

    for j in range(max_terms + 1):
        term = coef * A
        term_norm = _masked_fnorm(term, mask)
        stop_tol = tol if tol is not None else 1e-12 * float(np.linalg.norm(partial)) + 1e-14
        if j > 0 and term_norm < stop_tol:
            last_term_norm = term_norm
            break
        if j == max_terms:
            truncated = True
            last_term_norm = term_norm
            warnings.warn(
                f"generator series hit max_terms={max_terms} with next-term norm "
                f"{term_norm:.3e}; consider generator_integral",
                RuntimeWarning,
            )
            break
        partial = partial + term
        terms_used += 1
        A = -1j * (Hm @ A - A @ Hm)
        coef *= T / (j + 2)

    sym = 0.5 * (partial + partial.conj().T)
    residual = float(np.linalg.norm(partial - sym)) / max(1.0, float(np.linalg.norm(sym)))
    return GeneratorResult(
        h_op=Operator(H.layout, sym),
        method="series",
        terms_used=terms_used,
        last_term_norm=last_term_norm,
        anti_hermitian_residual=residual,
        truncated=truncated,
    )


def _simpson_weights(steps: int, T: float) -> np.ndarray:
    w = np.ones(steps + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (T / steps / 3.0)


def generator_integral(
    H: Operator,
    dH: Operator,
    T: float,
    steps: int = 200,
) -> GeneratorResult:
    """Composite-Simpson quadrature of ``exp(-iHt) dH exp(+iHt)`` over ``[0, T]``.

    Runs in the eigenbasis of ``H`` so each node costs one elementwise phase
    multiply.  Node count doubles until the result moves by less than 1e-9;
    the final count is reported in ``quadrature_points``.
    """
    if H.layout != dH.layout:
        raise LayoutMismatchError("H and dH layouts differ")
    _require_hermitian(H, "H")
    _require_hermitian(dH, "dH")
    if steps < INTEGRAL_MIN_STEPS:
        raise ValueError(f"need at least {INTEGRAL_MIN_STEPS} Simpson intervals")
    if steps % 2:
        steps += 1

    w, V = _eigh(H)
    D = V.conj().T @ dH.matrix @ V
    gaps = w[:, None] - w[None, :]

    def quadrature(n_steps: int) -> np.ndarray:
        if T == 0.0:
            return np.zeros_like(D)
        weights = _simpson_weights(n_steps, T)
        phase_step = np.exp(-1j * gaps * (T / n_steps))
        acc = np.zeros_like(D)
        phase = np.ones_like(D)
        for k in range(n_steps + 1):
            acc += weights[k] * phase
            if k < n_steps:
                phase = phase * phase_step
        return D * acc

    current = quadrature(steps)
    while steps < INTEGRAL_MAX_STEPS:
        refined = quadrature(2 * steps)
        diff = float(np.linalg.norm(refined - current))
        steps *= 2
        current = refined
        if diff < INTEGRAL_REFINE_TOL * (1.0 + float(np.linalg.norm(refined))):
            break
    else:
        warnings.warn(
            f"Simpson refinement stopped at {steps} intervals without meeting "
            f"{INTEGRAL_REFINE_TOL}",
            RuntimeWarning,
        )

    h_mat = V @ current @ V.conj().T
    sym = 0.5 * (h_mat + h_mat.conj().T)
    residual = float(np.linalg.norm(h_mat - sym)) / max(1.0, float(np.linalg.norm(sym)))
    return GeneratorResult(
        h_op=Operator(H.layout, sym),
        method="integral",
        quadrature_points=steps + 1,
        anti_hermitian_residual=residual,
    )


def generator_from_propagator(
    H_of_f: Callable[[float], Operator],
    f: float,
    T: float,
    delta: float = 1e-4,
) -> GeneratorResult:
    """Central-difference derivative of the propagator: ``i (dU/df) U^dag``.

    One Richardson step (``delta`` and ``delta/2``) cancels the leading
    quadratic finite-difference error.  A large anti-Hermitian residual after
    symmetrization means the step was badly sized for this family.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")

    U0 = propagator(H_of_f(f), T)

    def raw(d: float) -> np.ndarray:
        Up = propagator(H_of_f(f + d), T).matrix
        Um = propagator(H_of_f(f - d), T).matrix
        return 1j * ((Up - Um) / (2.0 * d)) @ U0.matrix.conj().T

    coarse = raw(delta)
    fine = raw(delta / 2.0)
    h_mat = (4.0 * fine - coarse) / 3.0
    sym = 0.5 * (h_mat + h_mat.conj().T)
    residual = float(np.linalg.norm(h_mat - sym)) / max(1.0, float(np.linalg.norm(sym)))
    if residual > PROPAGATOR_RESIDUAL_LIMIT:
        raise StepSizeError(
            f"propagator derivative residual {residual:.3e} exceeds "
            f"{PROPAGATOR_RESIDUAL_LIMIT}; adjust delta"
        )
    return GeneratorResult(
        h_op=Operator(U0.layout, sym),
        method="propagator-derivative",
        delta=delta,
        anti_hermitian_residual=residual,
    )


def projected_difference(a: Operator, b: Operator, buffer: int | None = None) -> float:
    """Frobenius norm of ``a - b`` restricted to the buffered interior subspace."""
    if a.layout != b.layout:
        raise LayoutMismatchError("operators live on different layouts")
    mask = interior_mask(a.layout, buffer)
    return _masked_fnorm(a.matrix - b.matrix, mask)


def check_ramsey_factorization(
    g: float,
    f: float,
    T: float,
    dim: int,
    buffer: int | None = None,
) -> float:
    """Defect of the dispersive-model propagator split, on the interior subspace.

    For ``H = g sigma_z P - f X`` the propagator factors exactly as
    ``exp(-i g sigma_z P T) exp(+i f X T) exp(+i g f T^2 sigma_z)`` because
    the two pieces of ``H`` have a central commutator.  Returns the spectral
    norm of (left - right) with the top third of the ladder projected out,
    which isolates genuine algebra errors from truncation-edge effects.
    """
    layout = make_layout(n_qubits=1, osc_dims=(dim,))
    X, P = quadratures(dim)
    sz = sigma_z()
    szP = embed(sz, 0, layout) @ embed(P, 1, layout)
    Xe = embed(X, 1, layout)
    sze = embed(sz, 0, layout)

    H = g * szP - f * Xe
    left = propagator(H, T).matrix
    right = (
        propagator(g * szP, T).matrix
        @ propagator(-f * Xe, T).matrix
        @ propagator(-g * f * T * sze, T).matrix
    )
    mask = interior_mask(layout, buffer)
    diff = (left - right)[mask][:, mask]
    return float(np.linalg.norm(diff, 2))
