"""Fisher-information estimates and the dispersive readout pipeline.

Two halves.  The first turns generators or state families into quantum Fisher
information numbers: ``qfi_from_generator`` scores a pure probe against a
known Hermitian generator, ``qfi_fidelity`` differentiates the overlap of
neighboring states directly and needs no operator at all, and ``qcrb``
converts either into the error floor.

The second half is a concrete interferometer: a qubit dispersively coupled to
an oscillator (``H = g sigma_z P - f X``), driven by two pi/2 pulses around
the evolution window and read out through a fixed qubit projector.  The
fringe in ``f`` has period ``pi / (g T^2)``; at the steepest point the
propagated error reaches ``1 / (2 g T^2 V)`` with ``V`` the visibility, so
the readout saturates the quantum bound exactly when ``V -> 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    InsensitiveOperatingPointError,
    QfikitError,
    StepSizeError,
    TruncationLeakError,
)
from .fockspace import (
    Operator,
    SpaceLayout,
    StateVector,
    boundary_mass,
    default_fock_dim,
    embed,
    expectation,
    make_layout,
    oscillator_spec_reach,
    oscillator_state,
    product_state,
    quadratures,
    qubit_state,
    sigma_x,
    sigma_y,
    sigma_z,
    variance,
)
from .dynamics import evolve, propagator

__all__ = [
    "QfiEstimate",
    "MeasurementRecord",
    "FringeFit",
    "OperatingPoint",
    "qfi_from_generator",
    "qfi_fidelity",
    "fidelity_curvature",
    "default_fidelity_step",
    "qcrb",
    "ramsey_layout",
    "ramsey_sequence",
    "measurement_projector",
    "measure_A",
    "error_propagation_deltaf",
    "fringe_fit",
    "find_operating_point",
    "fringe_period",
    "visibility_coherent",
    "deltaf_at_optimum",
]

FIDELITY_CONSISTENCY_LIMIT = 1e-3
SLOPE_FLOOR = 1e-12
SEQUENCE_LEAK_LIMIT = 1e-10


@dataclass(frozen=True)
class QfiEstimate:
    """A QFI number plus how it was obtained.

    ``method`` is one of "generator-variance", "fidelity-fd", "closed-form",
    "gaussian"; finer detail (series vs quadrature route, step sizes) lives in
    ``diagnostics``.
    """

    value: float
    method: str
    model_id: str | None = None
    T: float | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MeasurementRecord:
    expectation_A: float
    variance_A: float
    slope: float | None = None
    delta_f: float | None = None


def qfi_from_generator(psi: StateVector, h) -> float:
    """``4 Var_psi(h)`` for a pure probe; the variance is taken on ``psi`` itself,
    so pass the state the generator was derived for (the evolved probe, in the
    propagator-derivative picture used throughout this package).

    ``h`` may be the bare Hermitian :class:`~qfikit.fockspace.Operator` or a
    :class:`~qfikit.dynamics.GeneratorResult` wrapping one.
    """
    h_op = getattr(h, "h_op", h)
    val = 4.0 * variance(psi, h_op)
    if val < 0.0:
        # variance() already clamps rounding-level negatives
        raise QfikitError(f"negative QFI {val!r} from generator variance")
    return val


def default_fidelity_step(qfi_hint: float | None) -> float:
    """Overlap-drop step: small enough for the quadratic regime at the hinted
    QFI scale, large enough that 1 - fidelity clears rounding noise."""
    hint = max(qfi_hint if qfi_hint is not None else 1.0, 1e-6)
    return min(1e-2, 0.03 / math.sqrt(hint))


def fidelity_curvature(
    amplitudes_of_f: Callable[[float], np.ndarray], f: float, delta: float
) -> tuple[float, dict]:
    """Richardson-extrapolated ``8 (1 - |<psi(f-d/2)|psi(f+d/2)>|) / d^2``.

    The symmetric two-sided overlap cancels odd orders in ``d``; the
    extrapolation across ``delta`` and ``delta/2`` removes the leading even
    correction.  Raises :class:`StepSizeError` when the two raw estimates
    disagree by more than 0.1% relative, which flags a step outside the
    quadratic regime (too large) or drowned in rounding (too small).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")

    def raw(d: float) -> float:
        a = amplitudes_of_f(f - 0.5 * d)
        b = amplitudes_of_f(f + 0.5 * d)
        fid = abs(np.vdot(a, b))
        return 8.0 * (1.0 - fid) / (d * d)

    coarse = raw(delta)
    fine = raw(delta / 2.0)
    value = (4.0 * fine - coarse) / 3.0
    scale = max(abs(value), 1e-12)
    disagreement = abs(fine - coarse) / scale
    if disagreement > FIDELITY_CONSISTENCY_LIMIT:
        raise StepSizeError(
            f"fidelity QFI estimates at delta and delta/2 differ by "
            f"{disagreement:.3e} (relative); retry with a different delta"
        )
    return value, {"delta": delta, "coarse": coarse, "fine": fine}


def qfi_fidelity(
    H_of_f: Callable[[float], Operator],
    psi0: StateVector,
    f: float,
    T: float,
    delta: float | None = None,
    qfi_hint: float | None = None,
) -> QfiEstimate:
    """Overlap-curvature estimate of the QFI of ``exp(-i H(f) T) psi0`` at ``f``.

    Needs only the Hamiltonian family, no generator: defers to
    :func:`fidelity_curvature` on the evolved-state family.  ``qfi_hint``
    (when the caller has a rough magnitude) scales the default step so the
    overlap drop sits well above rounding noise.
    """
    if delta is None:
        delta = default_fidelity_step(qfi_hint)

    def amps(f_value: float) -> np.ndarray:
        return evolve(H_of_f(f_value), psi0, T).amplitudes

    value, diag = fidelity_curvature(amps, f, delta)
    return QfiEstimate(value=value, method="fidelity-fd", T=T, diagnostics=diag)


def qcrb(qfi: float, nu: int = 1) -> float:
    """Cramer-Rao floor ``1 / sqrt(nu * F)`` for ``nu`` independent shots."""
    if qfi < 0:
        raise QfikitError("QFI cannot be negative")
    if nu < 1:
        raise ValueError("nu must be a positive shot count")
    if qfi == 0:
        return math.inf
    return 1.0 / math.sqrt(nu * qfi)


# --- dispersive interferometer -------------------------------------------------

def ramsey_layout(dim: int) -> SpaceLayout:
    return make_layout(n_qubits=1, osc_dims=(dim,))


def fringe_period(g: float, T: float) -> float:
    return math.pi / (g * T * T)


def visibility_coherent(g: float, T: float) -> float:
    """Closed-form fringe visibility for a coherent (or vacuum) oscillator input."""
    return math.exp(-2.0 * g * g * T * T)


def deltaf_at_optimum(g: float, T: float, visibility: float) -> float:
    return 1.0 / (2.0 * g * T * T * visibility)


def _sequence_dim(g: float, f: float, T: float, alpha0_spec) -> int:
    drift = (abs(g) + abs(f)) * T
    return default_fock_dim(oscillator_spec_reach(alpha0_spec) + drift)


def ramsey_sequence(
    g: float,
    f: float,
    T: float,
    alpha0_spec=0.0,
    dim: int | None = None,
) -> StateVector:
    """Full pulse sequence: prepare, split, evolve, recombine.

    Starts from the qubit ground state and the oscillator state named by
    ``alpha0_spec`` (a coherent amplitude, or a spec accepted by
    :func:`qfikit.fockspace.oscillator_state`), applies a pi/2 pulse about x,
    evolves under ``g sigma_z P - f X`` for ``T``, then a pi/2 pulse about y.
    Truncation is sized from the worst-case displacement and verified on the
    output (top-level mass must stay below 1e-10).
    """
    if dim is None:
        dim = _sequence_dim(g, f, T, alpha0_spec)
    layout = ramsey_layout(dim)
    X, P = quadratures(dim)
    H = g * (embed(sigma_z(), 0, layout) @ embed(P, 1, layout)) - f * embed(X, 1, layout)

    psi = product_state(
        layout, [qubit_state(1.0, 0.0), oscillator_state(alpha0_spec, dim)]
    )

    quarter = math.pi / 4.0
    pulse1 = propagator(embed(sigma_x(), 0, layout), quarter)
    pulse2 = propagator(embed(sigma_y(), 0, layout), quarter)

    psi = StateVector(layout, pulse1.matrix @ psi.amplitudes)
    psi = evolve(H, psi, T)
    psi = StateVector(layout, pulse2.matrix @ psi.amplitudes)

    leak = boundary_mass(psi)
    if leak > SEQUENCE_LEAK_LIMIT:
        raise TruncationLeakError(
            f"sequence output carries {leak:.3e} probability in the top Fock "
            f"levels (dim={dim}); enlarge dim"
        )
    return psi


def measurement_projector(layout: SpaceLayout) -> Operator:
    """Projector onto the qubit state ``(|0> + i|1>)/sqrt(2)``, identity on the rest."""
    proj = 0.5 * np.array([[1.0, -1.0j], [1.0j, 1.0]], dtype=complex)
    q = Operator(make_layout(n_qubits=1), proj)
    return embed(q, 0, layout)


def measure_A(psi: StateVector) -> MeasurementRecord:
    A = measurement_projector(psi.layout)
    p = float(np.real(expectation(psi, A)))
    p = min(max(p, 0.0), 1.0)
    return MeasurementRecord(expectation_A=p, variance_A=p * (1.0 - p))


def _sequence_expectation(g: float, f: float, T: float, alpha0_spec, dim: int) -> float:
    return measure_A(ramsey_sequence(g, f, T, alpha0_spec, dim=dim)).expectation_A


def error_propagation_deltaf(
    g: float,
    f: float,
    T: float,
    alpha0_spec=0.0,
    fd_step: float | None = None,
    dim: int | None = None,
) -> MeasurementRecord:
    """Single-shot error ``delta f = sqrt(Var A) / |d<A>/df|`` at the point ``f``.

    The slope is a central difference with a step tied to the fringe period.
    Raises :class:`InsensitiveOperatingPointError` where the slope vanishes
    (fringe extremum), since error propagation is meaningless there.
    """
    if fd_step is None:
        fd_step = 0.5e-5 * fringe_period(g, T)
    if dim is None:
        dim = _sequence_dim(g, abs(f) + fd_step, T, alpha0_spec)

    record = measure_A(ramsey_sequence(g, f, T, alpha0_spec, dim=dim))
    hi = _sequence_expectation(g, f + fd_step, T, alpha0_spec, dim)
    lo = _sequence_expectation(g, f - fd_step, T, alpha0_spec, dim)
    slope = (hi - lo) / (2.0 * fd_step)
    if abs(slope) < SLOPE_FLOOR:
        raise InsensitiveOperatingPointError(
            f"|d<A>/df| = {abs(slope):.3e} at f={f}; move off the fringe extremum"
        )
    delta_f = math.sqrt(record.variance_A) / abs(slope)
    return MeasurementRecord(
        expectation_A=record.expectation_A,
        variance_A=record.variance_A,
        slope=slope,
        delta_f=delta_f,
    )


@dataclass(frozen=True)
class FringeFit:
    offset: float
    amp_cos: float
    amp_sin: float
    omega: float
    visibility: float
    phase: float
    residual_rms: float


def fringe_fit(
    g: float,
    T: float,
    alpha0_spec=0.0,
    n_points: int = 41,
    f_center: float = 0.0,
    dim: int | None = None,
) -> FringeFit:
    """Least-squares fit of ``<A>(f) = a + b cos(w f) + c sin(w f)`` over one period.

    ``w = 2 g T^2`` is fixed, not fitted; the fringe visibility is
    ``2 sqrt(b^2 + c^2)`` because the ideal signal is
    ``1/2 - (V/2) cos(w f + phase)``.
    """
    if n_points < 7:
        raise ValueError("need at least 7 fringe samples")
    omega = 2.0 * g * T * T
    period = fringe_period(g, T)
    fs = f_center + np.linspace(-0.5 * period, 0.5 * period, n_points, endpoint=False)
    if dim is None:
        dim = _sequence_dim(g, float(np.max(np.abs(fs))), T, alpha0_spec)
    ys = np.array([_sequence_expectation(g, float(fv), T, alpha0_spec, dim) for fv in fs])
    design = np.column_stack([np.ones_like(fs), np.cos(omega * fs), np.sin(omega * fs)])
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    a, b, c = (float(v) for v in coef)
    resid = ys - design @ coef
    return FringeFit(
        offset=a,
        amp_cos=b,
        amp_sin=c,
        omega=omega,
        visibility=2.0 * math.hypot(b, c),
        phase=math.atan2(c, -b),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )


@dataclass(frozen=True)
class OperatingPoint:
    f_opt: float
    delta_f: float
    expectation_A: float
    slope: float


def find_operating_point(
    g: float,
    T: float,
    alpha0_spec=0.0,
    f_center: float = 0.0,
    n_scan: int = 33,
    dim: int | None = None,
) -> OperatingPoint:
    """Locate the steepest usable point of the fringe near ``f_center``.

    Scans one period, then golden-section polishes ``|slope| / sqrt(Var A)``;
    the returned ``delta_f`` is the single-shot propagated error there.
    """
    period = fringe_period(g, T)
    step = 1e-4 * period
    if dim is None:
        dim = _sequence_dim(g, abs(f_center) + 0.6 * period, T, alpha0_spec)

    def metric(fv: float) -> float:
        hi = _sequence_expectation(g, fv + step, T, alpha0_spec, dim)
        lo = _sequence_expectation(g, fv - step, T, alpha0_spec, dim)
        slope = (hi - lo) / (2.0 * step)
        p = _sequence_expectation(g, fv, T, alpha0_spec, dim)
        var = p * (1.0 - p)
        if var <= 0.0:
            return 0.0
        return abs(slope) / math.sqrt(var)

    fs = f_center + np.linspace(-0.5 * period, 0.5 * period, n_scan, endpoint=False)
    scores = [metric(float(fv)) for fv in fs]
    k = int(np.argmax(scores))
    lo_f = float(fs[k] - period / n_scan)
    hi_f = float(fs[k] + period / n_scan)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo_f, hi_f
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    m1, m2 = metric(x1), metric(x2)
    for _ in range(40):
        if m1 < m2:
            a, x1, m1 = x1, x2, m2
            x2 = a + invphi * (b - a)
            m2 = metric(x2)
        else:
            b, x2, m2 = x2, x1, m1
            x1 = b - invphi * (b - a)
            m1 = metric(x1)
        if abs(b - a) < 1e-10 * period:
            break
    f_opt = 0.5 * (a + b)
    record = error_propagation_deltaf(g, f_opt, T, alpha0_spec, fd_step=step, dim=dim)
    return OperatingPoint(
        f_opt=f_opt,
        delta_f=float(record.delta_f),
        expectation_A=record.expectation_A,
        slope=float(record.slope),
    )
