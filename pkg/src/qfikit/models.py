"""Hamiltonian families and their closed-form Fisher information.

Every family here has the affine structure ``H(f) = f * H_drive + H_rest`` and
a preferred probe state, so one ``ModelSpec`` is enough to build the operators,
the probe, and (where known) the closed-form QFI:

  classical-force   H = -f X                     single oscillator, F = 4 T^2 Var X
  ramsey            H = g sigma_z P - f X        qubit + oscillator, F = 4(g^2 T^4 + T^2 Var X)
  nqubit-ramsey     n copies, entangled qubits   F = 4(g^2 n^2 T^4 + n T^2 Var X)
  power-g           H = f X^k + g P sigma_z      generator is a degree-k polynomial in X
  chain             H = -f X_1 + g sum P_j X_j+1 F = sum_j 2^2j/(j!)^2 g^(2j-2) T^2j Var X_j
  rotated-qubit     H = g (cos f sx + sin f sz)  F = 4 sin^2(gT), validation family

The chain sum explodes exponentially in T, so every chain expression has a
log-space twin; the linear-value functions switch to it automatically before
double precision overflows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, i0e, logsumexp

from .errors import BoundaryWarning, ConfigError, QfikitError, TruncationLeakError
from .dynamics import (
    GeneratorResult,
    evolve,
    generator_from_propagator,
    generator_integral,
    generator_series,
)
from .fockspace import (
    Operator,
    SpaceLayout,
    StateVector,
    basis_state,
    default_fock_dim,
    embed,
    interior_projector,
    make_layout,
    oscillator_spec_reach,
    oscillator_state,
    oscillator_var_x,
    product_state,
    quadratures,
    qubit_state,
    sigma_x,
    sigma_z,
    variance,
)
from .metrology import (
    QfiEstimate,
    default_fidelity_step,
    fidelity_curvature,
    qfi_fidelity,
    qfi_from_generator,
)

__all__ = [
    "FAMILIES",
    "ModelSpec",
    "ChainBoundCheck",
    "build_hamiltonian",
    "hamiltonian_fn",
    "initial_var_x",
    "qfi_ramsey_closed",
    "qfi_nqubit_closed",
    "qfi_power_series",
    "power_reference_printed",
    "qfi_chain_closed",
    "log_qfi_chain_closed",
    "log_chain_qfi_cap",
    "chain_bound_check",
    "bound_site_count",
    "chain_bound_onset",
    "chain_average_qfi",
    "log_chain_average_qfi",
    "optimal_n",
    "qfi_rotated_qubit",
    "model_qfi_closed",
    "model_qfi_closed_estimate",
    "model_qfi_generator",
    "model_qfi_fidelity",
    "chain_fock_qfi_sparse",
    "relative_deviation",
]

FAMILIES = (
    "classical-force",
    "ramsey",
    "nqubit-ramsey",
    "power-g",
    "chain",
    "rotated-qubit",
)

# switch point between plain arithmetic (exact at small order) and log-space
_LOG_DIRECT_LIMIT = 300.0


@dataclass(frozen=True)
class ModelSpec:
    """Parameter record addressing one Hamiltonian family at one point.

    ``n`` is the site count for the chain, the qubit count for the entangled
    family, and the exponent for power-g.  ``initial`` applies to every
    oscillator: "vacuum", ("coherent", alpha) or ("squeezed", r); squeezing r
    gives Var X = exp(-2 r).  For rotated-qubit, ``g`` plays the field
    magnitude and ``f`` the angle.
    """

    family: str
    g: float = 1.0
    f: float = 0.0
    n: int = 1
    dim: int | None = None
    initial: str | tuple = "vacuum"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.n < 1:
            raise ConfigError("n must be a positive integer")
        if self.family != "rotated-qubit" and self.g <= 0:
            raise ConfigError("coupling g must be positive")

    def with_f(self, f: float) -> "ModelSpec":
        return replace(self, f=f)


def initial_var_x(initial: str | tuple) -> float:
    """Var X of the per-oscillator initial state (coherent states keep the
    vacuum value; squeezing rescales it)."""
    try:
        return oscillator_var_x(initial)
    except QfikitError as exc:
        raise ConfigError(str(exc)) from exc


def _osc_state(initial: str | tuple, dim: int) -> StateVector:
    initial_var_x(initial)  # rejects malformed specs with a ConfigError
    return oscillator_state(initial, dim)


def default_model_dim(spec: ModelSpec, T: float) -> int:
    """Truncation that keeps the evolved probe far from the ladder edge.

    Sized from the worst-case coherent displacement accumulated over ``T``;
    the chain gets an empirical per-site budget valid in its Fock-oracle
    regime (gT <= 1, small n), beyond which the Gaussian engine takes over.
    """
    alpha0 = oscillator_spec_reach(spec.initial)
    g, f = abs(spec.g), abs(spec.f)
    if spec.family in ("classical-force", "ramsey", "nqubit-ramsey"):
        return default_fock_dim(alpha0 + (g + f) * T)
    if spec.family == "power-g":
        return default_fock_dim(alpha0 + (g + f) * T) + 4 * spec.n + 10
    if spec.family == "chain":
        x = g * T
        return max(10, 12 + math.ceil(14.0 * x * math.sqrt(x)))
    return 2  # rotated-qubit


def _chain_layout_ops(n: int, dim: int):
    layout = make_layout(n_qubits=0, osc_dims=(dim,) * n)
    X, P = quadratures(dim)
    Xs = [embed(X, j, layout) for j in range(n)]
    Ps = [embed(P, j, layout) for j in range(n)]
    return layout, Xs, Ps


def build_hamiltonian(
    spec: ModelSpec, T_hint: float | None = None
) -> tuple[Operator, Operator, StateVector]:
    """Operators and probe for one family: ``(H, dH, psi0)`` with ``dH = dH/df``.

    ``psi0`` is the family's standard probe: the interferometer families
    return the post-first-pulse superposition (equal qubit superposition, or
    the entangled all-up/all-down superposition for the n-qubit family), the
    power family a definite-sigma_z branch, the rotated qubit an eigenstate
    of ``H(f)`` whose generator variance is maximal.  ``T_hint`` only feeds
    the default truncation rule; set ``dim`` on the ModelSpec to override.
    """
    dim = spec.dim if spec.dim is not None else default_model_dim(spec, T_hint or 1.0)
    g, f, n = spec.g, spec.f, spec.n

    if spec.family in ("classical-force", "chain"):
        sites = 1 if spec.family == "classical-force" else n
        layout, Xs, Ps = _chain_layout_ops(sites, dim)
        H = -f * Xs[0]
        for j in range(sites - 1):
            H = H + g * (Ps[j] @ Xs[j + 1])
        dH = -1.0 * Xs[0]
        psi0 = product_state(layout, [_osc_state(spec.initial, dim)] * sites)
        return H, dH, psi0

    if spec.family == "ramsey":
        layout = make_layout(n_qubits=1, osc_dims=(dim,))
        X, P = quadratures(dim)
        H = g * (embed(sigma_z(), 0, layout) @ embed(P, 1, layout)) - f * embed(X, 1, layout)
        dH = -1.0 * embed(X, 1, layout)
        psi0 = product_state(
            layout, [qubit_state(1.0, -1.0j), _osc_state(spec.initial, dim)]
        )
        return H, dH, psi0

    if spec.family == "nqubit-ramsey":
        layout = make_layout(n_qubits=n, osc_dims=(dim,) * n)
        X, P = quadratures(dim)
        H = None
        dHm = None
        for k in range(n):
            szP = embed(sigma_z(), k, layout) @ embed(P, n + k, layout)
            Xe = embed(X, n + k, layout)
            term = g * szP - f * Xe
            H = term if H is None else H + term
            dHm = -1.0 * Xe if dHm is None else dHm - Xe
        # entangled superposition of all-down and all-up qubit registers
        lo = basis_state(layout, (0,) * n + (0,) * n).amplitudes
        hi = basis_state(layout, (1,) * n + (0,) * n).amplitudes
        ghz = (lo - 1.0j * hi) / math.sqrt(2.0)
        oscs = [_osc_state(spec.initial, dim) for _ in range(n)]
        osc_amp = oscs[0].amplitudes
        for s in oscs[1:]:
            osc_amp = np.kron(osc_amp, s.amplitudes)
        qubit_dim = 2**n
        amp = (ghz.reshape(qubit_dim, dim**n)[:, 0][:, None] * osc_amp[None, :]).reshape(-1)
        # ghz has support only in the oscillator-vacuum column by construction
        psi0 = StateVector(layout, amp)
        return H, dHm, psi0

    if spec.family == "power-g":
        layout = make_layout(n_qubits=1, osc_dims=(dim,))
        X, P = quadratures(dim)
        G = _matrix_power_op(X, n)
        H = f * embed(G, 1, layout) + g * (embed(sigma_z(), 0, layout) @ embed(P, 1, layout))
        dH = embed(G, 1, layout)
        psi0 = product_state(layout, [qubit_state(0.0, 1.0), _osc_state(spec.initial, dim)])
        return H, dH, psi0

    # rotated-qubit: field angle is the estimated parameter
    layout = make_layout(n_qubits=1)
    H = g * (math.cos(f) * sigma_x() + math.sin(f) * sigma_z())
    dH = g * (-math.sin(f) * sigma_x() + math.cos(f) * sigma_z())
    w, V = np.linalg.eigh(H.matrix)
    vec = V[:, 0]
    k = int(np.argmax(np.abs(vec)))
    vec = vec * (abs(vec[k]) / vec[k])
    psi0 = StateVector(layout, vec)
    return H, dH, psi0


def _matrix_power_op(base: Operator, k: int) -> Operator:
    out = base
    for _ in range(k - 1):
        out = out @ base
    return out


def hamiltonian_fn(spec: ModelSpec, T_hint: float | None = None) -> Callable[[float], Operator]:
    """``f -> H(f)`` on a frozen layout, for propagator-derivative use."""
    dim = spec.dim if spec.dim is not None else default_model_dim(spec, T_hint or 1.0)
    frozen = replace(spec, dim=dim)

    def fn(f_value: float) -> Operator:
        H, _, _ = build_hamiltonian(frozen.with_f(f_value))
        return H

    return fn


# --- closed forms --------------------------------------------------------------

def qfi_ramsey_closed(g: float, T: float, var_X: float) -> float:
    """``4 (g^2 T^4 + T^2 Var X)`` for the dispersive interferometer probe."""
    if T < 0 or var_X < 0:
        raise QfikitError("T and var_X must be nonnegative")
    return 4.0 * (g * g * T**4 + T * T * var_X)


def qfi_nqubit_closed(g: float, T: float, n: int, var_X: float) -> float:
    """Entangled-register scaling: the coherent term gains n^2, the oscillator
    term only n."""
    if n < 1:
        raise QfikitError("n must be >= 1")
    return 4.0 * (g * g * n * n * T**4 + T * T * n * var_X)


def qfi_rotated_qubit(B: float, T: float) -> float:
    """``4 sin^2(B T)``: bounded, periodic, vanishing at B T = pi."""
    s = math.sin(B * T)
    return 4.0 * s * s


def _power_coefficients(n_exp: int, T: float, g: float, s: int) -> list[float]:
    """Coefficient of X^(n_exp - m) in the branch generator, m = 0..n_exp."""
    coefs = []
    for m in range(n_exp + 1):
        falling = math.factorial(n_exp) // math.factorial(n_exp - m)
        coefs.append(
            (-2.0 * g * s) ** m * T ** (m + 1) / math.factorial(m + 1) * falling
        )
    return coefs


def _power_polynomial(n_exp: int, T: float, g: float, s: int, dim: int) -> np.ndarray:
    X, _ = quadratures(dim)
    coefs = _power_coefficients(n_exp, T, g, s)
    acc = np.zeros((dim, dim), dtype=complex)
    Xk = np.eye(dim, dtype=complex)
    powers = [Xk]
    for _ in range(n_exp):
        Xk = X.matrix @ Xk
        powers.append(Xk)
    for m, c in enumerate(coefs):
        acc += c * powers[n_exp - m]
    return acc


def qfi_power_series(
    n_exp: int, T: float, psi_osc: StateVector, sigma_z_eigenvalue: int, g: float
) -> float:
    """QFI of the power-coupling family on one qubit branch.

    The generator restricted to a definite-sigma_z branch is the exact
    polynomial ``sum_m (-2 g s)^m T^(m+1)/(m+1)! d^m(X^n)/dX^m`` (it
    terminates at m = n because the derivatives run out), so the QFI is four
    times its variance on the supplied oscillator state, cross-covariances
    between different powers of X included.  Pass the evolved oscillator
    state; for X-symmetric inputs (vacuum, squeezed) the initial state gives
    the same value.
    """
    if sigma_z_eigenvalue not in (-1, 1):
        raise QfikitError("sigma_z eigenvalue must be +1 or -1")
    if n_exp < 1:
        raise QfikitError("exponent must be >= 1")
    dim = psi_osc.layout.total_dim
    # the polynomial is only trustworthy away from the ladder edge
    guard = min(dim, 2 * n_exp + 5)
    edge_mass = float(np.sum(np.abs(psi_osc.amplitudes[dim - guard :]) ** 2))
    if edge_mass > 1e-12:
        raise TruncationLeakError(
            f"oscillator state carries {edge_mass:.3e} mass within {guard} levels "
            f"of the truncation edge; X^{n_exp} moments are unreliable"
        )
    h_eff = Operator(psi_osc.layout, _power_polynomial(n_exp, T, g, sigma_z_eigenvalue, dim))
    return 4.0 * variance(psi_osc, h_eff)


def power_reference_printed(
    n_exp: int, T: float, psi_osc: StateVector, sigma_z_eigenvalue: int, g: float
) -> float:
    """Diagonal-only comparator for the power family: ``sum_m c_m^2 Var(X^(n-m))``.

    This is the reference expression as usually quoted, which drops the
    cross-covariances between distinct powers of X and the overall factor 4;
    :func:`qfi_power_series` is the quantity this package stands behind.
    Kept so reports can print both side by side.
    """
    dim = psi_osc.layout.total_dim
    X, _ = quadratures(dim)
    coefs = _power_coefficients(n_exp, T, g, sigma_z_eigenvalue)
    Xk = Operator(psi_osc.layout, np.eye(dim, dtype=complex))
    powers = [Xk]
    for _ in range(n_exp):
        powers.append(powers[-1] @ X)
    total = 0.0
    for m, c in enumerate(coefs[:-1]):  # m = n term is a constant, zero variance
        total += c * c * variance(psi_osc, powers[n_exp - m])
    return total


def _as_var_list(n: int, var_X) -> list[float]:
    if np.isscalar(var_X):
        vals = [float(var_X)] * n
    else:
        vals = [float(v) for v in var_X]
        if len(vals) != n:
            raise QfikitError(f"expected {n} per-site variances, got {len(vals)}")
    if any(v < 0 for v in vals):
        raise QfikitError("variances must be nonnegative")
    return vals


def _chain_log_terms(n: int, g: float, T: float, var_list: Sequence[float]) -> list[float]:
    if g <= 0 or T < 0:
        raise QfikitError("need g > 0 and T >= 0")
    if T == 0:
        return [-math.inf] * n
    out = []
    lg, lt = math.log(g), math.log(T)
    for j in range(1, n + 1):
        if var_list[j - 1] == 0.0:
            out.append(-math.inf)
            continue
        out.append(
            2 * j * math.log(2.0)
            + (2 * j - 2) * lg
            + 2 * j * lt
            - 2.0 * gammaln(j + 1)
            + math.log(var_list[j - 1])
        )
    return out


def qfi_chain_closed(n: int, g: float, T: float, var_X_list) -> float:
    """Site-by-site chain QFI sum ``sum_j 2^2j/(j!)^2 g^(2j-2) T^2j Var X_j``.

    Exact for product inputs (distinct sites are uncorrelated, so the
    generator's cross terms carry no covariance).  Uses plain compensated
    summation while safely representable, log-space beyond.
    """
    if n < 1:
        raise QfikitError("n must be >= 1")
    vals = _as_var_list(n, var_X_list)
    logs = _chain_log_terms(n, g, T, vals)
    peak = max(logs)
    if peak == -math.inf:
        return 0.0
    if peak < _LOG_DIRECT_LIMIT:
        # ratio recurrence keeps intermediates at term size even when
        # (4 g^2 T^2)^j alone would overflow
        terms = []
        base = 4.0 * T * T  # j = 1 term / vals[0]
        for j in range(1, n + 1):
            terms.append(base * vals[j - 1])
            base *= 4.0 * g * g * T * T / ((j + 1) * (j + 1))
        return math.fsum(terms)
    return float(math.exp(logsumexp(logs)))


def log_qfi_chain_closed(n: int, g: float, T: float, var_X_list) -> float:
    """Natural log of :func:`qfi_chain_closed`, safe at any gT."""
    if n < 1:
        raise QfikitError("n must be >= 1")
    logs = _chain_log_terms(n, g, T, _as_var_list(n, var_X_list))
    if max(logs) == -math.inf:
        return -math.inf
    return float(logsumexp(logs))


def log_chain_qfi_cap(g: float, T: float, var_X: float = 1.0) -> float:
    """Natural log of the n -> infinity ceiling of the chain sum.

    The full series sums to a modified Bessel function:
    ``(Var X / g^2) (I0(4 g T) - 1)``; every finite-n value sits below it.
    """
    x = 4.0 * g * T
    if x <= 0:
        return -math.inf
    base = math.log(var_X / (g * g)) if var_X > 0 else -math.inf
    # I0(x) - 1 with the exponential factored out of scipy's scaled Bessel
    log_i0 = x + math.log(float(i0e(x)))
    if log_i0 < 30:
        return base + math.log(math.expm1(log_i0))
    return base + log_i0


@dataclass(frozen=True)
class ChainBoundCheck:
    """Log-space values of the chain QFI and its two exponential lower bounds."""

    n: int
    log_lhs: float  # log of the finite-n chain QFI
    log_mid: float  # log of (Var X / g^2) e^(4gT) / (4n)
    log_rhs: float  # log of (Var X / g^2) e^(2gT)
    holds: tuple[bool, bool]  # (lhs >= mid, mid >= rhs)


def bound_site_count(a: float, g: float, T: float) -> int:
    """Site count ``ceil(a g T)`` the exponential bound is stated for; requires a > 3."""
    if a <= 3:
        raise QfikitError("the bound construction requires a > 3")
    return max(1, math.ceil(a * g * T))


def chain_bound_check(n: int, g: float, T: float, var_X: float = 1.0) -> ChainBoundCheck:
    """Evaluate both exponential inequalities at site count ``n``.

    All three quantities are returned as natural logs (the raw values
    overflow near gT ~ 350).  The inequalities are only claimed for
    ``n = ceil(a g T)`` with a > 3 and sufficiently large gT; outside that
    regime ``holds`` simply reports false.
    """
    if var_X <= 0:
        raise QfikitError("var_X must be positive for the bound comparison")
    log_lhs = log_qfi_chain_closed(n, g, T, var_X)
    base = math.log(var_X / (g * g))
    log_mid = base + 4.0 * g * T - math.log(4.0 * n)
    log_rhs = base + 2.0 * g * T
    return ChainBoundCheck(
        n=n,
        log_lhs=log_lhs,
        log_mid=log_mid,
        log_rhs=log_rhs,
        holds=(log_lhs >= log_mid, log_mid >= log_rhs),
    )


def chain_bound_onset(
    a: float, g: float, T_grid: Sequence[float], var_X: float = 1.0
) -> tuple[float | None, float | None]:
    """Smallest grid T from which each inequality holds through the grid end.

    Returns ``(onset_first, onset_second)``; ``None`` means the inequality
    never settles into holding on this grid.
    """
    Ts = [float(t) for t in T_grid]
    if any(t2 <= t1 for t1, t2 in zip(Ts, Ts[1:])):
        raise QfikitError("T_grid must be strictly increasing")
    onsets: list[float | None] = []
    for idx in (0, 1):
        onset = None
        for t in Ts:
            ok = chain_bound_check(bound_site_count(a, g, t), g, t, var_X).holds[idx]
            if ok and onset is None:
                onset = t
            elif not ok:
                onset = None
        onsets.append(onset)
    return onsets[0], onsets[1]


def chain_average_qfi(n: int, T: float, var_X: float = 1.0) -> float:
    """Per-site average of the chain QFI at unit coupling:
    ``(Var X / n) sum_j (2T)^2j / (j!)^2``."""
    if n < 1:
        raise QfikitError("n must be >= 1")
    if T < 0 or var_X < 0:
        raise QfikitError("T and var_X must be nonnegative")
    if T == 0 or var_X == 0:
        return 0.0
    peak = max(
        2 * j * math.log(2 * T) - 2 * gammaln(j + 1) for j in range(1, n + 1)
    )
    if peak < _LOG_DIRECT_LIMIT:
        terms = []
        base = 4.0 * T * T
        for j in range(1, n + 1):
            terms.append(base)
            base *= 4.0 * T * T / ((j + 1) * (j + 1))
        return math.fsum(terms) * var_X / n
    return float(math.exp(log_chain_average_qfi(n, T, var_X)))


def log_chain_average_qfi(n: int, T: float, var_X: float = 1.0) -> float:
    if n < 1:
        raise QfikitError("n must be >= 1")
    if T <= 0 or var_X <= 0:
        return -math.inf
    logs = [
        2 * j * math.log(2 * T) - 2.0 * gammaln(j + 1) for j in range(1, n + 1)
    ]
    return float(logsumexp(logs)) + math.log(var_X) - math.log(n)


def optimal_n(T: float, var_X: float = 1.0, n_max: int = 200) -> tuple[int, float]:
    """Site count maximizing the per-site average QFI.

    Returns ``(n_star, value)`` where ``value`` is the linear average QFI at
    the optimum (finite only while the average fits a float; the scan itself
    runs in log space).  Ties break toward smaller n; hitting
    ``n_max`` raises a boundary warning since the true optimum may lie beyond.
    """
    if n_max < 1:
        raise QfikitError("n_max must be >= 1")
    if T <= 0 or var_X <= 0:
        return 1, 0.0
    log_terms = np.array(
        [2 * j * math.log(2 * T) - 2.0 * gammaln(j + 1) for j in range(1, n_max + 1)]
    )
    running = np.logaddexp.accumulate(log_terms)
    scores = running + math.log(var_X) - np.log(np.arange(1, n_max + 1))
    n_star = int(np.argmax(scores)) + 1  # argmax takes the first of equals
    if n_star == n_max:
        warnings.warn(
            f"optimal n sits at the scan boundary n_max={n_max}; enlarge n_max",
            BoundaryWarning,
        )
    return n_star, chain_average_qfi(n_star, T, var_X)


# --- dispatchers tying families to the numerical QFI routes --------------------

def model_var_x(spec: ModelSpec) -> float:
    return initial_var_x(spec.initial)


def model_qfi_closed(spec: ModelSpec, T: float) -> float:
    """Closed-form (or exact-polynomial) QFI of the family at time ``T``."""
    var = model_var_x(spec)
    if spec.family == "classical-force":
        return 4.0 * T * T * var
    if spec.family == "ramsey":
        return qfi_ramsey_closed(spec.g, T, var)
    if spec.family == "nqubit-ramsey":
        return qfi_nqubit_closed(spec.g, T, spec.n, var)
    if spec.family == "chain":
        return qfi_chain_closed(spec.n, spec.g, T, var)
    if spec.family == "rotated-qubit":
        return qfi_rotated_qubit(spec.g, T)
    # power-g: evolve the oscillator branch and score the exact polynomial
    dim = spec.dim if spec.dim is not None else default_model_dim(spec, T)
    X, P = quadratures(dim)
    G = _matrix_power_op(X, spec.n)
    H_branch = spec.f * G + spec.g * P  # sigma_z = +1 branch of the probe
    psi = evolve(H_branch, _osc_state(spec.initial, dim), T)
    return qfi_power_series(spec.n, T, psi, 1, spec.g)


def model_qfi_closed_estimate(spec: ModelSpec, T: float) -> QfiEstimate:
    return QfiEstimate(
        value=model_qfi_closed(spec, T),
        method="closed-form",
        model_id=spec.family,
        T=T,
    )


def _resolved(spec: ModelSpec, T: float) -> ModelSpec:
    if spec.dim is not None or spec.family == "rotated-qubit":
        return spec
    return replace(spec, dim=default_model_dim(spec, T))


def model_qfi_generator(
    spec: ModelSpec, T: float, route: str = "series", interior: bool = False
) -> QfiEstimate:
    """QFI via an explicit generator: ``4 Var(h)`` on the evolved probe.

    ``route`` picks the construction: "series" (nested commutators),
    "integral" (Simpson quadrature), or "propagator" (finite difference of
    the full unitary).

    ``interior=True`` conjugates the generator with the standard edge-buffer
    projector before the variance.  Commutators of truncated quadratures pick
    up O(dim)-sized artifacts in the top Fock rows; on families that amplify
    quadratures (chain, high-power drives) those rows meet slowly decaying
    state tails, and the raw variance then needs dims several times larger
    than the state itself does.  The buffered evaluation keeps the stated
    per-site truncation budgets honest; leave it off where the probe is far
    from the edge and the raw variance is the cleaner statement.
    """
    spec = _resolved(spec, T)
    H, dH, psi0 = build_hamiltonian(spec, T_hint=T)
    if route == "series":
        result: GeneratorResult = generator_series(H, dH, T)
    elif route == "integral":
        result = generator_integral(H, dH, T)
    elif route == "propagator":
        result = generator_from_propagator(hamiltonian_fn(spec, T_hint=T), spec.f, T)
    else:
        raise ConfigError(f"unknown generator route {route!r}")
    psi_T = evolve(H, psi0, T)
    h_op = result.h_op
    if interior:
        proj = interior_projector(h_op.layout)
        h_op = proj @ h_op @ proj
    value = qfi_from_generator(psi_T, h_op)
    return QfiEstimate(
        value=value,
        method="generator-variance",
        model_id=spec.family,
        T=T,
        diagnostics={
            "route": route,
            "interior": interior,
            "terms_used": result.terms_used,
            "quadrature_points": result.quadrature_points,
            "anti_hermitian_residual": result.anti_hermitian_residual,
        },
    )


def model_qfi_fidelity(spec: ModelSpec, T: float, delta: float | None = None) -> QfiEstimate:
    """QFI via overlap curvature of the evolved-state family at the model's f."""
    spec = _resolved(spec, T)
    _, _, psi0 = build_hamiltonian(spec, T_hint=T)
    hint = None
    if delta is None:
        try:
            hint = model_qfi_closed(spec, T)
        except QfikitError:
            hint = None
    est = qfi_fidelity(
        hamiltonian_fn(spec, T_hint=T), psi0, spec.f, T, delta=delta, qfi_hint=hint
    )
    return replace(est, model_id=spec.family)


def chain_fock_qfi_sparse(
    n: int,
    g: float,
    T: float,
    dim: int,
    f: float = 0.0,
    delta: float | None = None,
    initial: str | tuple = "vacuum",
) -> QfiEstimate:
    """Krylov-propagated overlap-curvature QFI for the chain, no dense algebra.

    The dense routes diagonalize the full ``dim^n`` Hamiltonian, which caps
    the chain Fock oracle around n=3 with ~12 levels per site.  Quadrature
    operators are banded, so the Hamiltonian is sparse and
    ``expm_multiply`` reaches n=3 with 30+ levels per site in minutes; that
    covers the gT ~ 1 corner where the evolved sites hold a few quanta each.
    Same finite-difference contract as the dense overlap oracle.
    """
    from scipy.sparse import csr_matrix, identity as sp_identity, kron as sp_kron
    from scipy.sparse.linalg import expm_multiply

    if n < 1:
        raise QfikitError("n must be >= 1")
    if dim < 2:
        raise QfikitError("need at least 2 levels per site")
    ladder = np.sqrt(np.arange(1, dim, dtype=float))
    a = csr_matrix((ladder, (np.arange(dim - 1), np.arange(1, dim))), shape=(dim, dim))
    X1 = csr_matrix(a + a.conj().T)
    P1 = csr_matrix(1j * (a.conj().T - a))

    def site(op, j: int):
        left = sp_identity(dim**j, format="csr", dtype=complex)
        right = sp_identity(dim ** (n - 1 - j), format="csr", dtype=complex)
        return sp_kron(sp_kron(left, op, format="csr"), right, format="csr")

    coupling = None
    for j in range(n - 1):
        term = site(P1, j) @ site(X1, j + 1)
        coupling = term if coupling is None else coupling + term
    drive = site(X1, 0)
    osc = oscillator_state(initial, dim).amplitudes
    psi0 = osc
    for _ in range(n - 1):
        psi0 = np.kron(psi0, osc)

    def amps(f_value: float) -> np.ndarray:
        H = -f_value * drive if coupling is None else g * coupling - f_value * drive
        out = expm_multiply(-1j * T * H, psi0)
        return out / np.linalg.norm(out)

    if delta is None:
        var = initial_var_x(initial)
        delta = default_fidelity_step(qfi_chain_closed(n, g, T, [var] * n))
    value, diag = fidelity_curvature(amps, f, delta)
    diag["dim"] = dim
    return QfiEstimate(
        value=value, method="fidelity-fd", model_id="chain", T=T, diagnostics=diag
    )


def relative_deviation(value: float, reference: float, floor: float = 1.0) -> float:
    """``|value - reference| / max(floor, |reference|)``: relative where the
    reference is O(1) or larger, absolute near zero."""
    return abs(value - reference) / max(floor, abs(reference))
