"""Exact Gaussian engine for the quadrature chain.

The chain Hamiltonian is quadratic, so Gaussian states stay Gaussian and the
first/second moments carry everything.  Two structural facts make the engine
exact rather than approximate:

  * the drift matrix is nilpotent (influence moves strictly one way down the
    open chain), so every matrix exponential is a finite polynomial;
  * the estimated parameter enters linearly, so it displaces the mean and
    never touches the covariance.

For a pure Gaussian family with parameter-independent covariance the QFI is
the Mahalanobis speed of the mean, ``F = (dm/df)^T cov^-1 (dm/df)`` in this
package's normalization (vacuum covariance = identity, fixed by matching the
single-site result ``4 T^2 Var X``).  Evaluated in the initial frame it needs
no inverse of an exponentially conditioned matrix, which is why chains of
hundreds of sites at large gT cost microseconds and stay at rounding error.

Conventions: phase-space ordering ``(X1, P1, X2, P2, ...)``; commutators
``[X, P] = 2i``; drift ``dX_k/dt = 2g X_(k+1)``, ``dP_k/dt = -2g P_(k-1)``,
and the drive enters on the first momentum row at rate ``2f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import QfikitError, UnsupportedStateError
from .metrology import QfiEstimate

__all__ = [
    "GaussianState",
    "LinearDynamics",
    "symplectic_form",
    "symplectic_eigenvalues",
    "vacuum_gaussian",
    "squeezed_gaussian",
    "chain_linear_dynamics",
    "drift_powers",
    "evolve_moments",
    "mean_sensitivity",
    "gaussian_qfi",
]

COV_SYMMETRY_ATOL = 1e-12
UNCERTAINTY_ATOL = 1e-10
PURITY_ATOL = 1e-8


def symplectic_form(n: int) -> np.ndarray:
    """Block-diagonal ``[[0, 1], [-1, 0]]`` per mode (the 2i sits in the
    commutation convention, not here)."""
    omega = np.zeros((2 * n, 2 * n))
    for k in range(n):
        omega[2 * k, 2 * k + 1] = 1.0
        omega[2 * k + 1, 2 * k] = -1.0
    return omega


@dataclass(frozen=True)
class GaussianState:
    """First and second moments; vacuum is ``mean = 0, cov = identity``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or mean.size % 2:
            raise QfikitError("mean must be a flat vector of even length")
        if cov.shape != (mean.size, mean.size):
            raise QfikitError("covariance shape does not match the mean")
        if np.max(np.abs(cov - cov.T), initial=0.0) > COV_SYMMETRY_ATOL:
            raise QfikitError("covariance must be symmetric")
        omega = symplectic_form(mean.size // 2)
        eigmin = float(np.min(np.linalg.eigvalsh(cov + 1j * omega)))
        if eigmin < -UNCERTAINTY_ATOL:
            raise QfikitError(
                f"covariance violates the uncertainty relation (eigmin {eigmin:.3e})"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Moduli of the paired eigenvalues of ``i Omega cov``; all 1 iff pure."""
    n = cov.shape[0] // 2
    vals = np.linalg.eigvals(1j * symplectic_form(n) @ cov)
    nus = np.sort(np.abs(vals))
    return nus[::2]


def vacuum_gaussian(n: int) -> GaussianState:
    return GaussianState(np.zeros(2 * n), np.eye(2 * n))


def squeezed_gaussian(n: int, r: float) -> GaussianState:
    """Every site squeezed identically: ``Var X = exp(-2r)``, ``Var P = exp(+2r)``."""
    diag = np.empty(2 * n)
    diag[0::2] = math.exp(-2.0 * r)
    diag[1::2] = math.exp(+2.0 * r)
    return GaussianState(np.zeros(2 * n), np.diag(diag))


@dataclass(frozen=True)
class LinearDynamics:
    """Drift and drive of ``d(mean)/dt = M mean + f v``; ``v`` is the
    coefficient of the estimated parameter."""

    M: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or v.shape != (M.shape[0],):
            raise QfikitError("drift/drive dimensions inconsistent")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "v", v)


def chain_linear_dynamics(n: int, g: float, f_symbolic=None) -> LinearDynamics:
    """Moment dynamics of the open quadrature chain.

    ``f_symbolic`` is accepted for signature compatibility and ignored: the
    parameter enters the returned object only through the drive vector ``v``
    (its coefficient), never as a number.
    """
    if n < 1:
        raise QfikitError("n must be >= 1")
    M = np.zeros((2 * n, 2 * n))
    for k in range(n - 1):
        M[2 * k, 2 * (k + 1)] = 2.0 * g  # dX_k/dt = 2g X_(k+1)
    for k in range(1, n):
        M[2 * k + 1, 2 * (k - 1) + 1] = -2.0 * g  # dP_k/dt = -2g P_(k-1)
    v = np.zeros(2 * n)
    v[1] = 2.0
    return LinearDynamics(M, v)


def drift_powers(M: np.ndarray) -> list[np.ndarray]:
    """``[I, M, M^2, ...]`` up to (excluding) the first vanishing power.

    The open chain is nilpotent with index <= its mode count; a drift that
    fails to vanish by ``2n`` powers is not chain-like and is rejected, since
    the exact-polynomial evolution below would silently truncate it.
    """
    d = M.shape[0]
    powers = [np.eye(d)]
    current = np.eye(d)
    for _ in range(d):
        current = current @ M
        if not np.any(current):
            return powers
        powers.append(current)
    raise QfikitError("drift matrix is not nilpotent; this engine assumes an open chain")


def _poly_exp(powers: list[np.ndarray], t: float) -> np.ndarray:
    acc = np.zeros_like(powers[0])
    c = 1.0
    for k, Mk in enumerate(powers):
        acc += c * Mk
        c *= t / (k + 1)
    return acc


def _poly_phi(powers: list[np.ndarray], t: float) -> np.ndarray:
    # integral of exp(M s) over [0, t]: sum_k M^k t^(k+1)/(k+1)!
    acc = np.zeros_like(powers[0])
    c = t
    for k, Mk in enumerate(powers):
        acc += c * Mk
        c *= t / (k + 2)
    return acc


def evolve_moments(
    state: GaussianState, dyn: LinearDynamics, f: float, T: float
) -> GaussianState:
    """Exact moment transport: ``mean -> e^(MT) mean + f Phi(T) v``,
    ``cov -> e^(MT) cov e^(M^T T)``."""
    if dyn.M.shape[0] != state.mean.size:
        raise QfikitError("state and dynamics dimensions differ")
    powers = drift_powers(dyn.M)
    E = _poly_exp(powers, T)
    mean = E @ state.mean + f * (_poly_phi(powers, T) @ dyn.v)
    cov = E @ state.cov @ E.T
    cov = 0.5 * (cov + cov.T)
    return GaussianState(mean, cov)


def mean_sensitivity(dyn: LinearDynamics, T: float) -> np.ndarray:
    """``d(mean(T))/df = Phi(T) v``, independent of the state."""
    return _poly_phi(drift_powers(dyn.M), T) @ dyn.v


def gaussian_qfi(dyn: LinearDynamics, state0: GaussianState, T: float) -> QfiEstimate:
    """QFI of the evolved Gaussian family at time ``T``.

    Works in the initial frame: with ``u = Phi~(T) v`` (the alternating-sign
    polynomial, i.e. ``e^(-MT) Phi(T) v``), the quadratic form
    ``u^T cov0^-1 u`` equals ``(d mean)^T cov(T)^-1 (d mean)`` exactly, but
    only ever inverts the initial covariance.  Valid for pure states only.
    """
    if dyn.M.shape[0] != state0.mean.size:
        raise QfikitError("state and dynamics dimensions differ")
    nus = symplectic_eigenvalues(state0.cov)
    worst = float(np.max(np.abs(nus - 1.0)))
    if worst > PURITY_ATOL:
        raise UnsupportedStateError(
            f"initial state is not pure (symplectic eigenvalue deviation {worst:.3e})"
        )
    powers = drift_powers(-dyn.M)
    u = _poly_phi(powers, T) @ dyn.v
    try:
        factor = cho_factor(state0.cov)
    except LinAlgError as exc:
        raise QfikitError(f"initial covariance is not positive definite: {exc}") from exc
    value = float(u @ cho_solve(factor, u))
    return QfiEstimate(
        value=value,
        method="gaussian",
        diagnostics={"nilpotency_index": len(powers), "T": T},
    )
