"""Truncated-Fock-space operator algebra for composite qubit/oscillator systems.

Conventions used throughout the package:

* quadratures are ``X = a^dag + a`` and ``P = i(a^dag - a)``, so ``[X, P] = 2i``
  and the vacuum has ``Var(X) = Var(P) = 1``;
* the qubit ground level sits at basis index 0 and carries ``sigma_z = -1``
  (``sigma_z = |e><e| - |g><g|``);
* composite layouts list qubits first, oscillators after, and all embeddings
  respect that ordering.

Truncation to ``dim`` Fock levels breaks canonical commutators at the top of
the ladder, so operator-identity checks go through :func:`interior_projector`,
which drops a buffer of high-lying levels (one third of each ladder by
default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import (
    DimensionError,
    LayoutMismatchError,
    NonHermitianError,
    QfikitError,
    TruncationLeakError,
)

__all__ = [
    "QUBIT",
    "OSCILLATOR",
    "Subsystem",
    "SpaceLayout",
    "Operator",
    "StateVector",
    "make_layout",
    "identity",
    "make_annihilation",
    "quadratures",
    "number_operator",
    "sigma_x",
    "sigma_y",
    "sigma_z",
    "embed",
    "commutator",
    "hermitize",
    "basis_state",
    "product_state",
    "vacuum_state",
    "fock_state",
    "coherent_state",
    "squeezed_vacuum_state",
    "qubit_state",
    "oscillator_state",
    "oscillator_var_x",
    "oscillator_spec_reach",
    "expectation",
    "variance",
    "overlap",
    "default_fock_dim",
    "default_buffer",
    "interior_mask",
    "interior_projector",
    "boundary_mass",
]

QUBIT = "qubit"
OSCILLATOR = "oscillator"

HERMITIAN_ATOL = 1e-12
NORM_ATOL = 1e-10
COHERENT_TAIL_LIMIT = 1e-10


@dataclass(frozen=True)
class Subsystem:
    """One tensor factor: a two-level qubit or a truncated oscillator ladder."""

    kind: str
    dim: int

    def __post_init__(self) -> None:
        if self.kind not in (QUBIT, OSCILLATOR):
            raise DimensionError(f"unknown subsystem kind {self.kind!r}")
        if self.kind == QUBIT and self.dim != 2:
            raise DimensionError("qubit subsystems must have dim = 2")
        if self.kind == OSCILLATOR and self.dim < 2:
            raise DimensionError("oscillator truncation needs dim >= 2")


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered tuple of subsystems defining one composite Hilbert space."""

    subsystems: tuple[Subsystem, ...]

    def __post_init__(self) -> None:
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        if not subs:
            raise DimensionError("layout needs at least one subsystem")
        seen_osc = False
        for sub in subs:
            if sub.kind == OSCILLATOR:
                seen_osc = True
            elif seen_osc:
                raise DimensionError("canonical ordering: qubits precede oscillators")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(sub.dim for sub in self.subsystems)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    @property
    def n_qubits(self) -> int:
        return sum(1 for sub in self.subsystems if sub.kind == QUBIT)

    @property
    def n_oscillators(self) -> int:
        return sum(1 for sub in self.subsystems if sub.kind == OSCILLATOR)


def make_layout(n_qubits: int = 0, osc_dims: Sequence[int] = ()) -> SpaceLayout:
    """Build the canonical layout with ``n_qubits`` qubits then the given ladders."""
    subs = tuple(Subsystem(QUBIT, 2) for _ in range(n_qubits))
    subs += tuple(Subsystem(OSCILLATOR, int(d)) for d in osc_dims)
    return SpaceLayout(subs)


def _single(kind: str, dim: int) -> SpaceLayout:
    return SpaceLayout((Subsystem(kind, dim),))


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense matrix acting on a :class:`SpaceLayout`. Immutable after construction."""

    layout: SpaceLayout
    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.array(self.matrix, dtype=np.complex128, copy=True)
        n = self.layout.total_dim
        if mat.shape != (n, n):
            raise DimensionError(f"matrix shape {mat.shape} does not match layout dim {n}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def dag(self) -> "Operator":
        return Operator(self.layout, self.matrix.conj().T)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def is_hermitian(self, atol: float = HERMITIAN_ATOL) -> bool:
        return self.hermiticity_defect() <= atol

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self.matrix))

    def _check_layout(self, other: "Operator") -> None:
        if self.layout != other.layout:
            raise LayoutMismatchError("operators live on different layouts")

    def __add__(self, other: "Operator") -> "Operator":
        self._check_layout(other)
        return Operator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_layout(other)
        return Operator(self.layout, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.layout, self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.layout, -self.matrix)

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_layout(other)
        return Operator(self.layout, self.matrix @ other.matrix)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state on a :class:`SpaceLayout`."""

    layout: SpaceLayout
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amp = np.array(self.amplitudes, dtype=np.complex128, copy=True).reshape(-1)
        if amp.size != self.layout.total_dim:
            raise DimensionError(
                f"amplitude length {amp.size} does not match layout dim {self.layout.total_dim}"
            )
        nrm = np.linalg.norm(amp)
        if abs(nrm - 1.0) > NORM_ATOL:
            raise QfikitError(f"state norm {nrm!r} deviates from 1 beyond {NORM_ATOL}")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def identity(layout: SpaceLayout) -> Operator:
    return Operator(layout, np.eye(layout.total_dim))


def make_annihilation(dim: int) -> Operator:
    """Lowering operator on a ``dim``-level ladder: ``a|k> = sqrt(k)|k-1>``."""
    if dim < 2:
        raise DimensionError("annihilation operator needs dim >= 2")
    mat = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    return Operator(_single(OSCILLATOR, dim), mat)


def quadratures(dim: int) -> tuple[Operator, Operator]:
    """Return ``(X, P)`` with ``X = a^dag + a`` and ``P = i(a^dag - a)``."""
    a = make_annihilation(dim)
    adag = a.dag()
    x = adag + a
    p = 1j * (adag - a)
    return x, p


def number_operator(dim: int) -> Operator:
    if dim < 2:
        raise DimensionError("number operator needs dim >= 2")
    return Operator(_single(OSCILLATOR, dim), np.diag(np.arange(dim, dtype=float)))


_QUBIT_LAYOUT = SpaceLayout((Subsystem(QUBIT, 2),))

# Ground level at index 0 carries sigma_z = -1; the triple below still obeys
# sigma_x sigma_y = i sigma_z.
_SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
_SY = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=np.complex128)
_SZ = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=np.complex128)


def sigma_x() -> Operator:
    return Operator(_QUBIT_LAYOUT, _SX)


def sigma_y() -> Operator:
    return Operator(_QUBIT_LAYOUT, _SY)


def sigma_z() -> Operator:
    return Operator(_QUBIT_LAYOUT, _SZ)


def embed(op: Operator, site: int, layout: SpaceLayout) -> Operator:
    """Lift a single-subsystem operator to ``layout``, acting on ``site``.

    The operator keeps its matrix on the named tensor slot and acts as the
    identity elsewhere; ``site`` indexes ``layout.subsystems``.
    """
    subs = layout.subsystems
    if not 0 <= site < len(subs):
        raise LayoutMismatchError(f"site {site} out of range for {len(subs)} subsystems")
    if len(op.layout.subsystems) != 1:
        raise LayoutMismatchError("embed expects a single-subsystem operator")
    target = subs[site]
    source = op.layout.subsystems[0]
    if source.kind != target.kind or source.dim != target.dim:
        raise LayoutMismatchError(
            f"operator on {source.kind}({source.dim}) cannot sit on {target.kind}({target.dim})"
        )
    mat = np.array([[1.0 + 0.0j]])
    for k, sub in enumerate(subs):
        mat = np.kron(mat, op.matrix if k == site else np.eye(sub.dim))
    return Operator(layout, mat)


def commutator(a: Operator, b: Operator) -> Operator:
    if a.layout != b.layout:
        raise LayoutMismatchError("commutator needs operators on one layout")
    return Operator(a.layout, a.matrix @ b.matrix - b.matrix @ a.matrix)


def hermitize(op: Operator) -> Operator:
    return Operator(op.layout, 0.5 * (op.matrix + op.matrix.conj().T))


def basis_state(layout: SpaceLayout, indices: Sequence[int]) -> StateVector:
    """Product basis ket ``|i_0, i_1, ...>`` with one index per subsystem."""
    dims = layout.dims
    if len(indices) != len(dims):
        raise LayoutMismatchError("need one basis index per subsystem")
    flat = 0
    for idx, d in zip(indices, dims):
        if not 0 <= idx < d:
            raise DimensionError(f"basis index {idx} out of range for dim {d}")
        flat = flat * d + idx
    amp = np.zeros(layout.total_dim, dtype=np.complex128)
    amp[flat] = 1.0
    return StateVector(layout, amp)


def product_state(layout: SpaceLayout, factors: Sequence) -> StateVector:
    """Tensor product of per-subsystem factors (amplitude arrays or states)."""
    dims = layout.dims
    if len(factors) != len(dims):
        raise LayoutMismatchError("need one factor per subsystem")
    amp = np.array([1.0 + 0.0j])
    for vec, d in zip(factors, dims):
        if isinstance(vec, StateVector):
            vec = vec.amplitudes
        v = np.asarray(vec, dtype=np.complex128).reshape(-1)
        if v.size != d:
            raise DimensionError(f"factor length {v.size} does not match dim {d}")
        amp = np.kron(amp, v)
    amp = amp / np.linalg.norm(amp)
    return StateVector(layout, amp)


def vacuum_state(dim: int) -> StateVector:
    return fock_state(0, dim)


def fock_state(k: int, dim: int) -> StateVector:
    if not 0 <= k < dim:
        raise DimensionError(f"Fock index {k} out of range for dim {dim}")
    amp = np.zeros(dim, dtype=np.complex128)
    amp[k] = 1.0
    return StateVector(_single(OSCILLATOR, dim), amp)


def coherent_state(alpha: complex, dim: int) -> StateVector:
    """Coherent state ``|alpha>`` truncated to ``dim`` levels.

    Amplitudes are assembled in log space and renormalized.  The Poisson
    weight the truncation discards is computed exactly; if it exceeds
    ``1e-10`` the truncation is too small for this ``alpha`` and a
    :class:`TruncationLeakError` is raised instead of silently degrading.
    """
    if dim < 2:
        raise DimensionError("coherent state needs dim >= 2")
    alpha = complex(alpha)
    if alpha == 0:
        return vacuum_state(dim)
    nbar = abs(alpha) ** 2
    tail = float(gammainc(dim, nbar))  # Poisson mass at k >= dim
    if tail > COHERENT_TAIL_LIMIT:
        raise TruncationLeakError(
            f"dim={dim} discards Poisson tail {tail:.3e} for |alpha|^2={nbar:.3g}"
        )
    k = np.arange(dim)
    log_mag = k * math.log(abs(alpha)) - 0.5 * gammaln(k + 1.0)
    phase = k * np.angle(alpha)
    amp = np.exp(log_mag - log_mag.max()) * np.exp(1j * phase)
    amp = amp / np.linalg.norm(amp)
    return StateVector(_single(OSCILLATOR, dim), amp)


def squeezed_vacuum_state(r: float, dim: int) -> StateVector:
    """Squeezed vacuum with ``Var(X) = exp(-2r)`` in this package's convention."""
    if dim < 2:
        raise DimensionError("squeezed state needs dim >= 2")
    r = float(r)
    if r == 0.0:
        return vacuum_state(dim)
    th = math.tanh(abs(r))
    sign = -1.0 if r > 0 else 1.0
    m = np.arange((dim + 1) // 2)
    log_mag = (
        m * math.log(th)
        + 0.5 * gammaln(2 * m + 1.0)
        - m * math.log(2.0)
        - gammaln(m + 1.0)
        - 0.5 * math.log(math.cosh(r))
    )
    amp = np.zeros(dim, dtype=np.complex128)
    amp[2 * m] = np.power(sign, m) * np.exp(log_mag)
    captured = float(np.sum(np.abs(amp) ** 2))
    if 1.0 - captured > COHERENT_TAIL_LIMIT:
        raise TruncationLeakError(
            f"dim={dim} discards squeezed-vacuum tail {1.0 - captured:.3e} for r={r}"
        )
    amp = amp / np.linalg.norm(amp)
    return StateVector(_single(OSCILLATOR, dim), amp)


def qubit_state(c_ground: complex, c_excited: complex) -> StateVector:
    amp = np.array([c_ground, c_excited], dtype=np.complex128)
    amp = amp / np.linalg.norm(amp)
    return StateVector(_QUBIT_LAYOUT, amp)


def oscillator_state(spec, dim: int) -> StateVector:
    """Resolve an oscillator-state spec to amplitudes on ``dim`` levels.

    Accepted forms: ``"vacuum"``, ``("coherent", alpha)``, ``("squeezed", r)``,
    or a bare number (treated as a coherent amplitude; 0 means vacuum).
    """
    if isinstance(spec, (int, float, complex)) and not isinstance(spec, bool):
        return coherent_state(complex(spec), dim) if spec != 0 else vacuum_state(dim)
    if spec == "vacuum":
        return vacuum_state(dim)
    if isinstance(spec, tuple) and len(spec) == 2:
        kind, value = spec
        if kind == "coherent":
            return coherent_state(complex(value), dim)
        if kind == "squeezed":
            return squeezed_vacuum_state(float(value), dim)
    raise QfikitError(f"unsupported oscillator state spec {spec!r}")


def oscillator_var_x(spec) -> float:
    """Var X of the state :func:`oscillator_state` would build (no dim needed)."""
    if isinstance(spec, (int, float, complex)) and not isinstance(spec, bool):
        return 1.0
    if spec == "vacuum":
        return 1.0
    if isinstance(spec, tuple) and len(spec) == 2:
        kind, value = spec
        if kind == "coherent":
            return 1.0
        if kind == "squeezed":
            return math.exp(-2.0 * float(value))
    raise QfikitError(f"unsupported oscillator state spec {spec!r}")


def oscillator_spec_reach(spec) -> float:
    """Coherent-amplitude scale the truncation rule should budget for."""
    if isinstance(spec, (int, float, complex)) and not isinstance(spec, bool):
        return abs(complex(spec))
    if isinstance(spec, tuple) and len(spec) == 2 and spec[0] == "coherent":
        return abs(complex(spec[1]))
    if isinstance(spec, tuple) and len(spec) == 2 and spec[0] == "squeezed":
        # squeezing stretches one quadrature by e^|r|
        return math.exp(abs(float(spec[1]))) - 1.0
    return 0.0


def expectation(state: StateVector, op: Operator) -> complex:
    if state.layout != op.layout:
        raise LayoutMismatchError("state and operator layouts differ")
    return complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))


def variance(state: StateVector, op: Operator, atol: float = 1e-10) -> float:
    """``<op^2> - <op>^2`` for Hermitian ``op``, clamped at zero within rounding."""
    if state.layout != op.layout:
        raise LayoutMismatchError("state and operator layouts differ")
    defect = op.hermiticity_defect()
    if defect > atol:
        raise NonHermitianError(f"variance needs a Hermitian operator (defect {defect:.3e})")
    w = op.matrix @ state.amplitudes
    mean = float(np.real(np.vdot(state.amplitudes, w)))
    mean_sq = float(np.real(np.vdot(w, w)))
    var = mean_sq - mean * mean
    rounding = 1e-12 * (1.0 + abs(mean_sq))
    if var < -rounding:
        raise QfikitError(f"variance {var!r} negative beyond rounding")
    return max(var, 0.0)


def overlap(a: StateVector, b: StateVector) -> complex:
    if a.layout != b.layout:
        raise LayoutMismatchError("overlap needs states on one layout")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def default_fock_dim(alpha_mag: float) -> int:
    """Truncation rule: mean occupation plus ten standard deviations plus margin."""
    nbar = float(alpha_mag) ** 2
    return int(math.ceil(nbar + 10.0 * math.sqrt(nbar + 1.0) + 20.0))


def default_buffer(dim: int) -> int:
    """Levels excluded at the top of each ladder for operator-identity checks."""
    return math.ceil(dim / 3)


def interior_mask(layout: SpaceLayout, buffer: int | None = None) -> np.ndarray:
    """Boolean mask over basis states with every oscillator below its buffer zone."""
    mask = np.array([True])
    for sub in layout.subsystems:
        if sub.kind == QUBIT:
            local = np.ones(2, dtype=bool)
        else:
            buf = default_buffer(sub.dim) if buffer is None else int(buffer)
            if not 0 <= buf < sub.dim:
                raise DimensionError(f"buffer {buf} invalid for dim {sub.dim}")
            local = np.arange(sub.dim) < sub.dim - buf
        mask = np.kron(mask, local).astype(bool)
    return mask


def interior_projector(layout: SpaceLayout, buffer: int | None = None) -> Operator:
    return Operator(layout, np.diag(interior_mask(layout, buffer).astype(float)))


def boundary_mass(state: StateVector, top_levels: int = 5) -> float:
    """Total probability with any oscillator within ``top_levels`` of its edge."""
    mask = np.array([True])
    for sub in state.layout.subsystems:
        if sub.kind == QUBIT:
            local = np.ones(2, dtype=bool)
        else:
            t = min(top_levels, sub.dim - 1)
            local = np.arange(sub.dim) < sub.dim - t
        mask = np.kron(mask, local).astype(bool)
    return float(np.sum(np.abs(state.amplitudes[~mask]) ** 2))
