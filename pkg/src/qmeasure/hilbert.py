"""Grid-discretized Hilbert spaces, canonical operators and states.

Conventions (hbar = 1):

* A position grid has ``n`` points ``x_k = -L/2 + k*dx`` with ``dx = L/n``.
  The conjugate momentum grid has spacing ``dp = 2*pi/L``.
* Amplitude vectors store function values ``phi(x_k)``.  Inner products on a
  grid carry the weight ``dx``; finite-dimensional factors (qubits, ancillas)
  carry weight 1.  Because the weight is a scalar, an operator has the same
  matrix in the amplitude representation as in an orthonormal basis.
* Density operators store kernel values ``rho(x_j, x_k)``, so that
  ``tr[rho] = dx * sum_k rho_kk`` on grids.

Operators are plain complex ``numpy`` arrays.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-8


@dataclass(frozen=True)
class GridSpec:
    """Uniform position grid of ``n`` points over an interval of length ``length``."""

    n: int
    length: float

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def dp(self) -> float:
        return 2 * np.pi / self.length

    @property
    def x(self) -> np.ndarray:
        return -self.length / 2 + self.dx * np.arange(self.n)

    @property
    def p(self) -> np.ndarray:
        """Momentum grid in increasing order, centered at 0."""
        return self.dp * (np.arange(self.n) - self.n // 2)

    @property
    def p_fft(self) -> np.ndarray:
        """Momentum values in the ordering used by ``numpy.fft``."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @property
    def p_max(self) -> float:
        return np.pi / self.dx

    def to_dict(self) -> dict:
        return {"n": self.n, "length": self.length}


def make_grid(n: int, length: float) -> GridSpec:
    """Validated grid constructor; ``n`` must be a power of two in [16, 4096]."""
    if isinstance(n, bool) or int(n) != n or n < 16 or n > 4096 or (int(n) & (int(n) - 1)):
        raise ValueError(f"grid size must be a power of two in [16, 4096], got {n}")
    if not length > 0:
        raise ValueError(f"grid length must be positive, got {length}")
    return GridSpec(int(n), float(length))


@dataclass(frozen=True, eq=False)
class StateVector:
    """A vector state: amplitudes plus the inner-product weight of the space.

    ``space`` is one of ``"grid"``, ``"qubit"``, ``"hybrid"`` (grid tensor
    qubit, index ``2*k + s``) or ``"finite"``.
    """

    amps: np.ndarray
    weight: float = 1.0
    space: str = "finite"
    grid: GridSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "amps", np.asarray(self.amps, dtype=complex))

    @property
    def dim(self) -> int:
        return self.amps.shape[0]

    def norm(self) -> float:
        return float(np.sqrt(self.weight * np.vdot(self.amps, self.amps).real))

    def normalized(self) -> "StateVector":
        return StateVector(self.amps / self.norm(), self.weight, self.space, self.grid)

    def with_amps(self, amps) -> "StateVector":
        return StateVector(amps, self.weight, self.space, self.grid)

    def evaluate(self, points) -> np.ndarray:
        """Band-limited (trigonometric) interpolation of a grid state.

        Points outside the grid interval evaluate to zero.
        """
        if self.grid is None or self.space != "grid":
            raise ValueError("evaluate() needs a grid state")
        return trig_interpolate(self.grid, self.amps, points)

    def to_json(self) -> dict:
        out = {
            "space": self.space,
            "weight": self.weight,
            "amps": np.column_stack([self.amps.real, self.amps.imag]).tolist(),
        }
        if self.grid is not None:
            out["grid"] = self.grid.to_dict()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "StateVector":
        amps = np.asarray(data["amps"], dtype=float)
        grid = GridSpec(**data["grid"]) if "grid" in data else None
        return cls(amps[:, 0] + 1j * amps[:, 1], float(data["weight"]), data["space"], grid)


def wavefunction(grid: GridSpec, amps) -> StateVector:
    amps = np.asarray(amps, dtype=complex)
    if amps.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} amplitudes, got shape {amps.shape}")
    return StateVector(amps, grid.dx, "grid", grid)


def hybrid_state(grid: GridSpec, amps) -> StateVector:
    """State on grid tensor qubit; ``amps`` of shape ``(n, 2)`` or ``(2n,)``."""
    amps = np.asarray(amps, dtype=complex).reshape(-1)
    if amps.shape != (2 * grid.n,):
        raise ValueError(f"expected {2 * grid.n} amplitudes, got {amps.shape}")
    return StateVector(amps, grid.dx, "hybrid", grid)


def qubit_state(amps) -> StateVector:
    amps = np.asarray(amps, dtype=complex)
    if amps.shape != (2,):
        raise ValueError("a qubit state has two amplitudes")
    return StateVector(amps, 1.0, "qubit", None)


def finite_state(amps) -> StateVector:
    return StateVector(np.asarray(amps, dtype=complex), 1.0, "finite", None)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive, unit-trace operator; ``tr = weight * trace(matrix)``."""

    matrix: np.ndarray
    weight: float = 1.0
    space: str = "finite"
    grid: GridSpec | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=complex))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(self.weight * np.trace(self.matrix).real)

    def orthonormal(self) -> np.ndarray:
        """Matrix in an orthonormal basis (plain trace equals 1)."""
        return self.weight * self.matrix

    def check(self, tol: float = 1e-10) -> None:
        m = self.orthonormal()
        if np.abs(m - m.conj().T).max() > tol:
            raise ValueError("density operator is not hermitian")
        ev = np.linalg.eigvalsh((m + m.conj().T) / 2)
        if ev.min() < -tol:
            raise ValueError(f"density operator has negative eigenvalue {ev.min():.3e}")
        if abs(ev.sum() - 1) > tol:
            raise ValueError(f"density operator trace {ev.sum():.12f} != 1")


def density(state: StateVector) -> DensityOperator:
    return DensityOperator(np.outer(state.amps, state.amps.conj()), state.weight, state.space, state.grid)


def mixture(states, probs) -> DensityOperator:
    probs = np.asarray(probs, dtype=float)
    first = states[0]
    mat = sum(p * np.outer(s.amps, s.amps.conj()) for s, p in zip(states, probs))
    return DensityOperator(mat, first.weight, first.space, first.grid)


def from_orthonormal(matrix, like: DensityOperator | StateVector) -> DensityOperator:
    """Inverse of :meth:`DensityOperator.orthonormal` using the weight of ``like``."""
    return DensityOperator(np.asarray(matrix) / like.weight, like.weight, like.space, like.grid)


# --- checks -----------------------------------------------------------------

def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.abs(op - op.conj().T).max() < tol)


def is_unitary(op: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    return bool(np.abs(op.conj().T @ op - np.eye(op.shape[0])).max() < tol)


# --- Fourier machinery ------------------------------------------------------

def to_momentum(amps: np.ndarray, axis: int = 0) -> np.ndarray:
    """Unitary DFT in numpy ordering."""
    return np.fft.fft(amps, axis=axis, norm="ortho")


def from_momentum(coeffs: np.ndarray, axis: int = 0) -> np.ndarray:
    return np.fft.ifft(coeffs, axis=axis, norm="ortho")


def apply_momentum(grid: GridSpec, amps: np.ndarray, power: int = 1, axis: int = 0) -> np.ndarray:
    shape = [1] * np.ndim(amps)
    shape[axis] = grid.n
    mult = (grid.p_fft ** power).reshape(shape)
    return from_momentum(mult * to_momentum(amps, axis), axis)


def translate(grid: GridSpec, amps: np.ndarray, shift, axis: int = 0) -> np.ndarray:
    """Apply ``exp(-i*shift*P)``, i.e. ``phi(x) -> phi(x - shift)``.

    ``shift`` may be an array; the result then gains a trailing axis.  The
    translation is circular on the grid, so callers are responsible for
    keeping the translated mass away from the edges.
    """
    coeffs = to_momentum(amps, axis)
    shift = np.asarray(shift, dtype=float)
    shape = [1] * np.ndim(amps)
    shape[axis] = grid.n
    p = grid.p_fft.reshape(shape)
    if shift.ndim == 0:
        return from_momentum(np.exp(-1j * shift * p) * coeffs, axis)
    phases = np.exp(-1j * np.multiply.outer(p, shift))
    return from_momentum(coeffs[..., None] * phases, axis)


def trig_interpolate(grid: GridSpec, amps: np.ndarray, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    coeffs = np.fft.fft(amps) / grid.n
    p = grid.p_fft.copy()
    # split the Nyquist term symmetrically so real data stay real
    nyq = grid.n // 2
    rel = points.reshape(-1) - grid.x[0]
    phases = np.exp(1j * np.outer(rel, p))
    vals = phases @ coeffs
    vals += coeffs[nyq] * (np.cos(p[nyq] * rel) - phases[:, nyq])
    inside = (points.reshape(-1) >= grid.x[0] - 1e-12) & (points.reshape(-1) < grid.x[-1] + grid.dx)
    vals[~inside] = 0
    return vals.reshape(points.shape)


# --- operators --------------------------------------------------------------

def position_operator(grid: GridSpec) -> np.ndarray:
    return np.diag(grid.x).astype(complex)


def momentum_operator(grid: GridSpec) -> np.ndarray:
    """``F^dagger diag(p) F`` with the unitary DFT, symmetrized."""
    mat = from_momentum(grid.p_fft[:, None] * to_momentum(np.eye(grid.n)))
    return (mat + mat.conj().T) / 2


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def weyl_operator(grid: GridSpec, q: float, p: float) -> np.ndarray:
    """Matrix of ``W_qp = exp(iqp/2) exp(-iqP) exp(ipQ)``."""
    _check_weyl_range(grid, q, p)
    ramp = np.diag(np.exp(1j * p * grid.x))
    return np.exp(0.5j * q * p) * translate(grid, ramp, q)


def weyl_apply(grid: GridSpec, amps: np.ndarray, q, p) -> np.ndarray:
    """Apply ``W_qp`` to a grid vector for all pairs in ``q`` x ``p``.

    Returns shape ``(n,)`` for scalars, otherwise ``(n, len(q), len(p))``.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    for qq in (q.min(), q.max()):
        for pp in (p.min(), p.max()):
            _check_weyl_range(grid, qq, pp)
    x = grid.x
    # ramp for every p, then translate each by every q
    ramped = amps[:, None] * np.exp(1j * np.outer(x, p))           # (n, np)
    coeffs = to_momentum(ramped, 0)                                 # (n, np)
    phases = np.exp(-1j * np.outer(grid.p_fft, q))                  # (n, nq)
    shifted = from_momentum(coeffs[:, None, :] * phases[:, :, None], 0)  # (n, nq, np)
    out = np.exp(0.5j * np.outer(q, p))[None] * shifted
    if out.shape[1:] == (1, 1):
        return out[:, 0, 0]
    return out


def _check_weyl_range(grid: GridSpec, q: float, p: float) -> None:
    if abs(q) > grid.length / 2 + 1e-12 or abs(p) > grid.p_max + 1e-12:
        raise ValueError(f"Weyl parameters ({q}, {p}) outside |q| <= L/2, |p| <= pi/dx")


def qubit_ops() -> dict[str, np.ndarray]:
    return {
        "sigma_x": np.array([[0, 1], [1, 0]], dtype=complex),
        "sigma_y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "sigma_z": np.array([[1, 0], [0, -1]], dtype=complex),
        "ket0": np.array([1, 0], dtype=complex),
        "ket1": np.array([0, 1], dtype=complex),
    }


# --- states -----------------------------------------------------------------

def gaussian_state(grid: GridSpec, delta: float, x0: float = 0.0, p0: float = 0.0) -> StateVector:
    """Gaussian ``(delta*sqrt(2 pi))^(-1/2) exp(-(x-x0)^2/(4 delta^2) + i p0 x)``.

    Renormalized on the grid.  Raises if the ``x0 +- 5*delta`` window is not
    inside the grid; warns when the truncated mass exceeds 1e-12.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    lo, hi = grid.x[0], grid.x[-1]
    if x0 - 5 * delta < lo or x0 + 5 * delta > hi:
        raise ValueError(f"Gaussian window [{x0 - 5 * delta}, {x0 + 5 * delta}] exceeds grid [{lo}, {hi}]")
    # |phi|^2 has standard deviation delta
    lost = 0.5 * math.erfc((x0 - lo) / (delta * math.sqrt(2))) + 0.5 * math.erfc((hi - x0) / (delta * math.sqrt(2)))
    if lost > 1e-12:
        warnings.warn(f"grid truncation loses {lost:.2e} of the Gaussian mass", RuntimeWarning, stacklevel=2)
    x = grid.x
    amps = (delta * np.sqrt(2 * np.pi)) ** -0.5 * np.exp(-((x - x0) ** 2) / (4 * delta**2) + 1j * p0 * x)
    return wavefunction(grid, amps).normalized()


def coherent_state(grid: GridSpec, q0: float, p0: float) -> StateVector:
    """Minimum-uncertainty Gaussian with ``delta**2 = 1/2``."""
    return gaussian_state(grid, 1 / np.sqrt(2), q0, p0)


# --- primitives -------------------------------------------------------------

def inner(a: StateVector, b: StateVector) -> complex:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch {a.dim} vs {b.dim}")
    return complex(a.weight * np.vdot(a.amps, b.amps))


def expectation(op: np.ndarray, state: StateVector | DensityOperator) -> complex:
    """``<phi|M phi>`` with the space weight, or ``tr[rho M]``."""
    op = np.asarray(op)
    if op.shape != (state.dim, state.dim):
        raise ValueError(f"operator shape {op.shape} does not match state dimension {state.dim}")
    if isinstance(state, DensityOperator):
        return complex(state.weight * np.einsum("ij,ji->", state.matrix, op))
    return complex(state.weight * np.vdot(state.amps, op @ state.amps))


def fidelity(a: StateVector, b: StateVector) -> float:
    return float(abs(inner(a, b)) ** 2 / (a.norm() ** 2 * b.norm() ** 2))


def trace_distance(a: DensityOperator, b: DensityOperator) -> float:
    diff = a.orthonormal() - b.orthonormal()
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def dumps_state(state: StateVector) -> str:
    return json.dumps(state.to_json())
