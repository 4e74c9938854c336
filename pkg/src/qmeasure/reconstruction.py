"""State determination: weak-measurement tomography and phase-space inversion.

Pointwise reconstruction couples the state to a qubit through
``exp(-i alpha Q_i (x) sigma_y)`` for each position interval ``I_i``,
postselects the momentum in ``J_eps = (-eps/2, eps/2)`` and reads
``sigma_x`` and ``sigma_y`` on the qubit.  The phase-space route measures a
covariant observable generated by a kernel state and inverts the Husimi
distribution by Fourier deconvolution.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .hilbert import (
    DensityOperator,
    GridSpec,
    StateVector,
    density,
    fidelity,
    from_momentum,
    hybrid_state,
    to_momentum,
    trace_distance,
    weyl_apply,
    wavefunction,
)
from .observables import OutcomeBin, PostselectionError, ProbabilityMeasure, label_bins, uniform_bins

POSTSELECTION_TOL = 1e-12
FAILURE_MASS = 1e-10
COVERAGE_TOL = 1e-6


# --- pointwise (weak measurement) reconstruction ----------------------------

@dataclass(frozen=True)
class LundeenConfig:
    grid: GridSpec
    window: tuple = (-8.0, 8.0)
    n_intervals: int = 64
    alpha: float = 0.05
    eps: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= math.pi / 4 + 1e-15:
            raise ValueError(f"alpha must lie in (0, pi/4], got {self.alpha}")
        if self.eps is None:
            object.__setattr__(self, "eps", 4 * self.grid.dp)
        if self.eps < self.grid.dp * (1 - 1e-12):
            raise ValueError(f"eps must be at least dp = {self.grid.dp}, got {self.eps}")
        lo, hi = self.window
        if not lo < hi or lo < self.grid.x[0] or hi > self.grid.x[-1] + self.grid.dx:
            raise ValueError(f"window {self.window} must be a nonempty part of the grid")
        if self.n_intervals < 1:
            raise ValueError("n_intervals must be positive")

    @property
    def intervals(self) -> list[OutcomeBin]:
        return uniform_bins(self.window[0], self.window[1], self.n_intervals)

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.intervals])

    @property
    def scale(self) -> float:
        return 2 * math.sin(self.alpha)


def _window_mask(grid: GridSpec, eps: float) -> np.ndarray:
    return np.abs(grid.p_fft) < eps / 2 - 1e-9 * grid.dp


def momentum_postselect(grid: GridSpec, amps: np.ndarray, eps: float, axis: int = 0) -> np.ndarray:
    """``P^P(J_eps)`` applied along ``axis``."""
    shape = [1] * np.ndim(amps)
    shape[axis] = grid.n
    mask = _window_mask(grid, eps).reshape(shape)
    return from_momentum(mask * to_momentum(amps, axis), axis)


def lundeen_couple(phi: StateVector, interval: OutcomeBin, alpha: float) -> StateVector:
    """``Q_i phi (x) (cos a|0> + sin a|1>) + (I - Q_i) phi (x) |0>``."""
    q = interval.contains(phi.grid.x)
    inside = np.where(q, phi.amps, 0)
    out = np.empty((phi.dim, 2), dtype=complex)
    out[:, 0] = phi.amps - inside + math.cos(alpha) * inside
    out[:, 1] = math.sin(alpha) * inside
    return hybrid_state(phi.grid, out.reshape(-1))


def _postselected_gram(psi: StateVector, eps: float) -> np.ndarray:
    """``G_st = <P^P(J) psi_s | P^P(J) psi_t>`` for the qubit branches."""
    branches = momentum_postselect(psi.grid, psi.amps.reshape(-1, 2), eps)
    return psi.grid.dx * branches.conj().T @ branches


def _pauli_moments(gram: np.ndarray) -> tuple[float, float]:
    """Unnormalized ``<sigma_x>`` and ``<sigma_y>`` restricted to the postselected part."""
    return 2 * gram[0, 1].real, 2 * gram[0, 1].imag


def lundeen_conditionals(psi: StateVector, eps: float, pauli: str) -> ProbabilityMeasure:
    """Conditional distribution of ``sigma_x`` or ``sigma_y`` over the labels ``(-1, +1)``."""
    gram = _postselected_gram(psi, eps)
    mass = float(np.trace(gram).real)
    if mass <= POSTSELECTION_TOL:
        raise PostselectionError(f"postselection mass {mass:.3e}: momentum window carries no weight")
    sx, sy = _pauli_moments(gram)
    try:
        s = {"x": sx, "y": sy}[pauli]
    except KeyError:
        raise ValueError(f"pauli must be 'x' or 'y', got {pauli!r}") from None
    plus = 0.5 * (1 + s / mass)
    return ProbabilityMeasure(label_bins([-1, 1]), np.clip([1 - plus, plus], 0, 1))


def lundeen_point(phi: StateVector, interval: OutcomeBin, alpha: float, eps: float) -> complex:
    """Scaled conditional ``<sigma_x> + i <sigma_y>`` for one interval."""
    psi = lundeen_couple(phi, interval, alpha)
    cx = lundeen_conditionals(psi, eps, "x").mean()
    cy = lundeen_conditionals(psi, eps, "y").mean()
    return complex(cx, cy) / (2 * math.sin(alpha))


def lundeen_matrix_element(phi: StateVector, interval: OutcomeBin, eps: float) -> complex:
    """``<phi|P^P(J_eps) Q_i phi>``."""
    inside = np.where(interval.contains(phi.grid.x), phi.amps, 0)
    return complex(phi.grid.dx * np.vdot(momentum_postselect(phi.grid, phi.amps, eps), inside))


def postselection_mass(phi: StateVector, eps: float) -> float:
    proj = momentum_postselect(phi.grid, phi.amps, eps)
    return float(phi.grid.dx * np.vdot(proj, proj).real)


@dataclass(frozen=True, eq=False)
class ReconstructionReport:
    estimate: StateVector | DensityOperator | None
    raw_points: np.ndarray
    fidelity_vs_truth: float | None
    diagnostics: dict
    centers: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def failed(self) -> bool:
        return bool(self.diagnostics.get("failure"))

    def to_json(self) -> dict:
        pts = np.asarray(self.raw_points, dtype=complex)
        return {
            "centers": np.asarray(self.centers, dtype=float).tolist(),
            "raw_points": np.column_stack([pts.real, pts.imag]).tolist(),
            "fidelity": self.fidelity_vs_truth,
            "diagnostics": self.diagnostics,
        }


def lundeen_reconstruct(phi_true: StateVector, cfg: LundeenConfig,
                        mass_threshold: float = FAILURE_MASS) -> ReconstructionReport:
    """Scan every interval and assemble a normalized step-function estimate.

    ``raw_points`` are the postselected joint moments
    ``(<sigma_x> + i <sigma_y>) / (2 sin alpha)``, which tend to
    ``<phi|P^P(J) Q_i phi>`` as ``alpha -> 0``.  When the postselection mass
    falls below ``mass_threshold`` the report flags failure and carries no
    estimate.
    """
    grid = phi_true.grid
    if grid != cfg.grid:
        raise ValueError("state grid and configuration grid differ")
    intervals = cfg.intervals
    mass = postselection_mass(phi_true, cfg.eps)
    dens = grid.dx * np.abs(phi_true.amps) ** 2
    inside = (grid.x >= cfg.window[0]) & (grid.x < cfg.window[1])
    covered = float(dens[inside].sum() / dens.sum())
    diagnostics = {
        "postselection_mass": mass,
        "window_mass": covered,
        "alpha": cfg.alpha,
        "eps": cfg.eps,
        "n_intervals": cfg.n_intervals,
        "failure": None,
        "warnings": [],
    }
    if covered < 1 - COVERAGE_TOL:
        diagnostics["warnings"].append(f"window holds only {covered:.8f} of the state mass")

    points = np.empty(len(intervals), dtype=complex)
    lengths = np.empty(len(intervals))
    for i, b in enumerate(intervals):
        psi = lundeen_couple(phi_true, b, cfg.alpha)
        g01 = _postselected_gram(psi, cfg.eps)[0, 1]
        points[i] = g01 / math.sin(cfg.alpha)
        lengths[i] = grid.dx * np.count_nonzero(b.contains(grid.x))

    centers = cfg.centers
    if mass < mass_threshold:
        diagnostics["failure"] = "postselection mass below threshold"
        return ReconstructionReport(None, points, 0.0, diagnostics, centers)

    # step function through point_i / |I_i|, the mean of phi over I_i up to a constant
    step = np.zeros(grid.n, dtype=complex)
    for b, v, ln in zip(intervals, points, lengths):
        if ln > 0:
            step[b.contains(grid.x)] = v / ln
    if not np.any(step):
        diagnostics["failure"] = "all interval estimates vanish"
        return ReconstructionReport(None, points, 0.0, diagnostics, centers)
    k = int(np.argmax(np.abs(points)))
    step *= np.exp(-1j * np.angle(points[k]))
    est = wavefunction(grid, step).normalized()
    fid = min(max(fidelity(est, phi_true.normalized()), 0.0), 1.0)
    return ReconstructionReport(est, points, fid, diagnostics, centers)


# --- covariant phase-space observable ---------------------------------------

def covariant_observable_kernel(probe: StateVector, lam: float, grid: GridSpec | None = None) -> StateVector:
    """``sqrt(lam) conj(phi(-lam x))`` sampled on ``grid`` (default: the probe grid)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    grid = probe.grid if grid is None else grid
    amps = math.sqrt(lam) * np.conj(probe.evaluate(-lam * grid.x))
    k = wavefunction(grid, amps)
    err = abs(k.norm() ** 2 - probe.norm() ** 2)
    if err > 1e-9:
        raise ValueError(f"kernel resampling loses {err:.2e} of the norm (aliasing); refine the grid")
    return k.normalized()


def phase_space_grid(lo: float = -8.0, hi: float = 8.0, count: int = 64) -> np.ndarray:
    """Cell centers of ``count`` equal cells on ``[lo, hi]``."""
    step = (hi - lo) / count
    return lo + step * (np.arange(count) + 0.5)


@dataclass(frozen=True, eq=False)
class PhaseSpaceDistribution:
    qs: np.ndarray
    ps: np.ndarray
    values: np.ndarray

    @property
    def dq(self) -> float:
        return float(self.qs[1] - self.qs[0])

    @property
    def dp(self) -> float:
        return float(self.ps[1] - self.ps[0])

    def total(self) -> float:
        return float(self.values.sum() * self.dq * self.dp)

    def q_margin(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dp

    def to_json(self) -> dict:
        return {"qs": self.qs.tolist(), "ps": self.ps.tolist(), "values": self.values.tolist()}


def _as_density(rho) -> DensityOperator:
    return density(rho) if isinstance(rho, StateVector) else rho


def husimi(rho, kernel: StateVector, qs, ps, max_deficit: float = 1e-2) -> PhaseSpaceDistribution:
    """``(1/2pi) <W_qp k | rho W_qp k>`` on ``qs`` x ``ps``."""
    rho = _as_density(rho)
    grid = kernel.grid
    qs = np.asarray(qs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    shifted = weyl_apply(grid, kernel.amps, qs, ps).reshape(grid.n, -1)   # (n, nq*np)
    vals = grid.dx**2 * np.einsum("ak,ak->k", shifted.conj(), rho.matrix @ shifted).real
    vals = np.clip(vals / (2 * np.pi), 0, None).reshape(len(qs), len(ps))
    dist = PhaseSpaceDistribution(qs, ps, vals)
    deficit = abs(1 - dist.total() / rho.trace())
    if deficit > max_deficit:
        raise ValueError(f"phase-space box misses {deficit:.2e} of the distribution; enlarge the box")
    return dist


def characteristic_function(state, a, b) -> np.ndarray:
    """``tr[rho W_ab]`` on the product grid ``a`` x ``b``."""
    rho = _as_density(state)
    grid = rho.grid
    vals, vecs = np.linalg.eigh(rho.orthonormal())
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    out = np.zeros((len(a), len(b)), dtype=complex)
    for w, v in zip(vals, vecs.T):
        # components below 1e-14 cannot move the result at the tested tolerances
        if abs(w) < 1e-14:
            continue
        shifted = weyl_apply(grid, v, a, b).reshape(grid.n, len(a), len(b))
        out += w * np.einsum("a,akl->kl", v.conj(), shifted)
    return out


def completeness_check(kernel: StateVector, qs, ps, zero_tol: float = 1e-12) -> tuple[float, float]:
    """Minimum ``|<k|W_qp k>|`` over the grid and the fraction below ``zero_tol``."""
    ov = np.abs(characteristic_function(kernel, qs, ps))
    return float(ov.min()), float(np.mean(ov < zero_tol))


def _dual_frequencies(samples: np.ndarray) -> np.ndarray:
    n = len(samples)
    step = samples[1] - samples[0]
    return 2 * np.pi * (np.arange(n) - n // 2) / (n * step)


def project_to_states(op: DensityOperator) -> tuple[DensityOperator, float]:
    """Nearest state by eigenvalue clipping and renormalization, plus the distance moved."""
    mat = op.orthonormal()
    mat = (mat + mat.conj().T) / 2
    vals, vecs = np.linalg.eigh(mat)
    clipped = np.clip(vals, 0, None)
    if clipped.sum() <= 0:
        raise ValueError("operator has no positive part")
    clipped /= clipped.sum()
    proj = (vecs * clipped) @ vecs.conj().T
    est = DensityOperator(proj / op.weight, op.weight, op.space, op.grid)
    return est, trace_distance(op, est)


def phase_space_reconstruct(dist: PhaseSpaceDistribution, kernel: StateVector, grid: GridSpec | None = None,
                            tau: float = 1e-6, significance: float = 1e-6) -> ReconstructionReport:
    """Invert a Husimi distribution into a density operator.

    The symplectic Fourier transform of the distribution equals
    ``chi_rho * conj(chi_kernel)``; division is restricted to
    ``|chi_kernel| > tau``.  The result is hermitized, projected onto the
    positive unit-trace cone, and the pre-projection distance is reported.
    """
    grid = kernel.grid if grid is None else grid
    qs, ps = dist.qs, dist.ps
    dq, dp = dist.dq, dist.dp
    bs = _dual_frequencies(qs)
    as_ = _dual_frequencies(ps)
    # FT[l, k] = sum_qp H(q, p) exp(i (b_k q - a_l p)) dq dp
    eq = np.exp(1j * np.outer(qs, bs))
    ep = np.exp(-1j * np.outer(as_, ps))
    ft = ep @ dist.values.T @ eq * dq * dp                   # (na, nb)
    chi_k = characteristic_function(kernel, as_, bs)

    significant = np.abs(ft) > significance * np.abs(ft).max()
    if np.any(significant & (np.abs(chi_k) < 1e-12)):
        raise ValueError("kernel overlaps vanish where the data are significant: observable not complete here")
    mask = np.abs(chi_k) > tau
    coverage = float((significant & mask).sum() / significant.sum())
    diag_warnings = []
    if coverage < 0.99:
        msg = f"division mask covers only {coverage:.3f} of the significant support"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        diag_warnings.append(msg)
    chi = np.zeros_like(ft)
    chi[mask] = ft[mask] / np.conj(chi_k[mask])

    # Wigner function on u = (x_j + x_k)/2 within the box, p on the dual lattice of a
    n = grid.n
    u = grid.x[0] + 0.5 * grid.dx * np.arange(2 * n - 1)
    wp = phase_space_grid(-np.pi / (as_[1] - as_[0]), np.pi / (as_[1] - as_[0]), len(as_))
    dwp = wp[1] - wp[0]
    da, db = as_[1] - as_[0], bs[1] - bs[0]
    eu = np.exp(-1j * np.outer(u, bs))                        # (2n-1, nb)
    ea = np.exp(1j * np.outer(as_, wp))                       # (na, npw)
    wig = (eu @ chi.T @ ea) * da * db / (2 * np.pi) ** 2      # (2n-1, npw)
    period_u = 2 * np.pi / db
    wig[np.abs(u - 0.5 * (qs[0] + qs[-1])) > period_u / 2] = 0

    # rho(x, y) = sum_p W((x+y)/2, p) exp(i p (x - y)) dp
    shifts = grid.dx * (np.arange(2 * n - 1) - (n - 1))
    es = np.exp(1j * np.outer(wp, shifts)) * dwp              # (npw, 2n-1)
    r = wig @ es                                               # (s = j+k, t = j-k+n-1)
    r[:, np.abs(shifts) > np.pi / dwp] = 0
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    kern = r[j + k, j - k + n - 1]
    kern = (kern + kern.conj().T) / 2
    # the data say nothing about positions outside the box
    outside = (grid.x < qs[0] - dq / 2) | (grid.x > qs[-1] + dq / 2)
    kern[outside, :] = 0
    kern[:, outside] = 0

    raw = DensityOperator(kern, grid.dx, "grid", grid)
    est, cone_distance = project_to_states(raw)
    diagnostics = {
        "cone_distance": cone_distance,
        "raw_trace": raw.trace(),
        "mask_coverage": coverage,
        "tau": tau,
        "warnings": diag_warnings,
    }
    return ReconstructionReport(est, np.zeros(0, dtype=complex), None, diagnostics)
