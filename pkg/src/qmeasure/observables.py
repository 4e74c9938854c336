"""Finite-outcome observables (POVMs) on discretized spaces.

Outcomes are half-open bins; bin centers are the numeric outcome values
wherever a formula needs ``x`` (first moments, convolutions).

Effects are stored either densely, shape ``(m, d, d)``, or in spectral form
``E_i = B diag(w_i) B^dagger`` with a unitary ``basis`` B and ``weights`` of
shape ``(m, d)``.  Sharp observables of a hermitian operator and any
convolution of them stay in spectral form, which keeps per-point position
and momentum observables on large grids cheap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import GridSpec, StateVector, DensityOperator, from_momentum

POSITIVITY_TOL = 1e-10
NORMALIZATION_TOL = 1e-9


class PostselectionError(ValueError):
    """A conditioning event has (numerically) zero probability."""


@dataclass(frozen=True, order=True)
class OutcomeBin:
    """Half-open interval ``[lo, hi)``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty bin [{self.lo}, {self.hi})")

    @property
    def center(self) -> float:
        return (self.lo + self.hi) / 2

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x >= self.lo) & (x < self.hi)

    def scaled(self, factor: float) -> "OutcomeBin":
        a, b = sorted((self.lo * factor, self.hi * factor))
        return OutcomeBin(a, b)


def uniform_bins(lo: float, hi: float, count: int) -> list[OutcomeBin]:
    edges = np.linspace(lo, hi, count + 1)
    return [OutcomeBin(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


def centered_bins(centers, width: float) -> list[OutcomeBin]:
    return [OutcomeBin(float(c - width / 2), float(c + width / 2)) for c in centers]


def label_bins(labels) -> list[OutcomeBin]:
    """Unit-width bins around sorted integer-like labels."""
    return centered_bins(sorted(labels), 1.0)


def _check_bins(bins) -> None:
    for a, b in zip(bins[:-1], bins[1:]):
        if b.lo < a.hi - 1e-12 * max(1.0, abs(a.hi)):
            raise ValueError(f"bins overlap or are unordered: {a} then {b}")


@dataclass(frozen=True, eq=False)
class BinnedObservable:
    bins: tuple
    effects: np.ndarray | None = None
    basis: np.ndarray | None = None
    weights: np.ndarray | None = None
    space: str = "finite"

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple(self.bins))
        _check_bins(self.bins)
        if (self.effects is None) == (self.weights is None):
            raise ValueError("give either dense effects or spectral weights")
        if self.effects is not None:
            eff = np.asarray(self.effects, dtype=complex)
            if eff.ndim != 3 or eff.shape[0] != len(self.bins) or eff.shape[1] != eff.shape[2]:
                raise ValueError(f"effects shape {eff.shape} does not match {len(self.bins)} bins")
            object.__setattr__(self, "effects", eff)
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape[0] != len(self.bins):
                raise ValueError("weights do not match bins")
            basis = np.eye(w.shape[1], dtype=complex) if self.basis is None else np.asarray(self.basis, dtype=complex)
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "basis", basis)
        self.validate()

    # -- structure --
    @property
    def dim(self) -> int:
        return self.effects.shape[1] if self.effects is not None else self.weights.shape[1]

    @property
    def spectral(self) -> bool:
        return self.weights is not None

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.bins])

    def __len__(self) -> int:
        return len(self.bins)

    def effect(self, i) -> np.ndarray:
        """Effect of one bin index, or the sum over an iterable of indices."""
        idx = np.atleast_1d(np.asarray(i, dtype=int))
        if self.effects is not None:
            return self.effects[idx].sum(axis=0)
        w = self.weights[idx].sum(axis=0)
        return (self.basis * w) @ self.basis.conj().T

    def matrices(self) -> np.ndarray:
        if self.effects is not None:
            return self.effects
        return np.einsum("ab,mb,cb->mac", self.basis, self.weights, self.basis.conj())

    def dense(self) -> "BinnedObservable":
        return BinnedObservable(self.bins, effects=self.matrices(), space=self.space)

    def norms(self) -> np.ndarray:
        """Operator norm of every effect."""
        if self.effects is not None:
            return np.array([np.linalg.eigvalsh(e).max() for e in self.effects])
        return self.weights.max(axis=1)

    def validate(self) -> None:
        if self.spectral:
            w = self.weights
            if w.min() < -POSITIVITY_TOL or w.max() > 1 + POSITIVITY_TOL:
                raise ValueError("effect eigenvalues outside [0, 1]")
            if np.abs(w.sum(axis=0) - 1).max() > NORMALIZATION_TOL:
                raise ValueError("effects do not sum to the identity")
            if np.abs(self.basis.conj().T @ self.basis - np.eye(self.dim)).max() > 1e-8:
                raise ValueError("spectral basis is not unitary")
            return
        total = self.effects.sum(axis=0)
        if np.abs(total - np.eye(self.dim)).max() > NORMALIZATION_TOL:
            raise ValueError("effects do not sum to the identity")
        for i, e in enumerate(self.effects):
            if np.abs(e - e.conj().T).max() > POSITIVITY_TOL:
                raise ValueError(f"effect {i} is not hermitian")
            ev = np.linalg.eigvalsh((e + e.conj().T) / 2)
            if ev.min() < -POSITIVITY_TOL or ev.max() > 1 + POSITIVITY_TOL:
                raise ValueError(f"effect {i} has eigenvalues outside [0, 1]")

    def is_sharp(self, tol: float = 1e-8) -> bool:
        if self.spectral:
            w = self.weights
            return bool(np.all((np.abs(w) < tol) | (np.abs(w - 1) < tol)))
        return all(np.abs(e @ e - e).max() < tol for e in self.effects)

    def to_json(self) -> dict:
        mats = self.matrices()
        return {
            "bins": [[b.lo, b.hi] for b in self.bins],
            "effects": np.stack([mats.real, mats.imag], axis=-1).tolist(),
            "space": self.space,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BinnedObservable":
        eff = np.asarray(data["effects"], dtype=float)
        return cls(
            tuple(OutcomeBin(lo, hi) for lo, hi in data["bins"]),
            effects=eff[..., 0] + 1j * eff[..., 1],
            space=data["space"],
        )


@dataclass(frozen=True, eq=False)
class ProbabilityMeasure:
    bins: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple(self.bins))
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        _check_bins(self.bins)
        if w.shape != (len(self.bins),):
            raise ValueError("weights do not match bins")
        if w.min() < 0:
            raise ValueError("negative probability")
        if abs(w.sum() - 1) > 1e-10:
            raise ValueError(f"probabilities sum to {w.sum():.12f}")

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.bins])

    def mean(self) -> float:
        """First moment ``mu[1]`` using bin centers."""
        return float(self.weights @ self.centers)

    def mass(self, lo: float = -np.inf, hi: float = np.inf) -> float:
        c = self.centers
        return float(self.weights[(c >= lo) & (c < hi)].sum())


def point_mass(x: float = 0.0, width: float = 1.0) -> ProbabilityMeasure:
    return ProbabilityMeasure((OutcomeBin(x - width / 2, x + width / 2),), np.ones(1))


# --- constructors ----------------------------------------------------------

def sharp_observable(op: np.ndarray, bins, space: str = "finite", tol: float = 1e-9) -> BinnedObservable:
    """Spectral measure of a hermitian operator, binned.

    Each effect is the sum of the eigenprojections whose eigenvalues fall in
    the bin.  Eigenvalues outside every bin raise ``ValueError``.
    """
    op = np.asarray(op, dtype=complex)
    if np.abs(op - op.conj().T).max() > 1e-10:
        raise ValueError("sharp_observable needs a hermitian operator")
    vals, vecs = np.linalg.eigh((op + op.conj().T) / 2)
    return _sharp_from_spectrum(vals, vecs, bins, space, tol)


def _sharp_from_spectrum(vals, vecs, bins, space, tol=1e-9) -> BinnedObservable:
    bins = tuple(bins)
    weights = np.zeros((len(bins), len(vals)))
    for k, v in enumerate(vals):
        hits = [i for i, b in enumerate(bins) if b.lo - tol <= v < b.hi - tol]
        if not hits:
            raise ValueError(f"eigenvalue {v!r} lies outside all bins")
        weights[hits[0], k] = 1.0
    return BinnedObservable(bins, basis=vecs, weights=weights, space=space)


def point_bins(grid_values: np.ndarray) -> list[OutcomeBin]:
    """One bin per point of a uniform lattice."""
    step = grid_values[1] - grid_values[0]
    return centered_bins(grid_values, step)


def position_observable(grid: GridSpec) -> BinnedObservable:
    """Sharp position with one bin per grid point."""
    return BinnedObservable(point_bins(grid.x), basis=np.eye(grid.n, dtype=complex),
                            weights=np.eye(grid.n), space="grid")


def momentum_basis(grid: GridSpec) -> np.ndarray:
    """Columns are unit momentum eigenvectors, ordered as ``grid.p``."""
    order = np.argsort(grid.p_fft)
    return from_momentum(np.eye(grid.n))[:, order]


def momentum_observable(grid: GridSpec) -> BinnedObservable:
    """Sharp momentum with one bin per momentum grid point."""
    return BinnedObservable(point_bins(grid.p), basis=momentum_basis(grid), weights=np.eye(grid.n), space="grid")


def momentum_window(grid: GridSpec, lo: float, hi: float) -> np.ndarray:
    """Projection ``P^P((lo, hi))`` onto the open momentum interval."""
    tol = 1e-9 * grid.dp
    mask = (grid.p_fft > lo + tol) & (grid.p_fft < hi - tol)
    return from_momentum(mask[:, None] * np.fft.fft(np.eye(grid.n), axis=0, norm="ortho"))


def two_valued_position(grid: GridSpec, interval: OutcomeBin) -> BinnedObservable:
    """Observable ``0 -> I - Q_i``, ``1 -> Q_i`` with ``Q_i = P^Q(interval)``."""
    mask = interval.contains(grid.x).astype(float)
    if not mask.any():
        raise ValueError(f"interval {interval} contains no grid point")
    return BinnedObservable(label_bins([0, 1]), basis=np.eye(grid.n, dtype=complex),
                            weights=np.stack([1 - mask, mask]), space="grid")


def interval_projection(grid: GridSpec, interval: OutcomeBin) -> np.ndarray:
    return np.diag(interval.contains(grid.x).astype(complex))


# --- operations ------------------------------------------------------------

def statistics(obs: BinnedObservable, state: StateVector | DensityOperator) -> ProbabilityMeasure:
    """Outcome distribution ``tr[rho E(X_i)]``."""
    if state.dim != obs.dim:
        raise ValueError(f"state dimension {state.dim} does not match observable dimension {obs.dim}")
    if isinstance(state, DensityOperator):
        rho = state.orthonormal()
        if obs.spectral:
            diag = np.einsum("ab,ac,cb->b", obs.basis.conj(), rho, obs.basis).real
            w = obs.weights @ diag
        else:
            w = np.einsum("mij,ji->m", obs.effects, rho).real
    else:
        v = state.amps * np.sqrt(state.weight)
        if obs.spectral:
            w = obs.weights @ np.abs(obs.basis.conj().T @ v) ** 2
        else:
            w = np.einsum("i,mij,j->m", v.conj(), obs.effects, v).real
    w = np.clip(w, 0, None)
    total = w.sum()
    if abs(total - 1) >= NORMALIZATION_TOL:
        raise ValueError(f"probabilities sum to {total:.3e}; broken POVM or unnormalized state")
    return ProbabilityMeasure(obs.bins, w / total)


def first_moment(obs: BinnedObservable) -> np.ndarray:
    """``E[1] = sum_i center_i E(X_i)``."""
    c = obs.centers
    if obs.spectral:
        return (obs.basis * (c @ obs.weights)) @ obs.basis.conj().T
    return np.einsum("m,mij->ij", c, obs.effects)


def convolve(mu: ProbabilityMeasure, obs: BinnedObservable, outcome_range=None,
             tol: float = 1e-6) -> BinnedObservable:
    """Smeared observable ``(mu * E)(Z) = sum_i mu(Z - x_i) E(X_i)``.

    Result bins lie on the lattice of ``mu``'s (uniform) bin width.  Every
    sum ``x_i + m_j`` of an ``E`` center and a ``mu`` center must land on a
    common lattice point.  With ``outcome_range=(lo, hi)`` the result is
    restricted to that range, and more than 1e-9 of ``mu``'s mass falling
    outside it is an error.
    """
    widths = np.array([b.width for b in mu.bins])
    w = widths[0]
    if np.abs(widths - w).max() > 1e-9 * w:
        raise ValueError("convolve needs a measure on uniform bins")
    mc, ec = mu.centers, obs.centers
    ref = mc[0] + ec[0]
    sums = ec[:, None] + mc[None, :]
    keys_f = (sums - ref) / w
    keys = np.rint(keys_f).astype(int)
    if np.abs(keys_f - keys).max() > tol:
        raise ValueError("measure and observable lattices are not commensurate")
    live = mu.weights > 0
    kmin, kmax = keys[:, live].min(), keys[:, live].max()
    out_keys = np.arange(kmin, kmax + 1)
    if outcome_range is not None:
        lo, hi = outcome_range
        centers = ref + out_keys * w
        keep = (centers >= lo) & (centers < hi)
        for i in range(len(ec)):
            outside = ((ref + keys[i] * w) < lo) | ((ref + keys[i] * w) >= hi)
            if mu.weights[outside].sum() > 1e-9:
                raise ValueError("smearing mass falls outside the outcome range; extend the range")
        out_keys = out_keys[keep]
        kmin = out_keys.min()
    m_out = len(out_keys)
    bins = centered_bins(ref + out_keys * w, w)
    idx = keys - kmin
    if obs.spectral:
        weights = np.zeros((m_out, obs.dim))
        for i in range(len(ec)):
            ok = (idx[i] >= 0) & (idx[i] < m_out)
            np.add.at(weights, idx[i][ok], mu.weights[ok][:, None] * obs.weights[i][None, :])
        return BinnedObservable(bins, basis=obs.basis, weights=weights, space=obs.space)
    effects = np.zeros((m_out, obs.dim, obs.dim), dtype=complex)
    for i in range(len(ec)):
        ok = (idx[i] >= 0) & (idx[i] < m_out)
        np.add.at(effects, idx[i][ok], mu.weights[ok][:, None, None] * obs.effects[i][None])
    return BinnedObservable(bins, effects=effects, space=obs.space)


def smearing_measure(probe: StateVector, lam: float) -> ProbabilityMeasure:
    """``mu(X) = <phi|P^Q(lam X) phi>`` on the probe grid, scaled by ``1/lam``."""
    if probe.grid is None:
        raise ValueError("smearing_measure needs a grid probe")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    w = probe.weight * np.abs(probe.amps) ** 2
    return ProbabilityMeasure(point_bins(probe.grid.x / lam), w / w.sum())


def support(obs: BinnedObservable, threshold: float = 1e-10) -> list[OutcomeBin]:
    """Bins whose effect has operator norm above ``threshold``."""
    norms = obs.norms()
    return [b for b, nrm in zip(obs.bins, norms) if nrm > threshold]


def _psd_sqrt(e: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((e + e.conj().T) / 2)
    if vals.min() < -POSITIVITY_TOL:
        raise ValueError(f"effect has negative eigenvalue {vals.min():.3e}")
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.conj().T


@dataclass(frozen=True, eq=False)
class NaimarkDilation:
    """Isometry ``V: H -> H (x) H0`` and sharp ``A`` on the dilated space.

    The dilated space is ordered system-major: index ``s * m + i``.
    ``projections[i]`` is the spectral projection ``P^A(X_i)``.
    """

    isometry: np.ndarray
    projections: np.ndarray
    bins: tuple
    ancilla_dim: int

    @property
    def values(self) -> np.ndarray:
        return np.array([b.center for b in self.bins])

    @property
    def sharp_operator(self) -> np.ndarray:
        return np.einsum("m,mij->ij", self.values, self.projections)

    def effect(self, i: int) -> np.ndarray:
        v = self.isometry
        return v.conj().T @ self.projections[i] @ v

    def first_moment(self) -> np.ndarray:
        v = self.isometry
        return v.conj().T @ self.sharp_operator @ v

    def rotated(self, unitary: np.ndarray) -> "NaimarkDilation":
        """Equivalent dilation with the ancilla rotated by ``unitary``."""
        d = self.isometry.shape[1]
        big = np.kron(np.eye(d), unitary)
        projs = np.einsum("ab,mbc,dc->mad", big, self.projections, big.conj())
        return NaimarkDilation(big @ self.isometry, projs, self.bins, self.ancilla_dim)

    def padded(self, extra: int = 1) -> "NaimarkDilation":
        """Same dilation embedded in an ancilla with ``extra`` unused levels."""
        d = self.isometry.shape[1]
        m = self.ancilla_dim
        emb = np.kron(np.eye(d), np.eye(m + extra, m))
        projs = np.einsum("ab,mbc,dc->mad", emb, self.projections, emb)
        # unused levels join the last outcome so the projections stay complete
        filler = np.kron(np.eye(d), np.diag([0.0] * m + [1.0] * extra))
        projs[-1] = projs[-1] + filler
        return NaimarkDilation(emb @ self.isometry, projs, self.bins, m + extra)


def naimark_dilate(povm: BinnedObservable) -> NaimarkDilation:
    """Square-root dilation ``V phi = sum_i (E_i^(1/2) phi) (x) |i>``."""
    m = len(povm)
    if m < 2:
        raise ValueError("naimark_dilate needs at least two outcomes")
    d = povm.dim
    mats = povm.matrices()
    v = np.zeros((d, m, d), dtype=complex)
    for i in range(m):
        v[:, i, :] = _psd_sqrt(mats[i])
    v = v.reshape(d * m, d)
    projs = np.stack([np.kron(np.eye(d), np.diag(np.eye(m)[i])) for i in range(m)]).astype(complex)
    return NaimarkDilation(v, projs, povm.bins, m)
