"""Instruments, measurement schemes and sequential measurements.

Instruments are kept in Kraus form only: for outcome bin ``i`` a stack of
operators ``K`` of shape ``(r, d, d)`` and a scalar integration weight, so
that ``I(X_i)(rho) = w_i * sum_r K rho K^dagger`` and the dual map is
``I(X_i)^*(B) = w_i * sum_r K^dagger B K``.

A measurement scheme couples the system (optionally dilated by an isometry
into system (x) ancilla) to a probe via a unitary, then reads a pointer
observable on the probe.  Two couplings are provided: a dense unitary on
small spaces, and the branch-translation form of ``exp(-i lam A (x) P)``
with a grid probe, where eigenbranch ``a`` of ``A`` shifts the probe by
``lam * a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hilbert import DensityOperator, GridSpec, StateVector, translate
from .observables import (
    BinnedObservable,
    NaimarkDilation,
    OutcomeBin,
    momentum_observable,
    naimark_dilate,
    point_bins,
    position_observable,
)


@dataclass(frozen=True, eq=False)
class Instrument:
    bins: tuple
    kraus: tuple
    weights: np.ndarray | None = None
    space: str = "finite"
    tp_tol: float = field(default=1e-8, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple(self.bins))
        kraus = tuple(np.asarray(k, dtype=complex).reshape((-1,) + np.shape(k)[-2:]) for k in self.kraus)
        object.__setattr__(self, "kraus", kraus)
        if len(kraus) != len(self.bins):
            raise ValueError("one Kraus stack per bin required")
        w = np.ones(len(self.bins)) if self.weights is None else np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        err = np.abs(self.total_dual(np.eye(self.dim)) - np.eye(self.dim)).max()
        if err > self.tp_tol:
            raise ValueError(f"instrument is not trace preserving (deviation {err:.2e})")

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[-1]

    def indices(self, sel=None) -> list[int]:
        """Resolve a bin selection: None (all), int, slice, OutcomeBin or iterable."""
        if sel is None:
            return list(range(len(self.bins)))
        if isinstance(sel, slice):
            return list(range(len(self.bins)))[sel]
        if isinstance(sel, (int, np.integer)):
            return [int(sel)]
        if isinstance(sel, OutcomeBin):
            return [self.bins.index(sel)]
        out = []
        for s in sel:
            out.extend(self.indices(s))
        return out

    def apply(self, sel, rho: np.ndarray) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for i in self.indices(sel):
            k = self.kraus[i]
            out += self.weights[i] * np.einsum("rab,bc,rdc->ad", k, rho, k.conj())
        return out

    def dual(self, sel, b: np.ndarray) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for i in self.indices(sel):
            k = self.kraus[i]
            out += self.weights[i] * np.einsum("rba,bc,rcd->ad", k.conj(), b, k)
        return out

    def dual_each(self, b: np.ndarray) -> np.ndarray:
        """``I(X_i)^*(B)`` for every bin, shape ``(m, d, d)``."""
        return np.stack([self.dual(i, b) for i in range(len(self.bins))])

    def total_dual(self, b: np.ndarray) -> np.ndarray:
        return self.dual(None, b)

    def observable(self) -> BinnedObservable:
        """The measured observable ``E(X) = I(X)^*(I)``."""
        eff = self.dual_each(np.eye(self.dim))
        eff = (eff + eff.conj().transpose(0, 2, 1)) / 2
        return BinnedObservable(self.bins, effects=eff, space=self.space)


def dual_apply(instr: Instrument, sel, b: np.ndarray) -> np.ndarray:
    return instr.dual(sel, b)


def apply_instrument(instr: Instrument, sel, rho: DensityOperator) -> DensityOperator:
    """Unnormalized conditional output state ``I(X)(rho)``."""
    return DensityOperator(instr.apply(sel, rho.matrix), rho.weight, rho.space, rho.grid)


def identity_instrument(dim: int) -> Instrument:
    """Single-outcome instrument that leaves the state untouched."""
    return Instrument((OutcomeBin(-0.5, 0.5),), (np.eye(dim)[None],))


def luders_instrument(obs: BinnedObservable) -> Instrument:
    """``rho -> E^(1/2) rho E^(1/2)`` for every outcome."""
    mats = obs.matrices()
    kraus = []
    for e in mats:
        vals, vecs = np.linalg.eigh((e + e.conj().T) / 2)
        kraus.append(((vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.conj().T)[None])
    return Instrument(obs.bins, tuple(kraus), space=obs.space)


# --- couplings --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DenseCoupling:
    """Unitary on (system (x) ancilla) (x) probe with a finite probe."""

    matrix: np.ndarray
    probe_dim: int

    def __post_init__(self):
        u = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", u)
        if u.shape[0] % self.probe_dim:
            raise ValueError("coupling size is not a multiple of the probe dimension")
        if np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() > 1e-8:
            raise ValueError("coupling is not unitary")

    @property
    def dilated_dim(self) -> int:
        return self.matrix.shape[0] // self.probe_dim

    def apply_product(self, sys_vecs: np.ndarray, probe_amps: np.ndarray) -> np.ndarray:
        """``U (v_c (x) sigma)`` for each column ``v_c``; shape ``(D, k, c)``."""
        big = np.einsum("ac,y->ayc", sys_vecs, probe_amps).reshape(-1, sys_vecs.shape[1])
        return (self.matrix @ big).reshape(self.dilated_dim, self.probe_dim, -1)

    def dense(self) -> np.ndarray:
        return self.matrix


@dataclass(frozen=True, eq=False)
class BranchTranslation:
    """``exp(-i lam A (x) P) = sum_a P_a (x) exp(-i lam a P)`` with a grid probe."""

    values: np.ndarray
    projections: np.ndarray
    lam: float
    grid: GridSpec

    def __post_init__(self):
        projs = np.asarray(self.projections, dtype=complex)
        object.__setattr__(self, "projections", projs)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        dim = projs.shape[1]
        if np.abs(projs.sum(axis=0) - np.eye(dim)).max() > 1e-8:
            raise ValueError("branch projections do not resolve the identity")

    @property
    def probe_dim(self) -> int:
        return self.grid.n

    @property
    def dilated_dim(self) -> int:
        return self.projections.shape[1]

    def shifted_probe(self, probe_amps: np.ndarray) -> np.ndarray:
        return translate(self.grid, probe_amps, self.lam * self.values)

    def apply_product(self, sys_vecs: np.ndarray, probe_amps: np.ndarray) -> np.ndarray:
        shifted = self.shifted_probe(probe_amps)                         # (n, k)
        proj = np.einsum("kab,bc->kac", self.projections, sys_vecs)      # (k, D, c)
        return np.einsum("kac,yk->ayc", proj, shifted)

    def dense(self) -> np.ndarray:
        eye = np.eye(self.grid.n)
        return sum(np.kron(p, translate(self.grid, eye, self.lam * a))
                   for a, p in zip(self.values, self.projections))


@dataclass(frozen=True, eq=False)
class MeasurementScheme:
    """Probe state, coupling, pointer observable and pointer scale ``lam``.

    Outcome ``x`` of the scheme corresponds to pointer reading ``lam * x``.
    ``isometry`` (shape ``(D, d)``) embeds the system into system (x)
    ancilla before the coupling; ``None`` means no ancilla.
    """

    probe: StateVector
    coupling: DenseCoupling | BranchTranslation
    pointer: BinnedObservable
    pointer_scale: float = 1.0
    isometry: np.ndarray | None = None
    ancilla_dim: int = 1
    space: str = "finite"

    def __post_init__(self):
        if abs(self.probe.norm() - 1) > 1e-10:
            raise ValueError("probe state is not normalized")
        if self.pointer.dim != self.probe.dim or self.coupling.probe_dim != self.probe.dim:
            raise ValueError("pointer, coupling and probe dimensions disagree")
        if not self.pointer_scale > 0:
            raise ValueError("pointer scale must be positive")
        if self.isometry is not None:
            v = self.isometry
            if np.abs(v.conj().T @ v - np.eye(v.shape[1])).max() > 1e-10:
                raise ValueError("dilation map is not an isometry")

    @property
    def system_dim(self) -> int:
        if self.isometry is not None:
            return self.isometry.shape[1]
        return self.coupling.dilated_dim

    def embedding(self) -> np.ndarray:
        if self.isometry is not None:
            return self.isometry
        return np.eye(self.coupling.dilated_dim, dtype=complex)


def instrument_from_scheme(scheme: MeasurementScheme) -> Instrument:
    """Kraus form of ``I(X)(rho) = tr_K[U (rho (x) sigma) U^* (I (x) Z(f^-1 X))]``.

    ``K_{X,r} = sqrt(z_r) (I (x) <a| (x) <e_r|) U (V (x) |sigma>)`` where
    ``z_r, e_r`` diagonalize the pointer effect and ``a`` runs over the
    ancilla basis (partial trace).
    """
    d, m = scheme.system_dim, scheme.ancilla_dim
    g = scheme.coupling.apply_product(scheme.embedding(), scheme.probe.amps)
    g = g * np.sqrt(scheme.probe.weight)                                 # (D, k, d)
    ptr = scheme.pointer
    kraus = []
    if ptr.spectral:
        g = np.einsum("ayc,yb->abc", g, ptr.basis.conj())
        for w in ptr.weights:
            nz = np.nonzero(w > 0)[0]
            k = np.sqrt(w[nz])[None, :, None] * g[:, nz, :]              # (D, r, d)
            kraus.append(_split_ancilla(k, d, m))
    else:
        for e in ptr.effects:
            vals, vecs = np.linalg.eigh((e + e.conj().T) / 2)
            keep = vals > 1e-14
            k = np.einsum("ayc,yr->arc", g, vecs[:, keep].conj()) * np.sqrt(vals[keep])[None, :, None]
            kraus.append(_split_ancilla(k, d, m))
    bins = [b.scaled(1 / scheme.pointer_scale) for b in ptr.bins]
    return Instrument(bins, tuple(kraus), space=scheme.space)


def _split_ancilla(k: np.ndarray, d: int, m: int) -> np.ndarray:
    """(D, r, d) with D = d*m  ->  (r*m, d, d) Kraus stack."""
    r = k.shape[1]
    k = k.reshape(d, m, r, d).transpose(2, 1, 0, 3)
    return k.reshape(r * m, d, d) if r else np.zeros((0, d, d), dtype=complex)


def measured_observable(scheme: MeasurementScheme) -> BinnedObservable:
    return instrument_from_scheme(scheme).observable()


def scheme_probability(scheme: MeasurementScheme, rho: DensityOperator, sel) -> float:
    """Full-state route ``tr[U (V rho V^* (x) sigma) U^* (I (x) Z(f^-1 X))]``.

    Materializes the coupling densely, so only for small spaces.
    """
    v = scheme.embedding()
    sigma = scheme.probe.weight * np.outer(scheme.probe.amps, scheme.probe.amps.conj())
    big = np.kron(v @ rho.orthonormal() @ v.conj().T, sigma)
    u = scheme.coupling.dense()
    idx = _pointer_indices(scheme.pointer, sel)
    z = scheme.pointer.effect(idx)
    out = u @ big @ u.conj().T
    zz = np.kron(np.eye(scheme.coupling.dilated_dim), z)
    return float(np.einsum("ij,ji->", out, zz).real)


def _pointer_indices(pointer: BinnedObservable, sel) -> list[int]:
    if sel is None:
        return list(range(len(pointer)))
    if isinstance(sel, (int, np.integer)):
        return [int(sel)]
    return [int(s) for s in sel]


# --- standard model ---------------------------------------------------------

def branches(target) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, int]:
    """Eigenvalues, spectral projections, isometry and ancilla size.

    ``target`` may be a hermitian operator, a sharp or unsharp
    :class:`BinnedObservable` (unsharp ones are dilated), or a
    :class:`NaimarkDilation`.
    """
    if isinstance(target, NaimarkDilation):
        return target.values, target.projections, target.isometry, target.ancilla_dim
    if isinstance(target, BinnedObservable):
        if target.is_sharp():
            mats = target.matrices()
            keep = [i for i, e in enumerate(mats) if np.abs(e).max() > 1e-12]
            return target.centers[keep], mats[keep], None, 1
        return branches(naimark_dilate(target))
    a = np.asarray(target, dtype=complex)
    if np.abs(a - a.conj().T).max() > 1e-10:
        raise ValueError("coupling observable must be hermitian")
    vals, vecs = np.linalg.eigh((a + a.conj().T) / 2)
    groups: list[list[int]] = []
    for i, v in enumerate(vals):
        if groups and abs(v - vals[groups[-1][0]]) < 1e-9:
            groups[-1].append(i)
        else:
            groups.append([i])
    values = np.array([vals[g].mean() for g in groups])
    projs = np.stack([vecs[:, g] @ vecs[:, g].conj().T for g in groups])
    return values, projs, None, 1


def _check_probe_extent(probe: StateVector, lam: float, values: np.ndarray) -> None:
    grid = probe.grid
    dens = probe.weight * np.abs(probe.amps) ** 2
    mean = float(dens @ grid.x)
    std = float(np.sqrt(max(dens @ (grid.x - mean) ** 2, 0.0)))
    reach = lam * np.abs(values).max() + 5 * std
    if mean - reach < grid.x[0] or mean + reach > grid.x[-1]:
        need = abs(mean) + reach
        raise ValueError(f"probe grid too small: translations need half-extent >= {need:.3f}, have {grid.length / 2}")


def _translation_scheme(target, probe: StateVector, lam: float, pointer: BinnedObservable,
                        space: str) -> MeasurementScheme:
    if probe.grid is None:
        raise ValueError("the standard model needs a grid probe")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    values, projs, iso, m = branches(target)
    _check_probe_extent(probe, lam, values)
    coupling = BranchTranslation(values, projs, lam, probe.grid)
    return MeasurementScheme(probe, coupling, pointer, lam, iso, m, space)


def standard_model(target, probe: StateVector, lam: float, space: str = "finite") -> MeasurementScheme:
    """Scheme with coupling ``exp(-i lam A (x) P)`` and the probe position as pointer."""
    return _translation_scheme(target, probe, lam, position_observable(probe.grid), space)


def boost_scheme(target, probe: StateVector, lam: float, space: str = "finite") -> MeasurementScheme:
    """Same coupling as :func:`standard_model`, momentum of the probe as pointer."""
    return _translation_scheme(target, probe, lam, momentum_observable(probe.grid), space)


def standard_model_kraus(target, probe: StateVector, lam: float, x: float) -> np.ndarray:
    """``K_x = sqrt(lam) phi(-lam (A - x))`` on the (dilated) space."""
    values, projs, _, _ = branches(target)
    amp = np.sqrt(lam) * probe.evaluate(lam * (x - values))
    return np.einsum("k,kab->ab", amp, projs)


def standard_model_instrument(target, probe: StateVector, lam: float, space: str = "finite",
                              tol: float = 1e-4) -> Instrument:
    """Instrument of the standard model built from the functional ``K_x``.

    Pointer values are the probe grid points divided by ``lam``; each bin
    has weight ``dx/lam``.  Raises when ``sum_x K_x^* K_x dx`` deviates from
    the identity by more than ``tol``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    values, projs, iso, m = branches(target)
    _check_probe_extent(probe, lam, values)
    grid = probe.grid
    xs = grid.x / lam
    amps = np.sqrt(lam) * probe.evaluate(lam * (xs[:, None] - values[None, :]))   # (n, k)
    v = iso if iso is not None else np.eye(projs.shape[1], dtype=complex)
    pv = np.einsum("kab,bc->kac", projs, v)                                         # (k, D, d)
    d = v.shape[1]
    kraus = []
    for row in amps:
        kx = np.einsum("k,kac->ac", row, pv)[:, None, :]                             # (D, 1, d)
        kraus.append(_split_ancilla(kx, d, m))
    w = np.full(grid.n, grid.dx / lam)
    total = sum(wi * np.einsum("rba,rbc->ac", k.conj(), k) for wi, k in zip(w, kraus))
    err = np.abs(total - np.eye(d)).max()
    if err > tol:
        raise ValueError(f"pointer grid under-resolves the probe (deviation {err:.2e}); use finer pointer bins")
    return Instrument(point_bins(xs), tuple(kraus), w, space, tp_tol=tol)


# --- sequential measurements ------------------------------------------------

@dataclass(frozen=True, eq=False)
class JointObservable:
    """Sequential joint observable ``M(X_i x Y_j)``, effects ``(m1, m2, d, d)``."""

    first_bins: tuple
    second_bins: tuple
    effects: np.ndarray

    def margin1(self) -> np.ndarray:
        return self.effects.sum(axis=1)

    def margin2(self) -> np.ndarray:
        return self.effects.sum(axis=0)

    @property
    def dim(self) -> int:
        return self.effects.shape[-1]

    def validate(self, tol: float = 1e-9) -> None:
        eff = self.effects.reshape((-1,) + self.effects.shape[2:])
        if np.abs(eff.sum(axis=0) - np.eye(self.dim)).max() > tol:
            raise ValueError("joint effects do not sum to the identity")
        BinnedObservable(_product_bins(len(eff)), effects=eff)

    def to_json(self) -> dict:
        e = self.effects
        return {
            "first_bins": [[b.lo, b.hi] for b in self.first_bins],
            "second_bins": [[b.lo, b.hi] for b in self.second_bins],
            "effects": np.stack([e.real, e.imag], axis=-1).tolist(),
        }


def _product_bins(count: int) -> list[OutcomeBin]:
    return [OutcomeBin(i - 0.5, i + 0.5) for i in range(count)]


def sequential_compose(first: Instrument, second: BinnedObservable) -> JointObservable:
    """``M(X x Y) = I_1(X)^*(F(Y))``."""
    if first.dim != second.dim:
        raise ValueError("instrument and observable act on different spaces")
    mats = second.matrices()
    eff = np.stack([np.stack([first.dual(i, f) for f in mats]) for i in range(len(first.bins))])
    return JointObservable(first.bins, second.bins, eff)
