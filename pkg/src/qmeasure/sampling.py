"""Random states, observables, instruments and schemes for property checks."""
from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group

from .hilbert import DensityOperator, StateVector, finite_state
from .instruments import DenseCoupling, Instrument, MeasurementScheme
from .observables import BinnedObservable, label_bins, sharp_observable


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_unitary(dim: int, rng=None) -> np.ndarray:
    rng = _rng(rng)
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
    return unitary_group.rvs(dim, random_state=rng)


def random_state(dim: int, rng=None) -> StateVector:
    rng = _rng(rng)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return finite_state(v / np.linalg.norm(v))


def random_density(dim: int, rank: int | None = None, rng=None) -> DensityOperator:
    """Ginibre-distributed density matrix of the given rank."""
    rng = _rng(rng)
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return DensityOperator(rho / np.trace(rho).real)


def random_isometry(rows: int, cols: int, rng=None) -> np.ndarray:
    rng = _rng(rng)
    g = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_povm(dim: int, outcomes: int, rng=None) -> BinnedObservable:
    """POVM ``E_i = V^* (I (x) |i><i|) V`` from a random isometry."""
    rng = _rng(rng)
    v = random_isometry(dim * outcomes, dim, rng).reshape(outcomes, dim, dim)
    eff = np.einsum("iab,iac->ibc", v.conj(), v)
    eff = (eff + eff.conj().transpose(0, 2, 1)) / 2
    return BinnedObservable(label_bins(range(outcomes)), effects=eff)


def random_instrument(dim: int, outcomes: int, kraus_rank: int = 2, rng=None) -> Instrument:
    """Instrument whose Kraus operators are blocks of one random isometry."""
    rng = _rng(rng)
    v = random_isometry(dim * outcomes * kraus_rank, dim, rng)
    kraus = v.reshape(outcomes, kraus_rank, dim, dim)
    return Instrument(label_bins(range(outcomes)), tuple(kraus))


def random_scheme(dim: int, probe_dim: int, outcomes: int, rng=None) -> MeasurementScheme:
    """Random unitary coupling, random probe and a random sharp pointer.

    Pointer eigenvalues are drawn from ``range(outcomes)`` so that every
    outcome label is a bin; labels may end up with empty effects.
    """
    rng = _rng(rng)
    u = random_unitary(dim * probe_dim, rng)
    probe = random_state(probe_dim, rng)
    labels = rng.integers(0, outcomes, size=probe_dim)
    basis = random_unitary(probe_dim, rng)
    op = (basis * labels) @ basis.conj().T
    pointer = sharp_observable(op, label_bins(range(outcomes)))
    return MeasurementScheme(probe, DenseCoupling(u, probe_dim), pointer)
