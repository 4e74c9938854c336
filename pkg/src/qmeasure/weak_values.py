"""Generalized weak values and their zero-coupling limits.

The weak value of ``E`` in ``phi`` conditioned by ``F(Y)`` is
``<phi|F(Y) E[1] phi> / <phi|F(Y) phi>``.  Its real part is the
``lam -> 0`` limit of the postselected pointer average of the standard
model (position pointer), its imaginary part the same limit for the boost
scheme (momentum pointer), given suitable probe states.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hilbert import StateVector, apply_momentum
from .instruments import Instrument, boost_scheme, instrument_from_scheme, standard_model_instrument
from .observables import BinnedObservable, NaimarkDilation, PostselectionError, first_moment

DEFAULT_LAMBDAS = (0.4, 0.2, 0.1, 0.05)
POSTSELECTION_TOL = 1e-12
PROBE_TOL = 1e-8


def moment_operator(target) -> np.ndarray:
    """``E[1]`` for an observable, a dilation, or a sharp operator ``A``."""
    if isinstance(target, BinnedObservable):
        return first_moment(target)
    if isinstance(target, NaimarkDilation):
        return target.first_moment()
    return np.asarray(target, dtype=complex)


@dataclass(frozen=True, eq=False)
class WeakValueQuery:
    E: object
    F: BinnedObservable
    Y: tuple
    phi: StateVector

    def __post_init__(self):
        object.__setattr__(self, "Y", tuple(int(y) for y in np.atleast_1d(self.Y)))
        if self.F.dim != self.phi.dim:
            raise ValueError("postselection observable and state dimensions differ")
        if self.postselection_probability() <= POSTSELECTION_TOL:
            raise PostselectionError("F(Y) phi vanishes: postselection impossible")

    def postselector(self) -> np.ndarray:
        return self.F.effect(self.Y)

    def postselection_probability(self) -> float:
        v = self.phi.amps
        return float(self.phi.weight * np.vdot(v, self.postselector() @ v).real)

    def describe(self) -> dict:
        return {"Y": list(self.Y), "F_bins": [[b.lo, b.hi] for b in self.F.bins], "dim": self.phi.dim}


def weak_value(q: WeakValueQuery) -> complex:
    v = q.phi.amps
    fy = q.postselector()
    num = q.phi.weight * np.vdot(v, fy @ (moment_operator(q.E) @ v))
    return complex(num / q.postselection_probability())


def pointer_moments(instr: Instrument, F: BinnedObservable, Y, phi: StateVector) -> tuple[float, float]:
    """``sum_x x <phi|I(dx)^*(F(Y)) phi>`` and ``<phi|I(R)^*(F(Y)) phi>``."""
    fy = F.effect(tuple(np.atleast_1d(Y)))
    v = phi.amps
    duals = instr.dual_each(fy)
    probs = phi.weight * np.einsum("i,mij,j->m", v.conj(), duals, v).real
    centers = np.array([b.center for b in instr.bins])
    # bins are ordered, so the reduction order is fixed
    return float(centers @ probs), float(probs.sum())


def conditional_average(instr: Instrument, F: BinnedObservable, Y, phi: StateVector) -> float:
    """Postselected pointer average; bin centers serve as outcome values."""
    num, den = pointer_moments(instr, F, Y, phi)
    if den <= POSTSELECTION_TOL:
        raise PostselectionError(f"conditioned mass {den:.3e} vanishes: postselection impossible")
    return num / den


@dataclass(frozen=True, eq=False)
class WeakLimitSeries:
    lambdas: np.ndarray
    values: np.ndarray
    extrapolated: float
    fit_residual: float
    target: float | None = None
    scheme: str = "position"
    extra: dict = field(default_factory=dict)

    def errors(self) -> np.ndarray:
        if self.target is None:
            raise ValueError("series has no target value")
        return np.abs(self.values - self.target)

    def error_ratios(self) -> np.ndarray:
        """``err(lam) / err(lam_next)`` along the ladder."""
        err = self.errors()
        return err[:-1] / err[1:]

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme,
            "series": [[float(l), float(v)] for l, v in zip(self.lambdas, self.values)],
            "extrapolated": self.extrapolated,
            "residual": self.fit_residual,
            "target": self.target,
        }


def extrapolate_weak_limit(lambdas, values) -> tuple[float, float]:
    """Least-squares fit ``a + b lam + c lam^2``; returns ``a`` and the max residual."""
    lam = np.asarray(lambdas, dtype=float)
    val = np.asarray(values, dtype=float)
    if lam.size < 3 or lam.size != val.size:
        raise ValueError("extrapolation needs at least 3 (lambda, value) pairs")
    if np.any(np.diff(lam) >= 0) or lam.min() <= 0:
        raise ValueError("lambdas must be positive and strictly decreasing")
    design = np.vander(lam, 3, increasing=True)
    coef, *_ = np.linalg.lstsq(design, val, rcond=None)
    resid = float(np.abs(design @ coef - val).max())
    return float(coef[0]), resid


def limit_series(target, F: BinnedObservable, Y, phi: StateVector, probe: StateVector,
                 lambdas=DEFAULT_LAMBDAS, pointer: str = "position") -> WeakLimitSeries:
    """Conditional averages along a coupling ladder, without probe checks."""
    lambdas = np.asarray(lambdas, dtype=float)
    vals = []
    for lam in lambdas:
        if pointer == "position":
            instr = standard_model_instrument(target, probe, lam)
        elif pointer == "momentum":
            instr = instrument_from_scheme(boost_scheme(target, probe, lam))
        else:
            raise ValueError(f"unknown pointer {pointer!r}")
        vals.append(conditional_average(instr, F, Y, phi))
    vals = np.array(vals)
    limit, resid = extrapolate_weak_limit(lambdas, vals)
    return WeakLimitSeries(lambdas, vals, limit, resid, scheme=pointer)


def probe_moments(probe: StateVector) -> dict[str, complex]:
    """``<Q>, <P>, <P^2>, <QP>, <PQ>`` of a grid probe."""
    grid, v, w = probe.grid, probe.amps, probe.weight
    x = grid.x
    pv = apply_momentum(grid, v)
    return {
        "Q": complex(w * np.vdot(v, x * v)),
        "P": complex(w * np.vdot(v, pv)),
        "P2": complex(w * np.vdot(pv, pv)),
        "QP": complex(w * np.vdot(v, x * pv)),
        "PQ": complex(w * np.vdot(v, apply_momentum(grid, x * v))),
    }


def _weak_value_of(target, F, Y, phi) -> complex:
    return weak_value(WeakValueQuery(target, F, Y, phi))


def prop1_realpart(target, F: BinnedObservable, Y, phi: StateVector, probe: StateVector,
                   lambdas=DEFAULT_LAMBDAS) -> WeakLimitSeries:
    """Position-pointer limit; the probe needs ``<Q> = 0`` and ``<QP> = i/2``.

    An unsharp ``E`` is coupled through its square-root dilation, whose
    disturbance does not vanish with ``lam``; the series then converges to
    a Lüders-type ratio rather than ``Re`` of the weak value.
    """
    m = probe_moments(probe)
    if abs(m["Q"]) > PROBE_TOL or abs(m["QP"] - 0.5j) > PROBE_TOL:
        raise ValueError(f"probe violates <Q> = 0, <QP> = i/2 (got {m['Q']:.3e}, {m['QP']:.6f})")
    wv = _weak_value_of(target, F, Y, phi)
    s = limit_series(target, F, Y, phi, probe, lambdas, "position")
    return WeakLimitSeries(s.lambdas, s.values, s.extrapolated, s.fit_residual, wv.real, "position",
                           {"weak_value": [wv.real, wv.imag]})


def prop2_imagpart(target, F: BinnedObservable, Y, phi: StateVector, probe: StateVector,
                   lambdas=DEFAULT_LAMBDAS) -> WeakLimitSeries:
    """Momentum-pointer limit; the probe needs ``<P> = 0`` and ``<P^2> = 1/2``."""
    m = probe_moments(probe)
    if abs(m["P"]) > PROBE_TOL or abs(m["P2"] - 0.5) > PROBE_TOL:
        raise ValueError(f"probe violates <P> = 0, <P^2> = 1/2 (got {m['P']:.3e}, {m['P2'].real:.9f})")
    wv = _weak_value_of(target, F, Y, phi)
    s = limit_series(target, F, Y, phi, probe, lambdas, "momentum")
    return WeakLimitSeries(s.lambdas, s.values, s.extrapolated, s.fit_residual, wv.imag, "momentum",
                           {"weak_value": [wv.real, wv.imag]})


def position_pointer_limit(target, F: BinnedObservable, Y, phi: StateVector, probe: StateVector) -> complex:
    """Zero-coupling limit of the unnormalized position-pointer moment.

    ``i <E[1]phi|F(Y)phi> <PQ> - i <F(Y)phi|E[1]phi> <QP>``, valid for probes
    with ``<Q> = 0``.
    """
    m = probe_moments(probe)
    e1 = moment_operator(target) @ phi.amps
    fy = F.effect(tuple(np.atleast_1d(Y))) @ phi.amps
    w = phi.weight
    return 1j * w * np.vdot(e1, fy) * m["PQ"] - 1j * w * np.vdot(fy, e1) * m["QP"]


def momentum_pointer_limit(target, F: BinnedObservable, Y, phi: StateVector, probe: StateVector) -> float:
    """``2 <P^2> Im <F(Y)phi|E[1]phi>``, valid for probes with ``<P> = 0``."""
    m = probe_moments(probe)
    e1 = moment_operator(target) @ phi.amps
    fy = F.effect(tuple(np.atleast_1d(Y))) @ phi.amps
    return float(2 * m["P2"].real * (phi.weight * np.vdot(fy, e1)).imag)
