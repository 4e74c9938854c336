"""Experiment configurations and the five canned experiments."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import (
    StateVector,
    density,
    gaussian_state,
    make_grid,
    mixture,
    qubit_ops,
    qubit_state,
    trace_distance,
    wavefunction,
)
from .observables import PostselectionError, label_bins, sharp_observable
from .reconstruction import (
    LundeenConfig,
    completeness_check,
    covariant_observable_kernel,
    husimi,
    lundeen_reconstruct,
    phase_space_grid,
    phase_space_reconstruct,
)
from .weak_values import WeakValueQuery, prop1_realpart, prop2_imagpart, weak_value

EXPERIMENTS = ("prop1", "prop2", "lundeen", "lundeen-fail", "phasespace")
STATE_KINDS = ("gaussian", "mixture", "superposition")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class StateSpec:
    """Gaussian components ``(x0, p0)`` of width ``delta``.

    ``gaussian`` uses the first component, ``mixture`` mixes all of them
    with ``weights``, ``superposition`` adds them coherently.
    """

    kind: str = "gaussian"
    delta: float = 1.0
    centers: list = field(default_factory=lambda: [[0.0, 0.0]])
    weights: list = field(default_factory=lambda: [1.0])


@dataclass
class ExperimentConfig:
    experiment: str
    grid_n: int = 512
    grid_length: float = 32.0
    state: StateSpec = field(default_factory=StateSpec)
    # qubit query: phi = cos(theta/2)|0> + exp(i chi) sin(theta/2)|1>, postselect sigma_x = +1
    theta: float = 2 * math.pi / 5
    chi: float = 0.0
    lambdas: list = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    probe_delta: float = 1 / math.sqrt(2)
    probe_n: int = 256
    probe_length: float = 32.0
    alpha: float = 0.05
    # refinement ladder of [n_intervals, alpha] pairs
    ladder: list = field(default_factory=list)
    eps_factor: float = 4.0
    n_intervals: int = 64
    window: list = field(default_factory=lambda: [-8.0, 8.0])
    mass_threshold: float = 1e-10
    kernel_lambda: float = 1.0
    phase_box: list = field(default_factory=lambda: [-8.0, 8.0])
    phase_samples: int = 64
    completeness_box: list = field(default_factory=lambda: [-6.0, 6.0])
    tau: float = 1e-6
    significance: float = 1e-6
    seed: int = 0
    output_dir: str = "runs"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "configuration must be a mapping")
        names = {f.name: f for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ConfigError(key, "unknown field")
        if "experiment" not in data:
            raise ConfigError("experiment", "missing")
        kwargs = {}
        for key, value in data.items():
            if key == "state":
                kwargs[key] = _state_from(value)
            else:
                kwargs[key] = _coerce(key, value, names[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        for name, n in (("grid_n", self.grid_n), ("probe_n", self.probe_n)):
            if n < 16 or n > 4096 or n & (n - 1):
                raise ConfigError(name, f"must be a power of two in [16, 4096], got {n}")
        for name in ("grid_length", "probe_length", "probe_delta", "eps_factor", "kernel_lambda", "tau",
                     "mass_threshold", "significance"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        if not 0 < self.alpha <= math.pi / 4:
            raise ConfigError("alpha", f"must lie in (0, pi/4], got {self.alpha}")
        for step in self.ladder:
            if len(step) != 2 or step[0] < 1 or not float(step[0]).is_integer() or not 0 < step[1] <= math.pi / 4:
                raise ConfigError("ladder", f"entries must be [n_intervals >= 1, alpha in (0, pi/4]], got {step}")
        if self.eps_factor < 1:
            raise ConfigError("eps_factor", "epsilon must be at least dp (eps_factor >= 1)")
        lam = list(self.lambdas)
        if len(lam) < 3 or any(x <= 0 for x in lam) or any(b >= a for a, b in zip(lam, lam[1:])):
            raise ConfigError("lambdas", "need >= 3 positive, strictly decreasing values")
        for name in ("window", "phase_box", "completeness_box"):
            box = getattr(self, name)
            if len(box) != 2 or not box[0] < box[1]:
                raise ConfigError(name, "must be [lo, hi] with lo < hi")
        if self.n_intervals < 1:
            raise ConfigError("n_intervals", "must be positive")
        if self.phase_samples < 4:
            raise ConfigError("phase_samples", "must be at least 4")
        s = self.state
        if s.kind not in STATE_KINDS:
            raise ConfigError("state.kind", f"must be one of {STATE_KINDS}")
        if not s.delta > 0:
            raise ConfigError("state.delta", "must be positive")
        if not s.centers or any(len(c) != 2 for c in s.centers):
            raise ConfigError("state.centers", "must be a nonempty list of [x0, p0] pairs")
        if len(s.weights) != len(s.centers) or any(w < 0 for w in s.weights) or sum(s.weights) <= 0:
            raise ConfigError("state.weights", "need one nonnegative weight per center, not all zero")


def _coerce(name: str, value, f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        default = f.default
    elif f.default_factory is not dataclasses.MISSING:
        default = f.default_factory()
    else:
        default = ""
    try:
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            return [(list(map(float, v)) if isinstance(v, (list, tuple)) else float(v)) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"invalid value {value!r}") from None


def _state_from(value) -> StateSpec:
    if not isinstance(value, dict):
        raise ConfigError("state", "must be a mapping")
    names = {f.name: f for f in dataclasses.fields(StateSpec)}
    kwargs = {}
    for key, v in value.items():
        if key not in names:
            raise ConfigError(f"state.{key}", "unknown field")
        kwargs[key] = _coerce(f"state.{key}", v, names[key])
    return StateSpec(**kwargs)


# --- builders ---------------------------------------------------------------

def build_state(cfg: ExperimentConfig, grid=None):
    """Pure state for ``gaussian``/``superposition``, density operator for ``mixture``."""
    grid = grid or make_grid(cfg.grid_n, cfg.grid_length)
    s = cfg.state
    comps = [gaussian_state(grid, s.delta, x0, p0) for x0, p0 in s.centers]
    w = np.asarray(s.weights, dtype=float)
    if s.kind == "gaussian":
        return comps[0]
    if s.kind == "superposition":
        amps = sum(np.sqrt(wi) * c.amps for wi, c in zip(w, comps))
        return wavefunction(grid, amps).normalized()
    return mixture(comps, w / w.sum())


def qubit_query(cfg: ExperimentConfig):
    ops = qubit_ops()
    phi = qubit_state([math.cos(cfg.theta / 2), np.exp(1j * cfg.chi) * math.sin(cfg.theta / 2)])
    F = sharp_observable(ops["sigma_x"], label_bins([-1, 1]))
    return ops["sigma_z"], F, (1,), phi


def probe_state(cfg: ExperimentConfig) -> StateVector:
    return gaussian_state(make_grid(cfg.probe_n, cfg.probe_length), cfg.probe_delta)


# --- experiments ------------------------------------------------------------

@dataclass
class ExperimentResult:
    payload: dict
    exit_code: int = 0
    message: str = ""


def _run_prop(cfg: ExperimentConfig, which: str) -> ExperimentResult:
    target, F, Y, phi = qubit_query(cfg)
    fn = prop1_realpart if which == "prop1" else prop2_imagpart
    wv = weak_value(WeakValueQuery(target, F, Y, phi))
    series = fn(target, F, Y, phi, probe_state(cfg), cfg.lambdas)
    ratios = series.error_ratios()
    payload = {
        "query": {"observable": "sigma_z", "postselection": "sigma_x = +1", "theta": cfg.theta, "chi": cfg.chi},
        "weak_value": [wv.real, wv.imag],
        **series.to_json(),
        "error": abs(series.extrapolated - series.target),
        "error_ratios": ratios.tolist(),
        "monotone": bool(np.all(np.diff(series.errors()) <= 0)),
    }
    return ExperimentResult(payload)


def _lundeen_config(cfg: ExperimentConfig, grid, alpha=None, n_intervals=None) -> LundeenConfig:
    return LundeenConfig(grid, tuple(cfg.window), n_intervals or cfg.n_intervals, alpha or cfg.alpha,
                         cfg.eps_factor * grid.dp)


def _run_lundeen(cfg: ExperimentConfig) -> ExperimentResult:
    grid = make_grid(cfg.grid_n, cfg.grid_length)
    phi = build_state(cfg, grid)
    if not isinstance(phi, StateVector):
        raise ConfigError("state.kind", "pointwise reconstruction needs a pure state")
    lcfg = _lundeen_config(cfg, grid)
    report = lundeen_reconstruct(phi, lcfg, cfg.mass_threshold)
    payload = report.to_json()
    truth = phi.evaluate(lcfg.centers)
    payload["truth"] = np.column_stack([truth.real, truth.imag]).tolist()
    if report.estimate is not None:
        # step-function estimate, sampled at the interval centers
        est = report.estimate.amps[np.searchsorted(grid.x, lcfg.centers)]
        payload["estimate"] = np.column_stack([est.real, est.imag]).tolist()
    ladder = []
    for n, a in cfg.ladder:
        r = lundeen_reconstruct(phi, _lundeen_config(cfg, grid, a, int(n)), cfg.mass_threshold)
        ladder.append({"alpha": a, "n_intervals": int(n), "fidelity": r.fidelity_vs_truth})
    payload["ladder"] = ladder
    if report.failed:
        return ExperimentResult(payload, 2, report.diagnostics["failure"])
    return ExperimentResult(payload)


def _run_phasespace(cfg: ExperimentConfig) -> ExperimentResult:
    grid = make_grid(cfg.grid_n, cfg.grid_length)
    rho = build_state(cfg, grid)
    rho = density(rho) if isinstance(rho, StateVector) else rho
    kernel = covariant_observable_kernel(gaussian_state(grid, cfg.probe_delta), cfg.kernel_lambda)
    qs = phase_space_grid(cfg.phase_box[0], cfg.phase_box[1], cfg.phase_samples)
    cq = phase_space_grid(cfg.completeness_box[0], cfg.completeness_box[1], cfg.phase_samples)
    min_overlap, zero_fraction = completeness_check(kernel, cq, cq)
    if zero_fraction > 0:
        return ExperimentResult({"min_overlap": min_overlap, "zero_fraction": zero_fraction}, 2,
                                "kernel is not informationally complete on the box")
    dist = husimi(rho, kernel, qs, qs)
    report = phase_space_reconstruct(dist, kernel, grid, cfg.tau, cfg.significance)
    payload = {
        "min_overlap": min_overlap,
        "zero_fraction": zero_fraction,
        "husimi_total": dist.total(),
        "trace_distance": trace_distance(report.estimate, rho),
        "diagnostics": report.diagnostics,
        "husimi": dist.to_json(),
    }
    return ExperimentResult(payload)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Dispatch; postselection failures map to exit code 2."""
    try:
        if cfg.experiment in ("prop1", "prop2"):
            return _run_prop(cfg, cfg.experiment)
        if cfg.experiment in ("lundeen", "lundeen-fail"):
            return _run_lundeen(cfg)
        return _run_phasespace(cfg)
    except PostselectionError as exc:
        return ExperimentResult({"error": str(exc)}, 2, str(exc))
