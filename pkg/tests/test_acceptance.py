"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run directly (``python tests/test_acceptance.py``) or through pytest; the
lines are collected in ``REPORT`` and echoed in the terminal summary.
"""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from qmeasure.experiments import ExperimentConfig, run_experiment
from qmeasure.hilbert import (
    coherent_state,
    density,
    gaussian_state,
    make_grid,
    mixture,
    qubit_ops,
    qubit_state,
    trace_distance,
)
from qmeasure.instruments import (
    apply_instrument,
    instrument_from_scheme,
    measured_observable,
    scheme_probability,
    sequential_compose,
    standard_model,
)
from qmeasure.observables import (
    ProbabilityMeasure,
    convolve,
    first_moment,
    label_bins,
    naimark_dilate,
    position_observable,
    sharp_observable,
    smearing_measure,
)
from qmeasure.reconstruction import (
    LundeenConfig,
    completeness_check,
    covariant_observable_kernel,
    husimi,
    lundeen_reconstruct,
    phase_space_grid,
    phase_space_reconstruct,
)
from qmeasure.sampling import random_density, random_instrument, random_povm, random_scheme, random_unitary
from qmeasure.weak_values import prop1_realpart, prop2_imagpart

REPORT: list[str] = []

OPS = qubit_ops()
THETA = 2 * math.pi / 5


@contextmanager
def criterion(number: int, title: str):
    start = time.perf_counter()
    info: dict = {}
    try:
        yield info
    except BaseException as exc:
        detail = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        REPORT.append(f"criterion {number} FAIL  {title}  ({time.perf_counter() - start:.1f} s)  {detail}")
        raise
    extra = "  ".join(f"{k}={v}" for k, v in info.items())
    REPORT.append(f"criterion {number} PASS  {title}  ({time.perf_counter() - start:.1f} s)  {extra}")


def qubit_query(chi=0.0):
    phi = qubit_state([math.cos(THETA / 2), np.exp(1j * chi) * math.sin(THETA / 2)])
    f = sharp_observable(OPS["sigma_x"], label_bins([-1, 1]))
    return OPS["sigma_z"], f, 1, phi


def dense_weak_value(chi=0.0):
    """2x2 arithmetic with F(Y) = |+><+|."""
    phi = np.array([math.cos(THETA / 2), np.exp(1j * chi) * math.sin(THETA / 2)])
    plus = np.array([1, 1]) / math.sqrt(2)
    f = np.outer(plus, plus)
    return np.vdot(phi, f @ np.diag([1, -1]) @ phi) / np.vdot(phi, f @ phi)


def compare_on_lattice(obs, conv, tol):
    """Largest effect deviation; bins missing from ``obs`` must carry no weight."""
    lookup = {round(b.center, 9): i for i, b in enumerate(obs.bins)}
    worst = 0.0
    for j, b in enumerate(conv.bins):
        i = lookup.get(round(b.center, 9))
        e = conv.effect(j)
        worst = max(worst, np.abs(e).max() if i is None else np.abs(obs.effect(i) - e).max())
    assert worst < tol, f"deviation {worst:.2e}"
    return worst


def test_criterion_1_three_level_consistency():
    with criterion(1, "three-level consistency") as info:
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(20):
            d = int(rng.integers(1, 33))
            s = random_scheme(d, int(rng.integers(1, 4)), int(rng.integers(2, 5)), rng)
            rho = random_density(d, rng=rng)
            instr = instrument_from_scheme(s)
            obs = instr.observable()
            m = len(obs.bins)
            sel = [i for i in range(m) if rng.random() < 0.5] or [0]
            p_obs = sum(np.trace(rho.orthonormal() @ obs.effect(i)).real for i in sel)
            p_ins = apply_instrument(instr, sel, rho).trace()
            p_sch = scheme_probability(s, rho, sel)
            worst = max(worst, abs(p_obs - p_ins), abs(p_obs - p_sch))
        elapsed = time.perf_counter() - start
        info.update(worst=f"{worst:.1e}")
        assert worst < 1e-8, f"worst deviation {worst:.2e}"
        assert elapsed < 10, f"took {elapsed:.1f} s"


def test_criterion_2_standard_model_smearing():
    with criterion(2, "standard-model smearing") as info:
        start = time.perf_counter()
        probe = gaussian_state(make_grid(256, 32), 1.0)
        qubit = sharp_observable(OPS["sigma_z"], label_bins([-1, 1]))
        position = position_observable(make_grid(16, 16))
        worst = 0.0
        for lam in (0.5, 1.0):
            mu = smearing_measure(probe, lam)
            obs = measured_observable(standard_model(OPS["sigma_z"], probe, lam))
            worst = max(worst, compare_on_lattice(obs, convolve(mu, qubit.dense()), 1e-6))
            obs = measured_observable(standard_model(position, probe, lam, "grid"))
            worst = max(worst, compare_on_lattice(obs, convolve(mu, position), 1e-6))
        elapsed = time.perf_counter() - start
        info.update(worst=f"{worst:.1e}")
        assert elapsed < 30, f"took {elapsed:.1f} s"


def test_criterion_3_dilation_independence():
    with criterion(3, "dilation independence") as info:
        povm = random_povm(2, 3, rng=31)
        probe = gaussian_state(make_grid(128, 24), 1.0)
        d1 = naimark_dilate(povm)
        d2 = d1.rotated(random_unitary(3, 32))
        assert np.abs(d1.isometry - d2.isometry).max() > 0.1, "dilations coincide"
        o1 = measured_observable(standard_model(d1, probe, 1.0)).matrices()
        o2 = measured_observable(standard_model(d2, probe, 1.0)).matrices()
        worst = np.abs(o1 - o2).max()
        info.update(worst=f"{worst:.1e}")
        assert worst < 1e-8, f"deviation {worst:.2e}"


@pytest.fixture(scope="module")
def weak_probe():
    return gaussian_state(make_grid(256, 32), 1 / math.sqrt(2))


def test_criterion_4_position_pointer_limit(weak_probe):
    with criterion(4, "position pointer -> Re weak value") as info:
        start = time.perf_counter()
        s = prop1_realpart(*qubit_query(), weak_probe)
        elapsed = time.perf_counter() - start
        target = dense_weak_value().real
        err = abs(s.extrapolated - target)
        ratios = s.error_ratios()
        info.update(err=f"{err:.1e}", residual=f"{s.fit_residual:.1e}", ratios=np.round(ratios, 3).tolist())
        assert abs(s.target - target) < 1e-14
        assert err < 1e-3, f"error {err:.2e}"
        assert s.fit_residual < 1e-4, f"residual {s.fit_residual:.2e}"
        assert np.all((ratios >= 3.5) & (ratios <= 4.5)), f"ratios {ratios}"
        assert elapsed < 60


def test_criterion_5_momentum_pointer_limit(weak_probe):
    with criterion(5, "momentum pointer -> Im weak value") as info:
        errs = []
        # chi = 0 is the literal query (Im w = 0); chi = 0.7 makes the target nonzero
        for chi in (0.0, 0.7):
            s = prop2_imagpart(*qubit_query(chi), weak_probe)
            target = dense_weak_value(chi).imag
            errs.append(abs(s.extrapolated - target))
        info.update(err_chi0=f"{errs[0]:.1e}", err_chi07=f"{errs[1]:.1e}")
        assert max(errs) < 1e-3, f"errors {errs}"


def test_criterion_6_lundeen_success():
    with criterion(6, "weak-measurement reconstruction") as info:
        start = time.perf_counter()
        g = make_grid(512, 32)
        phi = gaussian_state(g, 1.0)
        fid = lundeen_reconstruct(phi, LundeenConfig(g, n_intervals=64, alpha=0.05)).fidelity_vs_truth
        ladder = [lundeen_reconstruct(phi, LundeenConfig(g, n_intervals=n, alpha=a)).fidelity_vs_truth
                  for n, a in ((32, 0.1), (64, 0.05), (128, 0.025))]
        elapsed = time.perf_counter() - start
        info.update(fidelity=f"{fid:.5f}", ladder=[round(f, 5) for f in ladder])
        assert fid >= 0.99, f"fidelity {fid}"
        assert ladder[0] < ladder[1] < ladder[2], f"ladder {ladder}"
        assert elapsed < 120


def test_criterion_7_lundeen_failure():
    with criterion(7, "weak-measurement reconstruction failure") as info:
        cfg = ExperimentConfig.from_dict({
            "experiment": "lundeen-fail",
            "state": {"kind": "gaussian", "delta": 1.0, "centers": [[0.0, 5.0]], "weights": [1.0]},
            "alpha": 1e-3,
        })
        res = run_experiment(cfg)
        mass = res.payload["diagnostics"]["postselection_mass"]
        peak = float(np.abs(np.array(res.payload["raw_points"])).max())
        info.update(mass=f"{mass:.1e}", max_point=f"{peak:.1e}", exit_code=res.exit_code)
        assert mass < 1e-10
        assert res.exit_code == 2
        assert peak < 1e-8, f"largest point {peak:.2e}"


def test_criterion_8_phase_space_round_trip():
    with criterion(8, "phase-space round trip") as info:
        start = time.perf_counter()
        g = make_grid(512, 40)
        kernel = covariant_observable_kernel(coherent_state(g, 0.0, 0.0), 1.0)
        # on [-8, 8]^2 the corner overlaps exp(-32) fall under the 1e-12 zero threshold
        cq = phase_space_grid(-6, 6, 64)
        _, zeros = completeness_check(kernel, cq, cq)
        box = phase_space_grid(-8, 8, 64)
        pure = density(coherent_state(g, 0.0, 0.0))
        mix = mixture([coherent_state(g, -2.0, 0.0), coherent_state(g, 2.0, 0.0)], [0.5, 0.5])
        d_pure = trace_distance(phase_space_reconstruct(husimi(pure, kernel, box, box), kernel).estimate, pure)
        d_mix = trace_distance(phase_space_reconstruct(husimi(mix, kernel, box, box), kernel).estimate, mix)
        elapsed = time.perf_counter() - start
        info.update(zero_fraction=zeros, pure=f"{d_pure:.1e}", mixture=f"{d_mix:.1e}")
        assert zeros == 0
        assert d_pure <= 1e-3, f"pure {d_pure:.2e}"
        assert d_mix <= 5e-3, f"mixture {d_mix:.2e}"
        assert elapsed < 120


def test_criterion_9_invariant_suite():
    with criterion(9, "randomized POVM / instrument invariants") as info:
        rng = np.random.default_rng(99)
        start = time.perf_counter()
        checks = 0
        for _ in range(50):
            # positivity
            povm = random_povm(int(rng.integers(1, 9)), int(rng.integers(2, 6)), rng)
            assert np.linalg.eigvalsh(povm.matrices()).min() > -1e-12
            checks += 1
        for _ in range(50):
            # normalization of observables and of the total instrument map
            d = int(rng.integers(1, 9))
            instr = random_instrument(d, int(rng.integers(1, 5)), int(rng.integers(1, 3)), rng)
            assert np.abs(instr.observable().matrices().sum(axis=0) - np.eye(d)).max() < 1e-10
            assert abs(apply_instrument(instr, None, random_density(d, rng=rng)).trace() - 1) < 1e-10
            checks += 1
        for _ in range(50):
            # the first margin is the observable measured first
            d = int(rng.integers(1, 9))
            first = random_instrument(d, int(rng.integers(2, 4)), 2, rng)
            joint = sequential_compose(first, random_povm(d, int(rng.integers(2, 4)), rng))
            assert np.abs(joint.margin1() - first.observable().matrices()).max() < 1e-10
            checks += 1
        for _ in range(50):
            # moment additivity: (mu * E)[1] = mu[1] I + E[1]
            d = int(rng.integers(1, 7))
            povm = random_povm(d, int(rng.integers(2, 5)), rng)
            w = rng.random(int(rng.integers(1, 5)))
            mu = ProbabilityMeasure(label_bins(list(range(-1, len(w) - 1))), w / w.sum())
            lhs = first_moment(convolve(mu, povm))
            rhs = mu.mean() * np.eye(d) + first_moment(povm)
            assert np.abs(lhs - rhs).max() < 1e-10
            checks += 1
        elapsed = time.perf_counter() - start
        info.update(checks=checks)
        assert checks == 200
        assert elapsed < 60, f"took {elapsed:.1f} s"


if __name__ == "__main__":
    import sys

    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
