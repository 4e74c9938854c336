"""Weak-measurement tomography and phase-space inversion."""
import math

import numpy as np
import pytest
from scipy.linalg import dft, expm

from qmeasure.hilbert import (
    coherent_state,
    density,
    gaussian_state,
    make_grid,
    mixture,
    qubit_ops,
    trace_distance,
    wavefunction,
    weyl_apply,
)
from qmeasure.observables import OutcomeBin, PostselectionError
from qmeasure.reconstruction import (
    LundeenConfig,
    PhaseSpaceDistribution,
    characteristic_function,
    completeness_check,
    covariant_observable_kernel,
    husimi,
    lundeen_conditionals,
    lundeen_couple,
    lundeen_matrix_element,
    lundeen_point,
    lundeen_reconstruct,
    momentum_postselect,
    phase_space_grid,
    phase_space_reconstruct,
    postselection_mass,
    project_to_states,
)

SY = qubit_ops()["sigma_y"]
CENTER = OutcomeBin(-0.5, 0.5)


def dense_window(grid, eps):
    """Momentum-window projector from explicit DFT matrices."""
    f = dft(grid.n, scale="sqrtn")
    freqs = 2 * np.pi * np.fft.fftfreq(grid.n, grid.dx)
    return f.conj().T @ np.diag((np.abs(freqs) < eps / 2 - 1e-9).astype(float)) @ f


def dense_branches(phi, interval, alpha):
    q = np.diag(interval.contains(phi.grid.x).astype(float))
    start = np.kron(phi.amps, [1, 0])
    return (expm(-1j * alpha * np.kron(q, SY)) @ start).reshape(-1, 2)


# --- pointwise reconstruction ------------------------------------------------

class TestLundeenConfig:
    def test_defaults(self):
        g = make_grid(512, 32)
        cfg = LundeenConfig(g)
        assert cfg.eps == pytest.approx(4 * g.dp)
        assert cfg.scale == pytest.approx(2 * math.sin(0.05))
        assert len(cfg.intervals) == 64
        widths = {round(b.hi - b.lo, 12) for b in cfg.intervals}
        assert widths == {0.25}
        assert cfg.centers[0] == pytest.approx(-7.875)

    @pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=-0.1), dict(alpha=0.8),
                                    dict(eps=0.05), dict(window=(-20, 0)), dict(window=(1, 1)),
                                    dict(n_intervals=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            LundeenConfig(make_grid(512, 32), **kw)


class TestCoupling:
    def test_alpha_zero(self):
        phi = gaussian_state(make_grid(64, 16), 1.0, 0.3, 0.4)
        psi = lundeen_couple(phi, CENTER, 0.0).amps.reshape(-1, 2)
        np.testing.assert_array_equal(psi[:, 0], phi.amps)
        assert not np.any(psi[:, 1])

    def test_whole_grid_interval(self):
        g = make_grid(64, 16)
        phi = gaussian_state(g, 1.0)
        psi = lundeen_couple(phi, OutcomeBin(-8, 8), 0.3).amps.reshape(-1, 2)
        np.testing.assert_allclose(psi, np.outer(phi.amps, [math.cos(0.3), math.sin(0.3)]), atol=1e-15)

    @pytest.mark.parametrize("alpha", [0.05, 0.4, math.pi / 4])
    def test_matches_matrix_exponential(self, alpha):
        phi = gaussian_state(make_grid(64, 16), 1.0, 0.4, -0.7)
        psi = lundeen_couple(phi, CENTER, alpha)
        np.testing.assert_allclose(psi.amps.reshape(-1, 2), dense_branches(phi, CENTER, alpha), atol=1e-10)
        assert psi.norm() == pytest.approx(1.0, abs=1e-10)


class TestConditionals:
    def test_alpha_zero(self):
        g = make_grid(512, 40)
        psi = lundeen_couple(gaussian_state(g, 1.0), CENTER, 0.0)
        np.testing.assert_allclose(lundeen_conditionals(psi, 4 * g.dp, "x").weights, [0.5, 0.5], atol=1e-14)
        assert abs(lundeen_conditionals(psi, 4 * g.dp, "y").mean()) < 1e-14

    @pytest.mark.parametrize("pauli", ["x", "y"])
    def test_dense_oracle(self, pauli):
        g = make_grid(512, 40)
        eps = 4 * g.dp
        phi = gaussian_state(g, 1.0, 0.2, 0.1)
        win = dense_window(g, eps)
        br = win @ dense_branches(phi, CENTER, 0.1)
        sigma = qubit_ops()["sigma_" + pauli]
        plus = (np.eye(2) + sigma) / 2
        mass = g.dx * np.vdot(br, br).real
        p_plus = g.dx * np.einsum("ns,st,nt->", br.conj(), plus, br).real / mass
        got = lundeen_conditionals(lundeen_couple(phi, CENTER, 0.1), eps, pauli)
        np.testing.assert_array_equal(got.centers, [-1, 1])
        assert got.weights[1] == pytest.approx(p_plus, abs=1e-12)
        assert got.weights.sum() == pytest.approx(1.0, abs=1e-14)

    def test_bad_pauli(self):
        g = make_grid(64, 16)
        with pytest.raises(ValueError):
            lundeen_conditionals(lundeen_couple(gaussian_state(g, 1.0), CENTER, 0.1), 4 * g.dp, "z")

    def test_postselection_impossible(self):
        g = make_grid(512, 32)
        # sharp interval edges leak momentum once alpha > 0, so only the uncoupled state is empty
        psi = lundeen_couple(gaussian_state(g, 1.0, 0.0, 5.0), CENTER, 0.0)
        with pytest.raises(PostselectionError):
            lundeen_conditionals(psi, 4 * g.dp, "x")


class TestPoints:
    def test_matrix_element_oracle(self):
        g = make_grid(512, 40)
        phi = gaussian_state(g, 1.0, 0.2, 0.1)
        win = dense_window(g, 4 * g.dp)
        q = CENTER.contains(g.x)
        oracle = g.dx * np.vdot(win @ phi.amps, np.where(q, phi.amps, 0))
        assert lundeen_matrix_element(phi, CENTER, 4 * g.dp) == pytest.approx(oracle, abs=1e-13)
        assert postselection_mass(phi, 4 * g.dp) == pytest.approx(g.dx * np.vdot(win @ phi.amps, win @ phi.amps).real,
                                                                  abs=1e-13)

    def test_alpha_convergence(self):
        g = make_grid(512, 40)
        eps = 4 * g.dp
        phi = gaussian_state(g, 1.0, 0.2, 0.1)
        target = lundeen_matrix_element(phi, CENTER, eps) / postselection_mass(phi, eps)
        errs = [abs(lundeen_point(phi, CENTER, a, eps) - target) for a in (0.1, 0.05, 0.025)]
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios >= 3.5) & (ratios <= 4.5))
        assert errs[-1] < 1e-3 * abs(target)

    def test_band_limited_totals(self):
        g = make_grid(256, 32)
        amps = 1 + 0.5 * np.exp(1j * g.dp * g.x) + 0.3j * np.exp(-1j * g.dp * g.x)
        phi = wavefunction(g, amps).normalized()
        eps = 4 * g.dp
        np.testing.assert_allclose(momentum_postselect(g, phi.amps, eps), phi.amps, atol=1e-12)
        cfg = LundeenConfig(g, (-16, 16), 16, 1e-3, eps)
        rep = lundeen_reconstruct(phi, cfg)
        # sum_i <P phi|Q_i phi> = <phi|phi>, less a bias of order alpha^2
        assert abs(rep.raw_points.sum() - 1) < 1e-6
        assert np.all(rep.raw_points.real > 0)

    def test_displaced_gaussian_gives_nothing(self):
        g = make_grid(512, 32)
        phi = gaussian_state(g, 1.0, 0.0, 5.0)
        rep = lundeen_reconstruct(phi, LundeenConfig(g, alpha=1e-3))
        assert rep.diagnostics["postselection_mass"] < 1e-10
        assert rep.failed and rep.estimate is None and rep.fidelity_vs_truth == 0.0
        assert np.abs(rep.raw_points).max() < 1e-8


class TestLundeenReconstruct:
    def test_gaussian(self):
        g = make_grid(512, 32)
        phi = gaussian_state(g, 1.0)
        rep = lundeen_reconstruct(phi, LundeenConfig(g))
        assert rep.fidelity_vs_truth >= 0.99
        assert rep.estimate.norm() == pytest.approx(1.0, abs=1e-12)
        assert not rep.failed and rep.diagnostics["warnings"] == []
        for key in ("postselection_mass", "window_mass", "alpha", "eps", "n_intervals", "failure"):
            assert key in rep.diagnostics

    def test_refinement_ladder(self):
        g = make_grid(512, 32)
        phi = gaussian_state(g, 1.0)
        fids = [lundeen_reconstruct(phi, LundeenConfig(g, n_intervals=n, alpha=a)).fidelity_vs_truth
                for n, a in ((32, 0.1), (64, 0.05), (128, 0.025))]
        assert fids[0] < fids[1] < fids[2]

    def test_compact_bump_trend(self):
        g = make_grid(512, 32)
        r = g.x / 4
        amps = np.where(np.abs(r) < 1, np.exp(-1 / np.clip(1 - r**2, 1e-300, None)), 0)
        phi = wavefunction(g, amps).normalized()
        fids = [lundeen_reconstruct(phi, LundeenConfig(g, n_intervals=n, alpha=a)).fidelity_vs_truth
                for n, a in ((16, 0.1), (32, 0.05), (64, 0.025))]
        assert fids[0] < fids[1] < fids[2]
        assert fids[2] > 0.99

    def test_phase_convention(self):
        g = make_grid(512, 32)
        phi = gaussian_state(g, 1.0, 0.5, 0.3)
        rep = lundeen_reconstruct(phi, LundeenConfig(g))
        k = int(np.argmax(np.abs(rep.raw_points)))
        inside = LundeenConfig(g).intervals[k].contains(g.x)
        value = rep.estimate.amps[inside][0]
        assert abs(value.imag) < 1e-12 and value.real > 0
        assert rep.fidelity_vs_truth > 0.98

    def test_window_warning(self):
        g = make_grid(512, 32)
        rep = lundeen_reconstruct(gaussian_state(g, 1.0, 7.0), LundeenConfig(g))
        assert rep.diagnostics["window_mass"] < 0.9
        assert any("window" in w for w in rep.diagnostics["warnings"])

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            lundeen_reconstruct(gaussian_state(make_grid(256, 32), 1.0), LundeenConfig(make_grid(512, 32)))

    def test_json(self):
        g = make_grid(512, 32)
        rep = lundeen_reconstruct(gaussian_state(g, 1.0), LundeenConfig(g, n_intervals=8))
        out = rep.to_json()
        assert len(out["raw_points"]) == 8 and len(out["raw_points"][0]) == 2
        assert 0 <= out["fidelity"] <= 1


# --- phase space -------------------------------------------------------------

@pytest.fixture(scope="module")
def g40():
    return make_grid(512, 40)


@pytest.fixture(scope="module")
def kernel(g40):
    return covariant_observable_kernel(gaussian_state(g40, 1 / math.sqrt(2)), 1.0)


@pytest.fixture(scope="module")
def box():
    return phase_space_grid(-8, 8, 64)


def second_moment(state):
    dens = state.weight * np.abs(state.amps) ** 2
    mean = dens @ state.grid.x
    return dens @ (state.grid.x - mean) ** 2


class TestKernel:
    def test_real_even_probe_is_fixed(self, g40):
        probe = gaussian_state(g40, 0.9)
        k = covariant_observable_kernel(probe, 1.0)
        np.testing.assert_allclose(k.amps, probe.amps, atol=1e-12)

    def test_lambda_two_halves_width(self, g40):
        probe = gaussian_state(g40, 1.0)
        k = covariant_observable_kernel(probe, 2.0)
        assert second_moment(k) == pytest.approx(second_moment(probe) / 4, rel=1e-8)
        assert k.norm() == pytest.approx(1.0, abs=1e-10)

    def test_reflection_and_conjugation(self, g40):
        probe = gaussian_state(g40, 1.0, 1.5, 0.8)
        k = covariant_observable_kernel(probe, 1.0)
        mean_x = k.weight * np.abs(k.amps) ** 2 @ g40.x
        assert mean_x == pytest.approx(-1.5, abs=1e-8)
        # x -> -x and conjugation together keep the momentum sign
        grad = np.angle(k.amps[300] / k.amps[299]) / g40.dx
        assert grad == pytest.approx(0.8, abs=1e-8)

    def test_aliasing(self):
        with pytest.raises(ValueError, match="aliasing"):
            covariant_observable_kernel(gaussian_state(make_grid(64, 16), 1.0), 0.2)

    def test_rejects_lambda(self, g40):
        with pytest.raises(ValueError):
            covariant_observable_kernel(gaussian_state(g40, 1.0), 0.0)


class TestHusimi:
    def test_peak(self, g40, kernel):
        axis = np.linspace(-4, 4, 33)
        h = husimi(density(kernel), kernel, axis, axis)
        i, j = np.unravel_index(np.argmax(h.values), h.values.shape)
        assert axis[i] == 0 and axis[j] == 0
        assert h.values[i, j] == pytest.approx(1 / (2 * np.pi), abs=1e-12)

    def test_coherent_state_closed_form(self, g40, kernel, box):
        # |<a|b>|^2 = exp(-|a-b|^2 / 2) for coherent states with delta^2 = 1/2
        h = husimi(coherent_state(g40, 1.0, -0.5), kernel, box, box)
        q, p = np.meshgrid(box, box, indexing="ij")
        oracle = np.exp(-((q - 1) ** 2 + (p + 0.5) ** 2) / 2) / (2 * np.pi)
        np.testing.assert_allclose(h.values, oracle, atol=1e-10)

    def test_covariance(self, g40, kernel):
        phi = gaussian_state(g40, 1.2, 0.3, 0.2)
        q0, p0 = 1.0, -0.5
        moved = phi.with_amps(weyl_apply(g40, phi.amps, q0, p0))
        axis = np.arange(-4, 4, 0.25)
        h = husimi(phi, kernel, axis, axis, max_deficit=1.0)
        hm = husimi(moved, kernel, axis + q0, axis + p0, max_deficit=1.0)
        np.testing.assert_allclose(hm.values, h.values, atol=1e-8)

    def test_nonnegative_and_normalized(self, g40, kernel, box):
        rho = mixture([gaussian_state(g40, 1.0, 1.0), gaussian_state(g40, 0.8, -2.0, 1.0)], [0.3, 0.7])
        h = husimi(rho, kernel, box, box)
        assert h.values.min() >= 0
        assert h.total() == pytest.approx(1.0, abs=1e-3)

    def test_position_margin(self, g40, kernel, box):
        phi = gaussian_state(g40, 1.0, 0.7, 0.4)
        h = husimi(phi, kernel, box, box)
        dens = np.abs(phi.amps) ** 2
        # smeared density: int |phi(x)|^2 |k(x - q)|^2 dx by direct quadrature
        oracle = np.array([g40.dx * dens @ np.abs(kernel.evaluate(g40.x - q)) ** 2 for q in box])
        assert np.abs(h.q_margin() - oracle).sum() * h.dq < 2e-3

    def test_box_too_small(self, g40, kernel):
        axis = phase_space_grid(-1, 1, 16)
        with pytest.raises(ValueError, match="enlarge"):
            husimi(gaussian_state(g40, 1.0), kernel, axis, axis)

    def test_json(self, g40, kernel):
        axis = phase_space_grid(-6, 6, 8)
        d = husimi(gaussian_state(g40, 1.0), kernel, axis, axis, max_deficit=1.0).to_json()
        assert len(d["values"]) == 8 and len(d["values"][0]) == 8


class TestCompleteness:
    def test_characteristic_function_oracle(self, g40):
        phi = gaussian_state(g40, 0.9, 0.4, 0.6)
        # W_qp psi(x) = exp(i p x - i q p / 2) psi(x - q); q on the grid lattice is a roll
        for shift, p in ((8, 0.7), (-24, -1.3), (0, 2.0)):
            q = shift * g40.dx
            moved = np.exp(1j * p * g40.x - 0.5j * q * p) * np.roll(phi.amps, shift)
            oracle = g40.dx * np.vdot(phi.amps, moved)
            got = characteristic_function(phi, [q], [p])[0, 0]
            assert got == pytest.approx(oracle, abs=1e-10)

    def test_gaussian_kernel_has_no_zeros(self, kernel):
        axis = phase_space_grid(-6, 6, 48)
        low, zeros = completeness_check(kernel, axis, axis)
        assert zeros == 0.0 and low > 1e-12

    def test_two_gaussian_kernel_has_zeros(self, g40):
        a = gaussian_state(g40, 1 / math.sqrt(2), -8.0)
        b = gaussian_state(g40, 1 / math.sqrt(2), 8.0)
        k = wavefunction(g40, a.amps + b.amps).normalized()
        qs = np.array([-1.0, 0.0, 1.0])
        ps = np.pi / 16 * np.arange(-8, 9)
        low, zeros = completeness_check(k, qs, ps)
        assert zeros > 0
        # on q = 0 the overlap is exp(-p^2/4) cos(8p)
        direct = np.exp(-ps**2 / 4) * np.cos(8 * ps)
        np.testing.assert_allclose(characteristic_function(k, [0.0], ps)[0].real, direct, atol=1e-12)

    def test_min_overlap_decreases_with_box(self, kernel):
        lows = [completeness_check(kernel, phase_space_grid(-r, r, 32), phase_space_grid(-r, r, 32))[0]
                for r in (2, 4, 6)]
        assert lows[0] > lows[1] > lows[2]


@pytest.fixture(scope="module")
def coherent_round_trip(g40, kernel, box):
    rho = density(coherent_state(g40, 0.0, 0.0))
    return rho, phase_space_reconstruct(husimi(rho, kernel, box, box), kernel)


class TestPhaseSpaceReconstruct:
    def test_pure_coherent(self, coherent_round_trip):
        rho, rep = coherent_round_trip
        assert trace_distance(rep.estimate, rho) <= 1e-3
        assert rep.estimate.trace() == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(rep.estimate.orthonormal()).min() > -1e-12
        for key in ("cone_distance", "raw_trace", "mask_coverage", "tau"):
            assert key in rep.diagnostics

    def test_wider_gaussian_with_matched_kernel(self, g40, box):
        # a narrower kernel would drop chi_rho ~ 1e-3 outside the tau mask
        k = covariant_observable_kernel(gaussian_state(g40, 0.75), 1.0)
        rho = density(gaussian_state(g40, 1.0))
        rep = phase_space_reconstruct(husimi(rho, k, box, box), k)
        assert trace_distance(rep.estimate, rho) <= 1e-3

    def test_coherent_mixture(self, g40, kernel, box):
        rho = mixture([coherent_state(g40, -2.0, 0.0), coherent_state(g40, 2.0, 0.0)], [0.5, 0.5])
        rep = phase_space_reconstruct(husimi(rho, kernel, box, box), kernel)
        assert trace_distance(rep.estimate, rho) <= 5e-3

    def test_projection_idempotent(self, coherent_round_trip):
        _, rep = coherent_round_trip
        again, moved = project_to_states(rep.estimate)
        assert moved < 1e-6
        assert trace_distance(again, rep.estimate) < 1e-6

    def test_double_round_trip_stays_within_tolerance(self, g40, kernel, box, coherent_round_trip):
        rho, rep = coherent_round_trip
        twice = phase_space_reconstruct(husimi(rep.estimate, kernel, box, box), kernel)
        assert trace_distance(twice.estimate, rep.estimate) <= 1e-3

    def test_cone_distance_reported_honestly(self, coherent_round_trip):
        rho, rep = coherent_round_trip
        assert rep.diagnostics["cone_distance"] >= 0
        assert abs(rep.diagnostics["raw_trace"] - 1) < 1e-3

    def test_uniqueness(self, g40, kernel, box):
        rng = np.random.default_rng(11)
        hs = []
        for _ in range(2):
            parts = [coherent_state(g40, *rng.uniform(-1, 1, 2)) for _ in range(3)]
            c = rng.normal(size=3) + 1j * rng.normal(size=3)
            phi = wavefunction(g40, sum(ci * s.amps for ci, s in zip(c, parts))).normalized()
            hs.append(husimi(phi, kernel, box, box).values)
        assert np.abs(hs[0] - hs[1]).sum() * (box[1] - box[0]) ** 2 > 1e-6

    def test_incomplete_kernel_rejected(self, g40, box):
        a = gaussian_state(g40, 1 / math.sqrt(2), -4.0)
        b = gaussian_state(g40, 1 / math.sqrt(2), 4.0)
        k = wavefunction(g40, a.amps + b.amps).normalized()
        rho = density(coherent_state(g40, 0.5, -0.3))
        with pytest.raises(ValueError, match="not complete"):
            phase_space_reconstruct(husimi(rho, k, box, box), k)

    def test_coverage_warning(self, g40, kernel, box):
        rho = density(coherent_state(g40, 0.0, 0.0))
        h = husimi(rho, kernel, box, box)
        with pytest.warns(RuntimeWarning, match="covers only"):
            rep = phase_space_reconstruct(h, kernel, tau=0.5)
        assert rep.diagnostics["mask_coverage"] < 0.99
        assert rep.diagnostics["warnings"]

    def test_distribution_properties(self, box):
        vals = np.full((64, 64), 1 / 256.0)
        d = PhaseSpaceDistribution(box, box, vals)
        assert d.dq == d.dp == 0.25
        assert d.total() == pytest.approx(1.0)
        assert d.q_margin().shape == (64,)
