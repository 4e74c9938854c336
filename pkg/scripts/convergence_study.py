"""Convergence tables for the weak limits and the two reconstructions.

Writes CSV files into ``--out`` (default ``runs/convergence``):

- ``weak_limit.csv``: conditional-average error against lambda for both pointers
- ``lundeen_alpha.csv``: point error against alpha for the central interval
- ``lundeen_bins.csv``: fidelity against bin count
- ``phase_space.csv``: round-trip trace distance against kernel and state widths
"""
import argparse
import csv
import math
import warnings
from pathlib import Path

import numpy as np

from qmeasure.hilbert import coherent_state, density, gaussian_state, make_grid, mixture, trace_distance
from qmeasure.hilbert import qubit_ops, qubit_state
from qmeasure.observables import OutcomeBin, label_bins, sharp_observable
from qmeasure.reconstruction import (
    LundeenConfig,
    covariant_observable_kernel,
    husimi,
    lundeen_matrix_element,
    lundeen_point,
    lundeen_reconstruct,
    phase_space_grid,
    phase_space_reconstruct,
    postselection_mass,
)
from qmeasure.weak_values import WeakValueQuery, limit_series, weak_value


def write(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def weak_limit_table(lambdas):
    ops = qubit_ops()
    theta = 2 * math.pi / 5
    probe = gaussian_state(make_grid(256, 32), 1 / math.sqrt(2))
    f = sharp_observable(ops["sigma_x"], label_bins([-1, 1]))
    rows = []
    for chi in (0.0, 0.7):
        phi = qubit_state([math.cos(theta / 2), np.exp(1j * chi) * math.sin(theta / 2)])
        wv = weak_value(WeakValueQuery(ops["sigma_z"], f, 1, phi))
        for pointer, target in (("position", wv.real), ("momentum", wv.imag)):
            s = limit_series(ops["sigma_z"], f, 1, phi, probe, lambdas, pointer)
            for lam, val in zip(s.lambdas, s.values):
                rows.append([chi, pointer, lam, val, target, abs(val - target)])
            rows.append([chi, pointer, 0.0, s.extrapolated, target, abs(s.extrapolated - target)])
    return rows


def lundeen_alpha_table(alphas):
    g = make_grid(512, 40)
    eps = 4 * g.dp
    phi = gaussian_state(g, 1.0, 0.2, 0.1)
    interval = OutcomeBin(-0.5, 0.5)
    target = lundeen_matrix_element(phi, interval, eps) / postselection_mass(phi, eps)
    rows = []
    for a in alphas:
        pt = lundeen_point(phi, interval, a, eps)
        rows.append([a, pt.real, pt.imag, target.real, target.imag, abs(pt - target)])
    return rows


def lundeen_bins_table(ladder):
    g = make_grid(512, 32)
    phi = gaussian_state(g, 1.0)
    rows = []
    for n, a in ladder:
        rep = lundeen_reconstruct(phi, LundeenConfig(g, n_intervals=n, alpha=a))
        rows.append([n, a, rep.fidelity_vs_truth])
    return rows


def phase_space_table(kernel_widths):
    g = make_grid(512, 40)
    box = phase_space_grid(-8, 8, 64)
    states = {
        "gaussian_delta_1": density(gaussian_state(g, 1.0)),
        "coherent": density(coherent_state(g, 0.0, 0.0)),
        "coherent_mixture": mixture([coherent_state(g, -2.0, 0.0), coherent_state(g, 2.0, 0.0)], [0.5, 0.5]),
    }
    rows = []
    for kd in kernel_widths:
        kernel = covariant_observable_kernel(gaussian_state(g, kd), 1.0)
        for name, rho in states.items():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rep = phase_space_reconstruct(husimi(rho, kernel, box, box), kernel)
            rows.append([kd, name, trace_distance(rep.estimate, rho), rep.diagnostics["cone_distance"],
                         rep.diagnostics["mask_coverage"]])
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/convergence")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    lambdas = [0.4 / 2**k for k in range(6)]
    write(out / "weak_limit.csv", ["chi", "pointer", "lambda", "value", "target", "error"],
          weak_limit_table(lambdas))
    write(out / "lundeen_alpha.csv", ["alpha", "re", "im", "target_re", "target_im", "error"],
          lundeen_alpha_table([0.2 / 2**k for k in range(6)]))
    write(out / "lundeen_bins.csv", ["n_intervals", "alpha", "fidelity"],
          lundeen_bins_table([(16, 0.2), (32, 0.1), (64, 0.05), (128, 0.025), (256, 0.0125)]))
    write(out / "phase_space.csv", ["kernel_delta", "state", "trace_distance", "cone_distance", "mask_coverage"],
          phase_space_table([0.6, 1 / math.sqrt(2), 0.75, 0.8, 0.9, 1.0]))


if __name__ == "__main__":
    main()
