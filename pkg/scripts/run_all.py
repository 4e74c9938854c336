"""Run every config in ``configs/`` and print one summary line per experiment.

Usage: python scripts/run_all.py [--out DIR] [--configs DIR]
"""
import argparse
import json
import os
from pathlib import Path

from qmeasure import cli

ROOT = Path(__file__).resolve().parents[1]


def headline(record: dict) -> str:
    res = record["result"]
    exp = record["experiment"]
    if exp in ("prop1", "prop2"):
        return f"limit={res['extrapolated']:.6f} target={res['target']:.6f} residual={res['residual']:.1e}"
    if exp.startswith("lundeen"):
        d = res["diagnostics"]
        ladder = " ".join(f"{s['fidelity']:.5f}" for s in res.get("ladder", []))
        return f"fidelity={res['fidelity']:.5f} mass={d['postselection_mass']:.2e} ladder=[{ladder}]"
    return f"trace_distance={res.get('trace_distance', float('nan')):.2e} zero_fraction={res['zero_fraction']}"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT), help="output root (runs/<experiment> is created below it)")
    ap.add_argument("--configs", default=str(ROOT / "configs"))
    args = ap.parse_args()
    os.environ[cli.OUTPUT_ROOT_ENV] = args.out

    worst = 0
    for path in sorted(Path(args.configs).glob("*.yaml")):
        code, record_path = cli.run(path)
        if record_path is None:
            print(f"{path.stem:14s} exit={code}  (no record)")
            worst = max(worst, code)
            continue
        record = json.loads(record_path.read_text(encoding="utf-8"))
        print(f"{path.stem:14s} exit={code}  {record['duration_s']:6.2f} s  {headline(record)}")
        # exit 2 is the expected outcome of the failure-mode config
        if code != 2 or record["experiment"] != "lundeen-fail":
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
