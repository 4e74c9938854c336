"""Command line runner: ``run``, ``emit-plots`` and ``validate``.

Exit codes: 0 success, 1 runtime failure (e.g. a locked output directory),
2 postselection impossible, 3 invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import yaml

from . import __version__
from .experiments import ConfigError, ExperimentConfig, run_experiment

OUTPUT_ROOT_ENV = "QMEASURE_OUTPUT_ROOT"
EXIT_OK, EXIT_RUNTIME, EXIT_POSTSELECTION, EXIT_CONFIG = 0, 1, 2, 3

log = logging.getLogger("qmeasure")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("<file>", f"{path} does not exist")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def output_dir(cfg: ExperimentConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    return root / cfg.output_dir / cfg.experiment


@contextmanager
def locked(directory: Path):
    """Exclusive lockfile; a second run on the same directory fails fast."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(f"output directory {directory} is locked by another run") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def run(config_path) -> tuple[int, Path | None]:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG, None
    out = output_dir(cfg)
    try:
        with locked(out):
            start = time.perf_counter()
            try:
                result = run_experiment(cfg)
            except ConfigError as exc:
                log.error("invalid configuration: %s", exc)
                return EXIT_CONFIG, None
            except ValueError as exc:
                log.error("invalid parameters: %s", exc)
                return EXIT_CONFIG, None
            record = {
                "experiment": cfg.experiment,
                "config": cfg.to_dict(),
                "result": result.payload,
                "exit_code": result.exit_code,
                "message": result.message,
                "duration_s": time.perf_counter() - start,
                "version": __version__,
            }
            path = out / "record.json"
            path.write_text(json.dumps(record, indent=1), encoding="utf-8")
            emit_plots(record, out)
    except RuntimeError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME, None
    if result.exit_code == EXIT_POSTSELECTION:
        log.warning("postselection impossible: %s", result.message)
    log.info("wrote %s", path)
    return result.exit_code, path


def emit_plots(record, out_dir=None) -> list[Path]:
    """Write plot-ready CSV/JSON files for a record (dict or path)."""
    if not isinstance(record, dict):
        p = Path(record)
        record = json.loads(p.read_text(encoding="utf-8"))
        out_dir = out_dir or p.parent
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = record["result"]
    exp = record["experiment"]
    written = []
    if exp in ("prop1", "prop2"):
        path = out / "series.csv"
        _write_csv(path, ["lambda", "conditional_average"], res["series"])
        written.append(path)
    elif exp in ("lundeen", "lundeen-fail") and "raw_points" in res:
        cfg = record["config"]
        diag = res["diagnostics"]
        est = res.get("estimate")
        rows = []
        for i, (x, (xi, eta), (tr, ti)) in enumerate(zip(res["centers"], res["raw_points"], res["truth"])):
            er, ei = est[i] if est else ("", "")
            rows.append([x, xi, eta, er, ei, tr, ti, diag["alpha"], diag["eps"],
                         diag["postselection_mass"], diag["failure"] or ""])
        path = out / "lundeen_points.csv"
        _write_csv(path, ["x", "xi", "eta", "estimate_re", "estimate_im", "truth_re", "truth_im",
                          "alpha", "eps", "postselection_mass", "failure"], rows)
        written.append(path)
    elif exp == "phasespace" and "husimi" in res:
        h = res["husimi"]
        path = out / "husimi.csv"
        _write_csv(path, [f"p{j}" for j in range(len(h["ps"]))], h["values"])
        header = out / "husimi.json"
        header.write_text(json.dumps({
            "rows": "q", "columns": "p", "qs": h["qs"], "ps": h["ps"],
            "dq": h["qs"][1] - h["qs"][0], "dp": h["ps"][1] - h["ps"][0],
        }, indent=1), encoding="utf-8")
        written += [path, header]
    return written


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qmeasure", description="Measurement-theory experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config")
    p_plot = sub.add_parser("emit-plots", help="write plot-ready tables for a record")
    p_plot.add_argument("record")
    p_plot.add_argument("--out", default=None)
    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "run":
        code, path = run(args.config)
        if path is not None:
            print(path)
        return code
    if args.command == "emit-plots":
        for p in emit_plots(args.record, args.out):
            print(p)
        return EXIT_OK
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {cfg.experiment}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
