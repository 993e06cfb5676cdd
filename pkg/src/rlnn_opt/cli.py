"""Command-line harness for the benchmark experiments.

    rlnn-bench converge|pv-dist|exposure|lsm-interp|all [--config PATH] [--out DIR]
               [--seed N] [--fine] [--measure rn|real] [--scenario 1..4]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, svgplot
from .bench import Benchmark, convergence_race, epochs_to_tolerance, interpolation_errors, split_modes
from .bermudan_engine import BermudanSpec, save_model
from .cos import price_cos
from .config import ConfigError, ExperimentConfig, load_config, moneyness_label
from .exposure import PROFILE_COLUMNS, QUANTILE_METHOD, horizons_for, midpoints, write_profiles
from .hedge_net import TrainingError

log = logging.getLogger("rlnn_opt.cli")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

CONVERGE_COLUMNS = ["mode", "epoch", "price", "reference", "error"]
PV_COLUMNS = ["t", "path", "spot", "V_rlnn", "V_lsm", "V_cos", "err_rlnn", "err_lsm"]
INTERP_COLUMNS = PROFILE_COLUMNS + ["EE_err_vs_true_fit", "PFE_err_vs_true_fit"]


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in columns})


class Run:
    """Collects outputs, schemas and timings for the manifest."""

    def __init__(self, config: ExperimentConfig, out: Path, command: str):
        self.config, self.out, self.command = config, out, command
        self.outputs, self.schemas, self.stages = [], {}, {}
        out.mkdir(parents=True, exist_ok=True)

    def header(self):
        m = self.config.market
        return {"s0": m.s0, "r": m.r, "sigma": m.sigma,
                "note": "risk-neutral defaults are configurable assumptions"}

    def csv(self, name, columns, rows):
        path = self.out / name
        write_rows(path, columns, rows)
        self.outputs.append(path)
        self.schemas[name] = columns
        return path

    def add(self, path):
        self.outputs.append(Path(path))

    def stage(self, name, seconds):
        self.stages[name] = round(seconds, 3)

    def finish(self, status="ok", error=None):
        snapshot = self.config.to_dict()
        canonical = json.dumps(snapshot, sort_keys=True).encode()
        schema_path = self.out / "schema.json"
        schema_path.write_text(json.dumps({"csv_columns": self.schemas,
                                           "pfe_quantile": QUANTILE_METHOD}, indent=2, sort_keys=True))
        outputs = sorted(set(self.outputs + [schema_path]))
        manifest = {
            "command": self.command,
            "status": status,
            "error": error,
            "package_version": __version__,
            "market_header": self.header(),
            "config": snapshot,
            "input_hash": hashlib.sha256(canonical + __version__.encode()).hexdigest(),
            "outputs": {p.name: _sha256(p) for p in outputs if p.exists()},
            "wall_clock_s": self.stages,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _spec(cfg: ExperimentConfig, moneyness) -> BermudanSpec:
    return BermudanSpec.regular(moneyness * cfg.market.s0, cfg.spec.side, cfg.spec.maturity, cfg.spec.n_exercise)


def _fine_times(cfg, spec):
    return np.asarray(cfg.fine_grid.times, dtype=float) if cfg.fine_grid.times else midpoints(spec)


def _benchmark(cfg, spec):
    return Benchmark(cfg.market_params(), spec, cfg.training, cfg.cos, cfg.paths.n_train, cfg.paths.seed)


def cmd_converge(cfg: ExperimentConfig, run: Run):
    for m in cfg.spec.moneyness:
        label = moneyness_label(m)
        spec = _spec(cfg, m)
        start = time.perf_counter()
        reference = price_cos(cfg.market_params(), spec, cfg.cos)
        rows = convergence_race(cfg.market_params(), spec, cfg.training, cfg.paths.n_converge,
                                cfg.paths.seed, cfg.convergence.max_epochs, reference)
        path = run.csv(f"converge_{label}.csv", CONVERGE_COLUMNS, rows)
        svg = run.out / f"converge_{label}.svg"
        svgplot.plot_convergence(path, svg, f"{label} Bermudan {cfg.spec.side}: convergence")
        run.add(svg)
        errs = split_modes(rows)
        for mode, e in errs.items():
            log.info("%s %s: epochs to |error| < %g: %s", label, mode, cfg.convergence.tol,
                     epochs_to_tolerance(e, cfg.convergence.tol))
        run.stage(f"converge_{label}", time.perf_counter() - start)


def cmd_pv_dist(cfg: ExperimentConfig, run: Run):
    for m in cfg.spec.moneyness:
        label = moneyness_label(m)
        spec = _spec(cfg, m)
        start = time.perf_counter()
        bench = _benchmark(cfg, spec)
        paths = bench.validation(cfg.paths.n_validation)
        path = run.csv(f"pv_dist_{label}.csv", PV_COLUMNS, bench.pv_distribution(paths))
        svgplot.plot_pv(path, run.out / f"pv_dist_{label}", f"{label}")
        for t in spec.times:
            run.add(run.out / f"pv_dist_{label}_t{t:.4f}.svg")
        model_path = run.out / f"rlnn_model_{label}.json"
        save_model(bench.rlnn, model_path)
        run.add(model_path)
        run.stage(f"pv_dist_{label}", time.perf_counter() - start)


def cmd_exposure(cfg: ExperimentConfig, run: Run, measure="rn", scenario=None, fine=False):
    if measure == "rn":
        labels = [None]
    else:
        labels = [str(scenario)] if scenario else sorted(cfg.scenarios)
    for m in cfg.spec.moneyness:
        label = moneyness_label(m)
        spec = _spec(cfg, m)
        start = time.perf_counter()
        bench = _benchmark(cfg, spec)
        fine_times = _fine_times(cfg, spec) if fine else np.array([])
        horizons = horizons_for(spec, fine_times)
        for sc in labels:
            rw = None if sc is None else cfg.real_world(sc)
            paths = bench.validation(cfg.paths.n_validation, horizons, rw=rw)
            profs = bench.exposures(paths, fine_times, scenario="" if sc is None else sc)
            tag = "rn" if sc is None else f"real_s{sc}"
            stem = f"exposure_{label}_{tag}" + ("_fine" if fine else "")
            path = run.out / f"{stem}.csv"
            write_profiles(path, profs.values())
            run.add(path)
            run.schemas[path.name] = PROFILE_COLUMNS
            svgplot.plot_profiles(path, run.out / stem, f"{label} {tag}")
            run.add(run.out / f"{stem}_ee.svg")
            run.add(run.out / f"{stem}_pfe.svg")
            for name in ("rlnn", "lsm"):
                gap_ee = np.max(np.abs(profs[name].ee - profs["cos"].ee))
                gap_pfe = np.max(np.abs(profs[name].pfe - profs["cos"].pfe))
                log.info("%s %s %s: max|EE-EE_cos|=%.3g max|PFE-PFE_cos|=%.3g", label, tag, name, gap_ee, gap_pfe)
        run.stage(f"exposure_{label}_{measure}", time.perf_counter() - start)


def cmd_lsm_interp(cfg: ExperimentConfig, run: Run):
    for m in cfg.spec.moneyness:
        label = moneyness_label(m)
        spec = _spec(cfg, m)
        start = time.perf_counter()
        bench = _benchmark(cfg, spec)
        fine_times = _fine_times(cfg, spec)
        paths = bench.validation(cfg.paths.n_validation, horizons_for(spec, fine_times))
        result = bench.lsm_interpolation(paths, fine_times)
        ref = result["true_fit"]
        rows = []
        for name, prof in result.items():
            for row, ee_ref, pfe_ref in zip(prof.rows(), ref.ee, ref.pfe):
                row["EE_err_vs_true_fit"] = row["EE"] - ee_ref
                row["PFE_err_vs_true_fit"] = row["PFE"] - pfe_ref
                rows.append(row)
        path = run.csv(f"lsm_interp_{label}.csv", INTERP_COLUMNS, rows)
        svgplot.plot_profiles(path, run.out / f"lsm_interp_{label}", f"{label} LSM interpolation")
        run.add(run.out / f"lsm_interp_{label}_ee.svg")
        run.add(run.out / f"lsm_interp_{label}_pfe.svg")
        for name, err in interpolation_errors(result, fine_times).items():
            log.info("%s %s: max EE error vs true fit %.3g", label, name, err["ee"])
        run.stage(f"lsm_interp_{label}", time.perf_counter() - start)


def build_parser():
    p = argparse.ArgumentParser(prog="rlnn-bench", description="Bermudan pricing and exposure benchmarks")
    p.add_argument("command", choices=["converge", "pv-dist", "exposure", "lsm-interp", "all"])
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides paths.seed)")
    p.add_argument("--fine", action="store_true", help="add fine-grid horizons to exposures")
    p.add_argument("--measure", choices=["rn", "real"], default="rn")
    p.add_argument("--scenario", type=int, choices=[1, 2, 3, 4])
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.paths.seed = args.seed
        if args.scenario is not None and str(args.scenario) not in cfg.scenarios:
            raise ConfigError(f"scenario {args.scenario} not defined in config")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.dir)
    cfg.output.dir = str(out)
    run = Run(cfg, out, args.command)
    try:
        if args.command in ("converge", "all"):
            cmd_converge(cfg, run)
        if args.command in ("pv-dist", "all"):
            cmd_pv_dist(cfg, run)
        if args.command == "exposure":
            cmd_exposure(cfg, run, args.measure, args.scenario, args.fine)
        if args.command == "all":
            cmd_exposure(cfg, run, "rn", None, fine=True)
            cmd_exposure(cfg, run, "real", None, fine=False)
        if args.command in ("lsm-interp", "all"):
            cmd_lsm_interp(cfg, run)
    except (TrainingError, FloatingPointError, np.linalg.LinAlgError) as exc:
        run.finish("numerical_failure", str(exc))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run.finish()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
