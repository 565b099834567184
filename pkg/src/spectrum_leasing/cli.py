"""Command-line front end: ``spectrum-lease solve|sweep|validate CONFIG``.

Exit status: 0 success, 1 a validation check failed, 2 bad configuration.
Every float written to disk carries 9 significant digits.
"""
import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__, montecarlo, validation
from .config import ConfigError, ExperimentConfig, load

log = logging.getLogger("spectrum_leasing")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

SWEEP_COLUMNS = ["variable", "value", "scheme", "n_r", "mean_n_s", "se_n_s", "mean_total_sc",
                 "mean_cost_per_sc", "mean_surplus", "se_surplus", "mean_on_demand_cost"]


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if isinstance(x, (int, str)) and not isinstance(x, bool):
        return str(x)
    return format(float(x), ".9g")


def _round(obj):
    """Floats to 9 significant digits (NaN/inf become null) throughout a JSON tree."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        return float(format(obj, ".9g")) if math.isfinite(obj) else None
    if isinstance(obj, int):
        return obj
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return _round(obj.item())
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_round(obj), indent=2) + "\n", encoding="utf-8")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _workers(cfg: ExperimentConfig, override):
    n = cfg.workers if override is None else override
    return n if n > 0 else (os.cpu_count() or 1)


def _require_usable_utility(cfg: ExperimentConfig):
    if cfg.utility.family != "alpha_fair":
        raise ConfigError("utility.family", f"{cfg.utility.family!r} fails the scale condition; "
                                            "leasing decisions need an alpha-fair utility")


def _recorded_config(cfg: ExperimentConfig):
    # execution details (worker count, output path) must not change the output bytes
    d = cfg.to_dict()
    d.pop("workers")
    d.pop("output")
    return d


def cmd_solve(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    _require_usable_utility(cfg)
    sc = cfg.scenario()
    res = montecarlo.solve_plan(sc, cfg.seed, workers)
    plan = res["sgd_plan"]
    summary = {
        "n_r": res["n_r"],
        "n_r_int": int(round(res["n_r"])),
        "method": res["method"],
        "reason": res["reason"],
        "n_reservation_only": res["n_ro"],
        "pf_root": res["pf_root"],
        "sgd": None if plan is None else {
            "n_r": plan.n_r, "initial": plan.initial, "iterations": int(plan.history.size),
            "eta0": sc.sgd_eta0, "final_gradient": plan.final_gradient,
            "final_gradient_se": plan.final_gradient_se,
        },
        "on_demand_rule": "n_s = max(U'^-1(c_s / (u_g theta)) - n_r, 0)",
        "config": _recorded_config(cfg),
    }
    write_json(out / "leaseplan.json", summary)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "n_r"])
    if plan is not None:
        for i, x in enumerate(plan.history, start=1):
            w.writerow([i, fmt(x)])
    _atomic_write(out / "sgd_trace.csv", buf.getvalue())
    print(f"n_r* = {fmt(res['n_r'])} ({res['method']}{'; ' + res['reason'] if res['reason'] else ''})")
    return EXIT_OK


def _row_cells(variable, row: montecarlo.SweepRow):
    st = row.stats
    return [variable, fmt(row.value), st.scheme, fmt(st.n_r), fmt(st.mean_n_s), fmt(st.se_n_s),
            fmt(st.mean_total_sc), fmt(st.mean_cost_per_sc), fmt(st.mean_surplus), fmt(st.se_surplus),
            fmt(st.mean_on_demand_cost)]


def _read_done(path: Path, grid):
    """Completed grid values in an existing sweep.csv, with their raw rows."""
    if not path.exists():
        return {}
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SWEEP_COLUMNS:
        raise ConfigError("--resume", f"{path} does not have the expected sweep columns")
    by_value = {}
    for r in rows[1:]:
        if r[0] != grid.variable:
            raise ConfigError("--resume", f"{path} holds a sweep over {r[0]!r}, not {grid.variable!r}")
        by_value.setdefault(float(r[1]), []).append(r)
    need = set(grid.schemes)
    return {v: rs for v, rs in by_value.items() if {r[2] for r in rs} == need and v in grid.points}


def cmd_sweep(cfg: ExperimentConfig, out: Path, workers: int, resume: bool) -> int:
    _require_usable_utility(cfg)
    grid = cfg.grid.build(cfg.seed)
    path = out / "sweep.csv"
    done = _read_done(path, grid) if resume else {}
    rows_by_value = dict(done)

    def flush():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for v in grid.points:
            for r in rows_by_value.get(v, []):
                w.writerow(r)
        _atomic_write(path, buf.getvalue())

    def on_point(rows):
        rows_by_value[rows[0].value] = [_row_cells(grid.variable, r) for r in rows]
        flush()

    if done:
        log.info("resuming: %d of %d grid points already in %s", len(done), len(grid.points), path)
    montecarlo.sweep(grid, cfg.scenario(), workers=workers, skip=list(done), on_point=on_point)
    flush()
    print(f"wrote {path}")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, out: Path) -> int:
    checks = validation.run_all(cfg)
    ok = all(c.passed for c in checks)
    write_json(out / "validate_report.json", {"passed": ok, "checks": [c.as_dict() for c in checks]})
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: observed={c.observed} expected={c.expected}"
              + (f" ({c.detail})" if c.detail else ""))
    return EXIT_OK if ok else EXIT_FAILED


def build_parser():
    p = argparse.ArgumentParser(prog="spectrum-lease", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["solve", "sweep", "validate"])
    p.add_argument("config", help="experiment config (YAML)")
    p.add_argument("--seed", type=int, help="override the config's root seed")
    p.add_argument("--workers", type=int, help="worker processes (0 = all cores)")
    p.add_argument("--out", help="output directory (default: config 'output')")
    p.add_argument("--resume", action="store_true", help="sweep: keep finished grid points in sweep.csv")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be non-negative")
            cfg.seed = args.seed
        if args.workers is not None and args.workers < 0:
            raise ConfigError("--workers", "must be non-negative")
        out = Path(args.out if args.out else cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        workers = _workers(cfg, args.workers)
        if args.command == "solve":
            return cmd_solve(cfg, out, workers)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, workers, args.resume)
        return cmd_validate(cfg, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
