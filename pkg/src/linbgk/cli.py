"""Command-line runner: linbgk run | validate | list-suites."""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ConfigError, ExperimentConfig, parse_config
from .experiments import SUITE_DESCRIPTIONS, Experiment, SuiteResult, run_suite
from .series import NormSeries
from .solver import NumericalAbort

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3

_STACK_SUITES = {
    "velocity": {"shifted_monotone", "derivative_bound", "velocity_envelope", "velocity_higher", "conservation"},
    "temperature": {"scaled_monotone", "temperature_envelope", "temperature_higher", "conservation"},
}


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return repr(float(x))


def write_series_csv(series: NormSeries, path: Path) -> None:
    cols = series.columns()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([_fmt(v) for v in row])


def write_table_csv(header: list[str], rows: list[list], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_summary(results: list[SuiteResult], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["suite", "check", "passed", "value", "threshold", "detail"])
        for res in results:
            for c in res.checks:
                w.writerow([c.suite, c.name, _fmt(c.passed), _fmt(c.value), _fmt(c.threshold), c.detail])


def format_report(cfg: ExperimentConfig, results: list[SuiteResult]) -> str:
    g, p, r = cfg.grid, cfg.physics, cfg.run
    lines = [
        "linearized BGK verification report",
        f"grid: n_x={g.n_x} length={g.length:.6g} n_v={g.n_v} halfwidth={g.v_halfwidth_sigmas:g} sigma",
        f"physics: rho={p.rho:g} u0={p.u0:g} T0={p.T0:g} eps_u={p.eps_u:g} eps_T={p.eps_T:g} "
        f"Kn={p.knudsen:g} z0={p.z0:g}",
        f"run: t_end={r.t_end:g} n_max={r.n_max} perturbation={r.perturbation} "
        f"init_sensitivity={r.init_sensitivity}",
        "",
    ]
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        if not res.checks:
            status = "SKIP" if res.note.startswith("skipped") else "PASS"
        lines.append(f"[{status}] {res.name}: {SUITE_DESCRIPTIONS.get(res.name, '')}")
        if res.note:
            lines.append(f"    note: {res.note}")
        for c in res.checks:
            mark = "ok  " if c.passed else "FAIL"
            lines.append(f"    {mark} {c.name}: value={c.value:.6e} threshold={c.threshold:.6e}"
                         + (f" ({c.detail})" if c.detail else ""))
    n_fail = sum(not c.passed for res in results for c in res.checks)
    n_all = sum(len(res.checks) for res in results)
    lines += ["", f"checks passed: {n_all - n_fail}/{n_all}",
              "overall: " + ("PASS" if n_fail == 0 else "FAIL")]
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir: Path, threads: int = 1,
                   figures: bool | None = None) -> int:
    """Run the configured suites and write CSV, report and figures; returns the exit code."""
    exp = Experiment(cfg, threads)
    suites = list(cfg.verification.suites)
    figures = cfg.output.figures if figures is None else figures
    try:
        if threads > 1:
            # the sensitivity stacks are the long runs; start them together
            wanted = [p for p in cfg.perturbations() if _STACK_SUITES[p] & set(suites)]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(exp.stack_run, wanted))
        results = [run_suite(exp, name) for name in suites]
        if not suites:
            results = [SuiteResult("order0", series={"original": exp.original_run()},
                                   note="no suites requested; order-0 run only")]
    except NumericalAbort as err:
        out_dir.mkdir(parents=True, exist_ok=True)
        dump = out_dir / "abort_last_field.npz"
        last = err.last_valid
        if last is not None:
            np.savez(dump, data=last.data, time=last.time, frame=last.frame,
                     x=last.grid.x.nodes, v=last.grid.v.nodes)
        print(f"numerical abort: {err}", file=sys.stderr)
        if last is not None:
            print(f"last valid field (t = {last.time:.6g}) written to {dump}", file=sys.stderr)
        return EXIT_ABORT

    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, NormSeries] = {}
    for res in results:
        for key, series in res.series.items():
            written.setdefault(key, series)
    for key in sorted(written):
        write_series_csv(written[key], out_dir / f"{key}.csv")
    tables = {}
    for res in results:
        tables.update(res.tables)
    for key in sorted(tables):
        write_table_csv(*tables[key], out_dir / f"{key}.csv")
    write_summary(results, out_dir / "summary.csv")
    report = format_report(cfg, results)
    (out_dir / "report.txt").write_text(report, encoding="utf-8")
    if figures:
        from .plotting import plot_series, plot_table

        for key in sorted(written):
            plot_series(written[key], out_dir / f"{key}.png", key.replace("_", " "))
        for key in ("acoustic", "mms", "residual"):
            if key in tables:
                plot_table(*tables[key], out_dir / f"{key}.png", key)
    print(report, end="")
    return EXIT_PASS if all(res.passed for res in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="linbgk", description="Linearized BGK sensitivity solver and verification harness.",
        epilog=config_mod.__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the suites of a config file",
                         epilog=config_mod.__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("config", type=Path)
    run.add_argument("--output-dir", type=Path, default=None,
                     help="override [output] directory")
    run.add_argument("--threads", type=int, default=1, help="worker cap for independent solves")
    run.add_argument("--figures", dest="figures", action="store_true", default=None,
                     help="render PNG figures (default from [output] figures)")
    run.add_argument("--no-figures", dest="figures", action="store_false")
    val = sub.add_parser("validate", help="parse and validate a config file")
    val.add_argument("config", type=Path)
    sub.add_parser("list-suites", help="list the available verification suites")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-suites":
        for name, desc in SUITE_DESCRIPTIONS.items():
            print(f"{name:20s} {desc}")
        return EXIT_PASS
    try:
        cfg = parse_config(args.config)
    except ConfigError as err:
        print(f"{args.config}: {err}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "validate":
        print(f"{args.config}: valid ({len(cfg.verification.suites)} suites)")
        return EXIT_PASS
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    out = args.output_dir if args.output_dir is not None else Path(cfg.output.directory)
    return run_experiment(cfg, out, args.threads, args.figures)


if __name__ == "__main__":
    sys.exit(main())
