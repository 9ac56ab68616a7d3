"""Command line: ``pilotloc run|list|verify|crlb``.

Exit codes: 0 success, 1 usage error (bad flags, unknown scenario, invalid
config), 2 runtime failure (experiment aborted, oracle check failed, I/O).
"""

from __future__ import annotations

import argparse
import math
import sys
import time

from .config import ConfigError, ExperimentSpec, load_config, suggest
from .report import COLUMNS, MonteCarloReport, PointResult, SeriesResult, emit_csv
from .runner import ExperimentError, analytic_overlays, point_kwargs, run_experiment
from .scenarios import SCENARIOS

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_FAILURE"]

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2
COMMANDS = ("run", "list", "verify", "crlb")


class UsageError(Exception):
    pass


_FLAGS = ("--seed", "--trials", "--out", "--workers", "--snr", "--help")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if message.startswith("unrecognized arguments:"):
            flags = [t.split("=")[0] for t in message.split(":", 1)[1].split() if t.startswith("-")]
            message += "".join(suggest(f, _FLAGS) for f in flags[:1])
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pilotloc", description="Pilot-aided drone localisation and detection experiments")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name, help_text in (("run", "run a Monte Carlo experiment"),
                            ("crlb", "analytic CRLB and SDR only, no simulation")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("config", help="registered scenario name or YAML config file")
        s.add_argument("--seed", type=int, help="base seed override")
        s.add_argument("--trials", type=int, help="trials per sweep point override")
        s.add_argument("--out", help="output directory for CSV files")
        if name == "run":
            s.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
            s.add_argument("--snr", type=float, help="fixed SNR in dB when the sweep is not over SNR")
    sub.add_parser("list", help="list registered scenarios")
    sub.add_parser("verify", help="run the closed-form oracle suite")
    return p


def _spec(args) -> ExperimentSpec:
    spec = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["base_seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    if getattr(args, "workers", None) is not None:
        over["workers"] = args.workers
    if getattr(args, "snr", None) is not None:
        over["snr_db"] = args.snr
    if args.out is not None:
        over["out_dir"] = args.out
    if not over:
        return spec
    fields = dict(sweep_variable=spec.sweep_variable, sweep_values=spec.sweep_values,
                  trials=spec.trials, base_seed=spec.base_seed, estimators=spec.estimators,
                  variants=spec.variants, workers=spec.workers, out_dir=spec.out_dir,
                  snr_db=spec.snr_db)
    fields.update(over)
    return ExperimentSpec(spec.scenario, **fields)


def _print_series(report: MonteCarloReport, out):
    cols = ("sweep_value", "rmse_phi_deg", "rmse_theta_deg", "rmse_fd_hz", "crlb_phi_deg",
            "ser", "sdr_empirical", "sdr_analytic_2nd", "failures")
    for s in report.series.values():
        print(f"[{s.name}]", file=out)
        print("  " + " ".join(f"{c:>16}" for c in cols), file=out)
        for p in s.points:
            row = [p.sweep_value] + [p.metrics[c] for c in cols[1:]]
            print("  " + " ".join(f"{v:>16.6g}" for v in row), file=out)


def _cmd_run(args, out) -> int:
    spec = _spec(args)
    report = run_experiment(spec, progress=lambda p, v: print(f"point {p} done", file=sys.stderr))
    _print_series(report, out)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    out_dir = spec.out_dir or f"results/{spec.scenario}"
    for path in emit_csv(report, out_dir):
        print(f"wrote {path}", file=out)
    print(f"wall time {report.wall_time_s:.1f} s", file=out)
    return EXIT_OK


def _cmd_crlb(args, out) -> int:
    spec = _spec(args)
    sc = spec.resolve()
    series = {}
    values = spec.sweep_values if not sc.joint else (spec.sweep_values[0],)
    for vname in spec.variants:
        s = SeriesResult(vname, "analytic")
        for v in values:
            kw = {} if sc.joint else point_kwargs(spec.sweep_variable, v)
            if spec.snr_db is not None and "snr_db" not in kw:
                kw["snr_db"] = spec.snr_db
            overlay, notes = analytic_overlays(sc, vname, kw)
            metrics = {c: math.nan for c in COLUMNS if c != "sweep_value"}
            metrics.update(overlay, trials=0, failures=0)
            s.points.append(PointResult(float(v), metrics, warnings=notes))
        series[s.name] = s
    report = MonteCarloReport(spec.scenario, spec.sweep_variable, series, spec.base_seed, 0)
    cols = ("sweep_value", "crlb_phi_deg", "crlb_theta_deg", "crlb_fd_hz", "sdr_analytic_1st",
            "sdr_analytic_2nd")
    for s in series.values():
        print(f"[{s.name}]", file=out)
        print("  " + " ".join(f"{c:>16}" for c in cols), file=out)
        for p in s.points:
            row = [p.sweep_value] + [p.metrics[c] for c in cols[1:]]
            print("  " + " ".join(f"{v:>16.6g}" for v in row), file=out)
            for n in p.warnings:
                print(f"  note: {n}", file=out)
    if args.out:
        for path in emit_csv(report, args.out):
            print(f"wrote {path}", file=out)
    return EXIT_OK


def _cmd_verify(out) -> int:
    from .verify import run_verify

    t0 = time.perf_counter()

    def progress(name, res):
        bad = [r for r in res if not r.passed]
        worst = max((r.error / r.tolerance for r in res), default=0.0)
        print(f"{name:10s} {len(res) - len(bad):4d}/{len(res):<4d} passed  "
              f"(worst error/tolerance {worst:.3g})", file=out)

    results = run_verify(progress)
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(r.line(), file=out)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in "
          f"{time.perf_counter() - t0:.1f} s", file=out)
    return EXIT_OK if not failed else EXIT_FAILURE


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
        print(f"pilotloc: unknown command {argv[0]!r}{suggest(argv[0], COMMANDS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:           # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "list":
            for name, sc in SCENARIOS.items():
                print(f"{name}  {sc.description}", file=out)
            return EXIT_OK
        if args.command == "verify":
            return _cmd_verify(out)
        if args.command == "run":
            return _cmd_run(args, out)
        return _cmd_crlb(args, out)
    except ConfigError as exc:
        print(f"pilotloc: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExperimentError, OSError) as exc:
        print(f"pilotloc: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
