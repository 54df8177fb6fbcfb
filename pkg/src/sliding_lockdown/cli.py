"""Command-line entry point: ``simulate``, ``sweep``, ``vaccinate``, ``replay``.

Exit codes: 0 success, 1 invalid configuration or input data, 2 runtime
failure (numerical abort, I/O error, or a failed sweep cell).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import yaml

from .config import RunConfig, dump_config, load_config, preset_names, preset_path
from .errors import NumericalError
from .estimation import (
    DailySeries,
    SeriesKind,
    ingest_csv,
    replay_control,
    scale_to_infected,
    smooth_and_differentiate,
    write_replay_csv,
)
from .integrator import write_trajectory_csv
from .scenarios import (
    SweepResult,
    SweepSpec,
    _fmt,
    beta_lockdown_sensitivity,
    compute_metrics,
    run_sweep,
    write_cycles_csv,
    write_metrics_csv,
)

log = logging.getLogger("sliding_lockdown")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class _RunFailed(Exception):
    """Some sweep cells failed; partial output has been written."""


def _load(args) -> RunConfig:
    if args.config and args.preset:
        raise ValueError("give --config or --preset, not both")
    if not (args.config or args.preset):
        raise ValueError("one of --config or --preset is required")
    cfg = load_config(args.config or preset_path(args.preset))
    if args.out:
        cfg.output_dir = args.out
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_effective(cfg: RunConfig, out: Path) -> None:
    with (out / "effective_config.yaml").open("w") as fh:
        yaml.safe_dump(dump_config(cfg), fh, sort_keys=False)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg)
    sc = cfg.scenario
    traj = sc.run()
    metrics = compute_metrics(traj, sc.params, sc.controller)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_metrics_csv([SweepResult(0, {}, metrics)], out / "metrics.csv")
    write_cycles_csv(metrics, out / "cycles.csv")
    _write_effective(cfg, out)
    for note in metrics.warnings:
        log.warning(note)
    print(f"steady cycle: {metrics.steady_freedom:.2f} d freedom / {metrics.steady_lockdown:.2f} d lockdown; "
          f"max deviation {metrics.max_deviation_pct:.2f}%; wrote {out}")
    return EXIT_OK


def _write_sweep_cycles(results: list[SweepResult], path: Path, axis_names) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", *axis_names, "cycle", "cycle_start", "freedom_duration",
                    "lockdown_duration", "duty_cycle"])
        for res in results:
            if res.metrics is None:
                continue
            for j, c in enumerate(res.metrics.cycles):
                w.writerow([res.run_id, *(_fmt(res.axis_values[a]) for a in axis_names), j,
                            _fmt(c.cycle_start), _fmt(c.freedom_duration), _fmt(c.lockdown_duration),
                            _fmt(c.duty_cycle)])


def _report_failures(results: list[SweepResult]) -> None:
    failed = [r for r in results if r.error]
    if failed:
        raise _RunFailed(f"{len(failed)} of {len(results)} runs failed")


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if cfg.sweep is None:
        raise ValueError("sweep: section is required for the sweep command")
    out = _outdir(cfg)
    spec = SweepSpec(cfg.sweep.axes, cfg.scenario)
    axes = list(cfg.sweep.axes)
    results = run_sweep(spec, jobs=args.jobs)
    write_metrics_csv(results, out / "metrics.csv", axes)
    _write_sweep_cycles(results, out / "cycles.csv", axes)
    _write_effective(cfg, out)
    if cfg.sweep.beta_lockdown_alt is not None:
        d_free, d_lock = beta_lockdown_sensitivity(cfg.scenario, cfg.sweep.beta_lockdown_alt, jobs=args.jobs)
        with (out / "sensitivity.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta_lockdown", "beta_lockdown_alt", "delta_freedom", "delta_lockdown"])
            w.writerow([_fmt(cfg.scenario.params.beta_lockdown), _fmt(cfg.sweep.beta_lockdown_alt),
                        _fmt(d_free), _fmt(d_lock)])
        print(f"lockdown-rate sensitivity: freedom {d_free:+.2f} d, lockdown {d_lock:+.2f} d")
    print(f"{len(results)} runs; wrote {out}")
    _report_failures(results)
    return EXIT_OK


def cmd_vaccinate(args) -> int:
    cfg = _load(args)
    rates = tuple(args.rates) if args.rates else cfg.rates
    if not rates:
        raise ValueError("no vaccination rates: set 'rates' in the config or pass --rates")
    if any(r < 0 for r in rates):
        raise ValueError("vaccination rates must be nonnegative")
    out = _outdir(cfg)
    results = run_sweep(SweepSpec({"vaccination_rate": rates}, cfg.scenario), jobs=args.jobs)
    axes = ["vaccination_rate"]
    write_metrics_csv(results, out / "metrics.csv", axes, extra=("lockdowns_after_herd",))
    _write_sweep_cycles(results, out / "cycles.csv", axes)
    _write_effective(cfg, out)
    for res in results:
        m = res.metrics
        if m is not None:
            print(f"rate {res.axis_values['vaccination_rate']:.4%}/day: herd at {_fmt(m.herd_time) or '-'}, "
                  f"extinction at {_fmt(m.extinction_time) or '-'}, lockdowns after herd {m.lockdowns_after_herd}")
    _report_failures(results)
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _load(args)
    data = cfg.data
    path = args.data or data.path
    if path is None:
        raise ValueError("no data file: pass --data or set data.path in the config")
    kind = SeriesKind(args.kind) if args.kind else data.kind
    population = args.population if args.population is not None else data.population
    h_factor = args.h_factor if args.h_factor is not None else data.h_factor
    window = args.window if args.window is not None else data.window
    degree = args.degree if args.degree is not None else data.degree

    series: DailySeries = ingest_csv(Path(path), population=population, kind=kind)
    if series.has_gaps:
        log.warning("%d missing day(s) filled by interpolation", int(series.interpolated.sum()))
    signal = smooth_and_differentiate(scale_to_infected(series, h_factor), window, degree)
    decisions = replay_control(signal, cfg.scenario.controller, phi=args.phi)
    out = _outdir(cfg)
    write_replay_csv(out / "replay.csv", series.start_date, signal, decisions)
    switches = sum(1 for a, b in zip(decisions, decisions[1:]) if a.regime is not b.regime)
    print(f"{len(decisions)} days replayed, {switches} switch(es); wrote {out / 'replay.csv'}")
    return EXIT_OK


def _rates(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--preset", help="name of a shipped preset (see the 'presets' command)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel runs (default: CPU count)")
    common.add_argument("--seed", type=int, default=None,
                        help="reserved; accepted for interface stability, runs are deterministic")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sliding-lockdown",
                                     description="Closed-loop lockdown switching on compartmental epidemic models.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="single run: trajectory, metrics, cycles")
    sub.add_parser("sweep", parents=[common], help="grid over the axes in the sweep section")
    vax = sub.add_parser("vaccinate", parents=[common], help="one run per vaccination rate")
    vax.add_argument("--rates", type=_rates, help="comma-separated daily rates as fractions, e.g. 0.0008,0.0016")
    rep = sub.add_parser("replay", parents=[common], help="replay the switching law on a daily data series")
    rep.add_argument("--data", help="CSV with date,count rows")
    rep.add_argument("--kind", choices=[k.value for k in SeriesKind])
    rep.add_argument("--h-factor", type=float, dest="h_factor")
    rep.add_argument("--population", type=float)
    rep.add_argument("--window", type=int)
    rep.add_argument("--degree", type=int)
    rep.add_argument("--phi", type=float, help="dead band for the replay (default: the controller's phi)")
    sub.add_parser("presets", help="list shipped presets")
    return parser


_COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "vaccinate": cmd_vaccinate, "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return _COMMANDS[args.command](args)
    except _RunFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (NumericalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:  # ConfigError, ParseError, DomainError and friends
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
