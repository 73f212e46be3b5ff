"""Command-line runner: ``arcbf run|compare|sweep --config FILE``.

Exit codes: 0 success, 2 configuration or argument error, 3 the run diverged,
4 the barrier QP became infeasible.  Artifacts are written in every case.

The output directory is, in order of precedence: ``--out``, the
``ARCBF_OUT_DIR`` environment variable, ``output.dir`` in the config, and
``out/<scenario>``.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from arcbf.analysis import metrics_report, safety_metrics, stability_metrics
from arcbf.config import SWEEPABLE, ConfigError, ExperimentConfig, load_config, with_param
from arcbf.io import write_metrics_json, write_table_csv, write_trace_csv
from arcbf.plot import emit_plot
from arcbf.sim import STATUS_DIVERGED, STATUS_INFEASIBLE, STATUS_OK, SimConfig, Trace, run_closed_loop

ENV_OUT = "ARCBF_OUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INFEASIBLE = 0, 2, 3, 4
_STATUS_EXIT = {STATUS_OK: EXIT_OK, STATUS_DIVERGED: EXIT_DIVERGED, STATUS_INFEASIBLE: EXIT_INFEASIBLE}


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(ENV_OUT):
        return Path(os.environ[ENV_OUT])
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path("out") / (cfg.scenario or "run")


def _barrier_rate(sim: SimConfig):
    # the recovery bound only applies to a first-order barrier
    return sim.certificates.cbf_rate if sim.plant == "scalar" else None


def _metrics(trace: Trace, sim: SimConfig) -> dict:
    return metrics_report(trace, sim.envelope, _barrier_rate(sim))


def _plot_channels(sim: SimConfig) -> list[str]:
    first = "x" if sim.plant == "scalar" else "r"
    return [first, "h", "u", "d", "rho", "eta"]


def _limits(sim: SimConfig) -> dict:
    return {"r": sim.certificates.r_max} if sim.plant == "robot" else {}


def _execute(sim: SimConfig) -> Trace:
    return run_closed_loop(sim)


def _run_many(sims: list[SimConfig], jobs: int) -> list[Trace]:
    if jobs <= 1 or len(sims) <= 1:
        return [_execute(s) for s in sims]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_execute, sims))


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


def _write_run(trace: Trace, sim: SimConfig, out: Path, plot: bool, title: str) -> dict:
    metrics = _metrics(trace, sim)
    write_trace_csv(trace, out / "trace.csv")
    write_metrics_json(metrics, out / "metrics.json")
    if plot:
        emit_plot([trace], _plot_channels(sim), out / "plot.svg", title=title, safety_limits=_limits(sim))
    return metrics


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    trace = _execute(cfg.sim)
    m = _write_run(trace, cfg.sim, out, args.plot or cfg.plot, cfg.scenario)
    _say(args, f"{cfg.scenario or args.config}: status={trace.status} t_final={trace.t_final:g} "
               f"min_h={m['safety.min_h']:.6g} recovery_time={m['safety.recovery_time']:.6g} -> {out}")
    return _STATUS_EXIT[trace.status]


def verdict(trace: Trace) -> str:
    s = safety_metrics(trace)
    st = stability_metrics(trace)
    if st.diverged:
        return "violated, diverged" if s.violated else "diverged"
    if not s.violated:
        return "safe"
    return "recovered" if s.recovery_time < float("inf") else "violated"


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    if not cfg.compare:
        raise ConfigError("compare needs a 'compare: {controllers: [...]}' block", key="compare", source=args.config)
    out = _out_dir(args, cfg)
    sims = [dataclasses.replace(cfg.sim, controller=c) for c in cfg.compare]
    traces = _run_many(sims, args.jobs)
    entries = []
    for i, (sim, tr) in enumerate(zip(sims, traces)):
        name = f"{i:02d}_{sim.controller.variant}"
        m = _write_run(tr, sim, out / name, args.plot or cfg.plot, f"{cfg.scenario} {name}")
        m["run"] = name
        m["verdict"] = verdict(tr)
        entries.append(m)
        _say(args, f"{name}: status={tr.status} verdict={m['verdict']}")
    report = {
        "scenario": cfg.scenario,
        "runs": entries,
        "summary": "; ".join(f"{e['controller']}: {e['verdict']}" for e in entries),
    }
    write_metrics_json(report, out / "comparison.json")
    labels = [e["run"] for e in entries]
    first = "norm_x" if cfg.sim.plant == "scalar" else "r"
    emit_plot(traces, ["h", first], out / "overlay.svg", labels=labels, title=cfg.scenario,
              safety_limits=_limits(cfg.sim))
    _say(args, f"summary: {report['summary']} -> {out}")
    return EXIT_OK


SWEEP_COLUMNS = ["value", "excursion_depth", "recovery_time", "ultimate_bound", "status"]


def _parse_values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {text!r}", key="--values") from None
    if not vals:
        raise ConfigError("--values is empty", key="--values")
    return vals


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.param not in SWEEPABLE:
        raise ConfigError(f"unrecognised parameter (choose from: {', '.join(SWEEPABLE)})", key=args.param,
                          source=args.config)
    values = _parse_values(args.values)
    variants = [with_param(cfg, args.param, v) for v in values]
    out = _out_dir(args, cfg)
    traces = _run_many([c.sim for c in variants], args.jobs)
    rows = []
    for i, (v, c, tr) in enumerate(zip(values, variants, traces)):
        _write_run(tr, c.sim, out / f"run_{i:02d}", args.plot or cfg.plot, f"{cfg.scenario} {args.param}={v:g}")
        s, st = safety_metrics(tr), stability_metrics(tr)
        rows.append({
            "value": v,
            "excursion_depth": s.excursion_depth,
            "recovery_time": s.recovery_time,
            "ultimate_bound": st.ultimate_bound,
            "status": tr.status,
        })
        _say(args, f"{args.param}={v:g}: status={tr.status} excursion={s.excursion_depth:.6g} "
                   f"recovery_time={s.recovery_time:.6g}")
    write_table_csv(rows, SWEEP_COLUMNS, out / "sweep.csv")
    _say(args, f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arcbf", description="Attack-resilient CLF-CBF-QP experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", help=f"output directory (overrides ${ENV_OUT} and the config)")
        p.add_argument("--plot", action="store_true", help="also write SVG plots")
        p.add_argument("--quiet", action="store_true", help="no progress output")

    p = sub.add_parser("run", help="run one scenario")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", help="run every controller in the config's compare block")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel sub-runs")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("sweep", help="rerun a scenario over values of one numeric key")
    common(p)
    p.add_argument("--param", required=True, help="dotted key, e.g. adaptation.q")
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 1,3,10")
    p.add_argument("--jobs", type=int, default=1, help="parallel sub-runs")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
