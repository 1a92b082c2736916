"""Command-line interface for scenario execution and metric export.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime
divergence (non-finite state).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import metrics, scenarios
from .config import ConfigError, ScenarioConfig, load_config_file
from .engine import SimulationDiverged, run_scenario, sweep_delay


def _load(path_or_builtin: str, seed=None, mca_enabled=None) -> ScenarioConfig:
    if path_or_builtin.startswith("builtin:"):
        return scenarios.get_scenario(path_or_builtin[len("builtin:"):],
                                      seed=seed, mca_enabled=mca_enabled)
    cfg = load_config_file(path_or_builtin)
    if seed is not None:
        cfg = cfg.with_updates(seed=seed)
    if mca_enabled is not None and cfg.mca is not None:
        from dataclasses import replace
        cfg = cfg.with_updates(mca=replace(cfg.mca, enabled=mca_enabled))
    return cfg


def _report(cfg: ScenarioConfig, trace):
    if cfg.mode == "abstract":
        converged, conv_time = metrics.consensus_settle(trace)
        return metrics.ConvergenceReport(
            converged=converged, conv_time=conv_time,
            freq_error_final=float("nan"),
            p_share_spread_final=float("nan"),
            q_share_spread_final=float("nan"))
    r = cfg.report
    return metrics.convergence_report(trace, r.disturbance_t, r.tol_freq,
                                      r.tol_share, r.dwell)


def cmd_run(args) -> int:
    cfg = _load(args.scenario, seed=args.seed,
                mca_enabled=False if args.no_mca else None)
    trace = run_scenario(cfg, record_packets=args.packet_log)
    rep = _report(cfg, trace)
    os.makedirs(args.out, exist_ok=True)
    metrics.emit(trace, os.path.join(args.out, "trace.csv"), "csv")
    summary = metrics.build_summary(trace, rep)
    with open(os.path.join(args.out, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    if args.packet_log:
        metrics.emit(trace.meta["packets"],
                     os.path.join(args.out, "packets.csv"), "csv")
    print(f"{cfg.name}: {trace.n_steps} steps -> {args.out}/trace.csv")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_sweep_delay(args) -> int:
    cfg = _load(args.scenario, seed=args.seed)
    taus = [float(x) for x in args.taus.split(",") if x.strip()]
    if not taus:
        raise ConfigError(["--taus: at least one delay value required"])
    results = sweep_delay(cfg, taus)
    for r in results:
        ct = "-" if r["conv_time"] is None else f"{r['conv_time']:.3f} s"
        print(f"tau={r['tau']:.6g} s  converged={r['converged']}  "
              f"settle={ct}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "sweep.json"), "w",
                  encoding="utf-8") as fh:
            json.dump({"schema_version": metrics.SCHEMA_VERSION,
                       "scenario": cfg.name, "results": results}, fh, indent=2)
    return 0


def cmd_compare(args) -> int:
    reports = {}
    for label, enabled in (("with-mca", True), ("without-mca", False)):
        cfg = _load(args.scenario, seed=args.seed, mca_enabled=enabled)
        trace = run_scenario(cfg)
        rep = _report(cfg, trace)
        reports[label] = rep
        ct = "-" if rep.conv_time is None else f"{rep.conv_time:.3f} s"
        print(f"{label:12s} converged={rep.converged}  conv_time={ct}  "
              f"freq_err_final={rep.freq_error_final:.3e}  "
              f"p_spread_final={rep.p_share_spread_final:.3e}  "
              f"q_spread_final={rep.q_share_spread_final:.3e}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        doc = {"schema_version": metrics.SCHEMA_VERSION,
               "scenario": args.scenario}
        from dataclasses import asdict
        doc.update({k: asdict(v) for k, v in reports.items()})
        with open(os.path.join(args.out, "compare.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    return 0


def cmd_list_scenarios(_args) -> int:
    width = max(len(n) for n in scenarios.scenario_names())
    for name in scenarios.scenario_names():
        print(f"builtin:{name:<{width}}  {scenarios.scenario_description(name)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dersim",
        description="Deterministic simulator of networked DER agents under "
                    "distributed secondary control, with injectable cyber "
                    "attacks and per-agent semantic compensation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and export its trace")
    p.add_argument("scenario", help="scenario YAML path or builtin:<name>")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-mca", action="store_true",
                   help="disable the semantic compensation layer")
    p.add_argument("--packet-log", action="store_true",
                   help="also export the per-packet channel log")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-delay",
                       help="classify convergence across delay values")
    p.add_argument("scenario")
    p.add_argument("--taus", required=True,
                   help="comma-separated delays in seconds")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep_delay)

    p = sub.add_parser("compare",
                       help="run a scenario with and without compensation")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("list-scenarios", help="print the builtin library")
    p.set_defaults(func=cmd_list_scenarios)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, KeyError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
