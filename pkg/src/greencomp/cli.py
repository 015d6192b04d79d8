"""``greencomp`` command line: generate, solve, evaluate and bench.

Exit codes: 0 success (an iteration-capped run included), 2 invalid input,
usage or missing artifacts, 3 admission control required, 4 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from .coordinator import SolveOptions, bundle_trace, schedule_residuals
from .errors import AdmissionControlRequired, ArtifactMissing, GreencompError
from .evaluation import (
    EvalConfig,
    EvalMode,
    Plan,
    cost_cdf,
    expected_energy_instance,
    plan_schedule,
    price_response_profile,
    sinr_cdf,
    summarize,
)
from .ingest import InstanceDocument, build_instance, parse_document
from .model import ProblemInstance, Schedule
from .scenarios import SCENARIOS, scenario_document
from .sdp import SdpMode
from .settings import ExplicitSettings, Settings, use_settings
from .stores import ArtifactStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ADMISSION = 3
EXIT_SOLVER = 4

# argparse dest -> Settings field
_FLAG_SETTINGS = {
    "threads": "THREADS",
    "stepsize": "STEPSIZE",
    "mu": "STEP_MU",
    "step_a": "STEP_A",
    "tol_gap": "TOL_GAP",
    "tol_g": "TOL_G",
    "max_iter": "DUAL_MAX_ITER",
    "backend": "SDP_BACKEND",
    "rounding_samples": "ROUNDING_SAMPLES",
    "log_level": "LOG_LEVEL",
    "out": "OUTPUT_DIR",
}
_MODES = [m.value for m in EvalMode]


def effective_settings(solver: Mapping[str, Any], args: argparse.Namespace) -> Settings:
    """Defaults, then the config's ``solver`` block, then command-line flags."""
    values: Dict[str, Any] = {str(k).upper(): v for k, v in solver.items()}
    for dest, name in _FLAG_SETTINGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    if getattr(args, "no_projection", False):
        values["PROJECT_MULTIPLIERS"] = False
    return ExplicitSettings(**values)


def _load(args: argparse.Namespace) -> tuple[InstanceDocument, ProblemInstance, Settings, int]:
    doc = parse_document(Path(args.config))
    settings = effective_settings(doc.solver, args)
    use_settings(settings)
    logging.getLogger().setLevel(settings.LOG_LEVEL.upper())
    instance = build_instance(doc)
    seed = args.seed if args.seed is not None else (doc.seed if doc.seed is not None else 0)
    return doc, instance, settings, seed


def _options(args: argparse.Namespace, mode: EvalMode) -> SolveOptions:
    dump = Path(args.dump_sdpa) if getattr(args, "dump_sdpa", None) else None
    sdp_mode = SdpMode.NONROBUST if mode is EvalMode.NONROBUST else SdpMode.ROBUST
    return SolveOptions.from_settings(mode=sdp_mode, dump_sdpa=dump)


def _plan_summary(plan: Plan, instance: ProblemInstance) -> Dict[str, Any]:
    report = plan.report
    return {
        "mode": plan.mode.value,
        "status": report.status.value,
        "stop_rule": report.stop_rule,
        "iterations": report.iterations,
        "objective": report.objective,
        "rel_gap": report.rel_gap,
        "weak_duality_breaches": report.weak_duality_breaches,
        "projection_shift": report.projection_shift,
        "extraction": plan.extraction.summary(),
        "residuals": schedule_residuals(
            instance, plan.schedule,
            SdpMode.NONROBUST if plan.mode is EvalMode.NONROBUST else SdpMode.ROBUST,
        ),
    }


def cmd_generate(args: argparse.Namespace, argv: Sequence[str]) -> int:
    solver = json.loads(args.solver) if args.solver else None
    doc = scenario_document(args.scenario, seed=args.seed, r=args.r, gamma=args.gamma,
                            epsilon=args.epsilon, sigma2=args.sigma2, Pc=args.pc, solver=solver)
    build_instance(doc)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %s configuration to %s", args.scenario, out)
    return EXIT_OK


def cmd_solve(args: argparse.Namespace, argv: Sequence[str]) -> int:
    _, instance, settings, seed = _load(args)
    store = ArtifactStore.from_settings()
    mode = EvalMode(args.mode)
    opts = _options(args, mode)
    plan = plan_schedule(instance, opts, mode, seed, args.distributed)
    store.write_schedule(plan.schedule)
    store.write_frame("convergence.csv", plan.report.frame())
    planned = expected_energy_instance(instance) if mode is EvalMode.HEURISTIC else instance
    store.write_frame("bundle_trace.csv", bundle_trace(planned, plan.multipliers, opts.bundle))
    store.write_frame("price_profile.csv",
                      price_response_profile(plan.schedule, instance.prices).frame())
    if plan.messages is not None:
        store.write_lines("messages.jsonl", plan.messages.lines)
    summary = _plan_summary(plan, instance)
    store.write_json("summary.json", {"solve": summary})
    store.write_manifest("solve", argv, settings, args.config, seed,
                         {"status": summary["status"], "distributed": args.distributed,
                          "sdpa_dir": args.dump_sdpa})
    logger.info("solve %s: objective %.8g after %d iterations (%s)", summary["mode"],
                summary["objective"], summary["iterations"], summary["status"])
    return EXIT_OK


def _stored_mode(schedule: Schedule) -> EvalMode:
    mode = (schedule.extraction or {}).get("mode", EvalMode.ROBUST.value)
    return EvalMode(mode)


def cmd_evaluate(args: argparse.Namespace, argv: Sequence[str]) -> int:
    store = ArtifactStore(Path(args.schedule))
    stored = store.read_schedule()
    _, instance, settings, seed = _load(args)
    config = EvalConfig(
        n_channel=args.realizations or EvalConfig.n_channel,
        n_res=args.cost_realizations or EvalConfig.n_res,
        kappas=tuple(args.kappa) if args.kappa else EvalConfig.kappas,
        seed=seed,
    )
    own = _stored_mode(stored)
    schedules: Dict[EvalMode, Schedule] = {own: stored}
    for name in args.mode or [own.value]:
        mode = EvalMode(name)
        if mode not in schedules:
            logger.info("planning the %s baseline for comparison", mode.value)
            schedules[mode] = plan_schedule(instance, _options(args, mode), mode, seed).schedule

    sinr = [sinr_cdf(s, instance, config, mode) for mode, s in schedules.items()]
    costs = [cost_cdf(s, instance, config, mode.value) for mode, s in schedules.items()]
    store.write_frame("sinr_cdf.csv", pd.concat([r.frame() for r in sinr], ignore_index=True))
    store.write_frame("cost_cdf.csv", pd.concat([c.frame() for c in costs], ignore_index=True))

    summary_path = store.path("summary.json")
    existing: Dict[str, Any] = {}
    if summary_path.is_file():
        existing = json.loads(summary_path.read_text(encoding="utf-8"))
    existing["evaluation"] = summarize(sinr, costs, {"n_channel": config.n_channel,
                                                     "n_res": config.n_res, "seed": seed})
    store.write_json("summary.json", existing)
    store.write_manifest("evaluate", argv, settings, args.config, seed,
                         {"modes": [m.value for m in schedules]})
    for r in sinr:
        logger.info("%s: SINR violation rate %.4f", r.mode, r.violation_rate)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, argv: Sequence[str]) -> int:
    _, instance, settings, seed = _load(args)
    store = ArtifactStore.from_settings()
    started = time.perf_counter()
    plan = plan_schedule(instance, _options(args, EvalMode.ROBUST), EvalMode.ROBUST, seed)
    wall = time.perf_counter() - started
    timings = plan.report.timings()
    timings["extraction"] = max(wall - timings["total"], 0.0)
    timings["wall"] = wall
    bench = {
        "dimensions": {"T": instance.dims.T, "I": instance.dims.I, "K": instance.dims.K,
                       "M": instance.dims.M},
        "iterations": plan.report.iterations,
        "objective": plan.report.objective,
        "status": plan.report.status.value,
        "seconds": timings,
    }
    store.write_json("bench.json", bench)
    store.write_manifest("bench", argv, settings, args.config, seed)
    sys.stdout.write("".join(f"{k:>12s} {v:10.3f} s\n" for k, v in timings.items()))
    return EXIT_OK


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="instance document (JSON)")
    p.add_argument("--out", help="artifact directory")
    p.add_argument("--seed", type=int, help="seed for rounding and sampling")
    p.add_argument("--threads", type=int, help="worker threads for the slot subproblems")
    p.add_argument("--stepsize", choices=["constant", "diminishing"])
    p.add_argument("--mu", type=float, help="constant stepsize")
    p.add_argument("--step-a", type=float, help="diminishing stepsize numerator")
    p.add_argument("--tol-gap", type=float)
    p.add_argument("--tol-g", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--backend", choices=["ipm", "cvxpy"])
    p.add_argument("--rounding-samples", type=int)
    p.add_argument("--no-projection", action="store_true",
                   help="do not project multipliers onto the price band")
    p.add_argument("--log-level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greencomp",
        description="Robust energy and beamforming schedules for smart-grid powered CoMP.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a C1/C2-style configuration")
    gen.add_argument("--scenario", choices=sorted(SCENARIOS), default="C1")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--r", type=float, default=1.0, help="selling/buying price ratio")
    gen.add_argument("--gamma", type=float, default=0.1)
    gen.add_argument("--epsilon", type=float, default=0.05)
    gen.add_argument("--sigma2", type=float, default=1.0)
    gen.add_argument("--pc", type=float, default=10.0)
    gen.add_argument("--solver", help="JSON object stored as the config's solver block")
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(handler=cmd_generate)

    slv = sub.add_parser("solve", help="plan a schedule and write its artifacts")
    _solver_flags(slv)
    slv.add_argument("--mode", choices=_MODES, default=EvalMode.ROBUST.value)
    slv.add_argument("--distributed", action="store_true",
                     help="exchange prices and reports as serialized messages")
    slv.add_argument("--dump-sdpa", metavar="DIR", help="write every slot SDP in SDPA format")
    slv.set_defaults(handler=cmd_solve)

    ev = sub.add_parser("evaluate", help="Monte-Carlo SINR and cost distributions")
    ev.add_argument("schedule", help="artifact directory of a previous solve")
    _solver_flags(ev)
    ev.add_argument("--mode", action="append", choices=_MODES,
                    help="scheme(s) to evaluate; baselines are planned on demand")
    ev.add_argument("--kappa", type=float, action="append")
    ev.add_argument("--realizations", type=int, help="channel perturbations per (k, t)")
    ev.add_argument("--cost-realizations", type=int, help="renewable draws per kappa")
    ev.set_defaults(handler=cmd_evaluate)

    bn = sub.add_parser("bench", help="time one robust solve")
    _solver_flags(bn)
    bn.set_defaults(handler=cmd_bench)
    return parser


_Handler = Callable[[argparse.Namespace, Sequence[str]], int]


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = (getattr(args, "log_level", None) or "INFO").upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    handler: _Handler = args.handler
    try:
        return handler(args, argv)
    except AdmissionControlRequired as exc:
        logger.error("%s", exc)
        return EXIT_ADMISSION
    except (ArtifactMissing, ValidationError, ValueError, FileNotFoundError) as exc:
        # InstanceValidationError, settings and JSON errors are ValueErrors
        logger.error("%s", exc)
        return EXIT_INPUT
    except GreencompError as exc:
        logger.error("solver failure: %s", exc)
        return EXIT_SOLVER
    finally:
        use_settings(None)


if __name__ == "__main__":
    sys.exit(main())
