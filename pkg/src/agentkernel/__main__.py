"""
agentkernel - Benchmark entry point

    bench run    --mode {fifo,rr,baseline} --agents N --calls-per-agent M --seed S --report out.json
    bench sweep  --counts 25,50,100,200
    bench ablate --config kernel.yaml
"""

import argparse
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .bench.harness import MODES, ablate, fit_sweep, run_mode, sweep_agents
from .bench.report import emit_report, render_ablation
from .bench.workload import Bimodal, WorkloadSpec
from .core.errors import FitError, KernelError
from .utils.config import load_config
from .utils.logger import get_log_file, get_logger, setup_logging


logger = get_logger("agentkernel.cli")


def _counts(value: str) -> list[int]:
    try:
        counts = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"counts must be comma-separated integers, got '{value}'")
    if not counts or any(n < 1 for n in counts):
        raise argparse.ArgumentTypeError("counts must be positive")
    return counts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="agentkernel model-time benchmarks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML kernel config")
    common.add_argument("--agents", type=int, default=100, help="concurrent agents (default 100)")
    common.add_argument("--calls-per-agent", type=int, default=2, help="queries per agent (default 2)")
    common.add_argument("--prompt-tokens", type=int, default=40, help="prompt length (default 40)")
    common.add_argument("--bimodal", action="store_true",
                        help="draw output lengths 20 or 200 tokens (10%% long)")
    common.add_argument("--seed", type=int, default=0, help="workload and core seed")
    common.add_argument("--wall-time", action="store_true", help="log elapsed wall seconds per run")
    common.add_argument("--debug", action="store_true", help="debug logging on the console")

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run one workload")
    run.add_argument("--mode", choices=MODES, default="fifo")
    run.add_argument("--report", type=Path, help="write a .csv or .json report")

    sweep = sub.add_parser("sweep", parents=[common], help="sweep the agent count")
    sweep.add_argument("--mode", choices=("fifo", "rr"), default="fifo")
    sweep.add_argument("--counts", type=_counts, default=[25, 50, 100, 200])

    sub.add_parser("ablate", parents=[common], help="compare no scheduling, FIFO and RR")
    return parser


def _workload(args: argparse.Namespace) -> WorkloadSpec:
    outputs = Bimodal(short=20, long=200, p_long=0.1) if args.bimodal else None
    return WorkloadSpec(
        num_agents=args.agents,
        calls_per_agent=args.calls_per_agent,
        prompt_tokens=args.prompt_tokens,
        output_tokens=outputs,
        seed=args.seed,
    )


def _wall(args: argparse.Namespace, label: str, seconds: float) -> None:
    if args.wall_time:
        logger.info(f"{label}: {seconds:.2f}s wall")


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    spec = _workload(args)
    result = run_mode(args.mode, spec, config)
    m = result.metrics
    logger.info(
        f"{args.mode}: {m.num_calls} calls, overall_time={float(m.overall_time):g}, "
        f"throughput={float(m.throughput):.4f}, wait_avg={float(m.wait_avg):.2f}, "
        f"wait_p90={m.wait_p90:.2f}"
    )
    _wall(args, args.mode, result.wall_seconds)
    if args.report:
        strategy = None if args.mode == "baseline" else args.mode
        emit_report(args.report, m, args.mode, spec.seed, strategy)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    rows = sweep_agents(_workload(args), args.counts, args.mode, config)
    print(f"{'agents':>8} {'overall_time':>14} {'wait_avg':>10}")
    for row in rows:
        print(f"{row.num_agents:>8} {float(row.overall_time):>14.2f} {float(row.wait_avg):>10.2f}")
    try:
        fit = fit_sweep(rows)
    except FitError as e:
        logger.warning(f"No linear fit: {e}")
        return 0
    print(f"fit: overall_time = {fit.slope:.3f} * N + {fit.intercept:.3f}  (R^2 = {fit.r_squared:.4f})")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    spec = _workload(args)
    results = ablate(spec, config)
    for result in results:
        _wall(args, result.mode, result.wall_seconds)
    print(render_ablation(results, spec.num_agents, spec.calls_per_agent, spec.seed), end="")
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "ablate": cmd_ablate}


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)

    # Setup logging first
    setup_logging(debug=args.debug)
    logger.debug(f"Python version: {sys.version}")
    logger.debug(f"Log file: {get_log_file()}")

    try:
        return COMMANDS[args.command](args)
    except KernelError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except Exception as e:
        logger.exception(f"Fatal error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
