"""
Command-line front door: `hklab dist|constants|verify|simulate|gen`.

Exit codes: 0 success, 1 a harness or experiment failed, 2 invalid input,
3 the LET solver did not certify its value.
"""
import argparse
import json
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import yaml
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from rich.theme import Theme

from . import __version__
from .config import LabConfig, load_lab_config, resolve_threads
from .data_structures import RunManifest
from .divergence import DivParams, renyi_T0b, t_ab_certified
from .exceptions import LabValidationError, SolverConvergenceError
from .experiments import EXPERIMENTS, experiment_from_dict, run_experiment
from .formats import (
    certified_to_dict,
    estimate_to_dict,
    file_digest,
    harness_report_to_dict,
    quasi_report_to_dict,
    read_json,
    read_kernel,
    read_measure,
    read_space,
    to_plain,
    write_json,
    write_kernel,
    write_manifest,
    write_series,
    write_space,
    write_values,
)
from .funcineq import ESTIMATORS, convergence_curve, rlsi_linearization, rpi_constant
from .markov import MarkovKernel, brownian_kernel_grid, heat_kernel_grid, ou_kernel_grid
from .preset_manager import PresetManager
from .space import FiniteMetricSpace, build_dictionary
from .suite_manager import SUITE_ORDER, SuiteContext, SuiteRunner
from .transport import WParams, evaluate_w_ab, hellinger_sq, let_solve, wasserstein2_sq

logger = logging.getLogger(__name__)

# --- Configuration ---
custom_theme = Theme(
    {
        "info": "dim cyan",
        "warning": "magenta",
        "danger": "bold red",
        "error": "bold red",
        "debug": "dim blue",
        "value": "bold green",
    }
)
console = Console(theme=custom_theme)
err_console = Console(theme=custom_theme, stderr=True)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3

DEFAULT_OUT = Path("hklab_out")
METRICS = ("w2", "he2", "wab", "hk", "t0b", "tab")
GEN_KINDS = ("grid", "cycle", "two-point", "heat", "brownian", "ou")
INTERIOR_FRACTION = 0.25
LINEARIZE_EPSILONS = (0.1, 0.01)


def configure_logging(verbose: bool = False, debug: bool = False):
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(RichHandler(console=err_console, show_path=debug, rich_tracebacks=debug))
    root.setLevel(level)


class RunRecorder:
    """Collects a command's outputs under --out and writes its manifest."""

    def __init__(self, command: str, args: argparse.Namespace, config: LabConfig, inputs: Sequence[Path]):
        self.command = command
        self.args = args
        self.config = config
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs = {str(p): file_digest(p) for p in inputs}
        self.outputs: List[str] = []
        self.started = time.perf_counter()

    def report(self, name: str, data: Dict[str, Any]) -> Path:
        path = write_json(data, self.out / name)
        self.outputs.append(str(path))
        return path

    def add(self, path: Path) -> Path:
        self.outputs.append(str(path))
        return path

    def finish(self) -> Path:
        manifest = RunManifest(
            command=self.command,
            config=self.config.to_dict(),
            inputs=self.inputs,
            seed=self.args.seed,
            version=__version__,
            wall_clock=time.perf_counter() - self.started,
            outputs=self.outputs,
        )
        return write_manifest(manifest, self.out)


def _emit(args: argparse.Namespace, data: Dict[str, Any], render: Callable[[], None]):
    if args.json:
        print(json.dumps(data, indent=2, sort_keys=True))
    else:
        render()


def _value_panel(title: str, rows: Dict[str, Any]):
    table = Table(show_header=False, box=None)
    table.add_column(style="info")
    table.add_column(style="value")
    for key, value in rows.items():
        table.add_row(key, f"{value:.12g}" if isinstance(value, float) else str(value))
    console.print(Panel(table, title=title, border_style="info"))


# --- dist ---
def cmd_dist(args: argparse.Namespace, config: LabConfig, threads: int) -> int:
    space = read_space(args.space)
    mu0 = read_measure(args.mu0, space)
    mu1 = read_measure(args.mu1, space)
    recorder = RunRecorder("dist", args, config, [args.space, args.mu0, args.mu1])
    report: Dict[str, Any] = {"command": "dist", "metric": args.metric}

    if args.metric == "w2":
        report["value"] = wasserstein2_sq(mu0, mu1, space, config.solver).value
    elif args.metric == "he2":
        report["value"] = hellinger_sq(mu0, mu1)
    elif args.metric == "wab":
        params = WParams(args.a, args.b)
        result = evaluate_w_ab(params, mu0, mu1, space, config.solver)
        if not result.trusted:
            raise SolverConvergenceError(f"LET gap {result.gap:.3e} above tolerance", solution=result.solution)
        report.update({"params": {"a": params.a, "b": params.b}, "value": result.value, "method": result.method, "gap": result.gap})
        if result.solution is not None:
            report["diagnostics"] = result.solution.diagnostics()
    elif args.metric == "hk":
        if not args.alpha > 0:
            raise LabValidationError(f"alpha must be > 0, got {args.alpha}", field="alpha")
        solution = let_solve(mu0, mu1, space, config.solver, scale=1.0 / np.sqrt(args.alpha))
        if not solution.trusted:
            raise SolverConvergenceError(f"LET gap {solution.gap:.3e} above tolerance", solution=solution)
        report.update({"params": {"alpha": args.alpha}, "value": solution.value, "diagnostics": solution.diagnostics()})
    elif args.metric == "t0b":
        result = renyi_T0b(DivParams(0.0, args.b), mu0, mu1)
        report.update({"params": {"a": 0.0, "b": args.b}, "value": result.value, "tilde": result.tilde, "order": result.order})
    else:
        dictionary = build_dictionary(space, config.dictionary)
        certified = t_ab_certified(DivParams(args.a, args.b), mu0, mu1, space, dictionary, config.solver, threads)
        report.update({"params": {"a": args.a, "b": args.b}, **certified_to_dict(certified)})

    report = to_plain(report)
    recorder.report("dist.json", report)
    recorder.finish()

    def render():
        rows = {k: v for k, v in report.items() if k in ("value", "lower", "upper", "gap", "method", "tilde")}
        _value_panel(f"{args.metric} distance", rows)

    _emit(args, report, render)
    return EXIT_OK


# --- constants ---
def _weak_rpi(P, space, dictionary, config):
    return rpi_constant(P, space, dictionary, config, weak_form=True)


def cmd_constants(args: argparse.Namespace, config: LabConfig, threads: int) -> int:
    space = read_space(args.space)
    kernel = read_kernel(args.kernel, space)
    recorder = RunRecorder("constants", args, config, [args.space, args.kernel])
    dictionary = build_dictionary(space, config.dictionary)
    estimator = _weak_rpi if args.which == "rpi" and args.weak else ESTIMATORS[args.which]
    estimate = estimator(kernel, space, dictionary, config.estimator)
    if not args.no_curve:
        estimate.curve = convergence_curve(estimator, kernel, space, dictionary, config=config.estimator)
    report: Dict[str, Any] = {"command": "constants", "which": args.which, "absent": estimate.absent, "estimate": estimate_to_dict(estimate)}
    if args.linearize is not None and args.which == "rlsi":
        epsilons = args.linearize or LINEARIZE_EPSILONS
        report["linearized"] = [estimate_to_dict(e) for e in rlsi_linearization(kernel, space, dictionary, epsilons, config.estimator)]
    if estimate.absent:
        logger.warning("Every denominator was excluded; the %s constant is absent for this kernel", args.which)
    else:
        recorder.add(write_values(estimate.witness_function, recorder.out / "witness.csv"))
    recorder.report("constants.json", report)
    recorder.finish()

    def render():
        if estimate.absent:
            console.print(f"{args.which}: constant absent ({estimate.excluded_count} ratios excluded)", style="warning")
            return
        _value_panel(f"{args.which} constant", {
            "estimate": estimate.value,
            "witness point": estimate.witness_point,
            "ratios evaluated": estimate.evaluated_count,
            "ratios excluded": estimate.excluded_count,
        })
        for size, value in estimate.curve:
            console.print(f"  dictionary size {size}: {value}", style="info")

    _emit(args, report, render)
    return EXIT_OK


# --- verify ---
def _sample_points(space: FiniteMetricSpace, all_points: bool) -> Optional[np.ndarray]:
    if all_points or space.coords is None or space.coords.shape[1] != 1:
        return None
    return space.interior(INTERIOR_FRACTION * space.diameter)


def cmd_verify(args: argparse.Namespace, config: LabConfig, threads: int) -> int:
    space = read_space(args.space)
    kernel = read_kernel(args.kernel, space)
    recorder = RunRecorder("verify", args, config, [args.space, args.kernel])
    context = SuiteContext(
        kernel=kernel,
        space=space,
        dictionary=build_dictionary(space, config.dictionary),
        config=config,
        seed=args.seed,
        threads=threads,
        points=_sample_points(space, args.all_points),
        constant=args.constant,
    )
    runner = SuiteRunner(context)
    reports = runner.run(args.suite)
    passed = all(r.passed for r in reports)
    bundle = {
        "command": "verify",
        "pass": passed,
        "estimates": {k: estimate_to_dict(v) for k, v in runner.estimates.items()},
        "suites": [harness_report_to_dict(r) for r in reports],
    }
    bundle = to_plain(bundle)
    recorder.report("verify.json", bundle)
    recorder.finish()

    def render():
        table = Table(title="Verification suites")
        for column in ("suite", "trials", "max violation", "tol", "result"):
            table.add_column(column)
        for r in reports:
            table.add_row(
                r.id, str(r.trials), f"{r.max_violation:.3e}", f"{r.tol:.1e}",
                "[value]pass[/value]" if r.passed else "[danger]FAIL[/danger]",
            )
        console.print(table)

    _emit(args, bundle, render)
    return EXIT_OK if passed else EXIT_FAILED


# --- simulate ---
def cmd_simulate(args: argparse.Namespace, config: LabConfig, threads: int) -> int:
    inputs: List[Path] = []
    if args.preset:
        spec = PresetManager().load_preset(args.preset, config)
    elif args.experiment_file:
        inputs.append(args.experiment_file)
        spec = experiment_from_dict(read_json(args.experiment_file) if args.experiment_file.suffix == ".json" else _read_yaml(args.experiment_file), config)
    else:
        raise LabValidationError("give an experiment file or --preset", field="experiment")
    if args.experiment and args.experiment != spec.experiment:
        raise LabValidationError(f"file describes {spec.experiment!r}, not {args.experiment!r}", field="experiment")
    if args.seed_given:
        spec.seed = args.seed
    else:
        args.seed = spec.seed
    recorder = RunRecorder("simulate", args, config, inputs)
    result = run_experiment(spec, threads)
    report: Dict[str, Any] = {"command": "simulate", "experiment": spec.experiment, "title": spec.title, "seed": spec.seed, "pass": result.passed}
    if result.series is not None:
        recorder.add(write_series(result.series, recorder.out / "series.csv"))
        report["series"] = to_plain(result.series)
        report["series_file"] = "series.csv"
    if result.quasi is not None:
        report["quasi"] = quasi_report_to_dict(result.quasi)
    report = to_plain(report)
    recorder.report("simulate.json", report)
    recorder.finish()

    def render():
        if result.series is not None:
            table = Table(title=f"{spec.title} ({result.series.metric})")
            for column in ("t", "value", "stderr", "envelope"):
                table.add_column(column)
            for row in zip(result.series.times, result.series.values, result.series.stderr, result.series.envelope):
                table.add_row(*(f"{v:.6g}" for v in row))
            console.print(table)
            for note in result.series.notes:
                console.print(note, style="warning")
        if result.quasi is not None:
            table = Table(title=spec.title)
            for column in ("check", "parameter", "grid", "exact", "bound", "result"):
                table.add_column(column)
            for check in result.quasi.checks:
                parameter = next((f"{k}={check[k]:g}" for k in ("kappa", "p") if k in check), "")
                exact = check.get("exact")
                table.add_row(
                    check["check"], parameter, f"{check['grid']:.6g}", "" if exact is None else f"{exact:.6g}",
                    f"{check['bound']:.6g}", "pass" if check["passed"] else "FAIL",
                )
            console.print(table)
            for note in result.quasi.notes:
                console.print(note, style="warning")
        console.print("passed" if result.passed else "FAILED", style="value" if result.passed else "danger")

    _emit(args, report, render)
    return EXIT_OK if result.passed else EXIT_FAILED


def _read_yaml(path: Path) -> Any:
    if not Path(path).exists():
        raise LabValidationError(f"experiment file not found: {path}", field="experiment")
    try:
        with open(path, "r") as f:
            return yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise LabValidationError(f"invalid YAML in {path}: {e}", field="experiment")


# --- gen ---
def cmd_gen(args: argparse.Namespace, config: LabConfig, threads: int) -> int:
    if args.kind == "cycle":
        space = FiniteMetricSpace.cycle(args.n, args.circumference)
    elif args.kind == "two-point":
        space = FiniteMetricSpace.two_point(args.d)
    else:
        space = FiniteMetricSpace.grid(args.spacing, args.radius)
    kernel: Optional[MarkovKernel] = None
    if args.kind == "heat":
        kernel = heat_kernel_grid(space, args.t)
    elif args.kind == "brownian":
        kernel = brownian_kernel_grid(space, args.t)
    elif args.kind == "ou":
        kernel = ou_kernel_grid(space, args.t, args.a)
    recorder = RunRecorder("gen", args, config, [])
    recorder.add(write_space(space, recorder.out / "space.json"))
    if kernel is not None:
        recorder.add(write_kernel(kernel, recorder.out / "kernel.csv"))
    recorder.finish()
    report = {"command": "gen", "kind": args.kind, "points": space.n, "outputs": recorder.outputs}
    _emit(args, report, lambda: console.print(f"Wrote {', '.join(recorder.outputs)} ({space.n} points)", style="info"))
    return EXIT_OK


# --- argument parsing ---
class _SeedAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.seed_given = True


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, action=_SeedAction, help="Master seed for all randomness")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (default: $HKLAB_THREADS or 1)")
    common.add_argument("--config", type=Path, default=None, help="YAML/JSON file merged over the defaults")
    common.add_argument("--out", type=Path, default=DEFAULT_OUT, help="Directory for reports and the manifest")
    common.add_argument("--json", action="store_true", help="Print the machine-readable report")
    common.add_argument("--verbose", action="store_true", help="Log progress")
    common.add_argument("--debug", action="store_true", help="Log solver internals")

    parser = argparse.ArgumentParser(prog="hklab", description="Hellinger-Kantorovich and entropic divergence lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    dist = subparsers.add_parser("dist", parents=[common], help="Distance or divergence between two measures")
    dist.add_argument("space", type=Path)
    dist.add_argument("mu0", type=Path)
    dist.add_argument("mu1", type=Path)
    dist.add_argument("--metric", choices=METRICS, default="w2")
    dist.add_argument("--a", type=float, default=1.0)
    dist.add_argument("--b", type=float, default=1.0)
    dist.add_argument("--alpha", type=float, default=1.0, help="HK length scale (hk metric)")

    constants = subparsers.add_parser("constants", parents=[common], help="Estimate a functional-inequality constant")
    constants.add_argument("space", type=Path)
    constants.add_argument("kernel", type=Path)
    constants.add_argument("--which", choices=tuple(ESTIMATORS), default="rpi")
    constants.add_argument("--weak", action="store_true", help="Recentred weak form of the rpi ratio")
    constants.add_argument("--no-curve", action="store_true", help="Skip the dictionary-size convergence curve")
    constants.add_argument("--linearize", type=float, nargs="*", default=None, help="rlsi ratio at 1 + eps g for each eps")

    verify = subparsers.add_parser("verify", parents=[common], help="Run verification harnesses")
    verify.add_argument("space", type=Path)
    verify.add_argument("kernel", type=Path)
    verify.add_argument("--suite", nargs="+", choices=SUITE_ORDER + ("all",), default=["all"])
    which = verify.add_mutually_exclusive_group(required=True)
    which.add_argument("--constant", type=float, help="Use this constant for every suite")
    which.add_argument("--estimate", action="store_true", help="Estimate each suite's constant first")
    verify.add_argument("--all-points", action="store_true", help="Sample points up to the hull of a 1-D grid")

    simulate = subparsers.add_parser("simulate", parents=[common], help="Run a dynamics experiment")
    simulate.add_argument("experiment_file", type=Path, nargs="?")
    simulate.add_argument("--experiment", choices=EXPERIMENTS)
    simulate.add_argument("--preset", help="Run a shipped preset instead of a file")

    gen = subparsers.add_parser("gen", parents=[common], help="Write a built-in space and kernel")
    gen.add_argument("kind", choices=GEN_KINDS)
    gen.add_argument("--spacing", type=float, default=0.01)
    gen.add_argument("--radius", type=float, default=6.0)
    gen.add_argument("--n", type=int, default=16, help="Cycle size")
    gen.add_argument("--circumference", type=float, default=None)
    gen.add_argument("--d", type=float, default=1.0, help="Two-point distance")
    gen.add_argument("--t", type=float, default=0.25)
    gen.add_argument("--a", type=float, default=1.0, help="OU rate")
    return parser


COMMANDS = {
    "dist": cmd_dist,
    "constants": cmd_constants,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "gen": cmd_gen,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_OK
    if not hasattr(args, "seed_given"):
        args.seed_given = False
    configure_logging(args.verbose, args.debug)
    try:
        config = load_lab_config(args.config)
        threads = resolve_threads(args.threads)
        return COMMANDS[args.command](args, config, threads)
    except LabValidationError as e:
        err_console.print(f"Invalid input: {e}", style="error")
        return EXIT_INVALID
    except SolverConvergenceError as e:
        err_console.print(f"Solver did not converge: {e}", style="danger")
        if e.solution is not None:
            err_console.print(to_plain(e.solution.diagnostics()), style="debug")
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
