"""Command-line front end: eval, solve, curve, mc, and verify subcommands.

Exit codes: 0 on success, 1 on verification failure, 2 on usage or parse
errors.  A JSON config file given via ``--config`` overrides command-line
flags.  Report-style commands write matplotlib figures next to their
delimited output unless ``--no-fig`` is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import plots
from .condexp import QuadratureConfig, objective
from .dist import (
    AtomicDistribution,
    SignalSpec,
    center,
    load_distribution,
    moments,
)
from .errors import BadGrid, LfnoiseError, NegativeEpsilon, ParseError
from .mc import estimate_objective, estimates_to_csv, refine_bins
from .solve import (
    OptimizerConfig,
    best_noise_search,
    lcurve_to_csv,
    lcurve_to_plot_data,
    trace_L_curve,
)
from .verify import format_report_table, run_all

CENTER_WARN_TOL = 1e-12


def _load_signal(path) -> SignalSpec:
    d = load_distribution(path)
    if not isinstance(d, AtomicDistribution):
        raise ParseError("signal file must hold an atomic distribution")
    mean, _, _ = moments(d)
    if abs(mean) > CENTER_WARN_TOL:
        print(f"warning: signal mean {mean!r} != 0; re-centering", file=sys.stderr)
        d = center(d)
    return SignalSpec(d)


def _parse_grid(text: str) -> list[float]:
    try:
        if ":" in text:
            a, b, step = (float(part) for part in text.split(":"))
            if step <= 0.0 or b < a:
                raise BadGrid(f"bad grid range {text!r}")
            count = int((b - a) / step + 1e-9) + 1
            return [a + i * step for i in range(count)]
        grid = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise BadGrid(f"cannot parse grid {text!r}") from exc
    if not grid:
        raise BadGrid("empty grid")
    return grid


def _optimizer_config(args) -> OptimizerConfig:
    cfg = OptimizerConfig(seed=args.seed)
    if getattr(args, "restarts", None) is not None:
        cfg = OptimizerConfig(restarts=args.restarts, seed=args.seed)
    if getattr(args, "support_size", None) is not None:
        cfg = OptimizerConfig(
            restarts=cfg.restarts, support_size=args.support_size, seed=args.seed
        )
    return cfg


def _quad_config(args) -> QuadratureConfig:
    if getattr(args, "quad_nodes", None) is not None:
        return QuadratureConfig(nodes=args.quad_nodes)
    return QuadratureConfig()


def _write_or_print(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def cmd_eval(args) -> int:
    x = _load_signal(args.signal)
    y = load_distribution(args.noise)
    report = objective(x, y, _quad_config(args))
    if args.epsilon is not None:
        var_slack = report.noise_second_moment - float(args.epsilon) ** 2
        print(
            f"feasibility: mean_slack={report.noise_mean!r} var_slack={var_slack!r}",
            file=sys.stderr,
        )
    _write_or_print(report.to_json(), args.out)
    return 0


def cmd_solve(args) -> int:
    x = _load_signal(args.signal)
    if args.epsilon is None or args.epsilon < 0.0:
        raise NegativeEpsilon(f"epsilon {args.epsilon!r} must be given and >= 0")
    result = best_noise_search(x, args.epsilon, _optimizer_config(args), _quad_config(args))
    _write_or_print(result.to_json(), args.out)
    return 0


def cmd_curve(args) -> int:
    x = _load_signal(args.signal)
    grid = _parse_grid(args.eps_grid)
    points = trace_L_curve(x, grid, _optimizer_config(args), _quad_config(args))
    csv_text = lcurve_to_csv(points)
    _write_or_print(csv_text, args.out)
    if args.out is not None:
        out = Path(args.out)
        out.with_suffix(".dat").write_text(
            lcurve_to_plot_data(points, x.variance), encoding="utf-8"
        )
        if not args.no_fig:
            plots.save_curve_figure(points, x.variance, out.with_suffix(".png"))
    return 0


def cmd_mc(args) -> int:
    x = _load_signal(args.signal)
    y = load_distribution(args.noise)
    if args.bin_schedule is not None:
        schedule = [int(b) for b in args.bin_schedule.split(",") if b.strip()]
        estimates = refine_bins(x, y, schedule, args.samples, args.seed)
    else:
        estimates = [estimate_objective(x, y, args.samples, args.bins, args.seed)]
    _write_or_print(estimates_to_csv(estimates), args.out)
    if args.out is not None and not args.no_fig:
        exact = objective(x, y, _quad_config(args)).J
        plots.save_mc_figure(estimates, Path(args.out).with_suffix(".png"), exact=exact)
    return 0


def cmd_verify(args) -> int:
    reports = run_all(battery=args.battery, seed=args.seed)
    sys.stdout.write(format_report_table(reports))
    if args.out is not None:
        doc = json.dumps([json.loads(r.to_json()) for r in reports])
        Path(args.out).write_text(doc + "\n", encoding="utf-8")
        if not args.no_fig:
            plots.save_verify_figure(reports, Path(args.out).with_suffix(".png"))
    return 0 if all(r.passed for r in reports) else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfnoise",
        description="Evaluate, search, and verify least favorable additive noise.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out", default=None, help="output file (stdout if omitted)")
        p.add_argument("--config", default=None, help="JSON config file overriding flags")
        p.add_argument("--quad-nodes", dest="quad_nodes", type=int, default=None)

    p_eval = sub.add_parser("eval", help="evaluate the objective for a signal/noise pair")
    p_eval.add_argument("--signal", required=True)
    p_eval.add_argument("--noise", required=True)
    p_eval.add_argument("--epsilon", type=float, default=None, help="budget for slack reporting")
    common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_solve = sub.add_parser("solve", help="search for the least favorable noise")
    p_solve.add_argument("--signal", required=True)
    p_solve.add_argument("--epsilon", type=float, default=None, required=True)
    p_solve.add_argument("--restarts", type=int, default=None)
    p_solve.add_argument("--support-size", dest="support_size", type=int, default=None)
    common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_curve = sub.add_parser("curve", help="trace the value curve over a budget grid")
    p_curve.add_argument("--signal", required=True)
    p_curve.add_argument("--eps-grid", dest="eps_grid", required=True, help="a:b:step or comma list")
    p_curve.add_argument("--restarts", type=int, default=None)
    p_curve.add_argument("--support-size", dest="support_size", type=int, default=None)
    p_curve.add_argument("--no-fig", dest="no_fig", action="store_true")
    common(p_curve)
    p_curve.set_defaults(func=cmd_curve)

    p_mc = sub.add_parser("mc", help="Monte Carlo cross-estimate of the objective")
    p_mc.add_argument("--signal", required=True)
    p_mc.add_argument("--noise", required=True)
    p_mc.add_argument("--samples", type=int, default=200_000)
    p_mc.add_argument("--bins", type=int, default=64)
    p_mc.add_argument("--bin-schedule", dest="bin_schedule", default=None, help="comma list of bin counts")
    p_mc.add_argument("--no-fig", dest="no_fig", action="store_true")
    common(p_mc)
    p_mc.set_defaults(func=cmd_mc)

    p_verify = sub.add_parser("verify", help="run the theorem-check battery")
    p_verify.add_argument("--battery", default="standard")
    p_verify.add_argument("--no-fig", dest="no_fig", action="store_true")
    common(p_verify)
    p_verify.set_defaults(func=cmd_verify)
    return parser


def _apply_config(args) -> None:
    """Load the JSON config file; its values override parsed flags."""
    if getattr(args, "config", None) is None:
        return
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid config JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")
    for key, value in doc.items():
        if not hasattr(args, key) or key in ("func", "command", "config"):
            raise ParseError(f"unknown config key {key!r}")
        setattr(args, key, value)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        _apply_config(args)
        return args.func(args)
    except LfnoiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
