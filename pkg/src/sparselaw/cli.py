"""Command-line interface: ``sparselaw <command> [options]``.

Numbers are printed with 17 significant digits. Failures exit non-zero and
write a JSON object ``{"error": kind, "message": text}`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import cost, fitting, law, plot, pruning, runtable, simulator
from .errors import SparseLawError


class UsageError(SparseLawError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _num(x: float) -> str:
    return f"{float(x):.17g}"


def _default_seed() -> int:
    raw = os.environ.get("SPARSELAW_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SPARSELAW_SEED must be an integer, got {raw!r}") from None


def _write(text: str, path: Optional[str], stdout) -> None:
    if path is None or path == "-":
        stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _cost_model(args) -> cost.CostModel:
    return cost.CostModel(flops_per_param_datum=args.flops_per_param, cost_mode=args.cost)


def _add_cost_args(p, default_mode="sparse"):
    p.add_argument("--cost", choices=cost.COST_MODES, default=default_mode,
                   help="FLOP accounting: dense base model or sparsity credited during training")
    p.add_argument("--flops-per-param", type=float, default=6.0,
                   help="FLOPs per parameter per datum (6 decoder-only, 3 encoder-decoder)")


def _add_coeffs_arg(p):
    p.add_argument("--coeffs", required=True,
                   help=f"coefficients JSON file or preset name ({', '.join(law.PRESETS)})")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(args, stdin, stdout):
    source = stdin if args.table in (None, "-") else args.table
    data = runtable.parse_run_table(source)
    config = fitting.FitConfig(
        huber_delta=args.delta, log_loss=args.log_loss, num_starts=args.starts,
        max_iterations=args.max_iter, seed=args.seed if args.seed is not None else _default_seed(),
    )
    if args.dense_coeffs:
        result = fitting.fit_sparsity_only(data, law.load_coefficients(args.dense_coeffs), config)
    else:
        result = fitting.fit_full(data, config)
    if args.residuals:
        _write(fitting.residuals_csv(data, result), args.residuals, stdout)
    if args.result:
        _write(result.to_json() + "\n", args.result, stdout)
    _write(result.coefficients.to_json() + "\n", args.output, stdout)
    if not result.converged:
        args.stderr.write(json.dumps({"warning": "not-converged",
                                     "message": "no start met the termination tolerance"}) + "\n")


def cmd_predict(args, stdin, stdout):
    coeffs = law.load_coefficients(args.coeffs)
    stdout.write(_num(law.eval_law(coeffs, args.sparsity, args.params, args.data)) + "\n")


def cmd_gain(args, stdin, stdout):
    coeffs = law.load_coefficients(args.coeffs)
    stdout.write(_num(law.gain(coeffs, args.sparsity)) + "\n")


def cmd_cmul(args, stdin, stdout):
    stdout.write(_num(_cost_model(args).multiplier(args.sparsity)) + "\n")


def cmd_optimal_sparsity(args, stdin, stdout):
    coeffs = law.load_coefficients(args.coeffs)
    model = _cost_model(args)
    if args.method == "closed":
        s = cost.optimal_sparsity_closed(coeffs, args.params, args.compute, model)
    else:
        s = cost.optimal_sparsity_numeric(coeffs, model, args.params, args.compute)
    stdout.write(_num(s) + "\n")


def cmd_contour(args, stdin, stdout):
    coeffs = law.load_coefficients(args.coeffs)
    model = _cost_model(args)
    N_values = np.geomspace(args.n_min, args.n_max, args.points)
    builder = cost.sparsity_contour if args.method == "closed" else cost.sparsity_contour_numeric
    contours = [builder(coeffs, model, s, N_values) for s in args.sparsity]
    frontier = [] if args.no_frontier else cost.chinchilla_frontier(coeffs, model, N_values)
    rows = [p for c in contours for p in c] + frontier
    _write(runtable.format_points_csv(rows), args.csv, stdout)
    if args.svg:
        plot.emit_contour_plot(contours, frontier, args.svg)


def cmd_chinchilla(args, stdin, stdout):
    coeffs = law.load_coefficients(args.coeffs)
    model = cost.CostModel(flops_per_param_datum=args.flops_per_param)
    N, D = cost.chinchilla_optimal(coeffs, model, args.compute)
    loss = law.eval_law(coeffs, 0.0, N, D)
    stdout.write("N,D,C,loss\n" + ",".join(_num(x) for x in (N, D, args.compute, loss)) + "\n")


def cmd_threshold(args, stdin, stdout):
    coeffs = law.load_coefficients(args.coeffs)
    stdout.write(_num(cost.sparsity_threshold_multiple(coeffs, _cost_model(args), args.sparsity)) + "\n")


def cmd_simulate(args, stdin, stdout):
    grid = simulator.PRESET_GRIDS[args.preset]()
    truth = law.load_coefficients(args.coeffs or {"vit": "vit-jft", "t5": "t5-c4"}[args.preset])
    seed = args.seed if args.seed is not None else _default_seed()
    data = simulator.simulate_sweep(truth, grid, args.noise, seed)
    text = runtable.format_run_table_json(data) + "\n" if args.format == "json" \
        else runtable.format_run_table(data)
    _write(text, args.output, stdout)


def cmd_prune(args, stdin, stdout):
    with open(args.input, "rb") as fh:
        tensor = pruning.load_tensor(fh.read())
    pattern = pruning.NmPattern.parse(args.pattern) if args.pattern else tensor.group
    if pattern is not None:
        mask = pruning.nm_gradual_mask(tensor.values, pattern, args.sparsity)
    else:
        mask = pruning.gmp_mask(tensor.values, args.sparsity)
    out = pruning.apply_mask(pruning.MaskedTensor(tensor.values, mask, pattern))
    with open(args.output, "wb") as fh:
        fh.write(pruning.dump_tensor(out))
    stdout.write(f"kept={int(mask.sum())} total={mask.size} sparsity={_num(out.sparsity)}\n")


def cmd_train_toy(args, stdin, stdout):
    seed = args.seed if args.seed is not None else _default_seed()
    problem = pruning.LeastSquaresProblem.random(args.dim, args.samples, args.noise, seed)
    sched = pruning.PruneSchedule(args.sparsity, args.start, args.end, args.update_every)
    clip = None if args.clip <= 0 else args.clip
    opt = pruning.RelativeLR(args.lr, args.epsilon, clip)
    pattern = pruning.NmPattern.parse(args.pattern) if args.pattern else None
    trace = pruning.toy_train(problem, sched, opt, args.steps, pattern)
    _write(trace.to_csv(), args.output, stdout)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparselaw", description=__doc__.splitlines()[0],
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("fit", help="fit coefficients to a run table", formatter_class=fmt)
    p.add_argument("table", nargs="?", help="CSV/JSON run table; '-' or omitted reads stdin")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--log-loss", dest="log_loss", action="store_true", default=True,
                      help="fit residuals of log L")
    mode.add_argument("--raw-loss", dest="log_loss", action="store_false", help="fit residuals of L")
    p.add_argument("--delta", type=float, default=1e-3, help="Huber threshold")
    p.add_argument("--starts", type=int, default=20, help="number of random starts")
    p.add_argument("--max-iter", type=int, default=5000, help="iterations per start")
    p.add_argument("--seed", type=int, default=None, help="start sampling seed (default $SPARSELAW_SEED or 0)")
    p.add_argument("--dense-coeffs", help="freeze size/data terms from these coefficients; fit a_S, b_S, c_S only")
    p.add_argument("--output", "-o", help="coefficients JSON path (default stdout)")
    p.add_argument("--result", help="also write the full fit result JSON here")
    p.add_argument("--residuals", help="also write per-record residuals CSV here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="evaluate the law at (S, N, D)", formatter_class=fmt)
    _add_coeffs_arg(p)
    p.add_argument("--sparsity", type=float, required=True)
    p.add_argument("--params", type=float, required=True, help="non-zero parameters N")
    p.add_argument("--data", type=float, required=True, help="training data D")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gain", help="dense-size multiplier of a sparse model", formatter_class=fmt)
    _add_coeffs_arg(p)
    p.add_argument("--sparsity", type=float, required=True)
    p.set_defaults(func=cmd_gain)

    p = sub.add_parser("cmul", help="training-cost multiplier at a sparsity", formatter_class=fmt)
    p.add_argument("--sparsity", type=float, required=True)
    _add_cost_args(p)
    p.set_defaults(func=cmd_cmul)

    p = sub.add_parser("optimal-sparsity", help="loss-minimizing sparsity at fixed N and compute",
                       formatter_class=fmt)
    _add_coeffs_arg(p)
    p.add_argument("--params", type=float, required=True, help="non-zero parameters N")
    p.add_argument("--compute", type=float, required=True, help="training FLOPs C")
    p.add_argument("--method", choices=("closed", "numeric"), default="numeric")
    _add_cost_args(p)
    p.set_defaults(func=cmd_optimal_sparsity)

    p = sub.add_parser("contour", help="iso-sparsity contours and the dense frontier", formatter_class=fmt)
    _add_coeffs_arg(p)
    p.add_argument("--sparsity", type=float, nargs="+", required=True)
    p.add_argument("--n-min", type=float, default=1e6)
    p.add_argument("--n-max", type=float, default=1e10)
    p.add_argument("--points", type=int, default=9)
    p.add_argument("--method", choices=("closed", "numeric"), default="closed")
    p.add_argument("--no-frontier", action="store_true", help="omit the Chinchilla frontier")
    p.add_argument("--csv", help="CSV output path (default stdout)")
    p.add_argument("--svg", help="also write a log-log SVG plot here")
    _add_cost_args(p)
    p.set_defaults(func=cmd_contour)

    p = sub.add_parser("chinchilla", help="compute-optimal dense (N, D)", formatter_class=fmt)
    _add_coeffs_arg(p)
    p.add_argument("--compute", type=float, required=True)
    p.add_argument("--flops-per-param", type=float, default=6.0)
    p.set_defaults(func=cmd_chinchilla)

    p = sub.add_parser("threshold", help="compute multiple over Chinchilla at which S becomes optimal",
                       formatter_class=fmt)
    _add_coeffs_arg(p)
    p.add_argument("--sparsity", type=float, required=True)
    _add_cost_args(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("simulate", help="synthetic sweep from known coefficients", formatter_class=fmt)
    p.add_argument("--preset", choices=sorted(simulator.PRESET_GRIDS), required=True)
    p.add_argument("--coeffs", help="ground-truth coefficients (default: the preset family's)")
    p.add_argument("--noise", type=float, default=0.0, help="log-normal noise sigma")
    p.add_argument("--seed", type=int, default=None, help="noise seed (default $SPARSELAW_SEED or 0)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", "-o", help="output path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("prune", help="mask a binary tensor file", formatter_class=fmt)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--sparsity", type=float, required=True)
    p.add_argument("--pattern", help="n:m group floor, e.g. 2:4")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("train-toy", help="gradual pruning on a least-squares toy", formatter_class=fmt)
    p.add_argument("--sparsity", type=float, default=0.875, help="final sparsity")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--update-every", type=int, default=100)
    p.add_argument("--start", type=float, default=0.25)
    p.add_argument("--end", type=float, default=0.75)
    p.add_argument("--pattern", help="n:m pattern for gradual n:m pruning")
    p.add_argument("--lr", type=float, default=0.05, help="base relative learning rate")
    p.add_argument("--epsilon", type=float, default=1e-3, help="floor on the RMS scale")
    p.add_argument("--clip", type=float, default=1.0, help="update RMS clip threshold (<= 0 disables)")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", "-o", help="trace CSV path (default stdout)")
    p.set_defaults(func=cmd_train_toy)
    return parser


def main(argv: Optional[Sequence[str]] = None, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        args.stderr = stderr
        args.func(args, stdin, stdout)
    except SystemExit as exc:
        return int(exc.code or 0)
    except SparseLawError as exc:
        stderr.write(json.dumps({"error": exc.kind, "message": str(exc)}) + "\n")
        return 2 if exc.kind == "usage" else 1
    except FileNotFoundError as exc:
        stderr.write(json.dumps({"error": "file-not-found", "message": str(exc)}) + "\n")
        return 1
    except OSError as exc:
        stderr.write(json.dumps({"error": "io", "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
