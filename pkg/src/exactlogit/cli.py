"""Command line entry point: ``exactlogit {moves,fit,test,verify}``.

Exit codes: 0 success, 1 usage or parse error, 2 connectivity
counterexample, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .data import BUILTIN_DATASETS, Dataset, ParseError, format_grid, format_long_csv, load_dataset, parse_grid, parse_long_csv
from .exact import MOVESETS, TESTS, NumericFailure, emit_report, run_exact_test
from .fiber import DEFAULT_MAX_FIBER, THEOREMS, FiberTooLarge, fiber_to_csv, verify_connectivity_theorem
from .glm import MODEL_KINDS, ModelSpec, NonConvergenceError, fit_logit
from .mcmc import ChainConfig
from .movesets import (
    bivariate_lifted_moves,
    bivariate_unit_moves,
    lifted_poisson_moves,
    poisson_moves,
    segre_markov_basis,
    univariate_adjacent_moves,
)
from .tables import move_to_csv

EXIT_OK, EXIT_USAGE, EXIT_COUNTEREXAMPLE, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("exactlogit")


class UsageError(Exception):
    pass


def _sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must look like J or J,K, got {text!r}") from None
    if not 1 <= len(sizes) <= 2 or min(sizes) < 1:
        raise argparse.ArgumentTypeError(f"sizes must look like J or J,K, got {text!r}")
    return sizes


# -- move sets ---------------------------------------------------------------

def _need(sizes: tuple[int, ...], n: int, name: str) -> tuple[int, ...]:
    if len(sizes) != n:
        raise UsageError(f"move set {name!r} takes {'J' if n == 1 else 'J,K'} sizes")
    return sizes


MOVE_SETS = {
    "poisson": lambda s: poisson_moves(*_need(s, 1, "poisson")),
    "lifted-poisson": lambda s: lifted_poisson_moves(*_need(s, 1, "lifted-poisson")),
    "adjacent": lambda s: univariate_adjacent_moves(*_need(s, 1, "adjacent")),
    "segre": lambda s: segre_markov_basis(
        poisson_moves(_need(s, 2, "segre")[0]), poisson_moves(s[1]), s[0], s[1]
    ),
    "full": lambda s: bivariate_lifted_moves(*_need(s, 2, "full")),
    "unit": lambda s: bivariate_unit_moves(*_need(s, 2, "unit")),
}


def cmd_moves(args: argparse.Namespace) -> int:
    moves = MOVE_SETS[args.set](args.sizes)
    if args.count_only:
        print(len(moves))
        return EXIT_OK
    chunks = []
    for i, z in enumerate(moves, start=1):
        body = move_to_csv(z).splitlines()
        if i == 1:
            chunks.append("move," + body[0])
        chunks.extend(f"{i},{line}" for line in body[1:])
    _write(args.out, "\n".join(chunks) + "\n" if chunks else "")
    return EXIT_OK


# -- data --------------------------------------------------------------------

def _read_dataset(source: str, fmt: str) -> Dataset:
    if source in BUILTIN_DATASETS and not Path(source).exists():
        return load_dataset(source)
    try:
        text = sys.stdin.read() if source == "-" else Path(source).read_text()
    except OSError as err:
        raise UsageError(f"cannot read {source}: {err.strerror}") from None
    return parse_grid(text) if fmt == "grid" else parse_long_csv(text)


def _write(out: str | None, text: str) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_fit(args: argparse.Namespace) -> int:
    data = _read_dataset(args.data, args.format)
    spec = ModelSpec(args.model, data.J, data.K)
    try:
        res = fit_logit(data.to_table(), spec)
    except NonConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        if err.best is not None:
            print(json.dumps(err.best.to_dict(), indent=2, sort_keys=True))
        return EXIT_NUMERIC
    out = res.to_dict()
    out.update(J=data.J, K=data.K)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_convert(args: argparse.Namespace) -> int:
    data = _read_dataset(args.data, args.format)
    _write(args.out, format_long_csv(data) if args.to == "csv" else format_grid(data))
    return EXIT_OK


def cmd_test(args: argparse.Namespace) -> int:
    data = _read_dataset(args.data, args.format)
    cfg = ChainConfig(burn_in=args.burn_in, samples=args.samples, seed=args.seed, thin=args.thin)
    try:
        report = run_exact_test(data, args.test, args.moveset, cfg, chains=args.chains, bin_width=args.bin_width)
    except NumericFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.out:
        for p in emit_report(report, args.out, stem=args.test, trace=args.trace):
            log.info("wrote %s", p)
    sys.stdout.write(report.to_json())
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        report = verify_connectivity_theorem(args.theorem, args.sizes, args.cap, args.max_fiber)
    except FiberTooLarge as err:
        raise UsageError(f"{err}; lower --cap or raise --max-fiber") from None
    print(json.dumps(report.summary(), indent=2, sort_keys=True))
    if report.ok:
        return EXIT_OK
    csv_text = fiber_to_csv(report.counterexample)
    if args.out:
        Path(args.out).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_COUNTEREXAMPLE


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--burn-in", type=int, default=50_000)
    common.add_argument("--samples", type=int, default=100_000)
    common.add_argument("--thin", type=int, default=1)
    common.add_argument("--chains", type=int, default=1)
    common.add_argument("--moveset", choices=MOVESETS, default="full")
    common.add_argument("--format", choices=("grid", "csv"), default="grid", help="input data format")
    common.add_argument("--out", help="output file (or directory for `test`)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="exactlogit", description="Exact conditional tests for logit models on equally spaced levels.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("moves", parents=[common], help="dump a move set as signed-delta CSV")
    m.add_argument("set", choices=sorted(MOVE_SETS))
    m.add_argument("sizes", type=_sizes, help="J or J,K")
    m.add_argument("--count-only", action="store_true")
    m.set_defaults(func=cmd_moves)

    f = sub.add_parser("fit", parents=[common], help="fit a logit model and print JSON")
    f.add_argument("data", help="grid/CSV file, '-' for stdin, or " + "/".join(BUILTIN_DATASETS))
    f.add_argument("--model", choices=MODEL_KINDS, default="linear_bivariate")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("test", parents=[common], help="run an exact conditional LR test")
    t.add_argument("data", help="grid/CSV file, '-' for stdin, or " + "/".join(BUILTIN_DATASETS))
    t.add_argument("--test", choices=TESTS, default="goodness_of_fit")
    t.add_argument("--bin-width", type=float, default=0.5)
    t.add_argument("--trace", action="store_true", help="also write the statistic trace")
    t.set_defaults(func=cmd_test)

    v = sub.add_parser("verify", parents=[common], help="brute-force a connectivity statement")
    v.add_argument("--theorem", choices=THEOREMS, required=True)
    v.add_argument("--sizes", type=_sizes, required=True)
    v.add_argument("--cap", type=int, default=2)
    v.add_argument("--max-fiber", type=int, default=DEFAULT_MAX_FIBER)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("convert", parents=[common], help="convert a dataset between grid and long CSV")
    c.add_argument("data")
    c.add_argument("--to", choices=("grid", "csv"), default="csv")
    c.set_defaults(func=cmd_convert)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for counterexamples here
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ParseError, ValueError, KeyError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"error: cannot write {err.filename}: {err.strerror}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
