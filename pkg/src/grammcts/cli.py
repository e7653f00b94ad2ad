"""Command-line front end: ``grammcts run | ablate | enumerate``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import demo_grammar_text
from .engine import MCTS, Budget, null_clock
from .evaluators import EvaluatorError, WorkerAborted, from_spec
from .grammar import GrammarError, count_productions, enumerate_productions, expand_ranges, parse_grammar, to_config
from .metrics import mean_summary, summarize, write_iterations, write_summary
from .policies import make_policy, make_rng
from .tree import dump_tree

log = logging.getLogger("grammcts")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_grammar(args):
    if args.grammar is None:
        text = demo_grammar_text()
    else:
        path = Path(args.grammar)
        if not path.is_file():
            raise UsageError(f"grammar file not found: {path}")
        text = path.read_text(encoding="utf-8")
    return expand_ranges(parse_grammar(text), args.range_count)


def _budget(args) -> Budget:
    try:
        if args.budget_secs is not None:
            return Budget.seconds(args.budget_secs)
        return Budget.iterations(args.budget_iters)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _evaluator(spec: str, grammar, args):
    kind, _, rest = spec.partition(":")
    if kind == "tabular" and not Path(rest).is_file():
        raise UsageError(f"tabular file not found: {rest}")
    try:
        return from_spec(spec, grammar, timeout=args.timeout_s)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _policy(args, **override):
    params = dict(c=args.c, j=args.j, gamma=args.gamma, smoothing=args.smoothing, eq1_form=args.eq1_form)
    params.update(override)
    try:
        return make_policy(args.policy, **{k: float(v) if k != "eq1_form" else v for k, v in params.items()})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _one_run(grammar, policy, evaluator, args, seed: int):
    clock = null_clock if args.clock == "none" else time.perf_counter
    engine = MCTS(grammar, policy, evaluator, make_rng(seed), clock)
    try:
        result = engine.run(_budget(args), max_searches=args.searches)
    finally:
        close = getattr(evaluator, "close", None)
        if close:
            close()
    return engine, result


def cmd_run(args) -> int:
    grammar = _load_grammar(args)
    policy = _policy(args)
    evaluator = _evaluator(args.eval, grammar, args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    engine, result = _one_run(grammar, policy, evaluator, args, args.seed)
    with open(out / "outcomes.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for o in result.outcomes:
            fh.write(json.dumps(o.to_json()) + "\n")
    with open(out / "iterations.csv", "w", encoding="utf-8", newline="") as fh:
        write_iterations(result.records, fh)
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        write_summary([summarize(result.records)], fh)
    if args.dump_tree:
        (out / "tree.txt").write_text(dump_tree(engine.root, policy, grammar), encoding="utf-8")

    best = result.best
    status = "exhausted" if result.exhausted else "budget spent"
    print(f"{len(result.outcomes)} configurations in {result.iterations} iterations ({status})")
    if best is not None:
        print(f"best {best.reward:.6g}: {best.key}")
    return EXIT_OK


def _sweep(args) -> tuple[str, list[str]]:
    swept = [(name, str(getattr(args, name))) for name in ("c", "j", "gamma") if "," in str(getattr(args, name))]
    if len(swept) > 1:
        raise UsageError("sweep one parameter at a time")
    if not swept:
        name = {"uct": "c", "bts": "j", "tpe": "gamma"}[args.policy]
        return name, [str(getattr(args, name))]
    name, values = swept[0]
    return name, [v.strip() for v in values.split(",") if v.strip()]


def cmd_ablate(args) -> int:
    grammar = _load_grammar(args)
    name, values = _sweep(args)
    rows, labels = [], []
    for value in values:
        summaries = []
        for k in range(args.runs):
            seed = args.seed + k
            evaluator = _evaluator(args.eval.replace("{seed}", str(seed)), grammar, args)
            _, result = _one_run(grammar, _policy(args, **{name: value}), evaluator, args, seed)
            summaries.append(summarize(result.records))
        rows.append(mean_summary(summaries))
        labels.append((name, value))
    write_summary(rows, sys.stdout, labels)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
            write_summary(rows, fh, labels)
    return EXIT_OK


def cmd_enumerate(args) -> int:
    grammar = _load_grammar(args)
    n = count_productions(grammar)
    print(n)
    if args.no_list:
        return EXIT_OK
    if n > args.cap:
        if args.list:
            print(f"refusing to list {n} productions (cap {args.cap})", file=sys.stderr)
        return EXIT_OK
    for state in enumerate_productions(grammar):
        print(to_config(state).canonical_key)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grammcts", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grammar", help="grammar file (default: bundled demo grammar)")
    common.add_argument("--range-count", type=int, default=3, help="grid values per range without a count")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--policy", choices=["uct", "bts", "tpe"], default="uct")
    search.add_argument("--c", default="0.7", help="UCT exploration constant")
    search.add_argument("--j", default="1", help="BTS bootstrap replicates")
    search.add_argument("--gamma", default="0.85", help="TPE quantile, as a fraction or a percentage")
    search.add_argument("--smoothing", default="1.0", help="TPE count smoothing")
    search.add_argument("--eq1-form", choices=["paper", "textbook"], default="paper")
    budget = search.add_mutually_exclusive_group()
    budget.add_argument("--budget-iters", type=int, default=None)
    budget.add_argument("--budget-secs", type=float, default=None)
    search.add_argument("--searches", type=int, default=None, help="stop after this many configurations")
    search.add_argument("--eval", default="synthetic:0", help="tabular:<csv> | synthetic:<seed>[,planted] | cmd:<command>")
    search.add_argument("--timeout-s", type=float, default=300.0)
    search.add_argument("--seed", type=int, default=0)
    search.add_argument("--clock", choices=["wall", "none"], default="wall",
                        help="'none' records zero algorithm time, for reproducible metric files")

    p = sub.add_parser("run", parents=[common, search], help="search and write outcomes and metrics")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--dump-tree", action="store_true")
    p.set_defaults(func=cmd_run, default_iters=1000, default_searches=None)

    p = sub.add_parser("ablate", parents=[common, search], help="sweep one policy parameter")
    p.add_argument("--runs", type=int, default=4, help="runs per setting, seeds seed..seed+runs-1")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_ablate, default_iters=10**9, default_searches=100)

    p = sub.add_parser("enumerate", parents=[common], help="count (and list) every production")
    p.add_argument("--list", action="store_true", help="list productions, refusing above --cap")
    p.add_argument("--no-list", action="store_true")
    p.add_argument("--cap", type=int, default=10000)
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "budget_iters") and args.budget_iters is None and args.budget_secs is None:
        args.budget_iters = args.default_iters
    if hasattr(args, "searches") and args.searches is None:
        args.searches = args.default_searches
    try:
        return args.func(args)
    except BrokenPipeError:
        # output piped into e.g. ``head``; silence the flush at exit
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except (UsageError, GrammarError, OSError) as exc:
        print(f"grammcts: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WorkerAborted, EvaluatorError) as exc:
        print(f"grammcts: search failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
