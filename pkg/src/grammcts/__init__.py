"""Grammar-guided Monte Carlo tree search for pipeline configuration."""

from importlib import resources

from .engine import MCTS, Budget, RunResult, SearchOutcome, run, selection, simulation
from .evaluators import CachedEvaluator, ExternalEvaluator, SyntheticEvaluator, TabularOracle
from .grammar import (
    DerivationState,
    Grammar,
    GrammarError,
    PipelineConfig,
    apply_rule,
    count_productions,
    enumerate_productions,
    expand_ranges,
    load_grammar,
    parse_grammar,
    start_state,
    to_config,
)
from .policies import BTS, TPE, UCT, make_policy, make_rng
from .tree import SearchExhausted, SearchNode


def demo_grammar_text() -> str:
    return resources.files(__package__).joinpath("data/demo.grammar").read_text(encoding="utf-8")


def demo_grammar() -> Grammar:
    return expand_ranges(parse_grammar(demo_grammar_text()))


__all__ = [
    "BTS", "TPE", "UCT", "MCTS", "Budget", "CachedEvaluator", "DerivationState", "ExternalEvaluator",
    "Grammar", "GrammarError", "PipelineConfig", "RunResult", "SearchExhausted", "SearchNode",
    "SearchOutcome", "SyntheticEvaluator", "TabularOracle", "apply_rule", "count_productions",
    "demo_grammar", "demo_grammar_text", "enumerate_productions", "expand_ranges", "load_grammar",
    "make_policy", "make_rng", "parse_grammar", "run", "selection", "simulation", "start_state", "to_config",
]
