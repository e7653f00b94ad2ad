"""Anytime MCTS over the production tree with leaf pruning.

Each call to :meth:`MCTS.search_once` runs MCTS iterations (selection,
expansion, simulation, backpropagation) until selection lands on a terminal
node or the budget runs out, then returns the greedy best leaf and prunes it.
:meth:`MCTS.run` repeats this, so successive configurations are all distinct.

Actions are tree-navigation steps: one per selection descent, one per
expansion and one per rule application during simulation.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

from .evaluators import ProtocolError, WorkerAborted
from .grammar import DerivationState, Grammar, PipelineConfig, applicable_alternatives, apply_rule, to_config
from .metrics import IterationRecord, Recorder, RunTrace, anytime_trace
from .policies import RngStream, live_children
from .tree import (
    SearchExhausted,
    SearchNode,
    best_leaf,
    expand_child,
    prune_exhausted,
    prune_leaf,
    root,
)

log = logging.getLogger(__name__)

Clock = Callable[[], float]


def null_clock() -> float:
    return 0.0


@dataclass
class Budget:
    mode: str
    limit: float
    consumed: float = 0.0
    _deadline: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("iterations", "seconds"):
            raise ValueError(f"unknown budget mode {self.mode!r}")
        if not self.limit > 0:
            raise ValueError(f"budget limit must be positive, got {self.limit}")

    @classmethod
    def iterations(cls, n: int) -> Budget:
        return cls("iterations", n)

    @classmethod
    def seconds(cls, s: float) -> Budget:
        return cls("seconds", s)

    def start(self) -> None:
        if self.mode == "seconds" and self._deadline is None:
            self._deadline = time.monotonic() + self.limit

    def exhausted(self) -> bool:
        if self.mode == "iterations":
            return self.consumed >= self.limit
        self.start()
        self.consumed = self.limit - (self._deadline - time.monotonic())
        return self.consumed >= self.limit

    def charge(self) -> None:
        if self.mode == "iterations":
            self.consumed += 1


@dataclass
class SearchOutcome:
    config: PipelineConfig
    reward: float
    iterations_used: int
    exhausted: bool
    search: int = 0
    elapsed: float = 0.0

    @property
    def key(self) -> str:
        return self.config.canonical_key

    def to_json(self) -> dict:
        return {
            "search": self.search,
            "key": self.key,
            "reward": self.reward,
            "iterations_used": self.iterations_used,
            "exhausted": self.exhausted,
            "elapsed_s": self.elapsed,
            "config": self.config.as_dict(),
        }


@dataclass
class RunResult:
    outcomes: list[SearchOutcome]
    records: list[IterationRecord]
    exhausted: bool
    iterations: int

    @property
    def best(self) -> SearchOutcome | None:
        return max(self.outcomes, key=lambda o: o.reward, default=None)

    @property
    def best_evaluated(self) -> float:
        return max((r.reward for r in self.records), default=-math.inf)

    def trace(self, true_max: float | None = None) -> RunTrace:
        return anytime_trace(self.outcomes, true_max)


# ------------------------------------------------------------- search steps


def _descend(root_node: SearchNode, policy, rng: RngStream) -> tuple[SearchNode, int]:
    if root_node.pruned:
        raise SearchExhausted("search space exhausted")
    node, steps = root_node, 0
    while not node.terminal and node.unexpanded_slot() is None and live_children(node):
        node = node.children[policy.select(node, rng)]
        steps += 1
    return node, steps


def selection(root_node: SearchNode, policy, rng: RngStream) -> SearchNode:
    """Descend by policy until a terminal, a node with an unexpanded slot, or a dead end."""
    return _descend(root_node, policy, rng)[0]


def _simulate(n: SearchNode, g: Grammar, rng: RngStream) -> tuple[DerivationState, int]:
    if n.pruned:
        raise SearchExhausted("cannot simulate from a pruned node")
    state, node, steps = n.state, n, 0
    while (k := applicable_alternatives(state, g)) > 0:
        if node is not None:
            allowed = [i for i in range(k) if node.children[i] is None or not node.children[i].pruned]
            if not allowed:
                raise SearchExhausted("no live completion")
            choice = allowed[rng.randrange(len(allowed))]
            node = node.children[choice]
        else:
            choice = rng.randrange(k)
        state = apply_rule(state, choice, g)
        steps += 1
    return state, steps


def simulation(n: SearchNode, g: Grammar, rng: RngStream) -> tuple[DerivationState, str]:
    """Complete ``n``'s derivation with uniformly random choices, without touching the tree."""
    state, _ = _simulate(n, g, rng)
    return state, to_config(state).canonical_key


# ------------------------------------------------------------------- engine


class MCTS:
    """One search run: owns the tree, the RNG stream and the iteration log."""

    def __init__(self, grammar: Grammar, policy, evaluator, rng: RngStream, clock: Clock = time.perf_counter):
        self.grammar = grammar
        self.policy = policy
        self.evaluator = evaluator
        self.rng = rng
        self.clock = clock
        self.root = root(grammar, policy)
        self.recorder = Recorder()
        self.rewards: dict[str, float] = {}
        self.searches = 0
        self.iterations = 0
        self._t0: float | None = None

    def _evaluate(self, config: PipelineConfig) -> tuple[float, str]:
        try:
            r = self.evaluator.evaluate(config)
            if not 0.0 <= r <= 1.0:
                raise ProtocolError(f"reward {r} outside [0, 1]")
        except WorkerAborted:
            raise
        except Exception as exc:
            log.warning("evaluation of %r failed: %s", config.canonical_key, exc)
            return 0.0, f"{type(exc).__name__}: {exc}"
        return r, getattr(self.evaluator, "last_failure", None) or ""

    def iterate(self) -> tuple[SearchNode, bool]:
        """One MCTS iteration.

        Returns the node the reward was backpropagated from and whether
        selection itself ended on a terminal node.
        """
        clock = self.clock
        start = clock()
        actions = 0
        while True:
            node, steps = _descend(self.root, self.policy, self.rng)
            actions += steps
            if node.terminal or node.unexpanded_slot() is not None:
                break
            # fully expanded with every child pruned: retire it and descend again
            prune_exhausted(node)
            if self.root.pruned:
                raise SearchExhausted("search space exhausted")

        selected_terminal = node.terminal
        if not selected_terminal:
            node = expand_child(node, self.grammar, self.policy)
            state, steps = _simulate(node, self.grammar, self.rng)
            actions += 1 + steps
        else:
            state = node.state
        config = to_config(state)

        eval_start = clock()
        delta, error = self._evaluate(config)
        eval_time = clock() - eval_start
        self.rewards[config.canonical_key] = delta

        self.policy.backprop(node, delta, self.rng)
        self.recorder.record(
            search=self.searches,
            algo_time=clock() - start - eval_time,
            actions=actions,
            key=config.canonical_key,
            reward=delta,
            simulated=not selected_terminal,
            error=error,
        )
        self.iterations += 1
        return node, selected_terminal

    def search_once(self, budget: Budget) -> SearchOutcome | None:
        """Run iterations until selection reaches a terminal, then return and prune the best leaf.

        Returns None when the budget is already spent or ran out before any
        terminal node was materialised.
        """
        if self.root.pruned:
            raise SearchExhausted("search space exhausted")
        if budget.exhausted():
            return None
        if self._t0 is None:
            self._t0 = self.clock()
        used = 0
        while not budget.exhausted():
            _, reached_terminal = self.iterate()
            budget.charge()
            used += 1
            if reached_terminal:
                break
        try:
            leaf = best_leaf(self.root, self.policy)
        except SearchExhausted:
            return None
        prune_leaf(leaf)
        config = to_config(leaf.state)
        outcome = SearchOutcome(
            config=config,
            reward=self.rewards[config.canonical_key],
            iterations_used=used,
            exhausted=self.root.pruned,
            search=self.searches,
            elapsed=self.clock() - self._t0,
        )
        self.searches += 1
        return outcome

    def run(self, budget: Budget, max_searches: int | None = None, on_outcome=None) -> RunResult:
        budget.start()
        outcomes: list[SearchOutcome] = []
        while max_searches is None or len(outcomes) < max_searches:
            if self.root.pruned or budget.exhausted():
                break
            try:
                outcome = self.search_once(budget)
            except SearchExhausted:
                break
            if outcome is None:
                break
            outcomes.append(outcome)
            if on_outcome is not None:
                on_outcome(outcome)
        return RunResult(outcomes, self.recorder.records, self.root.pruned, self.iterations)


def run(g: Grammar, policy, evaluator, total_budget: Budget, rng: RngStream, max_searches: int | None = None,
        clock: Clock = time.perf_counter) -> RunResult:
    return MCTS(g, policy, evaluator, rng, clock).run(total_budget, max_searches)


def search_once(tree: MCTS, budget: Budget) -> SearchOutcome | None:
    return tree.search_once(budget)
