"""Independent oracles and random grammar generators for the test-suite."""

from __future__ import annotations

import itertools
import random
import sys
from pathlib import Path

from grammcts.grammar import Grammar, N, PipelineConfig, Rule, T, count_productions


def brute_force_keys(g: Grammar) -> list[str]:
    """Every production's canonical key, by cartesian products over symbol expansions.

    Deliberately avoids the derivation machinery under test.
    """

    def expand(name: str) -> list[tuple[str, ...]]:
        out = []
        for alt in g.rules[name].alternatives:
            parts = [[(s.name,)] if s.terminal else expand(s.name) for s in alt]
            for combo in itertools.product(*parts):
                out.append(tuple(itertools.chain.from_iterable(combo)))
        return out

    return [" ".join(t) for t in expand(g.start)]


def random_grammar(rng: random.Random, max_productions: int = 500, max_depth: int = 4,
                   min_productions: int = 2) -> Grammar:
    """Random acyclic grammar with distinct terminals, resampled until it is small enough."""
    while True:
        counter = itertools.count()
        rules: dict[str, Rule] = {}

        def make(depth: int) -> str:
            name = f"R{next(counter)}"
            alts = []
            for _ in range(rng.randint(1, 3)):
                alt = [T(f"t{next(counter)}")]
                if depth < max_depth:
                    for _ in range(rng.choice([0, 1, 1, 2])):
                        alt.append(N(make(depth + 1)))
                alts.append(tuple(alt))
            rules[name] = Rule(name, tuple(alts))
            return name

        start = make(0)
        rules = {start: rules.pop(start), **rules}
        g = Grammar(start, rules)
        if min_productions <= count_productions(g) <= max_productions:
            return g


def planted_table(g: Grammar, rng: random.Random) -> tuple[dict[str, float], str]:
    keys = brute_force_keys(g)
    table = {k: round(rng.uniform(0.0, 0.9), 6) for k in keys}
    planted = rng.choice(keys)
    table[planted] = 1.0
    return table, planted


def structured_table(g: Grammar, rng: random.Random) -> tuple[dict[str, float], str]:
    """Rewards that fall off with derivation distance from one planted production.

    A leaf sharing the first ``p`` of the planted leaf's ``n`` derivation steps
    scores ``0.8 * p / n`` plus uniform noise in [0, 0.15]; the planted leaf
    scores 1.0.
    """
    from grammcts.grammar import enumerate_productions, to_config

    leaves = list(enumerate_productions(g))
    target = rng.choice(leaves)
    table = {}
    for leaf in leaves:
        shared = 0
        for a, b in zip(leaf.trace, target.trace):
            if a != b:
                break
            shared += 1
        key = to_config(leaf).canonical_key
        table[key] = round(0.8 * shared / len(target.trace) + rng.uniform(0.0, 0.15), 6)
    planted = to_config(target).canonical_key
    table[planted] = 1.0
    return table, planted


WORKER = Path(__file__).parent / "workers" / "scripted_worker.py"


def worker_command() -> list[str]:
    return [sys.executable, str(WORKER)]


def config_for(key: str) -> PipelineConfig:
    words = tuple(key.split())
    return PipelineConfig(words, tuple((f"S[{i}]", w) for i, w in enumerate(words)))
