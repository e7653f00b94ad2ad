"""Selection and backpropagation policies: UCT, bootstrap Thompson sampling, TPE.

Every policy exposes the same four methods used by the search engine:

* ``new_stats()`` creates the per-node statistics record,
* ``select(node, rng)`` picks one live expanded child of a fully expanded node,
* ``greedy_value(node)`` is the exploitation-only value used by ``best_leaf``,
* ``backprop(node, delta, rng)`` pushes a reward from ``node`` up to the root.

Nodes only need ``parent``, ``children``, ``stats`` and ``pruned`` attributes.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

RngStream = random.Random


def make_rng(seed: int) -> RngStream:
    return random.Random(seed)


def live_children(node) -> list[int]:
    return [i for i, c in enumerate(node.children) if c is not None and not c.pruned]


def _weighted_choice(indices: list[int], weights: list[float], rng: RngStream) -> int:
    total = math.fsum(weights)
    if not total > 0:
        return indices[rng.randrange(len(indices))]
    u = rng.random() * total
    acc = 0.0
    for i, w in zip(indices, weights):
        acc += w
        if u < acc:
            return i
    # u landed on the rounding gap above the last cumulative sum
    return next(i for i, w in zip(reversed(indices), reversed(weights)) if w > 0)


# ------------------------------------------------------------------------ UCT


@dataclass
class UCTStats:
    reward_sum: float = 0.0
    visits: int = 0

    @property
    def count(self) -> int:
        return self.visits


def uct_value(node, c: float, form: str = "paper") -> float:
    """Score of ``node`` under UCT.

    ``form="paper"`` uses ln(visits(node)) / visits(parent);
    ``form="textbook"`` uses ln(visits(parent)) / visits(node).
    Unvisited nodes score +inf so every child is tried once.
    """
    st = node.stats
    if st.visits == 0:
        return math.inf
    mean = st.reward_sum / st.visits
    if c == 0:
        return mean
    parent_visits = node.parent.stats.visits
    if form == "paper":
        bonus = math.log(st.visits) / parent_visits
    elif form == "textbook":
        bonus = math.log(parent_visits) / st.visits
    else:
        raise ValueError(f"unknown eq1 form {form!r}")
    return mean + c * math.sqrt(bonus)


def uct_backprop(node, delta: float) -> None:
    while node is not None:
        node.stats.reward_sum += delta
        node.stats.visits += 1
        node = node.parent


class UCT:
    name = "uct"

    def __init__(self, c: float = 0.7, eq1_form: str = "paper"):
        if c < 0:
            raise ValueError(f"C must be non-negative, got {c}")
        if eq1_form not in ("paper", "textbook"):
            raise ValueError(f"unknown eq1 form {eq1_form!r}")
        self.c = c
        self.eq1_form = eq1_form

    def __repr__(self) -> str:
        return f"UCT(c={self.c}, eq1_form={self.eq1_form!r})"

    def new_stats(self) -> UCTStats:
        return UCTStats()

    def select(self, node, rng: RngStream | None = None) -> int:
        best, best_val = None, -math.inf
        for i in live_children(node):
            v = uct_value(node.children[i], self.c, self.eq1_form)
            if best is None or v > best_val:
                best, best_val = i, v
        if best is None:
            raise ValueError("no live expanded child")
        return best

    def greedy_value(self, node) -> float:
        st = node.stats
        return st.reward_sum / st.visits if st.visits else 0.0

    def backprop(self, node, delta: float, rng: RngStream | None = None) -> None:
        uct_backprop(node, delta)


# ------------------------------------------------------------------------ BTS


@dataclass
class BTSStats:
    alpha: list[float]
    beta: list[float]
    visits: int = 0

    @property
    def count(self) -> int:
        return self.visits


def bts_backprop(node, delta: float, rng: RngStream) -> None:
    """Coin-flip update of every bootstrap replicate along the root path."""
    while node is not None:
        st = node.stats
        for j in range(len(st.alpha)):
            if rng.random() < 0.5:
                st.alpha[j] += delta
                st.beta[j] += 1.0
        st.visits += 1
        node = node.parent


def bts_select(node, rng: RngStream) -> int:
    """Draw one replicate, then pick a child with probability proportional to alpha/beta."""
    live = live_children(node)
    if not live:
        raise ValueError("no live expanded child")
    if len(live) == 1:
        return live[0]
    j = rng.randrange(len(node.children[live[0]].stats.alpha))
    values = [node.children[i].stats.alpha[j] / node.children[i].stats.beta[j] for i in live]
    return _weighted_choice(live, values, rng)


class BTS:
    name = "bts"

    def __init__(self, j: int = 1, alpha0: float = 1.0, beta0: float = 1.0):
        if j < 1:
            raise ValueError(f"J must be positive, got {j}")
        if beta0 <= 0:
            raise ValueError("beta0 must be positive")
        self.j = j
        self.alpha0 = alpha0
        self.beta0 = beta0

    def __repr__(self) -> str:
        return f"BTS(j={self.j}, alpha0={self.alpha0}, beta0={self.beta0})"

    def new_stats(self) -> BTSStats:
        return BTSStats([self.alpha0] * self.j, [self.beta0] * self.j)

    def select(self, node, rng: RngStream) -> int:
        return bts_select(node, rng)

    def greedy_value(self, node) -> float:
        st = node.stats
        return math.fsum(a / b for a, b in zip(st.alpha, st.beta)) / len(st.alpha)

    def backprop(self, node, delta: float, rng: RngStream) -> None:
        bts_backprop(node, delta, rng)


# ------------------------------------------------------------------------ TPE


@dataclass
class TPEStats:
    rewards: list[float] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.rewards)


def tpe_backprop(node, delta: float) -> None:
    while node is not None:
        node.stats.rewards.append(delta)
        node = node.parent


def tpe_threshold(rewards, gamma: float) -> float:
    """Nearest-rank gamma-quantile of ``rewards``."""
    if not rewards:
        raise ValueError("empty reward list")
    ordered = sorted(rewards)
    idx = math.ceil(gamma * len(ordered)) - 1
    return ordered[min(max(idx, 0), len(ordered) - 1)]


def tpe_ratios(node, gamma: float, smoothing: float = 1.0) -> tuple[list[int], list[float]]:
    """Live child indices and their smoothed g/l density ratios."""
    live = live_children(node)
    if not live:
        raise ValueError("no live expanded child")
    y_star = tpe_threshold(node.stats.rewards, gamma)
    below = [sum(1 for y in node.children[i].stats.rewards if y < y_star) for i in live]
    total = [len(node.children[i].stats.rewards) for i in live]
    k = len(live)
    b_all = sum(below)
    g_all = sum(total) - b_all
    ratios = []
    for b, m in zip(below, total):
        l_dens = (b + smoothing) / (b_all + smoothing * k)
        g_dens = (m - b + smoothing) / (g_all + smoothing * k)
        ratios.append(g_dens / l_dens)
    return live, ratios


def tpe_select(node, rng: RngStream, gamma: float, smoothing: float = 1.0) -> int:
    live, ratios = tpe_ratios(node, gamma, smoothing)
    if len(live) == 1:
        return live[0]
    return _weighted_choice(live, ratios, rng)


class TPE:
    name = "tpe"

    def __init__(self, gamma: float = 0.85, smoothing: float = 1.0):
        if not 0 < gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        if smoothing <= 0:
            raise ValueError("smoothing must be positive")
        self.gamma = gamma
        self.smoothing = smoothing

    def __repr__(self) -> str:
        return f"TPE(gamma={self.gamma}, smoothing={self.smoothing})"

    def new_stats(self) -> TPEStats:
        return TPEStats()

    def select(self, node, rng: RngStream) -> int:
        return tpe_select(node, rng, self.gamma, self.smoothing)

    def greedy_value(self, node) -> float:
        r = node.stats.rewards
        return math.fsum(r) / len(r) if r else 0.0

    def backprop(self, node, delta: float, rng: RngStream | None = None) -> None:
        tpe_backprop(node, delta)


def greedy_value(policy, node) -> float:
    return policy.greedy_value(node)


def make_policy(name: str, c: float = 0.7, j: int = 1, gamma: float = 0.85, smoothing: float = 1.0,
                eq1_form: str = "paper"):
    """Build a policy from configuration keys. ``gamma`` above 1 is read as a percentage."""
    name = name.lower()
    if name == "uct":
        return UCT(c, eq1_form)
    if name == "bts":
        return BTS(int(j))
    if name == "tpe":
        if gamma > 1:
            gamma = gamma / 100.0
        return TPE(gamma, smoothing)
    raise ValueError(f"unknown policy {name!r}")
