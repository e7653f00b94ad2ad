"""Lazily materialised production tree with pruning."""

from __future__ import annotations

from typing import Iterator

from .grammar import (
    DerivationState,
    Grammar,
    applicable_alternatives,
    apply_rule,
    count_productions_from,
    start_state,
)


class SearchError(RuntimeError):
    pass


class FullyExpanded(SearchError):
    pass


class SearchExhausted(SearchError):
    """No live production is left in the tree."""


class SearchNode:
    __slots__ = ("state", "parent", "index", "children", "stats", "pruned", "terminal", "depth")

    def __init__(self, state: DerivationState, n_slots: int, stats, parent: SearchNode | None = None,
                 index: int = -1):
        self.state = state
        self.parent = parent
        self.index = index
        self.children: list[SearchNode | None] = [None] * n_slots
        self.stats = stats
        self.pruned = False
        self.terminal = n_slots == 0
        self.depth = 0 if parent is None else parent.depth + 1

    def __repr__(self) -> str:
        flag = " pruned" if self.pruned else ""
        return f"<SearchNode depth={self.depth} [{self.state}]{flag}>"

    @property
    def fully_expanded(self) -> bool:
        return all(c is not None for c in self.children)

    def unexpanded_slot(self) -> int | None:
        for i, c in enumerate(self.children):
            if c is None:
                return i
        return None

    def iter_nodes(self) -> Iterator[SearchNode]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(c for c in reversed(node.children) if c is not None)


def root(g: Grammar, policy) -> SearchNode:
    state = start_state(g)
    return SearchNode(state, applicable_alternatives(state, g), policy.new_stats())


def expand_child(n: SearchNode, g: Grammar, policy) -> SearchNode:
    """Materialise the lowest-index unexpanded child slot of ``n``."""
    if n.pruned:
        raise SearchError("cannot expand a pruned node")
    slot = n.unexpanded_slot()
    if slot is None:
        raise FullyExpanded("fully expanded")
    state = apply_rule(n.state, slot, g)
    child = SearchNode(state, applicable_alternatives(state, g), policy.new_stats(), n, slot)
    n.children[slot] = child
    return child


def prune_leaf(leaf: SearchNode) -> None:
    """Prune a terminal node and every ancestor left with only pruned children."""
    if leaf.pruned:
        return
    if not leaf.terminal:
        raise SearchError("prune_leaf expects a terminal node")
    leaf.pruned = True
    _cascade(leaf.parent)


def prune_exhausted(node: SearchNode) -> None:
    """Prune a non-terminal node whose slots are all expanded and pruned."""
    if node.pruned:
        return
    if not all(c is not None and c.pruned for c in node.children):
        raise SearchError("node still has live children")
    node.pruned = True
    _cascade(node.parent)


def _cascade(node: SearchNode | None) -> None:
    while node is not None and not node.pruned:
        if all(c is not None and c.pruned for c in node.children):
            node.pruned = True
            node = node.parent
        else:
            break


def best_leaf(root_node: SearchNode, policy) -> SearchNode:
    """Greedy descent to a live materialised terminal.

    Children are tried in decreasing greedy value (ties: lowest index); a
    child whose subtree has no materialised live terminal is skipped and the
    next one is tried.
    """
    if root_node.pruned:
        raise SearchExhausted("search space exhausted")
    stack = [root_node]
    while stack:
        node = stack.pop()
        if node.terminal:
            return node
        ranked = sorted(
            ((-policy.greedy_value(c), i) for i, c in enumerate(node.children) if c is not None and not c.pruned),
        )
        # push in reverse so the best child is popped first
        stack.extend(node.children[i] for _, i in reversed(ranked))
    raise SearchExhausted("no live expanded path to a terminal")


def live_leaf_count(root_node: SearchNode, g: Grammar) -> int:
    """Number of productions not yet pruned, counting unexpanded slots through the grammar."""
    if root_node.pruned:
        return 0
    total = 0
    stack = [root_node]
    while stack:
        node = stack.pop()
        if node.pruned:
            continue
        if node.terminal:
            total += 1
            continue
        for i, c in enumerate(node.children):
            if c is None:
                total += count_productions_from(apply_rule(node.state, i, g), g)
            else:
                stack.append(c)
    return total


def node_count(root_node: SearchNode) -> int:
    return sum(1 for _ in root_node.iter_nodes())


def _label(node: SearchNode, g: Grammar) -> str:
    if node.parent is None:
        return node.state.sentential_form[0].name
    name, idx = node.state.trace[-1]
    return " ".join(str(s) for s in g.alternatives(name)[idx])


def dump_tree(root_node: SearchNode, policy, g: Grammar) -> str:
    lines = []
    for node in root_node.iter_nodes():
        line = f"{'  ' * node.depth}{_label(node, g)} visits={node.stats.count} value={policy.greedy_value(node):.6g}"
        if node.pruned:
            line += " [pruned]"
        lines.append(line)
    return "\n".join(lines) + "\n"
