import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grammcts import demo_grammar
from grammcts.grammar import parse_grammar, to_config
from grammcts.policies import UCT, UCTStats
from grammcts.tree import (
    FullyExpanded,
    SearchExhausted,
    best_leaf,
    dump_tree,
    expand_child,
    live_leaf_count,
    node_count,
    prune_leaf,
    root,
)

from helpers import brute_force_keys, random_grammar

FOUR = parse_grammar('P := S C\nS := "a" | "b"\nC := "x" | "y"')


def expand_all(node, g, pol):
    stack = [node]
    while stack:
        n = stack.pop()
        while n.unexpanded_slot() is not None:
            expand_child(n, g, pol)
        stack.extend(c for c in n.children if c is not None)


def leaves(node):
    return [n for n in node.iter_nodes() if n.terminal]


class TestRoot:
    def test_demo_root_slots(self):
        g = demo_grammar()
        r = root(g, UCT())
        assert len(r.children) == len(g.rules[g.start].alternatives)
        assert not r.pruned and r.stats == UCTStats()

    def test_single_production(self):
        r = root(parse_grammar('S := "x"'), UCT())
        assert len(r.children) == 1 and not r.terminal and not r.pruned


class TestExpand:
    def test_lowest_index_first(self):
        g = parse_grammar('S := "a" | "b"')
        r = root(g, UCT())
        c0 = expand_child(r, g, UCT())
        assert r.children[0] is c0 and r.children[1] is None
        c1 = expand_child(r, g, UCT())
        assert r.children[1] is c1 and c1.index == 1
        assert c1.terminal and c1.children == []

    def test_fully_expanded_raises(self):
        g = parse_grammar('S := "a"')
        r = root(g, UCT())
        expand_child(r, g, UCT())
        with pytest.raises(FullyExpanded, match="fully expanded"):
            expand_child(r, g, UCT())


class TestPrune:
    def test_cascade_to_parent(self):
        g = parse_grammar('S := "a" | "b"')
        pol = UCT()
        r = root(g, pol)
        expand_all(r, g, pol)
        a, b = r.children
        prune_leaf(a)
        assert a.pruned and not r.pruned
        prune_leaf(b)
        assert r.pruned

    def test_unexpanded_slot_blocks_cascade(self):
        g = parse_grammar('S := "a" | "b"')
        pol = UCT()
        r = root(g, pol)
        prune_leaf(expand_child(r, g, pol))
        assert not r.pruned

    def test_double_prune_noop(self):
        g = parse_grammar('S := "a" | "b"')
        pol = UCT()
        r = root(g, pol)
        a = expand_child(r, g, pol)
        prune_leaf(a)
        prune_leaf(a)
        assert a.pruned and not r.pruned

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_prune_everything_matches_enumeration(self, seed):
        rng = random.Random(seed)
        g = random_grammar(rng, max_productions=100)
        pol = UCT()
        r = root(g, pol)
        expand_all(r, g, pol)
        live = set(brute_force_keys(g))
        order = leaves(r)
        rng.shuffle(order)
        for leaf in order:
            assert live_leaf_count(r, g) == len(live)
            prune_leaf(leaf)
            live.discard(to_config(leaf.state).canonical_key)
            # every pruned internal node has an entirely pruned subtree
            for n in r.iter_nodes():
                if n.pruned:
                    assert all(m.pruned for m in n.iter_nodes())
                elif not n.terminal:
                    assert not all(c is not None and c.pruned for c in n.children)
        assert r.pruned and live_leaf_count(r, g) == 0


class TestBestLeaf:
    def _tree(self, rewards):
        g = parse_grammar("S := " + " | ".join(f'"l{i}"' for i in range(len(rewards))))
        pol = UCT(0.0)
        r = root(g, pol)
        expand_all(r, g, pol)
        for leaf, rew in zip(r.children, rewards):
            pol.backprop(leaf, rew)
        return r, pol

    def test_argmax(self):
        r, pol = self._tree([0.4, 0.9])
        assert best_leaf(r, pol) is r.children[1]

    def test_pruned_excluded(self):
        r, pol = self._tree([0.4, 0.9, 0.6])
        prune_leaf(r.children[1])
        assert best_leaf(r, pol) is r.children[2]

    def test_tie_lowest_index(self):
        r, pol = self._tree([0.7, 0.7])
        assert best_leaf(r, pol) is r.children[0]

    def test_skips_unexpanded(self):
        g = parse_grammar('S := A | B\nA := "a1" | "a2"\nB := "b"')
        pol = UCT(0.0)
        r = root(g, pol)
        a = expand_child(r, g, pol)
        b = expand_child(r, g, pol)
        pol.backprop(a, 0.9)
        leaf_b = expand_child(b, g, pol)
        pol.backprop(leaf_b, 0.1)
        # A looks better but has no materialised terminal yet
        assert best_leaf(r, pol) is leaf_b

    def test_exhausted(self):
        g = parse_grammar('S := "a"')
        pol = UCT()
        r = root(g, pol)
        with pytest.raises(SearchExhausted):
            best_leaf(r, pol)
        leaf = expand_child(r, g, pol)
        prune_leaf(leaf)
        with pytest.raises(SearchExhausted):
            best_leaf(r, pol)


def test_live_leaf_count_four():
    pol = UCT()
    r = root(FOUR, pol)
    assert live_leaf_count(r, FOUR) == 4
    expand_all(r, FOUR, pol)
    assert live_leaf_count(r, FOUR) == 4
    prune_leaf(leaves(r)[0])
    assert live_leaf_count(r, FOUR) == 3


def test_lazy_node_count():
    pol = UCT()
    r = root(FOUR, pol)
    n = 0
    node = r
    while node.unexpanded_slot() is not None:
        node = expand_child(node, FOUR, pol)
        n += 1
        assert node_count(r) == n + 1


def test_dump_tree_format():
    g = parse_grammar('S := "a" | "b"')
    pol = UCT()
    r = root(g, pol)
    a = expand_child(r, g, pol)
    pol.backprop(a, 0.5)
    prune_leaf(a)
    text = dump_tree(r, pol, g)
    assert text == 'S visits=1 value=0.5\n  "a" visits=1 value=0.5 [pruned]\n'
