"""Shared fixtures, hypothesis strategies, and reference oracles."""

import pytest
from hypothesis import strategies as st

from fpgp.expr import (
    OPERATORS,
    Constant,
    Node,
    Operator,
    ProgramTree,
    TerminalSet,
    Variable,
)


@pytest.fixture
def x_terminals() -> TerminalSet:
    return TerminalSet(("x",), const_min=-10, const_max=10)


@pytest.fixture
def xy_terminals() -> TerminalSet:
    return TerminalSet(("x", "y"), const_min=-10, const_max=10)


def node_strategy(terminals: TerminalSet, max_leaves: int = 24) -> st.SearchStrategy:
    """Random trees built directly from the node constructors.

    Deliberately independent of :func:`fpgp.expr.random_tree` so that
    properties checked against these trees do not inherit that
    generator's habits.
    """
    leaves = st.one_of(
        st.integers(0, terminals.arity - 1).map(Variable),
        st.integers(terminals.const_min, terminals.const_max).map(Constant),
    )
    return st.recursive(
        leaves,
        lambda children: st.builds(
            Operator, st.sampled_from(OPERATORS), children, children
        ),
        max_leaves=max_leaves,
    )


def tree_strategy(terminals: TerminalSet, max_leaves: int = 24) -> st.SearchStrategy:
    return node_strategy(terminals, max_leaves).map(
        lambda node: ProgramTree(node, terminals)
    )


def raw_depth(node: Node) -> int:
    """Tree depth recomputed from scratch, ignoring any cached values."""
    if not isinstance(node, Operator):
        return 1
    return 1 + max(raw_depth(node.left), raw_depth(node.right))


def raw_size(node: Node) -> int:
    """Node count recomputed from scratch, ignoring any cached values."""
    if not isinstance(node, Operator):
        return 1
    return 1 + raw_size(node.left) + raw_size(node.right)
