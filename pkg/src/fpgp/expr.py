"""Arithmetic expression trees used as genetic-programming individuals.

A program is a binary tree over the four arithmetic operators whose
leaves are input variables or integer constants.  Trees are immutable;
"editing" operators return new trees that share untouched subtrees with
their parents.  Evaluation is total: division by (near-)zero yields 1.0
and every operator result is clamped to +-1e12, so any tree is a usable
individual on any input.

The canonical text form is parenthesised prefix notation with
single-space separators, e.g. ``(+ (* x 3) angle)``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence, Union

OPERATORS = ("+", "-", "*", "/")

#: Denominators with absolute value below this make division return 1.0.
DIVISION_GUARD = 1e-9

#: Operator results are clamped into [-VALUE_CLAMP, VALUE_CLAMP].
VALUE_CLAMP = 1e12

#: Tree-generation methods for :func:`random_tree`.
GROW = "grow"
FULL = "full"


class PrefixParseError(ValueError):
    """Malformed prefix-notation text.  ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"position {position}: {message}")
        self.position = position


class ArityMismatchError(ValueError):
    """An input binding does not provide one value per terminal-set variable."""


@dataclass(frozen=True)
class Variable:
    """Leaf referencing the input variable at ``index`` in the terminal set."""

    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"variable index must be >= 0, got {self.index}")


@dataclass(frozen=True)
class Constant:
    """Integer-constant leaf."""

    value: int


@dataclass(frozen=True)
class Operator:
    """Binary operator application.  ``op`` is one of ``OPERATORS``."""

    op: str
    left: "Node"
    right: "Node"
    # Depth and node count are cached on first use; they are derived data,
    # so they take no part in equality or repr.
    _depth: int | None = field(default=None, init=False, compare=False, repr=False)
    _size: int | None = field(default=None, init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise ValueError(f"unknown operator {self.op!r}")


Node = Union[Variable, Constant, Operator]


def node_depth(node: Node) -> int:
    """Depth of the subtree rooted at ``node``; a lone leaf has depth 1."""
    if not isinstance(node, Operator):
        return 1
    cached = node._depth
    if cached is None:
        cached = 1 + max(node_depth(node.left), node_depth(node.right))
        object.__setattr__(node, "_depth", cached)
    return cached


def node_count(node: Node) -> int:
    """Total number of nodes in the subtree rooted at ``node``."""
    if not isinstance(node, Operator):
        return 1
    cached = node._size
    if cached is None:
        cached = 1 + node_count(node.left) + node_count(node.right)
        object.__setattr__(node, "_size", cached)
    return cached


@dataclass(frozen=True)
class TerminalSet:
    """Names of the input variables plus the range of random integer constants."""

    variable_names: tuple[str, ...]
    const_min: int = -10
    const_max: int = 10

    def __post_init__(self):
        names = tuple(self.variable_names)
        object.__setattr__(self, "variable_names", names)
        if not names:
            raise ValueError("terminal set needs at least one variable")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        for name in names:
            if (
                not name
                or any(ch.isspace() or ch in "()" for ch in name)
                or name in OPERATORS
                or _looks_like_int(name)
            ):
                raise ValueError(f"invalid variable name {name!r}")
        if self.const_min > self.const_max:
            raise ValueError(
                f"empty constant range [{self.const_min}, {self.const_max}]"
            )

    @property
    def arity(self) -> int:
        return len(self.variable_names)

    def index_of(self, name: str) -> int | None:
        try:
            return self.variable_names.index(name)
        except ValueError:
            return None


def _looks_like_int(token: str) -> bool:
    body = token[1:] if token[:1] == "-" else token
    return body.isdigit()


@dataclass(frozen=True)
class ProgramTree:
    """A root node paired with the terminal set its variable indices refer to."""

    root: Node
    terminals: TerminalSet


InputBinding = Sequence[float]


def evaluate(tree: ProgramTree, binding: InputBinding) -> float:
    """Evaluate ``tree`` on one input binding (one value per variable, in order).

    Division with a denominator of magnitude below ``DIVISION_GUARD``
    returns 1.0, and every operator result is clamped to
    +-``VALUE_CLAMP``, so evaluation never raises on in-range inputs.
    """
    if len(binding) != tree.terminals.arity:
        raise ArityMismatchError(
            f"binding has {len(binding)} values, terminal set has "
            f"{tree.terminals.arity} variables"
        )
    return _evaluate_node(tree.root, binding)


def _evaluate_node(node: Node, binding: InputBinding) -> float:
    if isinstance(node, Operator):
        a = _evaluate_node(node.left, binding)
        b = _evaluate_node(node.right, binding)
        op = node.op
        if op == "+":
            value = a + b
        elif op == "-":
            value = a - b
        elif op == "*":
            value = a * b
        else:
            value = 1.0 if abs(b) < DIVISION_GUARD else a / b
        if value > VALUE_CLAMP:
            return VALUE_CLAMP
        if value < -VALUE_CLAMP:
            return -VALUE_CLAMP
        return value
    if isinstance(node, Variable):
        return float(binding[node.index])
    return float(node.value)


def metrics(tree: ProgramTree) -> tuple[int, int]:
    """Return ``(depth, node_count)`` of the tree.  A lone leaf is (1, 1)."""
    return node_depth(tree.root), node_count(tree.root)


def random_tree(
    max_depth: int,
    method: str,
    terminals: TerminalSet,
    rng: random.Random,
) -> ProgramTree:
    """Generate a random tree of depth at most ``max_depth``.

    ``full`` places operators at every level below ``max_depth`` so all
    leaves sit at exactly that depth; ``grow`` draws each node uniformly
    from the combined pool of operators, variables and the
    integer-constant slot, so shapes vary.  Constants are drawn uniformly
    from the terminal set's range.
    """
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")
    if method not in (GROW, FULL):
        raise ValueError(f"method must be {GROW!r} or {FULL!r}, got {method!r}")
    return ProgramTree(_random_node(max_depth, method, terminals, rng), terminals)


def _random_leaf(terminals: TerminalSet, rng: random.Random) -> Node:
    pick = rng.randrange(terminals.arity + 1)
    if pick == terminals.arity:
        return Constant(rng.randint(terminals.const_min, terminals.const_max))
    return Variable(pick)


def _random_node(
    budget: int, method: str, terminals: TerminalSet, rng: random.Random
) -> Node:
    if budget <= 1:
        return _random_leaf(terminals, rng)
    if method == GROW:
        pool = len(OPERATORS) + terminals.arity + 1
        pick = rng.randrange(pool)
        if pick >= len(OPERATORS):
            leaf = pick - len(OPERATORS)
            if leaf == terminals.arity:
                return Constant(rng.randint(terminals.const_min, terminals.const_max))
            return Variable(leaf)
        op = OPERATORS[pick]
    else:
        op = OPERATORS[rng.randrange(len(OPERATORS))]
    left = _random_node(budget - 1, method, terminals, rng)
    right = _random_node(budget - 1, method, terminals, rng)
    return Operator(op, left, right)


NodePath = tuple[int, ...]


def select_random_node(tree: ProgramTree, rng: random.Random) -> NodePath:
    """Choose a node uniformly at random; return its root-to-node path.

    The path is a tuple of 0 (left child) / 1 (right child) steps; the
    empty tuple addresses the root.
    """
    remaining = rng.randrange(node_count(tree.root))
    path: list[int] = []
    node = tree.root
    while remaining > 0:
        remaining -= 1
        left_size = node_count(node.left)
        if remaining < left_size:
            node = node.left
            path.append(0)
        else:
            remaining -= left_size
            node = node.right
            path.append(1)
    return tuple(path)


def subtree_at(tree: ProgramTree, path: NodePath) -> Node:
    """The node addressed by ``path`` (as produced by :func:`select_random_node`)."""
    node = tree.root
    for step in path:
        if not isinstance(node, Operator):
            raise ValueError(f"path {path} walks past a leaf")
        node = node.left if step == 0 else node.right
    return node


def replace_subtree(tree: ProgramTree, path: NodePath, replacement: Node) -> ProgramTree:
    """A new tree with the subtree at ``path`` swapped for ``replacement``.

    Nodes off the path are shared with the original tree.
    """
    return ProgramTree(_replace_node(tree.root, path, 0, replacement), tree.terminals)


def _replace_node(node: Node, path: NodePath, index: int, replacement: Node) -> Node:
    if index == len(path):
        return replacement
    if not isinstance(node, Operator):
        raise ValueError(f"path {path} walks past a leaf")
    if path[index] == 0:
        return Operator(node.op, _replace_node(node.left, path, index + 1, replacement), node.right)
    return Operator(node.op, node.left, _replace_node(node.right, path, index + 1, replacement))


def serialize_prefix(tree: ProgramTree) -> str:
    """Canonical prefix text: every operator parenthesised, single spaces."""
    parts: list[str] = []
    _write_node(tree.root, tree.terminals, parts)
    return "".join(parts)


def _write_node(node: Node, terminals: TerminalSet, parts: list[str]) -> None:
    if isinstance(node, Operator):
        parts.append("(")
        parts.append(node.op)
        parts.append(" ")
        _write_node(node.left, terminals, parts)
        parts.append(" ")
        _write_node(node.right, terminals, parts)
        parts.append(")")
    elif isinstance(node, Variable):
        parts.append(terminals.variable_names[node.index])
    else:
        parts.append(str(node.value))


def parse_prefix(text: str, terminals: TerminalSet) -> ProgramTree:
    """Parse canonical prefix notation back into a tree.

    Accepts arbitrary whitespace between tokens.  Variable names must
    belong to ``terminals``; constants must be (optionally negated)
    integer literals.  Constants outside the terminal set's range are
    accepted: the range constrains generation, not parsing.  Raises
    :class:`PrefixParseError` with a character position on any other
    malformed input.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise PrefixParseError("empty input", 0)
    node, next_index = _parse_node(tokens, 0, terminals, len(text))
    if next_index != len(tokens):
        tok, pos = tokens[next_index]
        raise PrefixParseError(f"unexpected trailing {tok!r}", pos)
    return ProgramTree(node, terminals)


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            start = i
            while i < n and not text[i].isspace() and text[i] not in "()":
                i += 1
            tokens.append((text[start:i], start))
    return tokens


def _parse_node(
    tokens: list[tuple[str, int]],
    index: int,
    terminals: TerminalSet,
    text_length: int,
) -> tuple[Node, int]:
    if index >= len(tokens):
        raise PrefixParseError("unexpected end of input", text_length)
    token, pos = tokens[index]
    if token == "(":
        if index + 1 >= len(tokens):
            raise PrefixParseError("unexpected end of input", text_length)
        op, op_pos = tokens[index + 1]
        if op not in OPERATORS:
            raise PrefixParseError(f"expected an operator, got {op!r}", op_pos)
        next_index = index + 2
        operands: list[Node] = []
        for _ in range(2):
            if next_index < len(tokens) and tokens[next_index][0] == ")":
                raise PrefixParseError(
                    f"operator {op!r} expects two operands", tokens[next_index][1]
                )
            operand, next_index = _parse_node(tokens, next_index, terminals, text_length)
            operands.append(operand)
        if next_index >= len(tokens):
            raise PrefixParseError("unexpected end of input", text_length)
        closer, closer_pos = tokens[next_index]
        if closer != ")":
            raise PrefixParseError(f"expected ')', got {closer!r}", closer_pos)
        return Operator(op, operands[0], operands[1]), next_index + 1
    if token == ")":
        raise PrefixParseError("unexpected ')'", pos)
    if _looks_like_int(token):
        return Constant(int(token)), index + 1
    var_index = terminals.index_of(token)
    if var_index is None:
        raise PrefixParseError(f"unknown symbol {token!r}", pos)
    return Variable(var_index), index + 1
