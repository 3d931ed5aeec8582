"""Genetic-programming engine: configuration, genetic operators, run loop.

A run evolves a population of :class:`~fpgp.expr.ProgramTree` individuals
against a list of fitness cases, minimizing the sum of squared errors.
Each generation draws one of clone / crossover / mutation per offspring
slot, with tournament-selected parents, until the new population again
holds exactly N individuals; the best individual seen anywhere in the
run is the result.

For speed, fitness is computed by a small stack machine over a postfix
encoding of the tree, JIT-compiled with numba when available.  The
scalar :func:`~fpgp.expr.evaluate` is the reference semantics; the stack
machine is bit-for-bit equivalent to it (same operation order, same
protected division and clamping).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

from .expr import (
    DIVISION_GUARD,
    FULL,
    GROW,
    VALUE_CLAMP,
    ArityMismatchError,
    Node,
    Operator,
    ProgramTree,
    TerminalSet,
    Variable,
    node_count,
    node_depth,
    random_tree,
)

#: Fitness values are clamped to at most this, keeping them finite.
FITNESS_CLAMP = 1e18


@dataclass(frozen=True)
class FitnessCase:
    """One (input vector, target) pair the evolved formula must fit."""

    inputs: tuple[float, ...]
    target: float

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(float(v) for v in self.inputs))
        object.__setattr__(self, "target", float(self.target))


@dataclass(frozen=True)
class EvolutionConfig:
    """The preparatory choices of a run: sizes, probabilities, depth limits.

    ``p_clone + p_crossover + p_mutation`` must be 1 (within 1e-12).
    """

    terminals: TerminalSet
    population_size: int = 500
    max_generations: int = 100
    p_clone: float = 0.05
    p_crossover: float = 0.8
    p_mutation: float = 0.15
    max_depth_initial: int = 6
    max_depth_overall: int = 17
    tournament_size: int = 3
    target_fitness: float = 1e-9
    rng_seed: int = 1
    mutation_subtree_depth: int = 4

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError(f"population_size must be >= 1, got {self.population_size}")
        if self.max_generations < 0:
            raise ValueError(f"max_generations must be >= 0, got {self.max_generations}")
        for name in ("p_clone", "p_crossover", "p_mutation"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")
        total = self.p_clone + self.p_crossover + self.p_mutation
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"operator probabilities sum to {total}, expected 1")
        if self.max_depth_initial < 1:
            raise ValueError("max_depth_initial must be >= 1")
        if self.max_depth_initial > self.max_depth_overall:
            raise ValueError(
                f"max_depth_initial {self.max_depth_initial} exceeds "
                f"max_depth_overall {self.max_depth_overall}"
            )
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError(
                f"tournament_size must be in [1, {self.population_size}], "
                f"got {self.tournament_size}"
            )
        if self.target_fitness < 0:
            raise ValueError("target_fitness must be >= 0")
        if self.mutation_subtree_depth < 1:
            raise ValueError("mutation_subtree_depth must be >= 1")


@dataclass(frozen=True)
class Individual:
    """A program tree together with its (already computed) fitness."""

    tree: ProgramTree
    fitness: float


@dataclass
class RunResult:
    best: Individual
    generations_run: int
    #: One (best fitness, mean fitness) record per generation, the initial
    #: population included.
    history: list[tuple[float, float]]


# --------------------------------------------------------------------------
# Fitness: postfix stack machine, JIT-compiled when numba is present.
#
# Opcodes 0..3 are +, -, *, /; 4 pushes the variable whose index is in the
# value slot; 5 pushes the value slot itself as a constant.

_OPCODE = {"+": 0, "-": 1, "*": 2, "/": 3}
_PUSH_VAR = 4
_PUSH_CONST = 5


def _compile_postfix(node: Node) -> tuple[np.ndarray, np.ndarray]:
    kinds: list[int] = []
    values: list[float] = []
    _emit(node, kinds, values)
    return np.array(kinds, dtype=np.int8), np.array(values, dtype=np.float64)


def _emit(node: Node, kinds: list[int], values: list[float]) -> None:
    if isinstance(node, Operator):
        _emit(node.left, kinds, values)
        _emit(node.right, kinds, values)
        kinds.append(_OPCODE[node.op])
        values.append(0.0)
    elif isinstance(node, Variable):
        kinds.append(_PUSH_VAR)
        values.append(float(node.index))
    else:
        kinds.append(_PUSH_CONST)
        values.append(float(node.value))


def _sse_python(kinds, values, inputs, targets) -> float:
    """Reference stack machine; mirrors the JIT kernel instruction for instruction."""
    n_cases = inputs.shape[0]
    stack = [0.0] * len(kinds)
    total = 0.0
    for c in range(n_cases):
        sp = 0
        for i in range(len(kinds)):
            k = kinds[i]
            if k == 4:
                stack[sp] = inputs[c, int(values[i])]
                sp += 1
            elif k == 5:
                stack[sp] = values[i]
                sp += 1
            else:
                b = stack[sp - 1]
                a = stack[sp - 2]
                sp -= 1
                if k == 0:
                    v = a + b
                elif k == 1:
                    v = a - b
                elif k == 2:
                    v = a * b
                else:
                    v = 1.0 if abs(b) < DIVISION_GUARD else a / b
                if v > VALUE_CLAMP:
                    v = VALUE_CLAMP
                elif v < -VALUE_CLAMP:
                    v = -VALUE_CLAMP
                stack[sp - 1] = v
        diff = stack[0] - targets[c]
        total += diff * diff
    if total > FITNESS_CLAMP:
        total = FITNESS_CLAMP
    return float(total)


if numba is not None:
    @numba.njit(cache=True)
    def _sse_jit(kinds, values, inputs, targets):  # pragma: no cover - numba
        n_cases = inputs.shape[0]
        stack = np.empty(kinds.shape[0], dtype=np.float64)
        total = 0.0
        for c in range(n_cases):
            sp = 0
            for i in range(kinds.shape[0]):
                k = kinds[i]
                if k == 4:
                    stack[sp] = inputs[c, int(values[i])]
                    sp += 1
                elif k == 5:
                    stack[sp] = values[i]
                    sp += 1
                else:
                    b = stack[sp - 1]
                    a = stack[sp - 2]
                    sp -= 1
                    if k == 0:
                        v = a + b
                    elif k == 1:
                        v = a - b
                    elif k == 2:
                        v = a * b
                    else:
                        v = 1.0 if abs(b) < 1e-9 else a / b
                    if v > 1e12:
                        v = 1e12
                    elif v < -1e12:
                        v = -1e12
                    stack[sp - 1] = v
            diff = stack[0] - targets[c]
            total += diff * diff
        if total > 1e18:
            total = 1e18
        return total
else:  # pragma: no cover - exercised only without numba
    _sse_jit = None


def _sse(kinds, values, inputs, targets) -> float:
    if _sse_jit is not None:
        return float(_sse_jit(kinds, values, inputs, targets))
    return _sse_python(kinds, values, inputs, targets)


# A crossover/mutation site: the ancestors of the chosen node (root first,
# each with the step taken), the node itself, its contiguous block in the
# postfix program, and the depth the tree keeps if the node is deleted.
_Site = tuple[list[tuple[Operator, int]], "Node", int, int, int]


def _pick_site(tree: ProgramTree, rng: random.Random) -> _Site:
    """Choose a node uniformly at random and return everything breeding needs.

    One descent yields the spine of ancestors, the postfix span [low, high)
    of the chosen subtree (in postfix order a subtree is one contiguous
    block), and ``keep_depth`` - the depth contributed by every path that
    avoids the chosen node.  An offspring grafting ``donor`` here has depth
    exactly ``max(keep_depth, len(spine) + node_depth(donor))``, so the
    depth cap can be checked before building anything.
    """
    node = tree.root
    remaining = rng.randrange(node_count(node))
    spine: list[tuple[Operator, int]] = []
    low = 0
    keep_depth = 0
    level = 0
    while remaining > 0:
        remaining -= 1
        left = node.left
        left_size = node_count(left)
        if remaining < left_size:
            sibling_depth = node_depth(node.right)
            spine.append((node, 0))
            node = left
        else:
            remaining -= left_size
            low += left_size
            sibling_depth = node_depth(left)
            spine.append((node, 1))
            node = node.right
        level += 1
        if level + sibling_depth > keep_depth:
            keep_depth = level + sibling_depth
    return spine, node, low, low + node_count(node), keep_depth


def _graft(site: _Site, donor: Node, terminals: TerminalSet) -> ProgramTree:
    """Rebuild a tree with ``donor`` in place of the site's subtree.

    Only the spine is recreated; everything off it is shared with the
    parent.  Depth and size caches of the recreated nodes are filled on
    the way up, so the child costs O(spine) now and O(1) to measure later.
    """
    spine, _node, low, high, _keep_depth = site
    node = donor
    depth = node_depth(donor)
    delta = node_count(donor) - (high - low)
    for parent, step in reversed(spine):
        if step == 0:
            sibling = parent.right
            node = Operator(parent.op, node, sibling)
        else:
            sibling = parent.left
            node = Operator(parent.op, sibling, node)
        sibling_depth = node_depth(sibling)
        depth = (depth if depth > sibling_depth else sibling_depth) + 1
        object.__setattr__(node, "_depth", depth)
        object.__setattr__(node, "_size", node_count(parent) + delta)
    return ProgramTree(node, terminals)


def _graft_depth(site: _Site, donor: Node) -> int:
    spine, _node, _low, _high, keep_depth = site
    depth = len(spine) + node_depth(donor)
    return depth if depth > keep_depth else keep_depth


def _case_arrays(
    cases: Sequence[FitnessCase], terminals: TerminalSet
) -> tuple[np.ndarray, np.ndarray]:
    if not cases:
        raise ValueError("at least one fitness case is required")
    arity = terminals.arity
    for case in cases:
        if len(case.inputs) != arity:
            raise ArityMismatchError(
                f"fitness case has {len(case.inputs)} inputs, terminal set has "
                f"{arity} variables"
            )
    inputs = np.array([case.inputs for case in cases], dtype=np.float64)
    targets = np.array([case.target for case in cases], dtype=np.float64)
    return inputs, targets


def fitness(tree: ProgramTree, cases: Sequence[FitnessCase]) -> float:
    """Sum of squared errors of ``tree`` over ``cases``, clamped to 1e18.

    Zero exactly when the tree reproduces every target exactly.
    """
    inputs, targets = _case_arrays(cases, tree.terminals)
    kinds, values = _compile_postfix(tree.root)
    return _sse(kinds, values, inputs, targets)


# --------------------------------------------------------------------------
# Genetic operators.


def _ramp(config: EvolutionConfig) -> list[int]:
    depths = list(range(2, config.max_depth_initial + 1))
    return depths or [config.max_depth_initial]


def _ramped_tree(i: int, config: EvolutionConfig, rng: random.Random) -> ProgramTree:
    depths = _ramp(config)
    method = GROW if i % 2 == 0 else FULL
    depth = depths[(i // 2) % len(depths)]
    return random_tree(depth, method, config.terminals, rng)


def init_population(
    cases: Sequence[FitnessCase], config: EvolutionConfig, rng: random.Random
) -> list[Individual]:
    """Ramped half-and-half initial population of exactly N, fitness included.

    Methods alternate GROW/FULL; depths cycle over 2..max_depth_initial.
    """
    inputs, targets = _case_arrays(cases, config.terminals)
    population = []
    for i in range(config.population_size):
        tree = _ramped_tree(i, config, rng)
        kinds, values = _compile_postfix(tree.root)
        population.append(Individual(tree, _sse(kinds, values, inputs, targets)))
    return population


def _mutation_parts(
    parent: ProgramTree, config: EvolutionConfig, rng: random.Random
) -> tuple[ProgramTree, _Site, ProgramTree | None]:
    site = _pick_site(parent, rng)
    replacement = random_tree(
        config.mutation_subtree_depth, GROW, parent.terminals, rng
    )
    if _graft_depth(site, replacement.root) > config.max_depth_overall:
        return parent, site, None
    return _graft(site, replacement.root, parent.terminals), site, replacement


def mutate(parent: ProgramTree, config: EvolutionConfig, rng: random.Random) -> ProgramTree:
    """Replace a uniformly chosen subtree with a fresh GROW tree.

    The replacement is grown to at most ``config.mutation_subtree_depth``.
    If the child would exceed ``max_depth_overall``, the parent is
    returned unchanged (same object, so callers can detect the fallback).
    """
    child, _path, _replacement = _mutation_parts(parent, config, rng)
    return child


def _crossover_child(
    parent: ProgramTree, site: _Site, donor: Node, config: EvolutionConfig
) -> ProgramTree:
    if _graft_depth(site, donor) > config.max_depth_overall:
        return parent
    return _graft(site, donor, parent.terminals)


def _crossover_parts(
    p1: ProgramTree, p2: ProgramTree, config: EvolutionConfig, rng: random.Random
) -> tuple[ProgramTree, ProgramTree, _Site, _Site]:
    if p1.terminals != p2.terminals:
        raise ValueError("crossover parents must share a terminal set")
    site1 = _pick_site(p1, rng)
    site2 = _pick_site(p2, rng)
    child1 = _crossover_child(p1, site1, site2[1], config)
    child2 = _crossover_child(p2, site2, site1[1], config)
    return child1, child2, site1, site2


def crossover(
    p1: ProgramTree, p2: ProgramTree, config: EvolutionConfig, rng: random.Random
) -> tuple[ProgramTree, ProgramTree]:
    """Exchange uniformly chosen subtrees between two parents.

    Returns both children.  A child that would exceed
    ``max_depth_overall`` is replaced by its own parent (same object).
    """
    child1, child2, _site1, _site2 = _crossover_parts(p1, p2, config, rng)
    return child1, child2


def _beats(population: Sequence[Individual], i: int, j: int) -> bool:
    a, b = population[i], population[j]
    if a.fitness != b.fitness:
        return a.fitness < b.fitness
    size_a = node_count(a.tree.root)
    size_b = node_count(b.tree.root)
    if size_a != size_b:
        return size_a < size_b
    return i < j


def _tournament_index(
    population: Sequence[Individual], k: int, rng: random.Random
) -> int:
    winner = -1
    n = len(population)
    for _ in range(k):
        i = rng.randrange(n)
        if winner < 0 or _beats(population, i, winner):
            winner = i
    return winner


def select(
    population: Sequence[Individual], k: int, rng: random.Random
) -> Individual:
    """Tournament selection: sample k with replacement, keep the fittest.

    Ties go to the smaller tree (parsimony), then the earlier index.
    """
    if not population:
        raise ValueError("population is empty")
    if k < 1:
        raise ValueError(f"tournament size must be >= 1, got {k}")
    return population[_tournament_index(population, k, rng)]


# --------------------------------------------------------------------------
# The run loop.


def run(
    cases: Sequence[FitnessCase],
    config: EvolutionConfig,
    on_generation: Callable[[int, list[Individual]], None] | None = None,
) -> RunResult:
    """Evolve a population against ``cases`` and return the best-so-far.

    Per generation, offspring are produced by drawing clone / crossover /
    mutation with the configured probabilities (a crossover landing on
    the last open slot contributes only its first child).  The loop stops
    after ``max_generations`` generations or as soon as the best fitness
    reaches ``target_fitness``.  Fully deterministic given ``rng_seed``.

    ``on_generation(generation, population)`` is invoked after the
    initial population (generation 0) and after every replacement.
    """
    inputs, targets = _case_arrays(cases, config.terminals)
    rng = random.Random(config.rng_seed)
    n = config.population_size

    population: list[Individual] = []
    programs: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(n):
        tree = _ramped_tree(i, config, rng)
        kinds, values = _compile_postfix(tree.root)
        population.append(Individual(tree, _sse(kinds, values, inputs, targets)))
        programs.append((kinds, values))

    best = min(population, key=lambda ind: ind.fitness)
    history = [(best.fitness, _mean_fitness(population))]
    if on_generation is not None:
        on_generation(0, population)

    generation = 0
    p_clone_or_crossover = config.p_clone + config.p_crossover
    while generation < config.max_generations and best.fitness > config.target_fitness:
        offspring: list[Individual] = []
        offspring_programs: list[tuple[np.ndarray, np.ndarray]] = []

        def _append_spliced(
            child: ProgramTree,
            base_index: int,
            low: int,
            high: int,
            sub_kinds: np.ndarray,
            sub_values: np.ndarray,
        ) -> None:
            # The child's postfix form is its parent's with the replaced
            # subtree's contiguous block swapped out - no recompilation.
            base_kinds, base_values = programs[base_index]
            kinds = np.concatenate((base_kinds[:low], sub_kinds, base_kinds[high:]))
            values = np.concatenate((base_values[:low], sub_values, base_values[high:]))
            offspring.append(Individual(child, _sse(kinds, values, inputs, targets)))
            offspring_programs.append((kinds, values))

        while len(offspring) < n:
            draw = rng.random()
            if draw < config.p_clone:
                idx = _tournament_index(population, config.tournament_size, rng)
                offspring.append(population[idx])
                offspring_programs.append(programs[idx])
            elif draw < p_clone_or_crossover:
                idx1 = _tournament_index(population, config.tournament_size, rng)
                idx2 = _tournament_index(population, config.tournament_size, rng)
                tree1 = population[idx1].tree
                tree2 = population[idx2].tree
                site1 = _pick_site(tree1, rng)
                site2 = _pick_site(tree2, rng)
                low1, high1 = site1[2], site1[3]
                low2, high2 = site2[2], site2[3]
                kinds1, values1 = programs[idx1]
                kinds2, values2 = programs[idx2]
                child1 = _crossover_child(tree1, site1, site2[1], config)
                if child1 is tree1:  # depth fallback: reuse the parent as-is
                    offspring.append(population[idx1])
                    offspring_programs.append(programs[idx1])
                else:
                    _append_spliced(
                        child1, idx1, low1, high1,
                        kinds2[low2:high2], values2[low2:high2],
                    )
                if len(offspring) < n:
                    child2 = _crossover_child(tree2, site2, site1[1], config)
                    if child2 is tree2:
                        offspring.append(population[idx2])
                        offspring_programs.append(programs[idx2])
                    else:
                        _append_spliced(
                            child2, idx2, low2, high2,
                            kinds1[low1:high1], values1[low1:high1],
                        )
            else:
                idx = _tournament_index(population, config.tournament_size, rng)
                child, site, replacement = _mutation_parts(
                    population[idx].tree, config, rng
                )
                if replacement is None:  # depth fallback
                    offspring.append(population[idx])
                    offspring_programs.append(programs[idx])
                else:
                    sub_kinds, sub_values = _compile_postfix(replacement.root)
                    _append_spliced(child, idx, site[2], site[3], sub_kinds, sub_values)

        population = offspring
        programs = offspring_programs
        generation += 1
        generation_best = min(population, key=lambda ind: ind.fitness)
        if generation_best.fitness < best.fitness:
            best = generation_best
        history.append((generation_best.fitness, _mean_fitness(population)))
        if on_generation is not None:
            on_generation(generation, population)

    return RunResult(best=best, generations_run=generation, history=history)


def _mean_fitness(population: Sequence[Individual]) -> float:
    return math.fsum(ind.fitness for ind in population) / len(population)


# --------------------------------------------------------------------------
# Flat key=value config files.

_INT_KEYS = frozenset(
    {
        "population_size",
        "max_generations",
        "max_depth_initial",
        "max_depth_overall",
        "tournament_size",
        "mutation_subtree_depth",
    }
)
_FLOAT_KEYS = frozenset({"p_clone", "p_crossover", "p_mutation", "target_fitness"})


def load_config(path, terminals: TerminalSet) -> EvolutionConfig:
    """Read an EvolutionConfig from a flat ``key = value`` text file.

    Keys are exactly the field names; unknown or duplicate keys are
    errors.  ``rng_seed`` accepts decimal or 0x-prefixed hex.  Blank
    lines and ``#`` comments are ignored.
    """
    overrides: dict[str, object] = {}
    with open(path, encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}: line {line_number}: expected key=value")
            key = key.strip()
            value = value.strip()
            if key in overrides:
                raise ValueError(f"{path}: line {line_number}: duplicate key {key!r}")
            try:
                if key == "rng_seed":
                    overrides[key] = _parse_seed(value)
                elif key in _INT_KEYS:
                    overrides[key] = int(value)
                elif key in _FLOAT_KEYS:
                    overrides[key] = float(value)
                else:
                    raise KeyError
            except KeyError:
                raise ValueError(
                    f"{path}: line {line_number}: unknown key {key!r}"
                ) from None
            except ValueError:
                raise ValueError(
                    f"{path}: line {line_number}: bad value {value!r} for {key}"
                ) from None
    return EvolutionConfig(terminals=terminals, **overrides)


def _parse_seed(text: str) -> int:
    lowered = text.lower()
    if lowered.startswith("0x") or lowered.startswith("-0x"):
        return int(text, 16)
    return int(text)
