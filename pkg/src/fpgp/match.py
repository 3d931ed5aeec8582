"""Formula templates and the mean-squared-error match decision.

Enrollment runs the genetic-programming engine once per minutia kind on
the query fingerprint: end-point cases map (x, angle) to y, bifurcation
cases map (x, angle1, angle2, angle3) to y.  The resulting template
stores the two best formulas plus the query's y targets.  A candidate is
evaluated by feeding its minutiae through the formulas and comparing the
predictions against the template targets (or the candidate's own y
values) with mean-squared error; the candidate matches only if every
kind the template covers passes the threshold.

Note the deliberate asymmetry: y is the regression *target*, so it is
excluded from the terminal variables by default even though it is part
of each minutia record — a formula allowed to read y would trivially be
`y` and match everything.  ``include_target_variable=True`` restores it
for experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

from .evolve import EvolutionConfig, FitnessCase, run
from .expr import (
    PrefixParseError,
    ProgramTree,
    TerminalSet,
    evaluate,
    parse_prefix,
    serialize_prefix,
)
from .minutiae import BifurcationPoint, EndPoint, MinutiaeSet


class CountPolicy(Enum):
    #: A kind with differing point counts fails outright.
    STRICT = "strict"
    #: Compare the first min(n, m) pairs, add |n-m| * threshold as penalty.
    PAIR_PREFIX = "pair_prefix"


class ComparisonMode(Enum):
    #: Compare predictions against the query's stored y targets.
    QUERY_TARGETS = "query_targets"
    #: Compare predictions against the candidate's own y values.
    OWN_Y = "own_y"


class Decision(Enum):
    MATCH = "MATCH"
    NON_MATCH = "NON_MATCH"


class _CountMismatch:
    """Marker reported instead of an MSE when STRICT counts differ."""

    __slots__ = ()

    def __repr__(self):
        return "COUNT_MISMATCH"


COUNT_MISMATCH = _CountMismatch()


class MissingFormulaError(ValueError):
    """Candidate has minutiae of a kind the template carries no formula for."""


END_VARIABLES = ("x", "angle")
BIF_VARIABLES = ("x", "angle1", "angle2", "angle3")


def end_terminal_set(
    const_min: int = -10, const_max: int = 10, include_target_variable: bool = False
) -> TerminalSet:
    """Terminal set for end-point formulas: variables (x, angle) [+ y]."""
    names = ("x", "y", "angle") if include_target_variable else END_VARIABLES
    return TerminalSet(names, const_min, const_max)


def bif_terminal_set(
    const_min: int = -10, const_max: int = 10, include_target_variable: bool = False
) -> TerminalSet:
    """Terminal set for bifurcation formulas: (x, angle1..angle3) [+ y]."""
    names = (
        ("x", "y", "angle1", "angle2", "angle3")
        if include_target_variable
        else BIF_VARIABLES
    )
    return TerminalSet(names, const_min, const_max)


@dataclass
class Template:
    """Enrolled fingerprint: per-kind formula, targets, and training RMSE.

    A kind is either fully present (formula, non-empty targets, RMSE) or
    fully absent; at least one kind must be present.
    """

    end_formula: ProgramTree | None
    bif_formula: ProgramTree | None
    end_targets: list[float]
    bif_targets: list[float]
    end_training_rmse: float | None
    bif_training_rmse: float | None

    def __post_init__(self):
        self.end_targets = [float(t) for t in self.end_targets]
        self.bif_targets = [float(t) for t in self.bif_targets]
        if not self.end_targets and not self.bif_targets:
            raise ValueError("template must cover at least one minutia kind")
        for kind, formula, targets, rmse in (
            ("end", self.end_formula, self.end_targets, self.end_training_rmse),
            ("bif", self.bif_formula, self.bif_targets, self.bif_training_rmse),
        ):
            present = bool(targets)
            if (formula is not None) != present or (rmse is not None) != present:
                raise ValueError(
                    f"{kind} kind must have formula, targets and rmse together"
                )
            if rmse is not None and rmse < 0:
                raise ValueError(f"{kind}_training_rmse must be >= 0, got {rmse}")


@dataclass(frozen=True)
class MatchConfig:
    mse_threshold: float = 25.0
    count_policy: CountPolicy = CountPolicy.STRICT
    comparison_mode: ComparisonMode = ComparisonMode.QUERY_TARGETS

    def __post_init__(self):
        if self.mse_threshold < 0:
            raise ValueError(f"mse_threshold must be >= 0, got {self.mse_threshold}")


@dataclass
class MatchReport:
    """All intermediate values of one decision, full precision."""

    end_predictions: list[float]
    bif_predictions: list[float]
    #: MSE per kind; COUNT_MISMATCH under STRICT count failure; None when
    #: the template does not cover the kind.
    end_mse: float | _CountMismatch | None
    bif_mse: float | _CountMismatch | None
    end_counts: tuple[int, int]  # (template n, candidate m)
    bif_counts: tuple[int, int]
    decision: Decision


def ending_cases(
    points: Sequence[EndPoint], include_target_variable: bool = False
) -> list[FitnessCase]:
    """Fitness cases (x, angle) -> y for end points; y must be known."""
    cases = []
    for point in points:
        if point.y is None:
            raise ValueError(f"end point x={point.x} lacks y, required as target")
        inputs = (
            (point.x, point.y, point.angle)
            if include_target_variable
            else (point.x, point.angle)
        )
        cases.append(FitnessCase(inputs=inputs, target=point.y))
    return cases


def bifurcation_cases(
    points: Sequence[BifurcationPoint], include_target_variable: bool = False
) -> list[FitnessCase]:
    """Fitness cases (x, angle1..angle3) -> y for bifurcations."""
    cases = []
    for point in points:
        if point.y is None:
            raise ValueError(f"bifurcation x={point.x} lacks y, required as target")
        inputs = (
            (point.x, point.y, point.angle1, point.angle2, point.angle3)
            if include_target_variable
            else (point.x, point.angle1, point.angle2, point.angle3)
        )
        cases.append(FitnessCase(inputs=inputs, target=point.y))
    return cases


def build_template(
    query: MinutiaeSet,
    evo: EvolutionConfig,
    include_target_variable: bool = False,
) -> Template:
    """Evolve one formula per minutia kind present in the query.

    The end-point run uses ``evo.rng_seed``; the bifurcation run uses
    ``evo.rng_seed + 1`` so the kinds evolve independently.  Kinds with
    no points are left absent in the template.
    """
    if not query.endings and not query.bifurcations:
        raise ValueError("query has no minutiae to enroll")
    end_formula = bif_formula = None
    end_rmse = bif_rmse = None
    end_targets: list[float] = []
    bif_targets: list[float] = []
    if query.endings:
        cases = ending_cases(query.endings, include_target_variable)
        terminals = end_terminal_set(
            evo.terminals.const_min, evo.terminals.const_max, include_target_variable
        )
        result = run(cases, replace(evo, terminals=terminals))
        end_formula = result.best.tree
        end_targets = [case.target for case in cases]
        end_rmse = math.sqrt(result.best.fitness / len(cases))
    if query.bifurcations:
        cases = bifurcation_cases(query.bifurcations, include_target_variable)
        terminals = bif_terminal_set(
            evo.terminals.const_min, evo.terminals.const_max, include_target_variable
        )
        result = run(cases, replace(evo, terminals=terminals, rng_seed=evo.rng_seed + 1))
        bif_formula = result.best.tree
        bif_targets = [case.target for case in cases]
        bif_rmse = math.sqrt(result.best.fitness / len(cases))
    return Template(
        end_formula=end_formula,
        bif_formula=bif_formula,
        end_targets=end_targets,
        bif_targets=bif_targets,
        end_training_rmse=end_rmse,
        bif_training_rmse=bif_rmse,
    )


def _binding(point, names: tuple[str, ...], kind: str) -> tuple[float, ...]:
    available = {"x": float(point.x)}
    if point.y is not None:
        available["y"] = float(point.y)
    if kind == "end":
        available["angle"] = point.angle
    else:
        available["angle1"] = point.angle1
        available["angle2"] = point.angle2
        available["angle3"] = point.angle3
    values = []
    for name in names:
        if name not in available:
            raise ValueError(
                f"{kind} point x={point.x} lacks {name!r} required by the formula"
            )
        values.append(available[name])
    return tuple(values)


def evaluate_candidate(
    template: Template, candidate: MinutiaeSet
) -> tuple[list[float], list[float]]:
    """Formula outputs for every candidate minutia, in canonical order.

    Full precision; round only for display.  Raises
    :class:`MissingFormulaError` if the candidate has minutiae of a kind
    the template does not cover.
    """
    end_predictions: list[float] = []
    bif_predictions: list[float] = []
    if candidate.endings:
        if template.end_formula is None:
            raise MissingFormulaError(
                "candidate has end points but template has no end formula"
            )
        names = template.end_formula.terminals.variable_names
        end_predictions = [
            evaluate(template.end_formula, _binding(p, names, "end"))
            for p in candidate.endings
        ]
    if candidate.bifurcations:
        if template.bif_formula is None:
            raise MissingFormulaError(
                "candidate has bifurcations but template has no bifurcation formula"
            )
        names = template.bif_formula.terminals.variable_names
        bif_predictions = [
            evaluate(template.bif_formula, _binding(p, names, "bif"))
            for p in candidate.bifurcations
        ]
    return end_predictions, bif_predictions


def mse(predictions: Sequence[float], targets: Sequence[float]) -> float:
    """Plain mean squared error; lengths must already agree."""
    if len(predictions) != len(targets):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs "
            f"{len(targets)} targets (apply the count policy first)"
        )
    if not targets:
        raise ValueError("mse of zero points is undefined")
    return math.fsum((p - t) ** 2 for p, t in zip(predictions, targets)) / len(targets)


def _own_targets(points, kind: str) -> list[float]:
    targets = []
    for point in points:
        if point.y is None:
            raise ValueError(
                f"{kind} point x={point.x} lacks y, required by OWN_Y comparison"
            )
        targets.append(float(point.y))
    return targets


def _score_kind(
    predictions: list[float],
    template_targets: list[float],
    candidate_points,
    kind: str,
    config: MatchConfig,
) -> tuple[float | _CountMismatch | None, bool]:
    n = len(template_targets)
    m = len(predictions)
    if n == 0:
        # Kind not covered by the template: never blocks the decision.
        return None, True
    if config.comparison_mode is ComparisonMode.OWN_Y:
        reference = _own_targets(candidate_points, kind)
    else:
        reference = template_targets
    if config.count_policy is CountPolicy.STRICT:
        if n != m:
            return COUNT_MISMATCH, False
        value = mse(predictions, reference)
        return value, value <= config.mse_threshold
    paired = min(n, m)
    value = abs(n - m) * config.mse_threshold
    if paired:
        value += mse(predictions[:paired], reference[:paired])
    return value, value <= config.mse_threshold


def decide(
    template: Template, candidate: MinutiaeSet, config: MatchConfig
) -> MatchReport:
    """Score both kinds and conjoin: MATCH iff every covered kind passes."""
    end_predictions, bif_predictions = evaluate_candidate(template, candidate)
    end_mse, end_ok = _score_kind(
        end_predictions, template.end_targets, candidate.endings, "end", config
    )
    bif_mse, bif_ok = _score_kind(
        bif_predictions, template.bif_targets, candidate.bifurcations, "bif", config
    )
    decision = Decision.MATCH if (end_ok and bif_ok) else Decision.NON_MATCH
    return MatchReport(
        end_predictions=end_predictions,
        bif_predictions=bif_predictions,
        end_mse=end_mse,
        bif_mse=bif_mse,
        end_counts=(len(template.end_targets), len(candidate.endings)),
        bif_counts=(len(template.bif_targets), len(candidate.bifurcations)),
        decision=decision,
    )


# --------------------------------------------------------------------------
# Template files: six fixed lines, absent values written as "-".
#
#   end: <prefix formula | ->
#   bif: <prefix formula | ->
#   end_targets: <comma-separated reals | ->
#   bif_targets: <comma-separated reals | ->
#   end_training_rmse: <real | ->
#   bif_training_rmse: <real | ->

_TEMPLATE_KEYS = (
    "end",
    "bif",
    "end_targets",
    "bif_targets",
    "end_training_rmse",
    "bif_training_rmse",
)


def _format_real(value: float) -> str:
    return f"{value:.9g}"


def save_template(template: Template, path) -> None:
    """Write the six-line template text format (reals at 9 significant digits)."""

    def formula_text(tree: ProgramTree | None) -> str:
        return serialize_prefix(tree) if tree is not None else "-"

    def targets_text(targets: list[float]) -> str:
        return ",".join(_format_real(t) for t in targets) if targets else "-"

    def rmse_text(value: float | None) -> str:
        return _format_real(value) if value is not None else "-"

    lines = (
        f"end: {formula_text(template.end_formula)}",
        f"bif: {formula_text(template.bif_formula)}",
        f"end_targets: {targets_text(template.end_targets)}",
        f"bif_targets: {targets_text(template.bif_targets)}",
        f"end_training_rmse: {rmse_text(template.end_training_rmse)}",
        f"bif_training_rmse: {rmse_text(template.bif_training_rmse)}",
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_template(path) -> Template:
    """Read a template file written by :func:`save_template`."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) != len(_TEMPLATE_KEYS):
        raise ValueError(
            f"{path}: expected {len(_TEMPLATE_KEYS)} lines, got {len(lines)}"
        )
    fields: dict[str, str] = {}
    for line_number, (key, line) in enumerate(zip(_TEMPLATE_KEYS, lines), 1):
        prefix = f"{key}:"
        if not line.startswith(prefix):
            raise ValueError(f"{path}: line {line_number}: expected '{prefix} ...'")
        fields[key] = line[len(prefix) :].strip()

    def parse_formula(text: str, variants: list[TerminalSet], line_number: int):
        if text == "-":
            return None
        last_error: PrefixParseError | None = None
        for terminals in variants:
            try:
                return parse_prefix(text, terminals)
            except PrefixParseError as exc:
                last_error = exc
        raise ValueError(f"{path}: line {line_number}: {last_error}")

    def parse_targets(text: str, line_number: int) -> list[float]:
        if text == "-":
            return []
        try:
            return [float(token) for token in text.split(",")]
        except ValueError:
            raise ValueError(
                f"{path}: line {line_number}: malformed target list {text!r}"
            ) from None

    def parse_rmse(text: str, line_number: int) -> float | None:
        if text == "-":
            return None
        try:
            return float(text)
        except ValueError:
            raise ValueError(
                f"{path}: line {line_number}: malformed rmse {text!r}"
            ) from None

    end_formula = parse_formula(
        fields["end"], [end_terminal_set(), end_terminal_set(include_target_variable=True)], 1
    )
    bif_formula = parse_formula(
        fields["bif"], [bif_terminal_set(), bif_terminal_set(include_target_variable=True)], 2
    )
    try:
        return Template(
            end_formula=end_formula,
            bif_formula=bif_formula,
            end_targets=parse_targets(fields["end_targets"], 3),
            bif_targets=parse_targets(fields["bif_targets"], 4),
            end_training_rmse=parse_rmse(fields["end_training_rmse"], 5),
            bif_training_rmse=parse_rmse(fields["bif_training_rmse"], 6),
        )
    except ValueError as exc:
        message = str(exc)
        if message.startswith(str(path)):
            raise
        raise ValueError(f"{path}: {message}") from None
