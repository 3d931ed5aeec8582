"""Fingerprint matching with genetic-programming formula templates.

The package covers the full pipeline: skeleton images are reduced to
crossing-number minutiae, a genetic-programming engine evolves one
arithmetic formula per minutiae kind for the enrolled fingerprint, and
candidates are matched by the mean-squared error between the formula
outputs and the enrolled targets.
"""

from .expr import (
    Constant,
    Operator,
    PrefixParseError,
    ProgramTree,
    TerminalSet,
    Variable,
    evaluate,
    metrics,
    parse_prefix,
    random_tree,
    serialize_prefix,
)
from .evolve import (
    EvolutionConfig,
    FitnessCase,
    Individual,
    RunResult,
    crossover,
    fitness,
    init_population,
    load_config,
    mutate,
    run,
    select,
)
from .minutiae import (
    BifurcationPoint,
    EndPoint,
    MinutiaeSet,
    SkeletonImage,
    crossing_number,
    estimate_angle,
    extract_minutiae,
    load_image,
    load_minutiae_csv,
    save_minutiae_csv,
    thin,
)
from .match import (
    ComparisonMode,
    CountPolicy,
    Decision,
    MatchConfig,
    MatchReport,
    Template,
    bif_terminal_set,
    build_template,
    decide,
    end_terminal_set,
    evaluate_candidate,
    load_template,
    mse,
    save_template,
)

__version__ = "0.1.0"
