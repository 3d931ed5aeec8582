"""Command-line front end: extract, train, match, fixtures, reproduce.

Exit codes: 0 success (and MATCH for `match`), 1 NON_MATCH (or a failed
reproduction verdict), 2 usage or input error, 3 training failed to
reach a usable residual.  Output is deterministic for identical flags
and seed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from dataclasses import replace
from pathlib import Path

from . import fixtures
from .evolve import EvolutionConfig, load_config
from .match import (
    COUNT_MISMATCH,
    CountPolicy,
    Decision,
    MatchConfig,
    MatchReport,
    Template,
    build_template,
    decide,
    end_terminal_set,
    load_template,
    save_template,
)
from .expr import serialize_prefix
from .minutiae import (
    DEFAULT_BORDER_MARGIN,
    BifurcationPoint,
    MinutiaeSet,
    extract_minutiae,
    load_image,
    load_minutiae_csv,
    save_minutiae_csv,
    thin,
)

#: Evolution settings used by `reproduce` (the experiment's GP budget).
REPRODUCE_POPULATION = 1000
REPRODUCE_GENERATIONS = 500
#: Stop a training run once its sum of squared errors is this small: both
#: kinds are then multiple standard deviations under the match threshold
#: (rmse <= 1.0 for 10 end points, <= 0.82 for 15 bifurcations), and
#: stopping there keeps a 10-seed sweep well inside interactive time.
REPRODUCE_TARGET_SSE = 10.0
#: Selection pressure / operator mix for the memorization-style training
#: tasks `reproduce` runs: small samples of unrelated coordinates reward a
#: strong tournament, a mutation-heavy mix, and constants on the scale of
#: the targets.  Chosen by a seed-averaged sweep; see the repository notes.
REPRODUCE_TOURNAMENT = 15
REPRODUCE_P_MUTATION = 0.50
REPRODUCE_P_CROSSOVER = 0.45
REPRODUCE_CONST_RANGE = 100

_REPRODUCE_IMAGES = ("image1", "image2", "image3")
_EXPECTED_DECISIONS = (Decision.NON_MATCH, Decision.MATCH, Decision.NON_MATCH)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpgp",
        description="Fingerprint matching via minutiae and evolved formulas.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    extract = sub.add_parser(
        "extract", help="extract minutiae from a PBM/PGM skeleton image"
    )
    extract.add_argument("image", help="PBM (P1/P4) or PGM (P2/P5) file")
    extract.add_argument(
        "--margin",
        type=int,
        default=DEFAULT_BORDER_MARGIN,
        help="border margin in pixels (default %(default)s)",
    )
    extract.add_argument(
        "--thin", action="store_true", help="apply Zhang-Suen thinning first"
    )
    extract.add_argument(
        "--out", required=True, help="output prefix; writes <out>.end.csv and <out>.bif.csv"
    )
    extract.set_defaults(func=cmd_extract)

    train = sub.add_parser("train", help="evolve a formula template from minutiae CSVs")
    train.add_argument("--end", help="end-point CSV with y column")
    train.add_argument("--bif", help="bifurcation CSV with y column")
    train.add_argument("--config", help="evolution config file (key = value lines)")
    train.add_argument("--seed", type=int, default=None, help="random seed (default 1)")
    train.add_argument("--out", required=True, help="template file to write")
    train.set_defaults(func=cmd_train)

    match = sub.add_parser("match", help="match candidate minutiae against a template")
    match.add_argument("template", help="template file from `train`")
    match.add_argument("--end", help="candidate end-point CSV")
    match.add_argument("--bif", help="candidate bifurcation CSV")
    match.add_argument(
        "--threshold",
        type=float,
        default=25.0,
        help="MSE pass threshold in pixels^2 (default %(default)s)",
    )
    match.add_argument(
        "--count-policy",
        choices=[policy.value for policy in CountPolicy],
        default=CountPolicy.STRICT.value,
        help="how differing point counts are treated (default %(default)s)",
    )
    match.set_defaults(func=cmd_match)

    fixtures_cmd = sub.add_parser(
        "fixtures", help="materialize the built-in example tables as CSV files"
    )
    fixtures_cmd.add_argument("--dir", required=True, help="output directory")
    fixtures_cmd.set_defaults(func=cmd_fixtures)

    reproduce = sub.add_parser(
        "reproduce", help="run the full experiment: fixtures, training, matching"
    )
    reproduce.add_argument("--seed", type=int, default=1, help="random seed (default 1)")
    reproduce.add_argument(
        "--dir", default="reproduction", help="working directory (default %(default)s)"
    )
    reproduce.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def app() -> None:
    sys.exit(main())


# --------------------------------------------------------------------------
# Subcommands.


def cmd_extract(args) -> int:
    image = load_image(args.image)
    if args.thin:
        image = thin(image)
    minutiae = extract_minutiae(image, args.margin)
    out = str(args.out)
    save_minutiae_csv(minutiae, f"{out}.end.csv", kind="end")
    save_minutiae_csv(minutiae, f"{out}.bif.csv", kind="bif")
    print(f"endings: {len(minutiae.endings)}, bifurcations: {len(minutiae.bifurcations)}")
    return 0


def cmd_train(args) -> int:
    if not args.end and not args.bif:
        raise ValueError("at least one of --end/--bif is required")
    endings = load_minutiae_csv(args.end).endings if args.end else []
    bifurcations = load_minutiae_csv(args.bif).bifurcations if args.bif else []
    query = MinutiaeSet(endings=endings, bifurcations=bifurcations)
    terminals = end_terminal_set()  # placeholder; build_template swaps per kind
    if args.config:
        config = load_config(args.config, terminals)
    else:
        config = EvolutionConfig(terminals=terminals)
    if args.seed is not None:
        config = replace(config, rng_seed=args.seed)
    template = build_template(query, config)
    save_template(template, args.out)
    _print_kind_summary("end", template.end_formula, template.end_training_rmse)
    _print_kind_summary("bif", template.bif_formula, template.bif_training_rmse)
    print(f"template: {args.out}")
    return 0


def _print_kind_summary(kind: str, formula, rmse) -> None:
    if formula is None:
        print(f"{kind} formula: -")
        print(f"{kind} training rmse: -")
    else:
        print(f"{kind} formula: {serialize_prefix(formula)}")
        print(f"{kind} training rmse: {rmse:.2f}")


def cmd_match(args) -> int:
    template = load_template(args.template)
    endings = load_minutiae_csv(args.end).endings if args.end else []
    bifurcations = load_minutiae_csv(args.bif).bifurcations if args.bif else []
    candidate = MinutiaeSet(endings=endings, bifurcations=bifurcations)
    config = MatchConfig(
        mse_threshold=args.threshold,
        count_policy=CountPolicy(args.count_policy),
    )
    report = decide(template, candidate, config)
    _print_kind_table("end points", report.end_predictions, template.end_targets,
                      report.end_counts, report.end_mse)
    _print_kind_table("bifurcations", report.bif_predictions, template.bif_targets,
                      report.bif_counts, report.bif_mse)
    print(f"decision: {report.decision.value}")
    return 0 if report.decision is Decision.MATCH else 1


def _format_mse(value) -> str:
    if value is COUNT_MISMATCH:
        return "COUNT_MISMATCH"
    if value is None:
        return "-"
    return f"{value:.2f}"


def _print_kind_table(title, predictions, targets, counts, mse_value) -> None:
    n, m = counts
    if n == 0 and m == 0:
        return
    print(f"{title}: template {n}, candidate {m}")
    print("  prediction      target")
    for i in range(max(n, m)):
        pred = f"{predictions[i]:.2f}" if i < m else "-"
        target = f"{targets[i]:.2f}" if i < n else "-"
        print(f"  {pred:>10}  {target:>10}")
    print(f"{title} mse: {_format_mse(mse_value)}")


def cmd_fixtures(args) -> int:
    paths = fixtures.write_fixture_files(args.dir)
    for path in paths:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        print(f"{digest}  {path.name}")
    return 0


def cmd_reproduce(args) -> int:
    out_dir = Path(args.dir)
    paths = fixtures.write_fixture_files(out_dir)
    print(f"fixtures: {len(paths)} files in {out_dir}")

    # Rebuild the query from the materialized files so the whole pipeline
    # (CSV round-trip included) is exercised.
    query_endings = load_minutiae_csv(out_dir / "query_end.csv").endings
    bif_inputs = load_minutiae_csv(out_dir / "image2_bif.csv").bifurcations
    targets = fixtures.load_targets_csv(out_dir / "query_bif_targets.csv")
    query_bifurcations = [
        BifurcationPoint(
            x=p.x, angle1=p.angle1, angle2=p.angle2, angle3=p.angle3, y=int(t)
        )
        for p, t in zip(bif_inputs, targets, strict=True)
    ]
    query = MinutiaeSet(endings=query_endings, bifurcations=query_bifurcations)

    evo = EvolutionConfig(
        terminals=end_terminal_set(-REPRODUCE_CONST_RANGE, REPRODUCE_CONST_RANGE),
        population_size=REPRODUCE_POPULATION,
        max_generations=REPRODUCE_GENERATIONS,
        target_fitness=REPRODUCE_TARGET_SSE,
        tournament_size=REPRODUCE_TOURNAMENT,
        p_mutation=REPRODUCE_P_MUTATION,
        p_crossover=REPRODUCE_P_CROSSOVER,
        rng_seed=args.seed,
    )
    template = build_template(query, evo)
    print(f"end formula: {serialize_prefix(template.end_formula)}")
    print(f"bif formula: {serialize_prefix(template.bif_formula)}")
    print(f"end training rmse: {template.end_training_rmse:.2f} ({len(template.end_targets)} points)")
    print(f"bif training rmse: {template.bif_training_rmse:.2f} ({len(template.bif_targets)} points)")

    match_config = MatchConfig()
    failure = _training_failure(template, match_config.mse_threshold)
    if failure:
        print(f"training failure: {failure}")
        return 3

    reports: dict[str, MatchReport] = {}
    for name in _REPRODUCE_IMAGES:
        endings = load_minutiae_csv(out_dir / f"{name}_end.csv").endings
        bifurcations = load_minutiae_csv(out_dir / f"{name}_bif.csv").bifurcations
        candidate = MinutiaeSet(endings=endings, bifurcations=bifurcations)
        reports[name] = decide(template, candidate, match_config)

    _write_reproduction_csvs(out_dir, template, reports)
    for name in _REPRODUCE_IMAGES:
        report = reports[name]
        print(
            f"{name}: end mse {_format_mse(report.end_mse)}, "
            f"bif mse {_format_mse(report.bif_mse)} -> {report.decision.value}"
        )
    vector = tuple(reports[name].decision for name in _REPRODUCE_IMAGES)
    print(
        "decision vector: "
        + " ".join(f"{n}={d.value}" for n, d in zip(_REPRODUCE_IMAGES, vector))
    )
    print(f"wrote {out_dir}/decisions.csv {out_dir}/end_predictions.csv {out_dir}/bif_predictions.csv")
    return 0 if vector == _EXPECTED_DECISIONS else 1


def _training_failure(template: Template, threshold: float) -> str | None:
    """A template is usable when each trained kind's training MSE is under
    the match threshold: a template that cannot match its own source data
    cannot decide anything about other images."""
    for kind, rmse, n in (
        ("end", template.end_training_rmse, len(template.end_targets)),
        ("bif", template.bif_training_rmse, len(template.bif_targets)),
    ):
        if n == 0:
            continue
        if rmse * rmse > threshold:
            return (
                f"{kind} training residual unusable: mse {rmse * rmse:.2f} "
                f"exceeds match threshold {threshold:.2f}"
            )
    return None


def _format_csv_real(value: float) -> str:
    return f"{value:.9g}"


def _write_reproduction_csvs(out_dir: Path, template: Template, reports) -> None:
    with open(out_dir / "decisions.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["image", "end_mse", "bif_mse", "decision"])
        for name in _REPRODUCE_IMAGES:
            report = reports[name]
            writer.writerow(
                [
                    name,
                    _csv_mse(report.end_mse),
                    _csv_mse(report.bif_mse),
                    report.decision.value,
                ]
            )

    _write_prediction_table(
        out_dir / "end_predictions.csv",
        [reports[name].end_predictions for name in _REPRODUCE_IMAGES],
        template.end_targets,
    )
    _write_prediction_table(
        out_dir / "bif_predictions.csv",
        [reports[name].bif_predictions for name in _REPRODUCE_IMAGES],
        template.bif_targets,
    )


def _csv_mse(value) -> str:
    if value is COUNT_MISMATCH:
        return "COUNT_MISMATCH"
    if value is None:
        return ""
    return _format_csv_real(value)


def _write_prediction_table(path, columns: list[list[float]], targets: list[float]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["image1", "image2", "image3", "query"])
        all_columns = columns + [targets]
        height = max(len(column) for column in all_columns)
        for i in range(height):
            writer.writerow(
                [
                    _format_csv_real(column[i]) if i < len(column) else ""
                    for column in all_columns
                ]
            )


if __name__ == "__main__":
    app()
