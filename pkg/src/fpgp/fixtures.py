"""The worked example's minutiae tables, embedded as data and CSV fixtures.

One query fingerprint and three candidates.  The query's end points are
known with their y targets; the candidates' published end and
bifurcation tables carry (x, angle...) only.  The query's bifurcation
records are reconstructed from the second candidate's bifurcation inputs
paired with the published query target column — the second candidate is
the same finger as the query, and its evaluated column equals the query
column exactly, so the pairing is positional and stable.

``write_fixture_files`` materializes everything as the eight CSV files
the CLI and the test suite consume.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .minutiae import (
    BifurcationPoint,
    EndPoint,
    MinutiaeSet,
    save_minutiae_csv,
)

#: Query end points: (x, angle, y), ascending in y.
QUERY_END = (
    (147, -1.05, 48),
    (40, 1.57, 101),
    (133, -1.57, 111),
    (50, 1.57, 112),
    (63, 1.57, 115),
    (49, -2.09, 117),
    (67, 2.36, 124),
    (119, -2.09, 127),
    (88, 1.05, 143),
    (126, 1.05, 154),
)

#: Candidate end points: (x, angle) per image, in published row order.
IMAGE_END = {
    "image1": (
        (86, -2.62),
        (158, -0.52),
        (156, -0.52),
        (93, 0.52),
        (111, 0.79),
        (24, -2.36),
        (112, 0.52),
        (161, -2.09),
        (103, 0.52),
        (151, 0.52),
    ),
    "image2": (
        (147, -1.05),
        (40, 1.57),
        (133, -1.57),
        (50, 1.57),
        (63, 1.57),
        (49, -2.09),
        (67, 2.36),
        (119, -2.09),
        (88, 1.05),
        (126, 1.05),
    ),
    "image3": (
        (104, 3.14),
        (98, 0.00),
        (121, 2.09),
        (65, 2.36),
        (130, -2.09),
        (133, 1.57),
        (88, -2.09),
        (107, 1.05),
        (128, -1.57),
        (144, -1.57),
        (69, 1.57),
        (99, -2.62),
        (73, -2.09),
        (62, 0.79),
        (120, 2.62),
    ),
}

#: Candidate bifurcations: (x, angle1, angle2, angle3) per image.
IMAGE_BIF = {
    "image1": (
        (109, 3.14, 0.79, -0.52),
        (96, 2.62, -2.09, 0.00),
        (149, 2.62, -1.57, 0.00),
        (110, 2.62, -2.09, 0.00),
        (122, 2.62, -1.57, 0.00),
        (80, 3.14, -1.57, 1.05),
        (116, 2.36, -2.62, -0.79),
        (171, 2.36, -2.36, -0.79),
        (154, -2.62, 1.57, -1.05),
        (167, -2.62, 1.05, -0.52),
    ),
    "image2": (
        (109, 3.14, -1.05, 0.52),
        (74, 2.09, -2.09, 0.52),
        (98, -2.62, 1.05, -0.52),
        (100, 3.14, 1.57, -1.05),
        (107, -2.36, 1.57, -0.79),
        (39, -2.36, 1.05, -0.79),
        (45, -2.09, 1.57, 0.00),
        (92, -2.36, 1.05, -0.79),
        (39, 3.14, -1.57, 1.05),
        (71, -2.36, -1.05, 0.79),
        (64, 3.14, 1.05, -1.05),
        (128, -2.36, 1.05, -1.05),
        (92, -2.36, 1.05, -1.05),
        (48, 2.09, -2.09, 0.00),
        (59, -2.36, 1.57, 0.00),
    ),
    "image3": (
        (52, 2.09, -2.09, 0.79),
        (88, -2.62, 1.05, 0.00),
        (132, -2.36, 2.09, -1.05),
        (75, -2.62, 1.05, -1.05),
        (106, -2.36, 1.57, -0.79),
        (123, 2.09, -1.57, 1.05),
        (115, 3.14, 1.05, -0.79),
        (108, -2.62, -1.05, 0.79),
        (66, -2.62, 1.05, -1.05),
        (62, -2.62, -1.05, 0.79),
        (137, 2.36, 0.79, -0.79),
        (77, 2.09, -2.09, 0.00),
        (75, -2.09, 1.57, 0.00),
        (78, -2.62, -1.05, 0.79),
    ),
}

#: The query's bifurcation y targets, row-aligned with IMAGE_BIF["image2"].
QUERY_BIF_TARGETS = (50, 55, 60, 82, 89, 94, 101, 103, 110, 119, 120, 135, 138, 152, 179)

#: The eight fixture files, in manifest order.
FIXTURE_FILE_NAMES = (
    "query_end.csv",
    "image1_end.csv",
    "image2_end.csv",
    "image3_end.csv",
    "image1_bif.csv",
    "image2_bif.csv",
    "image3_bif.csv",
    "query_bif_targets.csv",
)


def query_minutiae() -> MinutiaeSet:
    """The query fingerprint with full records (y included) for both kinds."""
    endings = [EndPoint(x=x, angle=angle, y=y) for x, angle, y in QUERY_END]
    bifurcations = [
        BifurcationPoint(x=x, angle1=a1, angle2=a2, angle3=a3, y=y)
        for (x, a1, a2, a3), y in zip(IMAGE_BIF["image2"], QUERY_BIF_TARGETS, strict=True)
    ]
    return MinutiaeSet(endings=endings, bifurcations=bifurcations)


def candidate_minutiae(name: str) -> MinutiaeSet:
    """Candidate fingerprint ``name`` ('image1' | 'image2' | 'image3'), no y."""
    if name not in IMAGE_END:
        raise ValueError(f"unknown candidate {name!r}")
    endings = [EndPoint(x=x, angle=angle) for x, angle in IMAGE_END[name]]
    bifurcations = [
        BifurcationPoint(x=x, angle1=a1, angle2=a2, angle3=a3)
        for x, a1, a2, a3 in IMAGE_BIF[name]
    ]
    return MinutiaeSet(endings=endings, bifurcations=bifurcations)


def save_targets_csv(targets, path) -> None:
    """Single-column CSV of y targets, header ``y``."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["y"])
        for value in targets:
            writer.writerow([value])


def load_targets_csv(path) -> list[float]:
    """Read a single-column y-target CSV written by :func:`save_targets_csv`."""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = [cell.strip().lower() for cell in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if header != ["y"]:
            raise ValueError(f"{path}: unrecognized header {','.join(header)!r}")
        targets = []
        for row in reader:
            if len(row) != 1:
                raise ValueError(
                    f"{path}: row {reader.line_num}: expected 1 cell, got {len(row)}"
                )
            try:
                targets.append(float(row[0]))
            except ValueError:
                raise ValueError(
                    f"{path}: row {reader.line_num}: non-numeric y value {row[0]!r}"
                ) from None
    return targets


def write_fixture_files(directory) -> list[Path]:
    """Materialize all eight fixture CSVs into ``directory`` (created if missing)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    query = query_minutiae()
    paths = []
    for name in FIXTURE_FILE_NAMES:
        path = directory / name
        if name == "query_end.csv":
            save_minutiae_csv(MinutiaeSet(endings=query.endings), path, kind="end")
        elif name == "query_bif_targets.csv":
            save_targets_csv(QUERY_BIF_TARGETS, path)
        elif name.endswith("_end.csv"):
            image = name.removesuffix("_end.csv")
            save_minutiae_csv(candidate_minutiae(image), path, kind="end")
        else:
            image = name.removesuffix("_bif.csv")
            save_minutiae_csv(candidate_minutiae(image), path, kind="bif")
        paths.append(path)
    return paths
