"""Skeleton-image handling and crossing-number minutiae extraction.

A skeleton image is a binary grid (1 = ridge, 0 = background) whose
ridges are one pixel wide.  Minutiae are classified per ridge pixel by
the crossing number CN = half the sum of absolute differences between
consecutive values around the pixel's 8-neighbor ring: CN 1 is a ridge
ending, CN 3 a bifurcation.  Each minutia carries its column ``x``, row
``y`` (origin top-left, rows grow downward) and one branch angle per
outgoing ridge, estimated by tracing a few pixels along the branch.
Angles use mathematical orientation (y-axis up) in radians, rounded to
two decimals.

Also here: Zhang-Suen thinning, PBM/PGM loading, and the minutiae CSV
format (the persistence layer for extracted points).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

#: 8-neighbor ring as (dx, dy) offsets, clockwise from the east neighbor.
RING = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))

#: Branch angles are estimated from the displacement after tracing up to
#: this many pixels along the branch.
TRACE_LENGTH = 5

#: Default distance from the borders below which minutiae are suppressed.
DEFAULT_BORDER_MARGIN = 10


class SkeletonImage:
    """Immutable binary image; ``pixels[row, column]`` is 0 or 1."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.uint8, order="C")  # always a private copy
        if arr.ndim != 2:
            raise ValueError(f"pixels must be a 2-D grid, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image dimensions must be positive, got {arr.shape}")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("pixel values must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("SkeletonImage is immutable")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SkeletonImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"SkeletonImage({self.width}x{self.height}, {int(self.pixels.sum())} ridge px)"


def _as_coordinate(value, name: str, *, optional: bool = False) -> int | None:
    if value is None:
        if optional:
            return None
        raise ValueError(f"{name} is required")
    coordinate = int(value)
    if coordinate != value:
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if coordinate < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return coordinate


def _as_angle(value, name: str) -> float:
    angle = round(float(value), 2)
    if not -3.15 < angle <= 3.15:
        raise ValueError(f"{name} must lie in (-pi, pi], got {value}")
    return angle


@dataclass(frozen=True)
class EndPoint:
    """Ridge ending: column, branch angle, and (when known) row.

    ``y`` is optional because published end-point tables may carry only
    (x, angle) for candidate fingerprints; extraction always fills it.
    """

    x: int
    angle: float
    y: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", _as_coordinate(self.x, "x"))
        object.__setattr__(self, "angle", _as_angle(self.angle, "angle"))
        object.__setattr__(self, "y", _as_coordinate(self.y, "y", optional=True))


@dataclass(frozen=True)
class BifurcationPoint:
    """Bifurcation: column, three branch angles (descending), optional row.

    The three angles belong to the three branches of a CN=3 pixel; they
    are reported sorted descending.  Equal rounded angles are tolerated
    (curved branches can coincide after rounding).
    """

    x: int
    angle1: float
    angle2: float
    angle3: float
    y: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", _as_coordinate(self.x, "x"))
        object.__setattr__(self, "angle1", _as_angle(self.angle1, "angle1"))
        object.__setattr__(self, "angle2", _as_angle(self.angle2, "angle2"))
        object.__setattr__(self, "angle3", _as_angle(self.angle3, "angle3"))
        object.__setattr__(self, "y", _as_coordinate(self.y, "y", optional=True))

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.angle1, self.angle2, self.angle3)


def _canonical(points):
    # Canonical order is (y, x) ascending; only meaningful when every
    # point knows its row.  Otherwise the given order is preserved
    # (candidate tables are compared positionally).
    if points and all(p.y is not None for p in points):
        return sorted(points, key=lambda p: (p.y, p.x))
    return list(points)


@dataclass
class MinutiaeSet:
    """End points and bifurcations of one fingerprint, in canonical order."""

    endings: list[EndPoint] = field(default_factory=list)
    bifurcations: list[BifurcationPoint] = field(default_factory=list)

    def __post_init__(self):
        self.endings = _canonical(self.endings)
        self.bifurcations = _canonical(self.bifurcations)


def crossing_number(img: SkeletonImage, x: int, y: int) -> int:
    """CN at interior pixel (x, y): half the ring's absolute differences.

    Equivalently the number of 0-to-1 transitions met when walking the
    8-neighbor ring once.  Always in 0..4.  The center value does not
    matter, so the CN of a background pixel is well defined too.
    """
    if not (1 <= x < img.width - 1 and 1 <= y < img.height - 1):
        raise ValueError(
            f"({x}, {y}) is not an interior pixel of a {img.width}x{img.height} image"
        )
    p = img.pixels
    ring = [int(p[y + dy, x + dx]) for dx, dy in RING]
    return sum(abs(ring[i] - ring[(i + 1) % 8]) for i in range(8)) // 2


def estimate_angle(
    img: SkeletonImage, start: tuple[int, int], first_step: tuple[int, int]
) -> float:
    """Direction of the branch leaving ``start`` through ``first_step``.

    Walks up to ``TRACE_LENGTH`` pixels along the skeleton (never
    revisiting a pixel, stopping early at a border, a junction, or
    another minutia) and returns ``atan2(-(row_end - row_start),
    col_end - col_start)`` rounded to 2 decimals — the row negation
    makes angles follow mathematical orientation.
    """
    sx, sy = start
    cx, cy = first_step
    if not (0 <= cx < img.width and 0 <= cy < img.height) or img.pixels[cy, cx] != 1:
        raise ValueError(f"first_step ({cx}, {cy}) is not a ridge pixel")
    if max(abs(cx - sx), abs(cy - sy)) != 1:
        raise ValueError(f"first_step ({cx}, {cy}) is not an 8-neighbor of ({sx}, {sy})")
    visited = {(sx, sy), (cx, cy)}
    p = img.pixels
    for _ in range(TRACE_LENGTH - 1):
        if not (1 <= cx < img.width - 1 and 1 <= cy < img.height - 1):
            break
        if crossing_number(img, cx, cy) != 2:
            break
        successor = None
        for dx, dy in RING:
            candidate = (cx + dx, cy + dy)
            if candidate not in visited and p[candidate[1], candidate[0]] == 1:
                successor = candidate
                break
        if successor is None:
            break
        visited.add(successor)
        cx, cy = successor
    return round(math.atan2(sy - cy, cx - sx), 2)


def extract_minutiae(
    img: SkeletonImage, border_margin: int = DEFAULT_BORDER_MARGIN
) -> MinutiaeSet:
    """Classify every sufficiently interior ridge pixel by crossing number.

    CN=1 pixels become end points, CN=3 pixels bifurcations; each branch
    (a 0-to-1 transition on the ring) contributes one traced angle.
    Bifurcation angles are sorted descending.  Pixels closer than
    ``border_margin`` to any border are skipped.
    """
    if border_margin < 0:
        raise ValueError(f"border_margin must be >= 0, got {border_margin}")
    if img.width < 2 * border_margin + 3 or img.height < 2 * border_margin + 3:
        raise ValueError(
            f"{img.width}x{img.height} image too small for border margin {border_margin}"
        )
    low = max(border_margin, 1)  # ring must stay inside the image
    x0, x1 = low, img.width - 1 - low
    y0, y1 = low, img.height - 1 - low
    p = img.pixels
    rows, cols = np.nonzero(p[y0 : y1 + 1, x0 : x1 + 1])
    endings: list[EndPoint] = []
    bifurcations: list[BifurcationPoint] = []
    for row, col in zip(rows.tolist(), cols.tolist()):
        y = row + y0
        x = col + x0
        ring = [int(p[y + dy, x + dx]) for dx, dy in RING]
        cn = sum(abs(ring[i] - ring[(i + 1) % 8]) for i in range(8)) // 2
        if cn not in (1, 3):
            continue
        branch_starts = [i for i in range(8) if ring[i] == 1 and ring[i - 1] == 0]
        angles = sorted(
            (
                estimate_angle(img, (x, y), (x + RING[i][0], y + RING[i][1]))
                for i in branch_starts
            ),
            reverse=True,
        )
        if cn == 1:
            endings.append(EndPoint(x=x, angle=angles[0], y=y))
        else:
            bifurcations.append(
                BifurcationPoint(
                    x=x, angle1=angles[0], angle2=angles[1], angle3=angles[2], y=y
                )
            )
    return MinutiaeSet(endings=endings, bifurcations=bifurcations)


# --------------------------------------------------------------------------
# Zhang-Suen thinning.


def thin(img: SkeletonImage) -> SkeletonImage:
    """Zhang-Suen two-subiteration thinning, iterated to a fixpoint.

    Neighbors outside the image count as background.  Never adds
    foreground; idempotent on its own output.
    """
    pixels = img.pixels.copy()
    changed = True
    while changed:
        changed = False
        for subiteration in (0, 1):
            deletable = _zhang_suen_deletable(pixels, subiteration)
            if deletable.any():
                pixels[deletable] = 0
                changed = True
    return SkeletonImage(pixels)


def _zhang_suen_deletable(pixels: np.ndarray, subiteration: int) -> np.ndarray:
    padded = np.pad(pixels, 1)
    p2 = padded[0:-2, 1:-1]  # north
    p3 = padded[0:-2, 2:]  # north-east
    p4 = padded[1:-1, 2:]  # east
    p5 = padded[2:, 2:]  # south-east
    p6 = padded[2:, 1:-1]  # south
    p7 = padded[2:, 0:-2]  # south-west
    p8 = padded[1:-1, 0:-2]  # west
    p9 = padded[0:-2, 0:-2]  # north-west
    ring = (p2, p3, p4, p5, p6, p7, p8, p9)
    neighbor_count = sum(n.astype(np.int32) for n in ring)
    transitions = sum(
        ((ring[i] == 0) & (ring[(i + 1) % 8] == 1)).astype(np.int32)
        for i in range(8)
    )
    deletable = (
        (pixels == 1)
        & (neighbor_count >= 2)
        & (neighbor_count <= 6)
        & (transitions == 1)
    )
    if subiteration == 0:
        deletable &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        deletable &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    return deletable


# --------------------------------------------------------------------------
# Minutiae CSV files.
#
# End-point files:    header "x,angle"          (candidate tables)
#                     header "x,angle,y"        (query tables / extraction)
# Bifurcation files:  header "x,angle1,angle2,angle3"  (optionally + ",y")
#
# The y column is written whenever every point carries a row, and for
# empty sets (extraction output always knows rows).

_END_HEADERS = (["x", "angle"], ["x", "angle", "y"])
_BIF_HEADERS = (
    ["x", "angle1", "angle2", "angle3"],
    ["x", "angle1", "angle2", "angle3", "y"],
)


def save_minutiae_csv(mset: MinutiaeSet, path, kind: str | None = None) -> None:
    """Write one kind of minutiae to a CSV file.

    ``kind`` ("end" or "bif") may be omitted when the set holds only one
    kind.  Angles are written with 2 decimals, coordinates as integers.
    """
    if kind is None:
        if mset.endings and mset.bifurcations:
            raise ValueError("set holds both kinds; pass kind='end' or kind='bif'")
        if not mset.endings and not mset.bifurcations:
            raise ValueError("empty set; pass kind='end' or kind='bif'")
        kind = "end" if mset.endings else "bif"
    if kind not in ("end", "bif"):
        raise ValueError(f"kind must be 'end' or 'bif', got {kind!r}")
    points = mset.endings if kind == "end" else mset.bifurcations
    with_y = all(p.y is not None for p in points)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if kind == "end":
            writer.writerow(_END_HEADERS[1] if with_y else _END_HEADERS[0])
            for p in points:
                row = [p.x, f"{p.angle:.2f}"]
                if with_y:
                    row.append(p.y)
                writer.writerow(row)
        else:
            writer.writerow(_BIF_HEADERS[1] if with_y else _BIF_HEADERS[0])
            for p in points:
                row = [p.x, f"{p.angle1:.2f}", f"{p.angle2:.2f}", f"{p.angle3:.2f}"]
                if with_y:
                    row.append(p.y)
                writer.writerow(row)


def load_minutiae_csv(path) -> MinutiaeSet:
    """Read a minutiae CSV written by :func:`save_minutiae_csv`.

    The header row decides the kind and whether y is present.  Raises
    ``ValueError`` with the offending row number on malformed content.
    """
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = [cell.strip().lower() for cell in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if header in _END_HEADERS:
            kind = "end"
        elif header in _BIF_HEADERS:
            kind = "bif"
        else:
            raise ValueError(f"{path}: unrecognized header {','.join(header)!r}")
        with_y = header[-1] == "y"
        endings: list[EndPoint] = []
        bifurcations: list[BifurcationPoint] = []
        for row in reader:
            row_number = reader.line_num
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {row_number}: expected {len(header)} cells, "
                    f"got {len(row)}"
                )
            values = [
                _parse_cell(cell, name, path, row_number)
                for cell, name in zip(row, header)
            ]
            try:
                if kind == "end":
                    endings.append(
                        EndPoint(
                            x=values[0],
                            angle=values[1],
                            y=values[2] if with_y else None,
                        )
                    )
                else:
                    bifurcations.append(
                        BifurcationPoint(
                            x=values[0],
                            angle1=values[1],
                            angle2=values[2],
                            angle3=values[3],
                            y=values[4] if with_y else None,
                        )
                    )
            except ValueError as exc:
                raise ValueError(f"{path}: row {row_number}: {exc}") from None
    return MinutiaeSet(endings=endings, bifurcations=bifurcations)


def _parse_cell(cell: str, name: str, path, row_number: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ValueError(
            f"{path}: row {row_number}: non-numeric {name} value {cell.strip()!r}"
        ) from None


# --------------------------------------------------------------------------
# PBM / PGM input.


def load_image(path) -> SkeletonImage:
    """Load a PBM (P1/P4) or PGM (P2/P5) file as a binary ridge image.

    PBM black pixels are ridge.  PGM is binarized at a fixed threshold:
    samples darker than 128 are ridge (dark-is-ridge convention).
    """
    data = Path(path).read_bytes()
    magic = data[:2].decode("ascii", errors="replace")
    if magic not in ("P1", "P2", "P4", "P5"):
        raise ValueError(f"{path}: unsupported netpbm format {magic!r}")
    scanner = _HeaderScanner(data, 2, path)
    width = scanner.next_int("width")
    height = scanner.next_int("height")
    if width < 1 or height < 1:
        raise ValueError(f"{path}: bad dimensions {width}x{height}")
    if magic in ("P2", "P5"):
        maxval = scanner.next_int("maxval")
        if not 1 <= maxval <= 65535:
            raise ValueError(f"{path}: bad maxval {maxval}")
    if magic == "P1":
        pixels = _read_p1(scanner, width, height)
    elif magic == "P2":
        pixels = _read_p2(scanner, width, height, maxval)
    elif magic == "P4":
        pixels = _read_p4(data, scanner.skip_raster_separator(), width, height, path)
    else:
        pixels = _read_p5(data, scanner.skip_raster_separator(), width, height, maxval, path)
    return SkeletonImage(pixels)


class _HeaderScanner:
    """Token reader for the ASCII parts of netpbm files ('#' comments allowed)."""

    def __init__(self, data: bytes, pos: int, path):
        self.data = data
        self.pos = pos
        self.path = path

    def _skip_separators(self) -> None:
        data, n = self.data, len(self.data)
        while self.pos < n:
            byte = data[self.pos]
            if byte in b" \t\r\n\x0b\x0c":
                self.pos += 1
            elif byte == ord("#"):
                while self.pos < n and data[self.pos] not in b"\r\n":
                    self.pos += 1
            else:
                return

    def next_int(self, what: str) -> int:
        self._skip_separators()
        start = self.pos
        data, n = self.data, len(self.data)
        while self.pos < n and data[self.pos] in b"0123456789":
            self.pos += 1
        if self.pos == start:
            raise ValueError(f"{self.path}: missing or malformed {what} in header")
        return int(data[start : self.pos])

    def next_pixel_char(self) -> str | None:
        self._skip_separators()
        if self.pos >= len(self.data):
            return None
        char = chr(self.data[self.pos])
        self.pos += 1
        return char

    def skip_raster_separator(self) -> int:
        # Binary formats: exactly one whitespace byte between the header
        # and the raster.
        if self.pos >= len(self.data) or self.data[self.pos] not in b" \t\r\n\x0b\x0c":
            raise ValueError(f"{self.path}: missing separator before pixel data")
        return self.pos + 1


def _read_p1(scanner: _HeaderScanner, width: int, height: int) -> np.ndarray:
    pixels = np.zeros((height, width), dtype=np.uint8)
    for row in range(height):
        for col in range(width):
            char = scanner.next_pixel_char()
            if char is None:
                raise ValueError(f"{scanner.path}: truncated pixel data")
            if char not in "01":
                raise ValueError(f"{scanner.path}: bad P1 pixel character {char!r}")
            pixels[row, col] = char == "1"
    return pixels


def _read_p2(scanner: _HeaderScanner, width: int, height: int, maxval: int) -> np.ndarray:
    pixels = np.zeros((height, width), dtype=np.uint8)
    for row in range(height):
        for col in range(width):
            try:
                sample = scanner.next_int("pixel")
            except ValueError:
                raise ValueError(f"{scanner.path}: truncated pixel data") from None
            if sample > maxval:
                raise ValueError(
                    f"{scanner.path}: sample {sample} exceeds maxval {maxval}"
                )
            pixels[row, col] = sample < 128
    return pixels


def _read_p4(data: bytes, start: int, width: int, height: int, path) -> np.ndarray:
    row_bytes = (width + 7) // 8
    needed = height * row_bytes
    if len(data) - start < needed:
        raise ValueError(f"{path}: truncated pixel data")
    raw = np.frombuffer(data, dtype=np.uint8, count=needed, offset=start)
    bits = np.unpackbits(raw.reshape(height, row_bytes), axis=1)
    return bits[:, :width]


def _read_p5(
    data: bytes, start: int, width: int, height: int, maxval: int, path
) -> np.ndarray:
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    needed = width * height
    if len(data) - start < needed * dtype.itemsize:
        raise ValueError(f"{path}: truncated pixel data")
    raw = np.frombuffer(data, dtype=dtype, count=needed, offset=start)
    return (raw.reshape(height, width) < 128).astype(np.uint8)
