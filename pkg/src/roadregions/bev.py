"""Ground-plane semantic grid built from resolved 3D points.

The grid applies a second winner-take-all layer: each resolved point casts
one vote into its cell, and the cell class is the majority over those votes
(ties to the lowest class id, empty cells Unknown).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import (
    N_SEMANTIC_CLASSES,
    Polygon,
    SemanticClass,
    SemanticPoint,
    SemanticPointCloud,
    Vec2,
    rect_polygon,
)

PGM_CLASS_SCALE = 42  # class id -> gray level, id * 42 keeps 0..5 within 0..255


@dataclass(frozen=True)
class BevGrid:
    """Rasterized semantic map. Cell (row, col) covers
    [origin.x + col*res, origin.x + (col+1)*res) x [origin.y + row*res, ...).
    """

    origin: Vec2
    resolution: float
    width: int
    height: int
    votes: np.ndarray  # (height, width, n_classes) int32
    classes: np.ndarray = field(repr=False, default=None)  # (height, width) int8

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        if self.classes is None:
            object.__setattr__(self, "classes", _majority_classes(self.votes))

    def world_to_cell(self, x: float, y: float) -> Tuple[int, int]:
        col = int(math.floor((x - self.origin.x) / self.resolution))
        row = int(math.floor((y - self.origin.y) / self.resolution))
        return row, col

    def cell_center(self, row: int, col: int) -> Vec2:
        return Vec2(
            self.origin.x + (col + 0.5) * self.resolution,
            self.origin.y + (row + 0.5) * self.resolution,
        )

    def class_at(self, x: float, y: float) -> SemanticClass:
        """Cell class at a world point; Unknown outside the grid."""
        row, col = self.world_to_cell(x, y)
        if 0 <= row < self.height and 0 <= col < self.width:
            return SemanticClass(int(self.classes[row, col]))
        return SemanticClass.UNKNOWN

    def classes_at(self, xy: np.ndarray) -> np.ndarray:
        """Vectorized class lookup for an (N, 2) array of world points."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        cols = np.floor((xy[:, 0] - self.origin.x) / self.resolution).astype(np.int64)
        rows = np.floor((xy[:, 1] - self.origin.y) / self.resolution).astype(np.int64)
        out = np.full(len(xy), int(SemanticClass.UNKNOWN), dtype=np.int8)
        ok = (rows >= 0) & (rows < self.height) & (cols >= 0) & (cols < self.width)
        out[ok] = self.classes[rows[ok], cols[ok]]
        return out

    def total_votes(self) -> int:
        return int(self.votes.sum())


def _majority_classes(votes: np.ndarray) -> np.ndarray:
    classes = np.argmax(votes, axis=2).astype(np.int8)  # argmax ties -> lowest id
    classes[votes.sum(axis=2) == 0] = int(SemanticClass.UNKNOWN)
    return classes


PointsLike = Union[SemanticPointCloud, Sequence[SemanticPoint]]


def rasterize(points: PointsLike, resolution: float, margin_cells: int = 1) -> BevGrid:
    """Accumulate resolved point classes into a grid; cell class by majority.

    The grid covers the point bounding box plus a margin, with the origin
    snapped to multiples of the resolution so that cell edges line up with
    the (resolution-aligned) scene geometry.
    """
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    if not isinstance(points, SemanticPointCloud):
        points = SemanticPointCloud.from_points(list(points))
    if len(points) == 0:
        origin = Vec2(0.0, 0.0)
        votes = np.zeros((1, 1, N_SEMANTIC_CLASSES), dtype=np.int32)
        return BevGrid(origin, resolution, 1, 1, votes)
    if not points.is_resolved():
        raise ValueError("points must be resolved (winner_take_all applied) before rasterizing")

    xy = points.positions[:, :2]
    xmin = math.floor(xy[:, 0].min() / resolution) - margin_cells
    ymin = math.floor(xy[:, 1].min() / resolution) - margin_cells
    xmax = math.floor(xy[:, 0].max() / resolution) + margin_cells
    ymax = math.floor(xy[:, 1].max() / resolution) + margin_cells
    width = int(xmax - xmin) + 1
    height = int(ymax - ymin) + 1
    origin = Vec2(xmin * resolution, ymin * resolution)

    cols = np.floor(xy[:, 0] / resolution).astype(np.int64) - int(xmin)
    rows = np.floor(xy[:, 1] / resolution).astype(np.int64) - int(ymin)
    flat = (rows * width + cols) * N_SEMANTIC_CLASSES + points.resolved.astype(np.int64)
    votes = np.zeros(height * width * N_SEMANTIC_CLASSES, dtype=np.int32)
    np.add.at(votes, flat, 1)
    votes = votes.reshape(height, width, N_SEMANTIC_CLASSES)
    return BevGrid(origin, resolution, width, height, votes)


@dataclass
class CrosswalkComponent:
    """4-connected blob of Crosswalk cells; footprint is its axis-aligned hull."""

    cell_set: frozenset
    footprint: Polygon
    order_index: int = -1

    def size(self) -> int:
        return len(self.cell_set)


def extract_crosswalks(grid: BevGrid, min_component_cells: int) -> List[CrosswalkComponent]:
    """4-connected Crosswalk components with at least min_component_cells cells.

    Components are returned in deterministic scan order (top-left first);
    order_index stays -1 until a labeler assigns trajectory visit order.
    """
    mask = grid.classes == int(SemanticClass.CROSSWALK)
    labels, n = _label_4connected(mask)
    comps: List[CrosswalkComponent] = []
    for lab in range(1, n + 1):
        rows, cols = np.nonzero(labels == lab)
        if len(rows) < min_component_cells:
            continue
        cells = frozenset(zip(rows.tolist(), cols.tolist()))
        xmin = grid.origin.x + cols.min() * grid.resolution
        xmax = grid.origin.x + (cols.max() + 1) * grid.resolution
        ymin = grid.origin.y + rows.min() * grid.resolution
        ymax = grid.origin.y + (rows.max() + 1) * grid.resolution
        comps.append(CrosswalkComponent(cells, rect_polygon(xmin, ymin, xmax, ymax)))
    return comps


def _label_4connected(mask: np.ndarray) -> Tuple[np.ndarray, int]:
    """Connected-component labeling with a cross-shaped neighborhood."""
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    current = 0
    for r0, c0 in zip(*np.nonzero(mask)):
        if labels[r0, c0]:
            continue
        current += 1
        stack = [(int(r0), int(c0))]
        labels[r0, c0] = current
        while stack:
            r, c = stack.pop()
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not labels[rr, cc]:
                    labels[rr, cc] = current
                    stack.append((rr, cc))
    return labels, current


def default_min_component_cells(crosswalk_area_m2: float, resolution: float) -> int:
    """Half the expected crosswalk footprint, in cells."""
    return int(math.ceil(0.5 * crosswalk_area_m2 / (resolution * resolution)))


def _binary_close(mask: np.ndarray) -> np.ndarray:
    """Morphological closing with a 3x3 box (fills single-cell sampling holes)."""

    def dilate(m: np.ndarray) -> np.ndarray:
        out = m.copy()
        out[1:, :] |= m[:-1, :]
        out[:-1, :] |= m[1:, :]
        out[:, 1:] |= m[:, :-1]
        out[:, :-1] |= m[:, 1:]
        out[1:, 1:] |= m[:-1, :-1]
        out[:-1, :-1] |= m[1:, 1:]
        out[1:, :-1] |= m[:-1, 1:]
        out[:-1, 1:] |= m[1:, :-1]
        return out

    def erode(m: np.ndarray) -> np.ndarray:
        return ~dilate(~m)

    return erode(dilate(mask))


def _run_lengths_along_axis(mask: np.ndarray, axis: int) -> np.ndarray:
    """For each True cell, the length of the contiguous True run through it."""
    if axis == 0:
        return _run_lengths_along_axis(mask.T, 1).T
    h, w = mask.shape
    runs = np.zeros((h, w), dtype=np.int32)
    for r in range(h):
        row = mask[r]
        c = 0
        while c < w:
            if not row[c]:
                c += 1
                continue
            c2 = c
            while c2 < w and row[c2]:
                c2 += 1
            runs[r, c:c2] = c2 - c
            c = c2
    return runs


def detect_intersection_core(grid: BevGrid, min_component_cells: int = 24) -> Optional[Polygon]:
    """Estimate the junction interior from the grid alone.

    With crosswalk components in both orientations, the core is the
    axis-aligned quadrilateral bounded by the inner edges of the components
    nearest the junction (missing sides fall back to the perpendicular
    components' lateral extent). Otherwise a cross-kernel test finds cells
    whose Road runs exceed 1.5x the estimated road width along both grid
    axes; their hull is the core. Returns None when neither applies.
    """
    comps = extract_crosswalks(grid, min_component_cells)
    if len(comps) >= 2:
        core = _core_from_crosswalks(comps)
        if core is not None:
            return core
    return _core_from_road_runs(grid)


def _core_from_crosswalks(comps: List[CrosswalkComponent]) -> Optional[Polygon]:
    horizontal = []  # bands crossing the north-south road (wide in x)
    vertical = []
    for comp in comps:
        xmin, ymin, xmax, ymax = comp.footprint.rect_bounds
        if (xmax - xmin) >= (ymax - ymin):
            horizontal.append((xmin, ymin, xmax, ymax))
        else:
            vertical.append((xmin, ymin, xmax, ymax))
    if not horizontal or not vertical:
        return None  # parallel bands only (e.g. mid-block crossings): no junction
    cx = float(np.mean([0.5 * (b[0] + b[2]) for b in horizontal + vertical]))
    cy = float(np.mean([0.5 * (b[1] + b[3]) for b in horizontal + vertical]))

    below = [b for b in horizontal if 0.5 * (b[1] + b[3]) < cy]
    above = [b for b in horizontal if 0.5 * (b[1] + b[3]) >= cy]
    left = [b for b in vertical if 0.5 * (b[0] + b[2]) < cx]
    right = [b for b in vertical if 0.5 * (b[0] + b[2]) >= cx]

    ymin = max(b[3] for b in below) if below else min(b[1] for b in vertical)
    ymax = min(b[1] for b in above) if above else max(b[3] for b in vertical)
    xmin = max(b[2] for b in left) if left else min(b[0] for b in horizontal)
    xmax = min(b[0] for b in right) if right else max(b[2] for b in horizontal)
    if xmax <= xmin or ymax <= ymin:
        return None
    return rect_polygon(xmin, ymin, xmax, ymax)


def _core_from_road_runs(grid: BevGrid) -> Optional[Polygon]:
    road = _binary_close(grid.classes == int(SemanticClass.ROAD))
    if not road.any():
        return None
    row_runs = _run_lengths_along_axis(road, 1)
    col_runs = _run_lengths_along_axis(road, 0)
    row_max = row_runs.max(axis=1)
    col_max = col_runs.max(axis=0)
    med_row = float(np.median(row_max[row_max > 0]))
    med_col = float(np.median(col_max[col_max > 0]))
    width_cells = min(med_row, med_col)  # arm cross-sections dominate both medians
    threshold = 1.5 * width_cells
    passing = road & (row_runs > threshold) & (col_runs > threshold)
    if not passing.any():
        return None
    rows, cols = np.nonzero(passing)
    xmin = grid.origin.x + cols.min() * grid.resolution
    xmax = grid.origin.x + (cols.max() + 1) * grid.resolution
    ymin = grid.origin.y + rows.min() * grid.resolution
    ymax = grid.origin.y + (rows.max() + 1) * grid.resolution
    return rect_polygon(xmin, ymin, xmax, ymax)


def rect_iou(a: Polygon, b: Polygon) -> float:
    """IoU of two axis-aligned rectangles."""
    ax0, ay0, ax1, ay1 = a.rect_bounds if a.rect_bounds else a.bounds()
    bx0, by0, bx1, by1 = b.rect_bounds if b.rect_bounds else b.bounds()
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def to_pgm_bytes(grid: BevGrid) -> bytes:
    """Binary PGM (P5) with gray = class id * 42; row 0 is the bottom row."""
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    body = (grid.classes.astype(np.uint8) * PGM_CLASS_SCALE).tobytes()
    return header + body


def to_csv_lines(grid: BevGrid) -> List[str]:
    """CSV rows ``row,col,class_id,total_votes`` for every non-empty cell."""
    lines = ["row,col,class_id,total_votes"]
    totals = grid.votes.sum(axis=2)
    for row, col in zip(*np.nonzero(totals)):
        lines.append(f"{row},{col},{int(grid.classes[row, col])},{int(totals[row, col])}")
    return lines
