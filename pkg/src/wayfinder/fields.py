"""Static path/obstacle floor fields and the dynamic proxemic field.

Distances are exact shortest paths over the 8-neighbourhood with costs of
one cell side (orthogonal) and side*sqrt(2) (diagonal).  A diagonal step is
forbidden when both orthogonal cells flanking it are obstacles.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .scenario import CELL_SIZE, Cell, Scenario

ORTHO = CELL_SIZE
DIAG = CELL_SIZE * math.sqrt(2.0)

# proxemic kernel f(d) = max(0, 1 - d / PROXEMIC_RADIUS)
PROXEMIC_RADIUS = 1.2


@dataclass(frozen=True, eq=False)
class FloorField:
    target_id: str
    values: np.ndarray  # meters, inf where unreachable

    def __getitem__(self, cell: Cell) -> float:
        x, y = cell
        return float(self.values[y, x])


def _edges(walkable: np.ndarray, sources: np.ndarray | None = None):
    """Undirected edge list over a grid.

    ``sources`` (obstacle cells, for the obstacle field) may connect to any
    walkable 8-neighbour without the corner rule.
    """
    h, w = walkable.shape
    idx = np.arange(h * w).reshape(h, w)
    rows, cols, costs = [], [], []
    node = walkable if sources is None else walkable | sources
    for dy, dx, cost in ((0, 1, ORTHO), (1, 0, ORTHO), (1, 1, DIAG), (1, -1, DIAG)):
        # cell a = (y, x) pairs with b = (y + dy, x + dx)
        ya, yb = slice(0, h - dy), slice(dy, h)
        xa = slice(max(0, -dx), w - max(0, dx))
        xb = slice(max(0, dx), w + min(0, dx))
        ok = node[ya, xa] & node[yb, xb]
        if sources is not None:
            ok &= ~(sources[ya, xa] & sources[yb, xb])
        if dx and dy:
            corner_ok = walkable[ya, xb] | walkable[yb, xa]
            if sources is not None:
                corner_ok |= sources[ya, xa] | sources[yb, xb]
            ok &= corner_ok
        a = idx[ya, xa][ok]
        b = idx[yb, xb][ok]
        rows.append(a)
        cols.append(b)
        costs.append(np.full(a.shape, cost))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    d = np.concatenate(costs)
    return sparse.csr_matrix((d, (r, c)), shape=(h * w, h * w))


class FieldBuilder:
    """Caches the walkable-cell graph of one scenario."""

    def __init__(self, s: Scenario):
        self.shape = s.shape
        self.walkable = s.walkable
        self._graph = _edges(s.walkable)

    def path_field(self, target, target_id: str = "target") -> FloorField:
        cells = list(target)
        if not cells:
            raise ValueError("empty target")
        h, w = self.shape
        for x, y in cells:
            if not (0 <= x < w and 0 <= y < h) or not self.walkable[y, x]:
                raise ValueError(f"target cell {(x, y)} is not walkable")
        src = [y * w + x for x, y in cells]
        dist = dijkstra(self._graph, directed=False, indices=src, min_only=True)
        values = dist.reshape(h, w)
        values[~self.walkable] = np.inf
        return FloorField(target_id, values)


def compute_path_field(s: Scenario, target, target_id: str = "target") -> FloorField:
    """Walking distance (m) from every cell to the nearest target cell."""
    return FieldBuilder(s).path_field(target, target_id)


def compute_obstacle_field(s: Scenario) -> FloorField:
    """Distance (m) to the nearest obstacle; the grid boundary counts as obstacle."""
    h, w = s.shape
    walkable = np.zeros((h + 2, w + 2), dtype=bool)
    walkable[1:-1, 1:-1] = s.walkable
    obstacles = ~walkable
    graph = _edges(walkable, sources=obstacles)
    src = np.flatnonzero(obstacles.ravel())
    dist = dijkstra(graph, directed=False, indices=src, min_only=True)
    values = dist.reshape(h + 2, w + 2)[1:-1, 1:-1].copy()
    values[~s.walkable] = 0.0
    return FloorField("obstacle", values)


def _kernel() -> tuple[np.ndarray, int]:
    r = int(PROXEMIC_RADIUS / CELL_SIZE + 1e-9)
    off = np.arange(-r, r + 1)
    d = np.hypot(off[None, :], off[:, None]) * CELL_SIZE
    return np.maximum(0.0, 1.0 - d / PROXEMIC_RADIUS), r


PROXEMIC_KERNEL, _KR = _kernel()


def proxemic_contribution(distance: float) -> float:
    return max(0.0, 1.0 - distance / PROXEMIC_RADIUS)


def rebuild_proxemic_field(positions, shape) -> np.ndarray:
    """Sum of linear kernels (support 1.2 m) centred on each position."""
    h, w = shape
    r = _KR
    padded = np.zeros((h + 2 * r, w + 2 * r))
    k = 2 * r + 1
    for x, y in positions:
        padded[y : y + k, x : x + k] += PROXEMIC_KERNEL
    return padded[r : r + h, r : r + w].copy()


def field_to_csv(values: np.ndarray) -> str:
    """Row-major CSV, infinite values written as empty cells."""
    buf = io.StringIO()
    for row in values:
        buf.write(",".join("" if not math.isfinite(v) else f"{v:.6f}" for v in row))
        buf.write("\n")
    return buf.getvalue()
