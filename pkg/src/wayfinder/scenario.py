"""Scenario documents: parsing, validation and region derivation.

A scenario document is a block of ``key = value`` header lines, a blank
line, then a character raster::

    #   obstacle
    .   walkable
    S   start area
    =   entrance marker (walkable, does not split regions)
    1-9 opening groups
    any other letter: final destination group, id = the letter

Lines starting with ``;`` in the header are comments.  Cells are addressed
as ``(x, y)`` with ``x`` the column and ``y`` the raster row; grid arrays are
indexed ``[y, x]``.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np
from scipy import ndimage

CELL_SIZE = 0.4  # meters

Cell = tuple[int, int]

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_EIGHT = np.ones((3, 3), dtype=bool)


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario documents."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class SimulationConfig:
    """Utility weights, perception/imitation parameters and run settings.

    ``k_s``, ``k_p``, ``k_o`` and ``d_0`` drive the operational movement
    stand-in; they are not part of the route choice model.
    """

    kappa_tt: float = 100.0
    kappa_q: float = 25.0
    kappa_f: float = 5.0
    gamma: float = 10.0
    rho_c: float = 1.2
    tau_c: int = 6
    tau_a: int = 3
    desired_speed: float = 1.33
    step_duration: float = 0.3
    agents: int = 46
    seed: int = 0
    k_s: float = 10.0
    k_p: float = 8.0
    k_o: float = 5.0
    d_0: float = 0.4
    max_steps: int = 10_000
    eval_interval: int = 3

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "seed":
                continue
            if not math.isfinite(v) or v < 0:
                raise ScenarioError(f"config value {f.name} must be finite and >= 0, got {v!r}")
        if self.step_duration <= 0:
            raise ScenarioError("step_duration must be > 0")
        if self.desired_speed <= 0:
            raise ScenarioError("desired_speed must be > 0")
        if self.eval_interval < 1:
            raise ScenarioError("eval_interval must be >= 1")

    def replace(self, **changes) -> SimulationConfig:
        return dataclasses.replace(self, **changes)


_HEADER_LINE = re.compile(r"^\s*(;|[a-z_][a-z0-9_]*\s*=)")

_HEADER_KEYS = {
    "kappa_tt": ("kappa_tt", float),
    "kappa_q": ("kappa_q", float),
    "kappa_f": ("kappa_f", float),
    "gamma": ("gamma", float),
    "rho_c": ("rho_c", float),
    "tau_c": ("tau_c", int),
    "tau_a": ("tau_a", int),
    "desired_speed": ("desired_speed", float),
    "step_duration": ("step_duration", float),
    "agents": ("agents", int),
    # operational stand-in and run settings
    "k_s": ("k_s", float),
    "k_p": ("k_p", float),
    "k_o": ("k_o", float),
    "d_0": ("d_0", float),
    "seed": ("seed", int),
    "max_steps": ("max_steps", int),
    "eval_interval": ("eval_interval", int),
}


@dataclass(frozen=True)
class Opening:
    id: str
    cells: frozenset[Cell]
    width: float  # meters
    regions: tuple[int, int] = (-1, -1)

    def centroid_cell(self) -> Cell:
        """Opening cell closest to the arithmetic centroid (ties: lowest (y, x))."""
        return centroid_cell(self.cells)

    def centroid(self) -> tuple[float, float]:
        """Centroid in meters, measured at cell centers."""
        xs = [(x + 0.5) * CELL_SIZE for x, _ in self.cells]
        ys = [(y + 0.5) * CELL_SIZE for _, y in self.cells]
        return sum(xs) / len(xs), sum(ys) / len(ys)

    def other_region(self, region: int) -> int:
        a, b = self.regions
        return b if region == a else a


@dataclass(frozen=True)
class Region:
    id: int
    cells: frozenset[Cell]
    openings: frozenset[str]


def centroid_cell(cells) -> Cell:
    cells = sorted(cells, key=lambda c: (c[1], c[0]))
    cx = sum(c[0] for c in cells) / len(cells)
    cy = sum(c[1] for c in cells) / len(cells)
    return min(cells, key=lambda c: (c[0] - cx) ** 2 + (c[1] - cy) ** 2)


@dataclass(frozen=True, eq=False)
class Scenario:
    walkable: np.ndarray  # bool [H, W]
    openings: dict[str, Opening]
    start_areas: list[frozenset[Cell]]
    destinations: dict[str, frozenset[Cell]]
    regions: list[Region]
    region_map: np.ndarray  # int [H, W], -1 outside regions (obstacles, openings)
    config: SimulationConfig = field(default_factory=SimulationConfig)
    entrance: Opening | None = None
    name: str = "scenario"

    @property
    def width(self) -> int:
        return self.walkable.shape[1]

    @property
    def height(self) -> int:
        return self.walkable.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.walkable.shape

    def is_walkable(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height and bool(self.walkable[y, x])

    def region_of(self, cell: Cell) -> int:
        x, y = cell
        return int(self.region_map[y, x])

    def opening_at(self, cell: Cell) -> str | None:
        for o in self.openings.values():
            if cell in o.cells:
                return o.id
        return None

    def destination_regions(self, dest_id: str) -> set[int]:
        return {self.region_of(c) for c in self.destinations[dest_id]} - {-1}

    def with_config(self, config: SimulationConfig) -> Scenario:
        return dataclasses.replace(self, config=config)

    def render(self) -> str:
        """Raster of the scenario (header not included)."""
        out = [["#" if not w else "." for w in row] for row in self.walkable]
        for cells in self.start_areas:
            for x, y in cells:
                out[y][x] = "S"
        if self.entrance is not None:
            for x, y in self.entrance.cells:
                out[y][x] = "="
        for did, cells in self.destinations.items():
            for x, y in cells:
                out[y][x] = did
        for oid, o in self.openings.items():
            for x, y in o.cells:
                out[y][x] = oid
        return "\n".join("".join(r) for r in out)


def _components(mask: np.ndarray, structure=_FOUR) -> list[frozenset[Cell]]:
    labels, n = ndimage.label(mask, structure=structure)
    comps = []
    for k in range(1, n + 1):
        ys, xs = np.nonzero(labels == k)
        comps.append(frozenset(zip(xs.tolist(), ys.tolist())))
    return comps


def _opening_width(cells: frozenset[Cell], region_map: np.ndarray) -> float:
    # cells across the passage = opening cells facing a single region
    h, w = region_map.shape
    facing: dict[int, int] = {}
    for x, y in cells:
        seen = set()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and region_map[ny, nx] >= 0:
                seen.add(int(region_map[ny, nx]))
        for r in seen:
            facing[r] = facing.get(r, 0) + 1
    across = max(facing.values()) if facing else len(cells)
    return across * CELL_SIZE


def build_scenario(
    walkable: np.ndarray,
    opening_cells: dict[str, set[Cell]],
    start_cells: set[Cell],
    destination_cells: dict[str, set[Cell]],
    config: SimulationConfig | None = None,
    entrance_cells: set[Cell] | None = None,
    name: str = "scenario",
) -> Scenario:
    """Validate annotations and derive regions by 4-connected flood fill."""
    walkable = np.array(walkable, dtype=bool)
    h, w = walkable.shape
    annotated = [("start", start_cells), ("entrance", entrance_cells or set())]
    annotated += [(f"opening {k}", v) for k, v in opening_cells.items()]
    annotated += [(f"destination {k}", v) for k, v in destination_cells.items()]
    for label, cells in annotated:
        for x, y in cells:
            if not (0 <= x < w and 0 <= y < h) or not walkable[y, x]:
                raise ScenarioError(f"{label} cell {(x, y)} is not walkable")

    opening_mask = np.zeros_like(walkable)
    for oid, cells in opening_cells.items():
        if not cells:
            raise ScenarioError(f"opening {oid} has no cells")
        m = np.zeros_like(walkable)
        for x, y in cells:
            m[y, x] = True
        if len(_components(m, _EIGHT)) != 1:
            raise ScenarioError(f"opening {oid} is not contiguous")
        opening_mask |= m

    region_cells = _components(walkable & ~opening_mask)
    region_map = np.full((h, w), -1, dtype=int)
    for rid, cells in enumerate(region_cells):
        for x, y in cells:
            region_map[y, x] = rid

    openings: dict[str, Opening] = {}
    region_openings: dict[int, set[str]] = {r: set() for r in range(len(region_cells))}
    for oid in sorted(opening_cells):
        cells = frozenset(opening_cells[oid])
        touching = set()
        for x, y in cells:
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < w and 0 <= ny < h and region_map[ny, nx] >= 0:
                        touching.add(int(region_map[ny, nx]))
        if len(touching) != 2:
            raise ScenarioError(
                f"opening {oid} adjacent to {len(touching)} regions (opening adjacent to ≠2 regions)"
            )
        r1, r2 = sorted(touching)
        openings[oid] = Opening(oid, cells, _opening_width(cells, region_map), (r1, r2))
        region_openings[r1].add(oid)
        region_openings[r2].add(oid)

    regions = [
        Region(rid, cells, frozenset(region_openings[rid])) for rid, cells in enumerate(region_cells)
    ]
    dests = {k: frozenset(v) for k, v in destination_cells.items() if v}
    if openings or dests:
        dest_regions = {int(region_map[y, x]) for cells in dests.values() for x, y in cells}
        for r in regions:
            if not r.openings and r.id not in dest_regions:
                raise ScenarioError(f"region {r.id} has neither an opening nor a final destination")

    entrance = None
    if entrance_cells:
        ec = frozenset(entrance_cells)
        xs = {x for x, _ in ec}
        ys = {y for _, y in ec}
        entrance = Opening("entrance", ec, max(len(xs), len(ys)) * CELL_SIZE)

    return Scenario(
        walkable=walkable,
        openings=openings,
        start_areas=_components_of(start_cells, walkable.shape),
        destinations=dests,
        regions=regions,
        region_map=region_map,
        config=config or SimulationConfig(),
        entrance=entrance,
        name=name,
    )


def _components_of(cells: set[Cell], shape) -> list[frozenset[Cell]]:
    if not cells:
        return []
    m = np.zeros(shape, dtype=bool)
    for x, y in cells:
        m[y, x] = True
    return _components(m, _EIGHT)


def _parse_header(lines: list[tuple[int, str]]) -> SimulationConfig:
    values = {}
    for lineno, raw in lines:
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {raw!r}", lineno, 1)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _HEADER_KEYS:
            raise ScenarioError(f"unknown header key {key!r}", lineno, 1)
        attr, typ = _HEADER_KEYS[key]
        try:
            values[attr] = typ(val)
        except ValueError:
            col = raw.index(val, raw.index("=")) + 1
            raise ScenarioError(f"bad value {val!r} for {key}", lineno, col) from None
    return SimulationConfig(**values)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    """Parse and validate a scenario document."""
    numbered = list(enumerate(text.replace("\r\n", "\n").split("\n"), start=1))
    header: list[tuple[int, str]] = []
    if numbered and _HEADER_LINE.match(numbered[0][1]):
        blank = next((i for i, (_, l) in enumerate(numbered) if not l.strip()), len(numbered))
        header, numbered = numbered[:blank], numbered[blank:]
    raster = numbered
    while raster and not raster[-1][1].strip():
        raster.pop()
    while raster and not raster[0][1].strip():
        raster.pop(0)
    if not raster:
        raise ScenarioError("empty raster")
    config = _parse_header(header)

    width = len(raster[0][1])
    h = len(raster)
    walkable = np.zeros((h, width), dtype=bool)
    openings: dict[str, set[Cell]] = {}
    starts: set[Cell] = set()
    dests: dict[str, set[Cell]] = {}
    entrance: set[Cell] = set()
    for y, (lineno, row) in enumerate(raster):
        if not row.strip():
            raise ScenarioError("blank line inside raster", lineno, 1)
        if len(row) != width:
            raise ScenarioError(f"raster row has length {len(row)}, expected {width}", lineno, 1)
        for x, ch in enumerate(row):
            if ch == "#":
                continue
            if ch == ".":
                pass
            elif ch == "S":
                starts.add((x, y))
            elif ch == "=":
                entrance.add((x, y))
            elif ch in "123456789":
                openings.setdefault(ch, set()).add((x, y))
            elif ch.isascii() and ch.isalpha():
                dests.setdefault(ch, set()).add((x, y))
            else:
                raise ScenarioError(f"unexpected character {ch!r}", lineno, x + 1)
            walkable[y, x] = True
    return build_scenario(walkable, openings, starts, dests, config, entrance, name)


def load_scenario(path) -> Scenario:
    p = FsPath(path)
    return parse_scenario(p.read_text(encoding="utf-8"), name=p.stem)


def bundled_path(name: str = "experiment.scn") -> FsPath:
    return FsPath(__file__).with_name("data") / name


def load_experiment() -> Scenario:
    """The bundled route-choice experiment, all gates open."""
    return load_scenario(bundled_path())


def close_openings(s: Scenario, ids) -> Scenario:
    """Turn the named openings into obstacles and recompute regions."""
    ids = set(ids)
    unknown = ids - set(s.openings)
    if unknown:
        raise ScenarioError(f"unknown opening id(s): {', '.join(sorted(unknown))}")
    if not ids:
        return s
    walkable = s.walkable.copy()
    for oid in ids:
        for x, y in s.openings[oid].cells:
            walkable[y, x] = False
    return build_scenario(
        walkable,
        {k: set(o.cells) for k, o in s.openings.items() if k not in ids},
        set().union(*s.start_areas) if s.start_areas else set(),
        {k: set(v) for k, v in s.destinations.items()},
        s.config,
        set(s.entrance.cells) if s.entrance else None,
        s.name,
    )
