"""Region graph ("cognitive map") and per-destination paths trees."""

from __future__ import annotations

from dataclasses import dataclass, field

from .fields import FieldBuilder, FloorField, compute_obstacle_field
from .scenario import Scenario

# paths slower than this multiple of the best path sharing their first opening
# are not considered plausible
DOMINANCE_FACTOR = 3.0


@dataclass(frozen=True)
class CognitiveMap:
    nodes: tuple[int, ...]
    edges: dict[str, tuple[int, int]]  # opening id -> (region, region)

    def neighbours(self, region: int) -> list[tuple[str, int]]:
        out = []
        for oid in sorted(self.edges):
            a, b = self.edges[oid]
            if a == region:
                out.append((oid, b))
            elif b == region:
                out.append((oid, a))
        return out


@dataclass(frozen=True)
class Path:
    """Ordered targets ``(first opening, ..., destination)`` and free-flow time (s)."""

    targets: tuple[str, ...]
    free_flow_time: float

    @property
    def first(self) -> str:
        return self.targets[0]

    @property
    def destination(self) -> str:
        return self.targets[-1]


@dataclass
class PathsTree:
    destination: str
    entries: dict[tuple[int, str], list[Path]] = field(default_factory=dict)

    def paths(self, region: int) -> list[Path]:
        """Best path per first opening for ``region`` (empty if none)."""
        keys = sorted(k for k in self.entries if k[0] == region)
        return [self.entries[k][0] for k in keys]

    def all_paths(self, region: int | None = None) -> list[Path]:
        return [
            p
            for k in sorted(self.entries)
            if region is None or k[0] == region
            for p in self.entries[k]
        ]


def paths(pt: PathsTree, region: int) -> list[tuple[Path, float]]:
    """The couples ``(P_i, tt_i)`` available from ``region``."""
    return [(p, p.free_flow_time) for p in pt.paths(region)]


def build_cognitive_map(s: Scenario) -> CognitiveMap:
    return CognitiveMap(
        nodes=tuple(r.id for r in s.regions),
        edges={oid: o.regions for oid, o in sorted(s.openings.items())},
    )


def _simple_routes(cm: CognitiveMap, start: int, goal_regions: set[int]):
    """Opening sequences of simple region paths from ``start`` into ``goal_regions``."""
    if start in goal_regions:
        yield ()
        return
    stack = [(start, (), frozenset([start]))]
    while stack:
        region, route, seen = stack.pop()
        for oid, nxt in cm.neighbours(region):
            if nxt in seen:
                continue
            if nxt in goal_regions:
                yield route + (oid,)
            else:
                stack.append((nxt, route + (oid,), seen | {nxt}))


def build_paths_tree(
    s: Scenario,
    cm: CognitiveMap,
    destination: str,
    fields: dict[str, FloorField],
    speed: float | None = None,
) -> PathsTree:
    """Enumerate plausible paths from every region towards ``destination``.

    The free-flow time of a path sums, for each consecutive pair of targets,
    the downstream target's field value at the upstream opening's centroid
    cell, divided by the desired speed.
    """
    if destination not in s.destinations:
        raise KeyError(f"unknown destination {destination!r}")
    speed = speed or s.config.desired_speed
    goal = s.destination_regions(destination)
    tree = PathsTree(destination)
    for region in cm.nodes:
        found: dict[str, list[Path]] = {}
        for route in _simple_routes(cm, region, goal):
            targets = route + (destination,)
            dist = 0.0
            for here, nxt in zip(targets, targets[1:]):
                dist += fields[nxt][s.openings[here].centroid_cell()]
            if dist == float("inf"):
                continue
            found.setdefault(targets[0], []).append(Path(targets, dist / speed))
        for first, plist in found.items():
            plist.sort(key=lambda p: (p.free_flow_time, p.targets))
            best = plist[0].free_flow_time
            kept = [p for p in plist if p.free_flow_time <= DOMINANCE_FACTOR * best or best == 0]
            tree.entries[(region, first)] = kept
    return tree


@dataclass(eq=False)
class Knowledge:
    """Everything agents know about a scenario, computed once and shared."""

    scenario: Scenario
    fields: dict[str, FloorField]
    obstacle: FloorField
    cognitive_map: CognitiveMap
    trees: dict[str, PathsTree]

    def paths(self, region: int, destination: str) -> list[Path]:
        return self.trees[destination].paths(region)


def build_knowledge(s: Scenario) -> Knowledge:
    fb = FieldBuilder(s)
    fields = {oid: fb.path_field(o.cells, oid) for oid, o in s.openings.items()}
    for did, cells in s.destinations.items():
        fields[did] = fb.path_field(cells, did)
    cm = build_cognitive_map(s)
    trees = {d: build_paths_tree(s, cm, d, fields) for d in s.destinations}
    return Knowledge(s, fields, compute_obstacle_field(s), cm, trees)
