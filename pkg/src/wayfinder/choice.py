"""Path utility evaluation, the choice field, and probabilistic path choice.

A path's utility is ``kappa_tt*eval_tt - kappa_q*eval_q + kappa_f*eval_f``
and paths are drawn with probability proportional to ``exp(utility)``.
Agents passed to these functions only need ``pos`` and ``dest`` attributes.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from itertools import accumulate
from typing import Mapping, Sequence

import numpy as np

from .cognitive import Path
from .fields import FloorField
from .scenario import CELL_SIZE, Cell


@dataclass(frozen=True)
class UtilityWeights:
    kappa_tt: float = 100.0
    kappa_q: float = 25.0
    kappa_f: float = 5.0

    def __post_init__(self):
        for v in (self.kappa_tt, self.kappa_q, self.kappa_f):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"utility weights must be finite and >= 0, got {v!r}")

    def scaled(self, factor: float) -> UtilityWeights:
        return UtilityWeights(self.kappa_tt * factor, self.kappa_q * factor, self.kappa_f * factor)


@dataclass
class PathEvaluation:
    path: Path
    eval_tt: float = 0.0
    eval_q: float = 0.0
    eval_f: float = 0.0
    probability: float = 0.0

    def utility(self, w: UtilityWeights) -> float:
        return w.kappa_tt * self.eval_tt - w.kappa_q * self.eval_q + w.kappa_f * self.eval_f


# travel time ---------------------------------------------------------------


def travel_time(path: Path, pos: Cell, fields: Mapping[str, FloorField], speed: float) -> float:
    """Free-flow time of ``path`` plus the walk from ``pos`` to its first target."""
    return path.free_flow_time + fields[path.first][pos] / speed


def eval_tt(times: Sequence[float]) -> list[float]:
    """Ratio of the fastest time to each path's time, in (0, 1]."""
    best = min(times)
    return [1.0 if t == best else best / t for t in times]


# congestion -----------------------------------------------------------------


def forward_count(opening: str, agent, agents, field: FloorField) -> int:
    """Other agents heading to ``opening`` that are strictly closer to it."""
    mine = field[agent.pos]
    return sum(1 for a in agents if a is not agent and a.dest == opening and field[a.pos] < mine)


def perceive_forward(opening: str, agent, gamma: float, agents, field: FloorField) -> int:
    if field[agent.pos] < gamma:
        return forward_count(opening, agent, agents, field)
    return 0


def normalise_queues(raw: Sequence[float]) -> list[float]:
    top = max(raw)
    if top <= 0:
        return [0.0] * len(raw)
    return [r / top for r in raw]


def eval_q(
    candidates: Sequence[Path],
    agent,
    gamma: float,
    agents,
    fields: Mapping[str, FloorField],
    widths: Mapping[str, float],
) -> list[float]:
    """Perceived queue per unit width of each first opening, scaled so the max is 1."""
    raw = [
        perceive_forward(p.first, agent, gamma, agents, fields[p.first]) / widths[p.first]
        for p in candidates
    ]
    return normalise_queues(raw)


# following ------------------------------------------------------------------


class ChoiceField:
    """Per-cell lists of ``[opening, weight, remaining_steps]`` entries."""

    def __init__(self, shape: tuple[int, int], walkable: np.ndarray | None = None):
        self.shape = shape
        self.walkable = walkable
        self.cells: dict[Cell, list[list]] = {}
        self._offsets: dict[float, list[tuple[int, int, float]]] = {}

    def _stencil(self, rho_c: float) -> list[tuple[int, int, float]]:
        if rho_c not in self._offsets:
            r = int(rho_c / CELL_SIZE + 1e-9)
            out = []
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    d = math.hypot(dx, dy)
                    if d * CELL_SIZE <= rho_c + 1e-9:
                        out.append((dx, dy, 1.0 if d == 0 else 1.0 / d))
            self._offsets[rho_c] = out
        return self._offsets[rho_c]

    def diffuse(self, pos: Cell, target: str, rho_c: float, tau_c: int) -> None:
        if tau_c <= 0:
            return
        h, w = self.shape
        x0, y0 = pos
        for dx, dy, value in self._stencil(rho_c):
            x, y = x0 + dx, y0 + dy
            if not (0 <= x < w and 0 <= y < h):
                continue
            if self.walkable is not None and not self.walkable[y, x]:
                continue
            entries = self.cells.setdefault((x, y), [])
            for e in entries:
                if e[0] == target and e[2] == tau_c:
                    e[1] += value
                    break
            else:
                entries.append([target, value, tau_c])

    def decay(self) -> None:
        dead = []
        for cell, entries in self.cells.items():
            kept = []
            for e in entries:
                e[2] -= 1
                if e[2] > 0:
                    kept.append(e)
            if kept:
                self.cells[cell] = kept
            else:
                dead.append(cell)
        for cell in dead:
            del self.cells[cell]

    def weights_at(self, cell: Cell) -> dict[str, float]:
        out: dict[str, float] = {}
        for target, weight, _ in self.cells.get(cell, ()):
            out[target] = out.get(target, 0.0) + weight
        return out

    def entry_count(self) -> int:
        return sum(len(v) for v in self.cells.values())

    def __bool__(self) -> bool:
        return bool(self.cells)


def diffuse_choice(cf: ChoiceField, agent, new_target: str, rho_c: float, tau_c: int) -> None:
    """Spread ``1/Dist`` (cell units, 1 on the agent's own cell) for ``new_target``."""
    cf.diffuse(agent.pos, new_target, rho_c, tau_c)


def decay_choice_field(cf: ChoiceField) -> None:
    cf.decay()


def eval_f(candidates: Sequence[Path], agent, cf: ChoiceField, rng: np.random.Generator) -> list[float]:
    """1 for at most one path, drawn in proportion to the choice-field weights."""
    weights = cf.weights_at(agent.pos)
    w = [max(0.0, weights.get(p.first, 0.0)) for p in candidates]
    out = [0.0] * len(candidates)
    total = sum(w)
    if total <= 0:
        return out
    nonzero = [i for i, v in enumerate(w) if v > 0]
    if len(nonzero) == 1:
        out[nonzero[0]] = 1.0
        return out
    out[_pick(list(accumulate(w)), rng.random())] = 1.0
    return out


# choice ---------------------------------------------------------------------


def path_probabilities(evals: Sequence[PathEvaluation], weights: UtilityWeights) -> np.ndarray:
    u = np.array([e.utility(weights) for e in evals], dtype=float)
    p = np.exp(u - u.max())
    return p / p.sum()


def _pick(cumulative: list[float], u: float) -> int:
    i = bisect_right(cumulative, u * cumulative[-1])
    return min(i, len(cumulative) - 1)


def choose_path(evals: Sequence[PathEvaluation], weights: UtilityWeights, rng: np.random.Generator) -> Path:
    """Draw a path with softmax probabilities; the probabilities are stored on ``evals``."""
    if not evals:
        raise ValueError("no candidate paths")
    probs = path_probabilities(evals, weights)
    for e, p in zip(evals, probs):
        e.probability = float(p)
    if len(evals) == 1:
        return evals[0].path
    return evals[_pick(list(accumulate(probs.tolist())), rng.random())].path


def sample_paths(
    evals: Sequence[PathEvaluation], weights: UtilityWeights, rng: np.random.Generator, n: int
) -> np.ndarray:
    """``n`` independent draws (as indices into ``evals``) of the same choice rule."""
    probs = path_probabilities(evals, weights)
    cum = np.cumsum(probs)
    idx = np.searchsorted(cum, rng.random(n) * cum[-1], side="right")
    return np.minimum(idx, len(evals) - 1)
