"""Agent life-cycle and grid movement.

Each step: decay the choice field, rebuild the proxemic field, then visit the
active agents in a freshly shuffled order twice - first to localise, evaluate
and choose paths, then to move one cell (or hold).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import choice
from .choice import ChoiceField, PathEvaluation, UtilityWeights
from .cognitive import Knowledge, Path, build_knowledge
from .fields import proxemic_contribution, rebuild_proxemic_field
from .scenario import CELL_SIZE, Cell, Scenario, SimulationConfig

# direction codes: 0 = stay, then the 8 neighbours
_DIRS = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


@dataclass(slots=True, eq=False)
class Agent:
    id: int
    pos: Cell
    desired_speed: float
    region: int
    dest: str | None = None
    path: Path | None = None
    spreading: int = 0
    finished: bool = False
    finish_step: int = -1
    last_opening: str | None = None
    crossed: set = field(default_factory=set)
    destination: str = "E"
    plan_region: int = -1


@dataclass
class RunResult:
    counts: dict[str, int]
    travel_times: list[float]
    steps: int
    complete: bool
    seed: int
    trace: list[tuple] | None = None

    @property
    def mean_travel_time(self) -> float:
        return float(np.mean(self.travel_times)) if self.travel_times else float("nan")

    def same_as(self, other: RunResult) -> bool:
        return (
            self.counts == other.counts
            and self.travel_times == other.travel_times
            and self.steps == other.steps
            and self.complete == other.complete
            and self.trace == other.trace
        )


@dataclass
class SimulationState:
    step: int
    agents: list[Agent]
    choice_field: ChoiceField
    proxemic: np.ndarray
    gate_counts: dict[str, int]
    rng: np.random.Generator

    @property
    def active(self) -> list[Agent]:
        return [a for a in self.agents if not a.finished]


class Model:
    """Scenario knowledge plus the precomputed movement tables for one config.

    Immutable once built; several runs may share one model.
    """

    def __init__(self, scenario: Scenario, knowledge: Knowledge | None = None, config: SimulationConfig | None = None):
        self.scenario = scenario
        self.config = config or scenario.config
        self.knowledge = knowledge or build_knowledge(scenario)
        h, w = scenario.shape
        self.width = w
        self.height = h
        self.weights = UtilityWeights(self.config.kappa_tt, self.config.kappa_q, self.config.kappa_f)
        self.region_of = scenario.region_map.ravel().tolist()
        self.opening_of: list[str | None] = [None] * (h * w)
        for oid, o in scenario.openings.items():
            for x, y in o.cells:
                self.opening_of[y * w + x] = oid
        self.dest_of: list[str | None] = [None] * (h * w)
        for did, cells in scenario.destinations.items():
            for x, y in cells:
                self.dest_of[y * w + x] = did
        self.widths = {oid: o.width for oid, o in scenario.openings.items()}
        for did, cells in scenario.destinations.items():
            xs = {x for x, _ in cells}
            ys = {y for _, y in cells}
            self.widths[did] = max(len(xs), len(ys)) * CELL_SIZE
        self.flat_fields = {k: f.values.ravel().tolist() for k, f in self.knowledge.fields.items()}
        self._moves: dict[str, list[list[tuple[int, int, float]]]] = {}
        # own proxemic contribution removed per move direction
        kp = self.config.k_p
        self.self_corr = [math.exp(kp * proxemic_contribution(math.hypot(dx, dy) * CELL_SIZE)) for dx, dy in _DIRS]
        start = sorted(set().union(*scenario.start_areas), key=lambda c: (c[1], c[0])) if scenario.start_areas else []
        self.start_cells = start

    def moves(self, target: str) -> list[list[tuple[int, int, float]]]:
        """Per flat cell: ``(neighbour index, direction code, static weight)`` options."""
        if target not in self._moves:
            self._moves[target] = self._build_moves(target)
        return self._moves[target]

    def _build_moves(self, target: str):
        cfg = self.config
        s = self.scenario
        h, w = self.height, self.width
        walk = s.walkable
        pf = self.knowledge.fields[target].values
        obst = self.knowledge.obstacle.values
        table: list[list[tuple[int, int, float]]] = [[] for _ in range(h * w)]
        for y in range(h):
            for x in range(w):
                if not walk[y, x] or not math.isfinite(pf[y, x]):
                    continue
                here = pf[y, x]
                opts = []
                for code, (dx, dy) in enumerate(_DIRS):
                    nx, ny = x + dx, y + dy
                    if not (0 <= nx < w and 0 <= ny < h) or not walk[ny, nx]:
                        continue
                    if dx and dy and not (walk[y, nx] or walk[ny, x]):
                        continue
                    if not math.isfinite(pf[ny, nx]):
                        continue
                    u = cfg.k_s * (here - pf[ny, nx]) - cfg.k_o * max(0.0, cfg.d_0 - obst[ny, nx])
                    opts.append((ny * w + nx, code, math.exp(u)))
                table[y * w + x] = opts
        return table


def localize(agent: Agent, model: Model) -> int:
    """Region of the agent; on opening cells, the region on the far side."""
    x, y = agent.pos
    idx = y * model.width + x
    r = model.region_of[idx]
    if r >= 0:
        return r
    oid = model.opening_of[idx]
    if oid is None:
        return agent.region
    opening = model.scenario.openings[oid]
    if agent.region in opening.regions:
        return opening.other_region(agent.region)
    # no usable history: the side from which the destination is nearer
    best, best_cost = opening.regions[0], math.inf
    for r in opening.regions:
        for p in model.knowledge.paths(r, agent.destination):
            cost = p.free_flow_time + model.flat_fields[p.first][idx] / agent.desired_speed
            if cost < best_cost:
                best, best_cost = r, cost
    return best


def move_operational(agent: Agent, state: SimulationState, model: Model, occupied: bytearray, eprox: list[float], u: float) -> int:
    """Sample the next flat cell index (possibly the current one)."""
    x, y = agent.pos
    here = y * model.width + x
    opts = model.moves(agent.dest)[here]
    corr = model.self_corr
    cells = []
    cum = []
    total = 0.0
    for idx, code, wgt in opts:
        if code and occupied[idx]:
            continue
        total += wgt * eprox[idx] * corr[code]
        cells.append(idx)
        cum.append(total)
    if not cells or total <= 0:
        return here
    t = u * total
    for i, c in enumerate(cum):
        if t < c:
            return cells[i]
    return cells[-1]


class Simulation:
    def __init__(
        self,
        model: Model,
        seed: int | None = None,
        trace: bool = False,
        choice_trace: bool = False,
        positions: list[Cell] | None = None,
    ):
        """``positions`` places agents on the given cells instead of random start cells."""
        self.model = model
        cfg = model.config
        self.seed = cfg.seed if seed is None else seed
        rng = np.random.default_rng(self.seed)
        s = model.scenario
        self.state = SimulationState(
            step=0,
            agents=[],
            choice_field=ChoiceField(s.shape, s.walkable),
            proxemic=np.zeros(s.shape),
            gate_counts={oid: 0 for oid in sorted(s.openings)},
            rng=rng,
        )
        self.trace: list[tuple] | None = [] if trace else None
        self.choice_trace: list[tuple] | None = [] if choice_trace else None
        self.occupied = bytearray(s.shape[0] * s.shape[1])
        if positions is None:
            self._spawn(cfg.agents)
        else:
            self._place(list(positions))

    def _spawn(self, n: int) -> None:
        cells = self.model.start_cells
        if n > len(cells):
            raise ValueError(f"{n} agents do not fit in {len(cells)} start cells")
        if n == 0:
            return
        picks = self.state.rng.choice(len(cells), size=n, replace=False)
        self._place([cells[k] for k in picks.tolist()])

    def _place(self, cells: list[Cell]) -> None:
        m = self.model
        if len(set(cells)) != len(cells):
            raise ValueError("two agents on one cell")
        dest = sorted(m.scenario.destinations)[0]
        for i, pos in enumerate(cells):
            if not m.scenario.is_walkable(pos):
                raise ValueError(f"agent cell {pos} is not walkable")
            a = Agent(i, pos, m.config.desired_speed, m.scenario.region_of(pos), destination=dest)
            self.state.agents.append(a)
            self.occupied[pos[1] * m.width + pos[0]] = 1

    @property
    def done(self) -> bool:
        return all(a.finished for a in self.state.agents)

    # decision phase --------------------------------------------------------

    def _snapshot(self, active: list[Agent]):
        m = self.model
        w = m.width
        idxs = [a.pos[1] * w + a.pos[0] for a in active]
        return {oid: [f[i] for i in idxs] for oid, f in m.flat_fields.items()}

    def _decide(self, agent: Agent, k: int, active: list[Agent], pf_at: dict[str, list[float]]) -> None:
        m = self.model
        cfg = m.config
        st = self.state
        region = localize(agent, m)
        candidates = m.knowledge.paths(region, agent.destination)
        if not candidates:
            return
        old = agent.dest
        firsts = [p.first for p in candidates]
        due = (st.step - agent.id) % cfg.eval_interval == 0
        if old in firsts and region == agent.plan_region and not due:
            chosen = agent.path
        elif len(candidates) == 1:
            chosen = candidates[0]
        else:
            chosen = self._evaluate(agent, k, candidates, active, pf_at)
        agent.plan_region = region
        agent.path = chosen
        agent.dest = chosen.first
        if old is not None and old in firsts and old != chosen.first:
            agent.spreading = cfg.tau_a
        if agent.spreading > 0:
            choice.diffuse_choice(st.choice_field, agent, agent.dest, cfg.rho_c, cfg.tau_c)
            agent.spreading -= 1

    def _evaluate(self, agent, k, candidates, active, pf_at) -> Path:
        m = self.model
        st = self.state
        speed = agent.desired_speed
        times = [p.free_flow_time + pf_at[p.first][k] / speed for p in candidates]
        keep = [i for i, t in enumerate(times) if math.isfinite(t)]
        if len(keep) < len(candidates):
            candidates = [candidates[i] for i in keep]
            times = [times[i] for i in keep]
        if len(candidates) == 1:
            return candidates[0]
        tts = choice.eval_tt(times)
        qs = self._queues(k, candidates, active, pf_at)
        fs = choice.eval_f(candidates, agent, st.choice_field, st.rng) if st.choice_field else [0.0] * len(candidates)
        evals = [PathEvaluation(p, t, q, f) for p, t, q, f in zip(candidates, tts, qs, fs)]
        chosen = choice.choose_path(evals, m.weights, st.rng)
        if self.choice_trace is not None:
            for e in evals:
                self.choice_trace.append(
                    (st.step, agent.id, ">".join(e.path.targets), e.eval_tt, e.eval_q, e.eval_f, e.probability, e.path is chosen)
                )
        return chosen

    def _queues(self, k, candidates, active, pf_at) -> list[float]:
        # same counts as choice.eval_q, read from the per-step field snapshot
        m = self.model
        gamma = m.config.gamma
        raw = []
        for p in candidates:
            pf = pf_at[p.first]
            mine = pf[k]
            n = 0
            if mine < gamma:
                for j, other in enumerate(active):
                    if other.dest == p.first and pf[j] < mine and j != k:
                        n += 1
            raw.append(n / m.widths[p.first])
        return choice.normalise_queues(raw)

    # step ------------------------------------------------------------------

    def step(self) -> SimulationState:
        st = self.state
        m = self.model
        w = m.width
        choice.decay_choice_field(st.choice_field)
        active = [a for a in st.agents if not a.finished]
        st.proxemic = rebuild_proxemic_field([a.pos for a in active], m.scenario.shape)
        if active:
            order = st.rng.permutation(len(active)).tolist()
            pf_at = self._snapshot(active)
            for k in order:
                self._decide(active[k], k, active, pf_at)
            eprox = np.exp(-m.config.k_p * st.proxemic).ravel().tolist()
            draws = st.rng.random(len(order)).tolist()
            for k, u in zip(order, draws):
                a = active[k]
                if a.dest is None:
                    continue
                x, y = a.pos
                here = y * w + x
                nxt = move_operational(a, st, m, self.occupied, eprox, u)
                if nxt != here:
                    self.occupied[here] = 0
                    self.occupied[nxt] = 1
                    a.pos = (nxt % w, nxt // w)
                    self._arrive(a, nxt)
        st.step += 1
        if self.trace is not None:
            for a in st.agents:
                if not a.finished:
                    self.trace.append((st.step, a.id, a.pos[0], a.pos[1], a.dest))
        return st

    def _arrive(self, a: Agent, idx: int) -> None:
        m = self.model
        st = self.state
        oid = m.opening_of[idx]
        if oid is not None:
            a.last_opening = oid
        else:
            r = m.region_of[idx]
            if r >= 0 and r != a.region:
                if a.last_opening is not None and a.last_opening not in a.crossed:
                    a.crossed.add(a.last_opening)
                    st.gate_counts[a.last_opening] += 1
                a.region = r
        if m.dest_of[idx] == a.destination:
            a.finished = True
            a.finish_step = st.step + 1
            self.occupied[idx] = 0

    def run(self, max_steps: int | None = None) -> RunResult:
        cap = self.model.config.max_steps if max_steps is None else max_steps
        while not self.done and self.state.step < cap:
            self.step()
        dt = self.model.config.step_duration
        return RunResult(
            counts=dict(self.state.gate_counts),
            travel_times=[a.finish_step * dt for a in self.state.agents if a.finished],
            steps=self.state.step,
            complete=self.done,
            seed=self.seed,
            trace=self.trace,
        )


def step(sim: Simulation) -> SimulationState:
    return sim.step()


def run(scenario: Scenario | Model, seed: int | None = None, trace: bool = False, max_steps: int | None = None) -> RunResult:
    """Simulate until every agent has finished or the step cap is hit."""
    model = scenario if isinstance(scenario, Model) else Model(scenario)
    return Simulation(model, seed=seed, trace=trace).run(max_steps)


def result_csv_header() -> list[str]:
    return ["scenario", "procedure", "seed", "steps", "count_a", "count_b", "count_c", "mean_travel_time_s", "complete"]


def result_csv_row(result: RunResult, scenario: str, procedure, gates=("1", "2", "3")) -> list:
    return [
        scenario,
        procedure,
        result.seed,
        result.steps,
        *(result.counts.get(g, 0) for g in gates),
        f"{result.mean_travel_time:.3f}",
        int(result.complete),
    ]


def trace_to_csv(trace: list[tuple]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["step", "agent", "x", "y", "dest"])
    wr.writerows(trace)
    return buf.getvalue()
