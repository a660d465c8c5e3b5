"""Batch runs, calibration presets and comparison with the observed gate counts."""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .engine import Model, RunResult, run
from .scenario import Scenario, SimulationConfig, close_openings, load_experiment

# gate letter -> opening id in the bundled scenario
GATES = {"a": "1", "b": "2", "c": "3"}
GATE_ORDER = ("a", "b", "c")

# opening ids closed for each experimental procedure
PROCEDURES: dict[int, frozenset[str]] = {
    1: frozenset({"2", "3"}),
    2: frozenset({"3"}),
    3: frozenset({"2"}),
    4: frozenset(),
}

# people per gate (a, b, c), four repetitions per procedure
OBSERVED: dict[int, tuple[tuple[int, int, int], ...]] = {
    2: ((22, 24, 0), (23, 23, 0), (25, 21, 0), (23, 23, 0)),
    3: ((27, 0, 19), (28, 0, 18), (30, 0, 16), (27, 0, 19)),
    4: ((18, 16, 12), (22, 19, 5), (21, 18, 7), (22, 19, 5)),
}
OBSERVED_AVERAGES: dict[int, tuple[float, float, float]] = {
    2: (23.25, 22.75, 0.0),
    3: (28.0, 0.0, 18.0),
    4: (20.75, 18.0, 7.25),
}

CALIBRATIONS: dict[str, tuple[float, float, float]] = {
    "C1": (10.0, 7.0, 5.0),
    "C2": (10.0, 2.5, 0.5),
    "C3": (100.0, 25.0, 5.0),
}

DEFAULT_RUNS = 50


@dataclass(frozen=True)
class ReferenceData:
    iterations: dict[int, tuple[tuple[int, int, int], ...]] = field(default_factory=lambda: dict(OBSERVED))
    averages: dict[int, tuple[float, float, float]] = field(default_factory=lambda: dict(OBSERVED_AVERAGES))

    def mean(self, procedure: int) -> tuple[float, float, float]:
        return self.averages[procedure]


REFERENCE = ReferenceData()


def calibrate(config: SimulationConfig, label: str) -> SimulationConfig:
    kt, kq, kf = CALIBRATIONS[label]
    return config.replace(kappa_tt=kt, kappa_q=kq, kappa_f=kf)


def procedure_scenario(procedure: int, base: Scenario | None = None) -> Scenario:
    base = base or load_experiment()
    return close_openings(base, PROCEDURES[procedure])


@dataclass
class ProcedureStats:
    procedure: int
    runs: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    min: tuple[int, int, int]
    max: tuple[int, int, int]
    incomplete: int
    mean_travel_time: float
    score: float | None = None

    @property
    def total_variance(self) -> float:
        return float(sum(s * s for s in self.std))


@dataclass
class BatchReport:
    label: str
    config: SimulationConfig
    procedures: dict[int, ProcedureStats] = field(default_factory=dict)

    @property
    def incomplete(self) -> int:
        return sum(p.incomplete for p in self.procedures.values())

    @property
    def total_score(self) -> float:
        return sum(p.score for p in self.procedures.values() if p.score is not None)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(
            ["calibration", "procedure", "runs", "incomplete"]
            + [f"{k}_{g}" for k in ("mean", "std", "min", "max") for g in GATE_ORDER]
            + ["mean_travel_time_s", "score"]
        )
        for p in sorted(self.procedures):
            st = self.procedures[p]
            wr.writerow(
                [self.label, p, st.runs, st.incomplete]
                + [f"{v:.4f}" for v in st.mean]
                + [f"{v:.4f}" for v in st.std]
                + list(st.min)
                + list(st.max)
                + [f"{st.mean_travel_time:.3f}", "" if st.score is None else f"{st.score:.4f}"]
            )
        return buf.getvalue()


def counts_matrix(results: list[RunResult]) -> np.ndarray:
    return np.array([[r.counts.get(GATES[g], 0) for g in GATE_ORDER] for r in results], dtype=float)


def aggregate(procedure: int, results: list[RunResult], reference: ReferenceData | None = REFERENCE) -> ProcedureStats:
    """Summary statistics over runs; independent of run order."""
    results = sorted(results, key=lambda r: r.seed)
    c = counts_matrix(results)
    tts = [t for r in results for t in r.travel_times]
    stats = ProcedureStats(
        procedure=procedure,
        runs=len(results),
        mean=tuple(float(v) for v in c.mean(axis=0)),
        std=tuple(float(v) for v in c.std(axis=0)),
        min=tuple(int(v) for v in c.min(axis=0)),
        max=tuple(int(v) for v in c.max(axis=0)),
        incomplete=sum(not r.complete for r in results),
        mean_travel_time=float(np.mean(tts)) if tts else float("nan"),
    )
    if reference is not None and procedure in reference.averages:
        stats.score = score(stats.mean, reference.mean(procedure))
    return stats


def score(simulated_means, reference_means) -> float:
    """L1 distance between mean gate-count triples."""
    return float(sum(abs(s - r) for s, r in zip(simulated_means, reference_means)))


def run_procedure(
    procedure: int,
    config: SimulationConfig,
    n_runs: int = DEFAULT_RUNS,
    base_seed: int = 0,
    base: Scenario | None = None,
) -> list[RunResult]:
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    s = procedure_scenario(procedure, base)
    model = Model(s, config=config)
    return [run(model, seed=base_seed + i) for i in range(n_runs)]


def run_batch(
    procedures=(2, 3, 4),
    config: SimulationConfig | None = None,
    n_runs: int = DEFAULT_RUNS,
    base_seed: int = 0,
    label: str = "custom",
    base: Scenario | None = None,
) -> BatchReport:
    """Run ``n_runs`` seeds (``base_seed`` ...) per procedure and aggregate gate counts."""
    base = base or load_experiment()
    config = config or base.config
    report = BatchReport(label, config)
    for p in procedures:
        report.procedures[p] = aggregate(p, run_procedure(p, config, n_runs, base_seed, base))
    return report


def config_grid(base: SimulationConfig, grid: dict[str, list]) -> list[tuple[str, SimulationConfig]]:
    """Cartesian product of parameter values; ``calibration`` entries expand to presets."""
    keys = sorted(grid)
    out = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cfg = base
        parts = []
        for k, v in zip(keys, values):
            if k == "calibration":
                cfg = calibrate(cfg, v)
            else:
                cfg = cfg.replace(**{k: v})
            parts.append(f"{k}={v}")
        out.append((";".join(parts), cfg))
    return out


def sweep(
    configs: list[tuple[str, SimulationConfig]],
    n_runs: int = DEFAULT_RUNS,
    procedures=(2, 3, 4),
    base_seed: int = 0,
    base: Scenario | None = None,
) -> list[BatchReport]:
    """Batch every config and rank by total score (lowest first)."""
    if not configs:
        raise ValueError("empty config grid")
    base = base or load_experiment()
    reports = [run_batch(procedures, cfg, n_runs, base_seed, label, base) for label, cfg in configs]
    return sorted(reports, key=lambda r: (r.total_score, r.label))


def load_grid(path) -> dict[str, list]:
    """Parse a JSON object mapping config keys to lists of values."""
    with open(path, encoding="utf-8") as fh:
        grid = json.load(fh)
    if not isinstance(grid, dict) or not grid:
        raise ValueError("grid file must hold a non-empty JSON object")
    return {k: v if isinstance(v, list) else [v] for k, v in grid.items()}


def read_report(text: str) -> dict[int, tuple[float, float, float]]:
    """Mean triples per procedure from a batch report CSV."""
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        out[int(row["procedure"])] = tuple(float(row[f"mean_{g}"]) for g in GATE_ORDER)
    return out
