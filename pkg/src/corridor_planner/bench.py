"""Latency benchmark over a scenario suite."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .planner import plan_cycle
from .scenario import Scenario
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

QP_GATE = 0.010  # s, p99 of path QP + speed QP
CYCLE_TARGET = 0.025  # s, p99 of a full cycle
MIN_REPETITIONS = 100


@dataclass(frozen=True)
class Percentiles:
    p50: float
    p95: float
    p99: float
    max: float
    count: int

    @classmethod
    def of(cls, samples: Sequence[float] | np.ndarray) -> Percentiles:
        data = np.asarray(samples, dtype=float)
        if data.size == 0:
            return cls(0.0, 0.0, 0.0, 0.0, 0)
        p50, p95, p99 = np.percentile(data, [50, 95, 99])
        return cls(float(p50), float(p95), float(p99), float(data.max()), int(data.size))


@dataclass
class ScenarioBench:
    name: str
    path_qp: Percentiles
    speed_qp: Percentiles
    qp: Percentiles
    cycle: Percentiles
    iterations: dict[str, float] = field(default_factory=dict)  # mean per QP
    failure_rate: float = 0.0
    deterministic: bool = True
    qp_samples: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    cycle_samples: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def samples(self) -> int:
        return self.cycle.count

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "path_qp": asdict(self.path_qp),
            "speed_qp": asdict(self.speed_qp),
            "qp": asdict(self.qp),
            "cycle": asdict(self.cycle),
            "iterations": self.iterations,
            "failure_rate": self.failure_rate,
            "deterministic": self.deterministic,
        }


@dataclass
class BenchReport:
    scenarios: list[ScenarioBench]
    repetitions: int
    warmup: int
    qp: Percentiles
    cycle: Percentiles
    elapsed: float  # s, whole bench

    @property
    def qp_gate_passed(self) -> bool:
        return self.qp.p99 <= QP_GATE

    @property
    def cycle_target_met(self) -> bool:
        return self.cycle.p99 <= CYCLE_TARGET

    @property
    def deterministic(self) -> bool:
        return all(s.deterministic for s in self.scenarios)

    def to_dict(self) -> dict:
        return {
            "repetitions": self.repetitions,
            "warmup": self.warmup,
            "elapsed_s": self.elapsed,
            "qp": asdict(self.qp),
            "cycle": asdict(self.cycle),
            "qp_gate_s": QP_GATE,
            "qp_gate_passed": self.qp_gate_passed,
            "cycle_target_s": CYCLE_TARGET,
            "cycle_target_met": self.cycle_target_met,
            "deterministic": self.deterministic,
            "scenarios": [s.to_dict() for s in self.scenarios],
        }

    def table(self) -> str:
        """Human-readable summary in milliseconds."""
        head = (
            f"{'scenario':28s} {'n':>5s} {'qp p50':>8s} {'qp p99':>8s} "
            f"{'cyc p99':>8s} {'fail':>6s}"
        )
        lines = [head, "-" * len(head)]
        for s in self.scenarios:
            lines.append(
                f"{s.name[:28]:28s} {s.samples:5d} {1e3 * s.qp.p50:8.3f} {1e3 * s.qp.p99:8.3f} "
                f"{1e3 * s.cycle.p99:8.3f} {s.failure_rate:6.1%}"
            )
        lines.append("-" * len(head))
        lines.append(
            f"{'all':28s} {self.cycle.count:5d} {1e3 * self.qp.p50:8.3f} "
            f"{1e3 * self.qp.p99:8.3f} {1e3 * self.cycle.p99:8.3f}"
        )
        verdict = "PASS" if self.qp_gate_passed else "FAIL"
        lines.append(f"QP p99 gate {1e3 * QP_GATE:.0f} ms: {verdict}")
        target = "met" if self.cycle_target_met else "missed"
        lines.append(f"cycle p99 target {1e3 * CYCLE_TARGET:.0f} ms: {target}")
        return "\n".join(lines)


def same_output(a: Trajectory, b: Trajectory) -> bool:
    return (
        a.provenance == b.provenance
        and np.array_equal(a.xy, b.xy)
        and np.array_equal(a.speed, b.speed)
        and np.array_equal(a.accel, b.accel)
        and np.array_equal(a.heading, b.heading)
    )


def bench_scenario(scenario: Scenario, repetitions: int, warmup: int) -> ScenarioBench:
    """Time ``repetitions`` fresh-planner cycles after ``warmup`` untimed ones."""
    for _ in range(warmup):
        plan_cycle(scenario)

    path_t, speed_t, qp_t, cycle_t = [], [], [], []
    path_it, speed_it = [], []
    failures = 0
    first: Trajectory | None = None
    deterministic = True
    for _ in range(repetitions):
        traj = plan_cycle(scenario)
        solved = traj.diagnostics.solve_times
        if "path" in solved:
            path_t.append(solved["path"])
        if "speed" in solved:
            speed_t.append(solved["speed"])
        if solved:
            qp_t.append(sum(solved.values()))
        cycle_t.append(traj.diagnostics.timings.get("total", 0.0))
        iterations = traj.diagnostics.iterations
        if "path" in iterations:
            path_it.append(iterations["path"])
        if "speed" in iterations:
            speed_it.append(iterations["speed"])
        failures += traj.provenance != "nominal"
        if first is None:
            first = traj
        elif deterministic and not same_output(first, traj):
            deterministic = False
            logger.warning("%s: planner output differs between repetitions", scenario.name)

    return ScenarioBench(
        name=scenario.name or "scenario",
        path_qp=Percentiles.of(path_t),
        speed_qp=Percentiles.of(speed_t),
        qp=Percentiles.of(qp_t),
        cycle=Percentiles.of(cycle_t),
        iterations={
            "path": float(np.mean(path_it)) if path_it else 0.0,
            "speed": float(np.mean(speed_it)) if speed_it else 0.0,
        },
        failure_rate=failures / repetitions if repetitions else 0.0,
        deterministic=deterministic,
        qp_samples=np.asarray(qp_t),
        cycle_samples=np.asarray(cycle_t),
    )


def _bench_job(job: tuple[Scenario, int, int]) -> ScenarioBench:
    return bench_scenario(*job)


def bench(
    scenarios: Sequence[Scenario], repetitions: int = 200, warmup: int = 20, jobs: int = 1
) -> BenchReport:
    """Percentile timings per scenario and pooled over the suite."""
    if repetitions < MIN_REPETITIONS:
        logger.warning(
            "%d repetitions is below %d; p99 is not meaningful", repetitions, MIN_REPETITIONS
        )
    started = time.perf_counter()
    work = [(s, repetitions, warmup) for s in scenarios]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_bench_job, work))
    else:
        results = [_bench_job(job) for job in work]

    qp_all = np.concatenate([r.qp_samples for r in results]) if results else np.zeros(0)
    cycle_all = np.concatenate([r.cycle_samples for r in results]) if results else np.zeros(0)
    report = BenchReport(
        scenarios=results,
        repetitions=repetitions,
        warmup=warmup,
        qp=Percentiles.of(qp_all),
        cycle=Percentiles.of(cycle_all),
        elapsed=time.perf_counter() - started,
    )
    logger.info(
        "bench: %d scenarios x %d reps, qp p99 %.3f ms, cycle p99 %.3f ms",
        len(results),
        repetitions,
        1e3 * report.qp.p99,
        1e3 * report.cycle.p99,
    )
    return report
