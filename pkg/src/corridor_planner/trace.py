"""Trace files: trace.csv, summary.json and an optional plot.svg."""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bench import Percentiles  # noqa: E402
from .errors import TraceIOError  # noqa: E402
from .sim import CycleRecord, SimTrace  # noqa: E402
from .trajectory import Trajectory  # noqa: E402

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json", "svg")
DEFAULT_FORMATS = ("csv", "json")

TRACE_COLUMNS = (
    "cycle",
    "t",
    "x",
    "y",
    "heading",
    "speed",
    "accel",
    "provenance",
    "guardian_level",
    "cycle_ms",
    "event",
)
TRAJECTORY_COLUMNS = ("t", "x", "y", "heading", "curvature", "speed", "accel")


def _num(value: float, digits: int = 6) -> str:
    return f"{value:.{digits}f}"


def trace_csv(trace: SimTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in trace.records:
        writer.writerow(
            [
                r.cycle,
                _num(r.t, 3),
                _num(r.ego.x),
                _num(r.ego.y),
                _num(r.ego.heading),
                _num(r.ego.speed),
                _num(r.ego.accel),
                r.provenance,
                r.guardian_level,
                _num(r.cycle_ms, 3),
                ";".join(r.events),
            ]
        )
    return buf.getvalue()


def trajectory_csv(trajectory: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for sample in trajectory.samples():
        writer.writerow([_num(sample.t, 3)] + [_num(v) for v in sample[1:]])
    return buf.getvalue()


def _ms(p: Percentiles) -> dict[str, float]:
    return {"p50": 1e3 * p.p50, "p95": 1e3 * p.p95, "p99": 1e3 * p.p99, "count": p.count}


def _qp_ms(records: list[CycleRecord], name: str) -> dict[str, float]:
    """Solver time over the cycles where that QP ran."""
    return _ms(Percentiles.of([r.qp_times[name] for r in records if name in r.qp_times]))


def trace_summary(trace: SimTrace) -> dict:
    records = trace.records
    scenario = trace.scenario
    expect = scenario.expect
    return {
        "scenario": scenario.name,
        "seed": trace.seed,
        "outcome": trace.outcome,
        "cycles": trace.cycles,
        "events": trace.event_counts(),
        "yield_cycles": trace.yield_cycles(),
        "fallback_reasons": sorted({r.fallback_reason for r in records if r.fallback_reason}),
        "expected": None
        if expect is None
        else {"outcome": expect.outcome, "min_yield": expect.min_yield},
        "expectation_met": trace.expectation_met(),
        "timings_ms": {
            "cycle": _ms(Percentiles.of([r.cycle_ms / 1e3 for r in records])),
            "path_qp": _qp_ms(records, "path"),
            "speed_qp": _qp_ms(records, "speed"),
        },
    }


def trajectory_summary(trajectory: Trajectory, scenario_name: str = "") -> dict:
    diag = trajectory.diagnostics
    return {
        "scenario": scenario_name,
        "provenance": trajectory.provenance,
        "samples": len(trajectory),
        "decisions": diag.decisions,
        "solver": diag.solver,
        "iterations": diag.iterations,
        "fallback_reason": diag.fallback_reason,
        "failed_phase": diag.failed_phase,
        "curvature_clamped": diag.curvature_clamped,
        "timings_ms": {k: 1e3 * v for k, v in diag.timings.items()},
    }


def _dumps(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def plot_trace(trace: SimTrace, path: Path) -> None:
    """Top-down view and s-t diagram as a static SVG."""
    plt.rcParams["svg.hashsalt"] = "corridor-planner"
    scenario = trace.scenario
    fig, (top, st) = plt.subplots(2, 1, figsize=(8, 8))

    line = scenario.line.points
    top.plot(line[:, 0], line[:, 1], "k--", lw=0.8, label="reference")
    xy = np.array([[r.ego.x, r.ego.y] for r in trace.records]).reshape(-1, 2)
    if len(xy):
        top.plot(xy[:, 0], xy[:, 1], "b-", lw=1.5, label="ego")
    for ob in scenario.obstacles:
        x, y = ob.polygon().exterior.xy
        top.fill(x, y, color="tab:red", alpha=0.5)
    top.set_aspect("equal", adjustable="datalim")
    top.set_xlabel("x [m]")
    top.set_ylabel("y [m]")
    top.legend(loc="best")
    top.set_title(f"{scenario.name or 'scenario'}: {trace.outcome}")

    t = [r.t for r in trace.records]
    s = [r.station for r in trace.records]
    st.plot(t, s, "b-")
    st.axhline(scenario.goal_s, color="g", lw=0.8, ls=":")
    st.set_xlabel("t [s]")
    st.set_ylabel("s [m]")

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_plan(trajectory: Trajectory, path: Path, scenario_name: str = "") -> None:
    """Planned path and speed profile of one cycle as a static SVG."""
    plt.rcParams["svg.hashsalt"] = "corridor-planner"
    fig, (top, speed) = plt.subplots(2, 1, figsize=(8, 6))

    top.plot(trajectory.xy[:, 0], trajectory.xy[:, 1], "b.-", lw=1.0, ms=3)
    top.set_aspect("equal", adjustable="datalim")
    top.set_xlabel("x [m]")
    top.set_ylabel("y [m]")
    top.set_title(f"{scenario_name or 'plan'}: {trajectory.provenance}")

    speed.plot(trajectory.t, trajectory.speed, "b-", label="speed [m/s]")
    speed.plot(trajectory.t, trajectory.accel, "r--", lw=0.8, label="accel [m/s²]")
    speed.set_xlabel("t [s]")
    speed.legend(loc="best")

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def emit_trace(
    trace: SimTrace, out_dir: str | Path, formats: Iterable[str] = DEFAULT_FORMATS
) -> list[Path]:
    """Write the requested trace files under ``out_dir`` and return their paths.

    Raises:
        TraceIOError: the directory or a file could not be written.
    """
    out = Path(out_dir)
    wanted = set(formats)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in wanted:
            written.append(_write(out / "trace.csv", trace_csv(trace)))
        if "json" in wanted:
            written.append(_write(out / "summary.json", _dumps(trace_summary(trace))))
        if "svg" in wanted:
            plot_trace(trace, out / "plot.svg")
            written.append(out / "plot.svg")
    except OSError as e:
        raise TraceIOError(f"cannot write trace under {out}: {e}") from e
    logger.info("wrote %s", ", ".join(p.name for p in written))
    return written


def emit_plan(
    trajectory: Trajectory,
    out_dir: str | Path,
    scenario_name: str = "",
    formats: Iterable[str] = DEFAULT_FORMATS,
) -> list[Path]:
    """trajectory.csv, summary.json and plot.svg for a single planning cycle.

    Raises:
        TraceIOError: the directory or a file could not be written.
    """
    out = Path(out_dir)
    wanted = set(formats)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in wanted:
            written.append(_write(out / "trajectory.csv", trajectory_csv(trajectory)))
        if "json" in wanted:
            summary = trajectory_summary(trajectory, scenario_name)
            written.append(_write(out / "summary.json", _dumps(summary)))
        if "svg" in wanted:
            plot_plan(trajectory, out / "plot.svg", scenario_name)
            written.append(out / "plot.svg")
    except OSError as e:
        raise TraceIOError(f"cannot write plan under {out}: {e}") from e
    return written
