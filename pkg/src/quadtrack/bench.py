"""Timing measurements: the association step in isolation and the full pipeline per stage."""

from __future__ import annotations

import os
import platform
import statistics
import time
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import formats
from .config import RunConfig
from .descriptor import AGD_SIZE
from .geometry import Quad
from .recurrent import init_gru_identity
from .tracker import TrackerConfig, TrackerState, step


def machine_spec() -> dict:
    cpu = platform.processor() or "unknown"
    try:
        with open("/proc/cpuinfo") as f:
            for line in f:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    try:
        usable = len(os.sched_getaffinity(0))
    except AttributeError:
        usable = os.cpu_count()
    return {"cpu": cpu, "logical_cpus": os.cpu_count(), "usable_cpus": usable,
            "platform": platform.platform(), "python": platform.python_version(), "numpy": np.__version__}


def _frame(rng: np.random.Generator, k: int, dim: int, base: np.ndarray):
    quads = []
    for i in range(k):
        x, y = 20.0 + 70.0 * i, 40.0
        quads.append(Quad(np.array([[x, y], [x + 60, y], [x + 60, y + 20], [x, y + 20]]), 0.95))
    return quads, (base + rng.normal(0, 0.01, base.shape)).astype(np.float32)


def association_timing(k: int = 10, dim: int = AGD_SIZE, frames: int = 200, matching: str = "eagd",
                       seed: int = 0, warmup: int = 20) -> dict:
    """Per-frame seconds of similarity + assignment + tracklet update (GRU advance included).

    ``k`` tracklets stay alive and are re-observed every frame, so each
    timed frame solves a full k x k problem.
    """
    rng = np.random.default_rng(seed)
    cfg = TrackerConfig(top_k=max(k, 1), matching=matching, theta_m=1e9)
    gru = init_gru_identity(dim, seed=seed) if matching == "eagd" else None
    base = rng.normal(0, 0.3, (k, dim))
    state = TrackerState()
    quads, agd = _frame(rng, k, dim, base)
    step(quads, agd, state, cfg, gru)  # spawn
    per_frame = []
    with threadpool_limits(limits=1):
        for n in range(warmup + frames):
            quads, agd = _frame(rng, k, dim, base)
            tm: dict[str, float] = {}
            step(quads, agd, state, cfg, gru, tm)
            if n >= warmup:
                per_frame.append(tm["matching"] + tm["update"])
    return {"k": k, "dim": dim, "frames": frames, "matching": matching,
            "median_ms": 1000.0 * statistics.median(per_frame),
            "mean_ms": 1000.0 * statistics.fmean(per_frame)}


def matching_scaling(ks: Sequence[int] = (2, 5, 10, 20, 40), frames: int = 100, seed: int = 0) -> list[dict]:
    return [association_timing(k, frames=frames, seed=seed) for k in ks]


def pipeline_timing(cfg: RunConfig, records: Sequence[formats.FrameRecord], threads: int = 1) -> dict:
    from .pipeline import run_tracking, timing_summary

    t0 = time.perf_counter()
    outputs = run_tracking(cfg, records, threads)
    wall = time.perf_counter() - t0
    summary = timing_summary(outputs)
    summary["wall_s"] = wall
    # model setup and prefetch scheduling fall outside the stage clocks
    summary["unaccounted_ms"] = 1000.0 * wall / max(len(outputs), 1) - summary["total_ms"]
    summary["threads"] = threads
    return summary


def bench_report(cfg: RunConfig, records: Sequence[formats.FrameRecord], threads: int = 1,
                 ks: Sequence[int] = (2, 5, 10, 20, 40)) -> dict:
    return {"machine": machine_spec(),
            "association_k10": association_timing(10),
            "matching_scaling": matching_scaling(ks),
            "pipeline": pipeline_timing(cfg, records, threads)}


def format_report(rep: dict) -> str:
    m = rep["machine"]
    lines = [f"machine   {m['cpu']} ({m['usable_cpus']}/{m['logical_cpus']} cpus usable), "
             f"{m['platform']}, python {m['python']}, numpy {m['numpy']}"]
    a = rep["association_k10"]
    lines.append(f"association K={a['k']} D={a['dim']}: median {a['median_ms']:.3f} ms/frame, "
                 f"mean {a['mean_ms']:.3f} ms/frame")
    lines.append("matching scaling: " + ", ".join(f"K={r['k']}: {r['median_ms']:.3f} ms"
                                                  for r in rep["matching_scaling"]))
    p = rep["pipeline"]
    lines.append(f"pipeline  {p['frames']} frames, {p['threads']} thread(s)")
    for stage, ms in p["stage_ms"].items():
        lines.append(f"  {stage:<12} {ms:9.3f} ms/frame")
    lines.append(f"  {'total':<12} {p['total_ms']:9.3f} ms/frame  ({p['fps']:.2f} fps)")
    return "\n".join(lines)
