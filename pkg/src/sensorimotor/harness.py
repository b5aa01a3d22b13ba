"""Experiment runs: seeded batches, the measurement schedule and summaries."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import learner
from .agent import (
    LWM,
    PWM,
    AgentVariant,
    ExperienceLogWriter,
    Experience,
    act,
    build_measure_joints,
    encode_bits,
    init_mechanisms,
    record,
)
from .env import BodySpec, Track, apply_action, load_track, spawn
from .measures import MEASURES, MeasureRecord, evaluate
from .prob import UNITS

logger = logging.getLogger(__name__)

PAPER_STEPS = 20_000
ANCHORS = (50, 100, 200, 500, 1_000, 2_000, 5_000, 10_000, 20_000)
HORIZONS = ANCHORS
LWM_THRESHOLD = 0.168
PWM_THRESHOLD = 0.615

CSV_COLUMNS = (
    "run_id", "variant", "topology", "sensor_len", "horizon", "step", "success_rate_so_far",
    "phi_iit", "psi_si", "psi_c", "phi_eii", "psi_mc", "psi_synp", "seed",
)
SUMMARY_SCHEMA = "sensorimotor-summary/1"
#: IPF sweep budget for scheduled measurements; near-deterministic
#: prediction joints converge slowly and must not abort a whole run
MEASURE_MAX_ITER = 50_000


@dataclass(frozen=True)
class ExperimentConfig:
    variants: tuple[str, ...] = ("lwm-complete", "lwm-split", "pwm-complete", "pwm-split", "random")
    sensor_lengths: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    runs: int = 50
    steps: int = 2_000
    #: PWM sampling horizons; ``None`` means sampling never stops
    horizons: tuple[Optional[int], ...] = (None,)
    seed: int = 0
    noise_sigma: float = learner.DEFAULT_NOISE
    projections: int = learner.DEFAULT_PROJECTIONS
    track: Optional[str] = None
    out: str = "results"
    workers: int = 1
    body_radius: float = 0.5
    #: directory for per-run experience logs; ``None`` disables logging
    log_dir: Optional[str] = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        for h in self.horizons:
            if h is not None and not 1 <= h <= self.steps:
                raise ValueError(f"horizon {h} outside [1, steps={self.steps}]")
        for v in self.variants:
            AgentVariant.parse(v)
        for length in self.sensor_lengths:
            BodySpec(sensor_length=length)

    def cells(self) -> list[tuple[AgentVariant, float]]:
        """Every (variant, sensor length) cell; horizons only apply to PWM agents."""
        out = []
        for name in self.variants:
            hs = self.horizons if name.startswith(PWM) else (None,)
            for h in hs:
                for length in self.sensor_lengths:
                    out.append((AgentVariant.parse(name, h), length))
        return out


@dataclass
class RunResult:
    run_id: str
    variant: AgentVariant
    sensor_len: float
    seed: int
    steps: int
    stuck_steps: int
    records: list[MeasureRecord] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def success_rate(self) -> float:
        return 1.0 - self.stuck_steps / self.steps

    def final(self) -> Optional[MeasureRecord]:
        return self.records[-1] if self.records else None


# --------------------------------------------------------------------------
# schedule


def schedule(total_steps: int) -> list[int]:
    """The 90 measurement steps.

    Nine anchors, nine equidistant points inside each gap between consecutive
    anchors and nine in (0, first anchor], all scaled by ``total/20000``.
    After rounding, collisions are resolved by pushing points apart so the
    result stays strictly increasing and ends at ``total_steps``.
    """
    if total_steps < 90:
        stride = math.ceil(total_steps / 90)
        logger.info("%d steps are too few for the 90-point schedule; measuring every %d", total_steps, stride)
        return list(range(stride, total_steps + 1, stride))
    scale = total_steps / PAPER_STEPS
    points = []
    prev = 0.0
    for anchor in ANCHORS:
        gap = (anchor - prev) / 10
        points.extend(prev + gap * k for k in range(1, 11))
        prev = anchor
    out = [int(math.floor(p * scale + 0.5)) for p in points]
    for k in range(len(out)):
        out[k] = max(out[k], out[k - 1] + 1 if k else 1)
    out[-1] = min(out[-1], total_steps)
    for k in range(len(out) - 2, -1, -1):
        out[k] = min(out[k], out[k + 1] - 1)
    return out


# --------------------------------------------------------------------------
# seeds


def derive_seed(master: int, run_index: int, sensor_len: float) -> int:
    """Counter-based per-run seed: SeedSequence(master, spawn_key=(run, round(1000*length)))."""
    ss = np.random.SeedSequence(master, spawn_key=(run_index, int(round(sensor_len * 1000))))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def make_run_id(variant: AgentVariant, sensor_len: float, run_index: int) -> str:
    h = "full" if variant.horizon is None else str(variant.horizon)
    return f"{variant.name}_L{sensor_len:g}_h{h}_r{run_index:04d}"


# --------------------------------------------------------------------------
# one run


def run_one(cfg: ExperimentConfig, variant: AgentVariant, sensor_len: float, seed: int,
            run_id: Optional[str] = None, track: Optional[Track] = None,
            log_file=None) -> RunResult:
    """Simulate one agent for ``cfg.steps`` steps, measuring on the schedule."""
    track = load_track(cfg.track) if track is None else track
    body = BodySpec(radius=cfg.body_radius, sensor_length=sensor_len)
    rng = np.random.default_rng(seed)
    run_id = run_id or make_run_id(variant, sensor_len, 0)
    when = set(schedule(cfg.steps))
    meta = {"run_id": run_id, "variant": variant.name, "topology": variant.topology,
            "sensor_len": sensor_len, "horizon": variant.horizon, "seed": seed}
    writer = None
    if log_file is not None:
        writer = ExperienceLogWriter(log_file, dict(meta, alpha=1.0, steps=cfg.steps))

    w = spawn(track, body, rng)
    m = init_mechanisms(variant, rng)
    s = encode_bits(w.sensors)
    c, a = act(m, s, int(rng.integers(4)), rng)
    stuck = 0
    result = RunResult(run_id, variant, sensor_len, seed, cfg.steps, 0)
    for t in range(1, cfg.steps + 1):
        if variant.learns:
            m = learner.inject_policy_noise(m, cfg.noise_sigma, rng)
            if variant.world_model == LWM:
                m = learner.lwm_learn_step(m, s, a, c, cycles=cfg.projections)
            else:
                m = learner.pwm_plan_step(m, s, a, c, iters=cfg.projections // 2)
        w = apply_action(w, track, body, a)
        s1 = encode_bits(w.sensors)
        e = Experience(s, a, c, s1)
        record(m, e)
        if writer:
            writer.experience(t, e)
        stuck += w.stuck
        c, a = act(m, s1, c, rng)
        s = s1
        if t in when:
            rec = evaluate(build_measure_joints(m), step=t, max_iter=MEASURE_MAX_ITER,
                           meta=dict(meta, success_rate_so_far=1.0 - stuck / t))
            if variant.world_model != LWM:
                rec.psi_synp = None
            result.records.append(rec)
            if writer:
                writer.snapshot(t, m)
    result.stuck_steps = stuck
    if writer:
        writer.close()
    return result


def _run_task(args):
    cfg, variant, length, run_index = args
    seed = derive_seed(cfg.seed, run_index, length)
    run_id = make_run_id(variant, length, run_index)
    try:
        if cfg.log_dir is None:
            return run_one(cfg, variant, length, seed, run_id)
        Path(cfg.log_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(cfg.log_dir) / f"{run_id}.log", "w", encoding="utf-8", newline="") as fh:
            return run_one(cfg, variant, length, seed, run_id, log_file=fh)
    except Exception as exc:  # a failed run is excluded, not fatal
        logger.error("run %s failed: %s", run_id, exc)
        return RunResult(run_id, variant, length, seed, cfg.steps, 0, error=repr(exc))


def run_batch(cfg: ExperimentConfig, progress=None) -> list[RunResult]:
    """All runs of every cell, in deterministic (cell, run index) order."""
    tasks = [(cfg, v, length, r) for v, length in cfg.cells() for r in range(cfg.runs)]
    results = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            for res in pool.map(_run_task, tasks, chunksize=1):
                results.append(res)
                if progress:
                    progress(len(results), len(tasks), res)
    else:
        for task in tasks:
            res = _run_task(task)
            results.append(res)
            if progress:
                progress(len(results), len(tasks), res)
    return results


# --------------------------------------------------------------------------
# classification and aggregation


def threshold_for(variant: AgentVariant) -> float:
    return PWM_THRESHOLD if variant.world_model == PWM else LWM_THRESHOLD


def classify(results: Iterable[RunResult], threshold: Optional[float] = None):
    """Split runs into (successful, unsuccessful); failed runs are dropped.

    With ``threshold=None`` each run uses its variant's threshold.
    """
    good, bad = [], []
    for r in results:
        if r.error is not None:
            logger.info("excluding failed run %s", r.run_id)
            continue
        th = threshold_for(r.variant) if threshold is None else threshold
        (good if r.success_rate > th else bad).append(r)
    return good, bad


def _cell_key(r: RunResult):
    return (r.variant.name, r.variant.topology, r.sensor_len, r.variant.horizon)


def aggregate(results: Sequence[RunResult]) -> dict:
    """Arithmetic means per (variant, sensor length, horizon, step)."""
    sums: dict = defaultdict(lambda: defaultdict(float))
    counts: dict = defaultdict(lambda: defaultdict(int))
    success: dict = defaultdict(list)
    for r in results:
        if r.error is not None:
            continue
        key = _cell_key(r)
        success[key].append(r.success_rate)
        for rec in r.records:
            k = key + (rec.step,)
            for name in MEASURES + ("success_rate_so_far",):
                v = rec.meta.get(name) if name == "success_rate_so_far" else getattr(rec, name)
                if v is not None:
                    sums[k][name] += v
                    counts[k][name] += 1
    cells = []
    for k in sorted(sums, key=lambda k: (k[0], k[1], k[2], -1 if k[3] is None else k[3], k[4])):
        cells.append({
            "variant": k[0], "topology": k[1], "sensor_len": k[2], "horizon": k[3], "step": k[4],
            "mean": {n: sums[k][n] / counts[k][n] for n in sums[k]},
            "count": dict(counts[k]),
        })
    runs = []
    for key in sorted(success, key=lambda k: (k[0], k[1], k[2], -1 if k[3] is None else k[3])):
        rates = success[key]
        runs.append({"variant": key[0], "topology": key[1], "sensor_len": key[2], "horizon": key[3],
                     "runs": len(rates), "mean_success_rate": float(np.mean(rates))})
    return {"schema": SUMMARY_SCHEMA, "units": UNITS, "cells": cells, "success": runs,
            "horizon_ablation": horizon_ablation(results),
            "horizon_ablation_all_runs": horizon_ablation(results, successful_only=False)}


def horizon_ablation(results: Sequence[RunResult], successful_only: bool = True) -> list[dict]:
    """Final-step mean Psi_MC and Phi_EII per PWM sampling horizon.

    Only successful agents count unless ``successful_only`` is false.  Means
    are taken per sensor length first and then averaged across sensor
    lengths.  ``horizon`` is ``None`` for uninterrupted sampling.
    """
    by: dict = defaultdict(lambda: defaultdict(list))
    for r in results:
        if r.error is not None or r.variant.world_model != PWM or not r.records:
            continue
        if successful_only and r.success_rate <= threshold_for(r.variant):
            continue
        by[(r.variant.name, r.variant.horizon)][r.sensor_len].append(r.final())
    out = []
    for (name, h) in sorted(by, key=lambda k: (k[0], math.inf if k[1] is None else k[1])):
        per_len = by[(name, h)]
        mc = [np.mean([rec.psi_mc for rec in recs]) for recs in per_len.values()]
        eii = [np.mean([rec.phi_eii for rec in recs]) for recs in per_len.values()]
        out.append({"variant": name, "horizon": h, "psi_mc": float(np.mean(mc)),
                    "phi_eii": float(np.mean(eii)),
                    "runs": int(sum(len(v) for v in per_len.values()))})
    return out


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def csv_rows(results: Sequence[RunResult]):
    for r in results:
        if r.error is not None:
            continue
        for rec in r.records:
            yield {
                "run_id": r.run_id,
                "variant": r.variant.world_model,
                "topology": r.variant.topology,
                "sensor_len": f"{r.sensor_len:g}",
                "horizon": "full" if r.variant.horizon is None else str(r.variant.horizon),
                "step": str(rec.step),
                "success_rate_so_far": _fmt(rec.meta.get("success_rate_so_far")),
                **{name: _fmt(getattr(rec, name)) for name in MEASURES},
                "seed": str(r.seed),
            }


def write_csv(results: Sequence[RunResult], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in csv_rows(results):
        writer.writerow(row)


def results_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    write_csv(results, buf)
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_outputs(results: Sequence[RunResult], out_dir, manifest: dict) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": out / "results.csv", "summary": out / "summary.json", "manifest": out / "manifest.json"}
    with open(paths["results"], "w", newline="", encoding="utf-8") as fh:
        write_csv(results, fh)
    paths["summary"].write_text(json.dumps(aggregate(results), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
