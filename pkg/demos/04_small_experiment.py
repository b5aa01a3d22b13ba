"""A small batch experiment and its summary.

This is the desk-scale experiment at reduced size: a few runs per cell,
then classification into successful and unsuccessful agents and the same
summaries the acceptance suite checks.  Outputs go to ``demo_results/``.

Run with ``python demos/04_small_experiment.py [runs] [steps]``; the command
line equivalent is ``sensorimotor run --runs 4 --steps 600``.
"""
from __future__ import annotations

import sys
from collections import defaultdict

import numpy as np

from sensorimotor.harness import ExperimentConfig, aggregate, classify, run_batch, write_outputs


def main(runs: int = 4, steps: int = 600) -> None:
    cfg = ExperimentConfig(variants=("lwm-complete", "lwm-split", "pwm-complete", "random"),
                           sensor_lengths=(1.0, 2.0), runs=runs, steps=steps, horizons=(100, None),
                           out="demo_results")
    results = run_batch(cfg, progress=lambda done, n, r: print(f"\r{done}/{n} runs", end="", flush=True))
    print()

    cells = defaultdict(list)
    for r in results:
        cells[(r.variant.name, r.variant.horizon, r.sensor_len)].append(r)
    print(f"{'cell':34s} {'success':>8s} {'ok':>3s} {'phi_iit':>8s} {'psi_mc':>7s}")
    for (name, h, length), rs in sorted(cells.items(), key=lambda kv: str(kv[0])):
        good, _ = classify(rs)
        label = f"{name} L={length:g}" + ("" if h is None else f" horizon {h}")
        print(f"{label:34s} {np.mean([r.success_rate for r in rs]):8.3f} {len(good):3d} "
              f"{np.mean([r.final().phi_iit for r in rs]):8.3f} {np.mean([r.final().psi_mc for r in rs]):7.3f}")

    summary = aggregate(results)
    print("\nPWM sampling horizon (successful agents):")
    if not summary["horizon_ablation"]:
        print("  (no successful PWM agents)")
    for row in summary["horizon_ablation"]:
        print(f"  {row['horizon'] or 'full'}: psi_mc {row['psi_mc']:.3f}, phi_eii {row['phi_eii']:.5f}, {row['runs']} runs")
    paths = write_outputs(results, cfg.out, {"seed": cfg.seed, "source": "demo"})
    print("\nwrote", ", ".join(str(p) for p in paths.values()))


if __name__ == "__main__":
    main(*(int(x) for x in sys.argv[1:3]))
