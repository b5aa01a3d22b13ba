"""One agent on the racetrack, step by step.

The loop below is the same one the harness runs: inject policy noise, learn
one step ahead of the realized state, move, sense, record the experience and
sample the next controller state and action.  Every few hundred steps it
prints the running success rate and the measures of the agent so far.

Run with ``python demos/02_one_agent_on_the_track.py [lwm-complete] [steps]``.
"""
from __future__ import annotations

import sys

import numpy as np

from sensorimotor import learner
from sensorimotor.agent import AgentVariant, Experience, act, build_measure_joints, encode_bits, init_mechanisms, record
from sensorimotor.env import BodySpec, apply_action, load_track, spawn
from sensorimotor.harness import MEASURE_MAX_ITER
from sensorimotor.measures import evaluate

ACTIONS = ("slow", "left", "right", "fast")


def main(variant_name: str = "lwm-complete", steps: int = 1_000, seed: int = 1) -> None:
    variant = AgentVariant.parse(variant_name)
    track = load_track()
    body = BodySpec(sensor_length=1.0)
    rng = np.random.default_rng(seed)

    w = spawn(track, body, rng)
    m = init_mechanisms(variant, rng)
    s = encode_bits(w.sensors)
    c, a = act(m, s, int(rng.integers(4)), rng)
    print(f"{variant.name}: spawned at ({w.x:.2f}, {w.y:.2f}) heading {np.degrees(w.heading):.0f} deg")

    stuck = 0
    usage = np.zeros(4, dtype=int)
    for t in range(1, steps + 1):
        if variant.learns:
            m = learner.inject_policy_noise(m, learner.DEFAULT_NOISE, rng)
            if variant.world_model == "lwm":
                m = learner.lwm_learn_step(m, s, a, c)
            else:
                m = learner.pwm_plan_step(m, s, a, c)
        w = apply_action(w, track, body, a)
        s1 = encode_bits(w.sensors)
        record(m, Experience(s, a, c, s1))
        stuck += w.stuck
        usage[a] += 1
        c, a = act(m, s1, c, rng)
        s = s1
        if t % 250 == 0 or t == steps:
            rec = evaluate(build_measure_joints(m), step=t, max_iter=MEASURE_MAX_ITER)
            synp = "n/a" if rec.psi_synp is None else f"{rec.psi_synp:.3f}"
            print(f"step {t:5d}  success {1 - stuck / t:.3f}  phi_iit {rec.phi_iit:.3f}  "
                  f"psi_mc {rec.psi_mc:.3f}  psi_c {rec.psi_c:.4f}  psi_synp {synp}")
    print("action usage:", ", ".join(f"{n} {k / steps:.0%}" for n, k in zip(ACTIONS, usage)))


if __name__ == "__main__":
    name = sys.argv[1] if len(sys.argv) > 1 else "lwm-complete"
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 1_000
    main(name, n)
