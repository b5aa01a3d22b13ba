"""Watching one planning step converge.

A PWM agent conditions its one-step-ahead model on "no wall contact two
steps from now" and refits its controller and policy to that conditioned
joint.  The goal probability can only grow from cycle to cycle.

An LWM agent interleaves that goal phase with a world phase that pulls its
internal model towards the sampled transitions.  Each projection can only
lower the divergence of its own phase, which the diagnostics show.

Run with ``python demos/03_planning_as_inference.py``.
"""
from __future__ import annotations

import numpy as np

from sensorimotor import learner
from sensorimotor.agent import AgentVariant, init_mechanisms


def main(seed: int = 3) -> None:
    rng = np.random.default_rng(seed)
    pwm = init_mechanisms(AgentVariant.parse("pwm-complete"), rng)
    # pretend the agent has seen some transitions already
    pwm.transitions[:] = rng.integers(1, 30, size=pwm.transitions.shape)
    diag = []
    learner.pwm_plan_step(pwm, 2, 3, 1, diagnostics=diag)
    print("PWM planning step: goal probability per em cycle")
    for d in diag:
        print(f"  cycle {d['cycle']}: {d['goal_mass']:.6f}")

    lwm = init_mechanisms(AgentVariant.parse("lwm-complete"), rng)
    lwm.transitions[:] = pwm.transitions
    diag = []
    learner.lwm_learn_step(lwm, 2, 3, 1, diagnostics=diag)
    print("\nLWM learning step: divergence of each projection's phase")
    for k, d in enumerate(diag):
        before = "   (first)" if d.get("kl_before") is None else f"{d['kl_before']:10.6f}"
        print(f"  {k + 1:2d} {d['op']:8s} before {before}  after {d.get('kl_after', float('nan')):.6f}")


if __name__ == "__main__":
    main()
