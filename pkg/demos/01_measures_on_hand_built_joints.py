"""Measures on hand-built joints.

Each measure is a KL divergence from the loop distribution to a family that
deletes some edges.  Building joints by hand shows which edge each one sees:

* a controller whose bits ignore each other has no integrated information;
* a controller bit that copies a sensor bit carries log 2 of sensory information;
* an actuator that copies a controller bit carries log 2 of control;
* a prediction that depends on the XOR of action and controller bits is pure synergy.

Run with ``python demos/01_measures_on_hand_built_joints.py``.
"""
from __future__ import annotations

import math

import numpy as np

from sensorimotor.measures import (
    A_T,
    A_T1,
    C_T,
    C_T1,
    S_T,
    S_T1,
    SP_T1,
    WORLD_VARS,
    LoopJoint,
    evaluate,
    format_record,
)
from sensorimotor.prob import JointTable


def controller(p_sc, c_next, a_next) -> JointTable:
    """Joint over (S_{t+1}, C_t, C_{t+1}, A_{t+1}) from its three factors."""
    arr = p_sc[:, :, None, None] * c_next[:, :, :, None] * a_next[:, None, :, :]
    return JointTable(S_T1 + C_T + C_T1 + A_T1, arr)


def bits_to_state(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """Distribution of a 2-bit state from the probabilities that each bit is 1."""
    p1 = np.stack([1 - b1, b1], axis=-1)
    p2 = np.stack([1 - b2, b2], axis=-1)
    return (p1[..., :, None] * p2[..., None, :]).reshape(p1.shape[:-1] + (4,))


def main() -> None:
    rng = np.random.default_rng(0)
    p_sc = np.full((8, 4), 1 / 32)
    world = JointTable.from_array(WORLD_VARS, rng.random((2,) * 8) + 0.1)
    uniform_policy = np.full((8, 4, 4), 0.25)

    print("1) each controller bit depends only on its own past and the sensors")
    own = rng.random((2, 2, 8))  # [bit, own previous value, s]
    b1 = np.array([[own[0, c >> 1, s] for c in range(4)] for s in range(8)])
    b2 = np.array([[own[1, c & 1, s] for c in range(4)] for s in range(8)])
    split = LoopJoint(controller(p_sc, bits_to_state(b1, b2), uniform_policy), world)
    print(format_record(evaluate(split)))

    print("2) the first controller bit copies the left ray sensor")
    left = np.array([[float(s >> 2) for _ in range(4)] for s in range(8)])
    copy = LoopJoint(controller(p_sc, bits_to_state(left, np.full((8, 4), 0.5)), uniform_policy), world)
    rec = evaluate(copy)
    print(f"   psi_si = {rec.psi_si:.6f}, log 2 = {math.log(2):.6f}")

    print("3) the first actuator bit copies the first controller bit")
    a_first = np.array([[float(c >> 1) for c in range(4)] for _ in range(8)])
    policy = bits_to_state(a_first, np.full((8, 4), 0.5))
    rec = evaluate(LoopJoint(controller(p_sc, np.full((8, 4, 4), 0.25), policy), world))
    print(f"   psi_c = {rec.psi_c:.6f}")

    print("4) the predicted touch bit is the XOR of one action bit and one controller bit")
    arr = np.zeros((4, 4, 8))
    for a in range(4):
        for c in range(4):
            arr[a, c, (a & 1) ^ (c & 1)] = 1.0
    xor = LoopJoint(split.controller, world, JointTable.from_array(A_T + C_T + SP_T1, arr))
    print(f"   psi_synp = {evaluate(xor).psi_synp:.6f}")

    print("5) the next sensor state is a noisy copy of the current one")
    keep = np.full((8, 4, 8), 0.02 / 7)
    for s in range(8):
        keep[s, :, s] = 0.98
    sticky = JointTable(S_T + A_T + S_T1, np.full((8, 4, 1), 1 / 32) * keep)
    print(f"   psi_mc = {evaluate(LoopJoint(split.controller, sticky)).psi_mc:.6f} nats")


if __name__ == "__main__":
    main()
