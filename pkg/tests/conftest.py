"""Shared fixtures and generators of structured random joints."""
from __future__ import annotations

import numpy as np
import pytest

from sensorimotor.agent import (
    COMPLETE,
    LWM,
    PWM,
    SPLIT,
    AgentVariant,
    build_measure_joints,
    init_mechanisms,
)
from sensorimotor.measures import (
    A_T,
    A_T1,
    C_T,
    C_T1,
    S_T,
    S_T1,
    SP_T1,
    LoopJoint,
)
from sensorimotor.prob import JointTable


def dirichlet_rows(rng, shape, alpha=1.0):
    """Random conditional rows over the last axis."""
    return rng.dirichlet(np.full(shape[-1], alpha), size=shape[:-1])


def controller_from(p_sc, c_next, a_next) -> JointTable:
    """Controller joint from P(s1, c_t) [8, 4], P(c1 | s1, c_t) [8, 4, 4], P(a1 | s1, c1) [8, 4, 4]."""
    arr = p_sc[:, :, None, None] * c_next[:, :, :, None] * a_next[:, None, :, :]
    return JointTable(S_T1 + C_T + C_T1 + A_T1, arr)


def random_loop_joint(rng, alpha=1.0) -> LoopJoint:
    """A positive loop joint with the agent's conditional independences.

    Controller bits are independent given (C_t, S_{t+1}); actuator bits are
    independent given (S_{t+1}, C_{t+1}); S_{t+1} depends on (S_t, A_t).
    """
    p_sc = rng.dirichlet(np.full(32, alpha)).reshape(8, 4)
    ctrl = dirichlet_rows(rng, (2, 4, 8, 2), alpha)       # [j, c_t, s1, v]
    pol = dirichlet_rows(rng, (2, 8, 4, 2), alpha)        # [i, s1, c1, v]
    # c1 = 2*b1 + b2 and a1 = 2*a1 + a2
    c_next = np.einsum("csu,csv->scuv", ctrl[0], ctrl[1]).reshape(8, 4, 4)  # [s1, c_t, c1]
    a_next = np.einsum("scu,scv->scuv", pol[0], pol[1]).reshape(8, 4, 4)  # [s1, c1, a1]
    controller = controller_from(p_sc, c_next, a_next)
    p_sa = rng.dirichlet(np.full(32, alpha)).reshape(8, 4)
    trans = dirichlet_rows(rng, (8, 4, 8), alpha)
    world = JointTable(S_T + A_T + S_T1, p_sa[:, :, None] * trans)
    p_ac = rng.dirichlet(np.full(16, alpha)).reshape(4, 4)
    iwm = dirichlet_rows(rng, (4, 4, 8), alpha)
    prediction = JointTable(A_T + C_T + SP_T1, p_ac[:, :, None] * iwm)
    return LoopJoint(controller, world, prediction)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[(LWM, COMPLETE), (LWM, SPLIT), (PWM, COMPLETE), (PWM, SPLIT)],
                ids=lambda p: "-".join(p))
def variant(request):
    return AgentVariant(*request.param)


def agent_joint(variant, seed):
    m = init_mechanisms(variant, np.random.default_rng(seed))
    return m, build_measure_joints(m)


# --------------------------------------------------------------------------
# acceptance report: one line per criterion, printed in the terminal summary

_REPORT = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT] = []


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records and prints one pass/fail line."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[_REPORT].append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
