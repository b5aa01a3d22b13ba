"""Planning as inference and the modified em-algorithm.

Learning happens on a planning joint over one step ahead of the realized
state ``(s_t, a_t, c_t)``::

    P(s1, c1, a1, s2) = first(s1) * ctrl_{c_t}(c1 | s1) * pol(a1 | s1, c1) * world(s2 | ...)

stored as an ``(8, 4, 4, 8)`` array indexed ``[s1, c1, a1, s2]``.  Agents with
a perfect world model use the sampled transitions for ``first`` and
``world``; agents with a learned world model use their internal world model
row at ``(a_t, c_t)`` for ``first`` and ``world(s2 | a1, c1)`` afterwards.

The goal event is "touch bit of s2 is clear".
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .agent import (
    LWM,
    N_A,
    N_C,
    N_S,
    SPLIT,
    AgentMechanisms,
    controller_joint,
    other_bit_rows,
    policy_joint,
    transition_probs,
)
from .measures import bits
from .prob import JointTable, floor_positive

logger = logging.getLogger(__name__)

#: 1 for sensor states without wall contact
GOAL_MASK = np.array([0.0 if s & 1 else 1.0 for s in range(N_S)])

DEFAULT_PROJECTIONS = 15
DEFAULT_NOISE = 0.01

CONTROLLER, POLICY, WORLD = "controller", "policy", "world"
LWM_CYCLE = ("goal_e", "agent_m", "world_e", "world_m")


@dataclass(frozen=True)
class ManifoldSpec:
    """Which mechanism factors an m-projection may change."""

    free: frozenset

    def __post_init__(self):
        unknown = set(self.free) - {CONTROLLER, POLICY, WORLD}
        if unknown:
            raise ValueError(f"unknown factors {sorted(unknown)}")

    @property
    def fixed(self) -> frozenset:
        return frozenset({CONTROLLER, POLICY, WORLD}) - self.free


AGENT_MANIFOLD = ManifoldSpec(frozenset({CONTROLLER, POLICY}))
WORLD_MANIFOLD = ManifoldSpec(frozenset({WORLD}))


@dataclass(frozen=True)
class PlanningJoint:
    probs: np.ndarray
    context: tuple[int, int, int]
    predicted: bool = False

    @property
    def goal_mass(self) -> float:
        return float((self.probs * GOAL_MASK).sum())

    def to_joint(self) -> JointTable:
        """The same distribution as a bitwise :class:`JointTable`."""
        g = "S'" if self.predicted else "S"
        names = bits(g, "t+1", 3) + bits("C", "t+1", 2) + bits("A", "t+1", 2) + bits(g, "t+2", 3)
        return JointTable(names, self.probs.reshape((2,) * 10))


def kl(q: np.ndarray, p: np.ndarray) -> float:
    """D(q || p) for planning arrays (natural log)."""
    mask = q > 0
    return float(np.sum(q[mask] * np.log(q[mask] / p[mask])))


# --------------------------------------------------------------------------
# building planning joints


def world_tensor(m: AgentMechanisms) -> np.ndarray:
    """Prediction factor for s2, broadcastable to ``(8, 4, 4, 8)``."""
    if m.variant.world_model == LWM:
        return m.world.transpose(1, 0, 2)[None]  # [1, c1, a1, s2]
    return transition_probs(m)[:, None]  # [s1, 1, a1, s2]


def first_factor(m: AgentMechanisms, s_t: int, a_t: int, c_t: int) -> np.ndarray:
    if m.variant.world_model == LWM:
        return m.world[a_t, c_t]
    return transition_probs(m)[s_t, a_t]


def planning_array(first, ctrl_row, pol, world) -> np.ndarray:
    head = (first[:, None] * ctrl_row)[:, :, None] * pol
    return head[..., None] * world


def compose_planning(m: AgentMechanisms, s_t: int, a_t: int, c_t: int,
                     world: Optional[np.ndarray] = None,
                     first: Optional[np.ndarray] = None) -> PlanningJoint:
    world = world_tensor(m) if world is None else world
    first = first_factor(m, s_t, a_t, c_t) if first is None else first
    arr = planning_array(first, controller_joint(m, c_t), policy_joint(m), world)
    return PlanningJoint(arr, (s_t, a_t, c_t), m.variant.world_model == LWM)


# --------------------------------------------------------------------------
# projections


def e_project_goal(p: PlanningJoint) -> Optional[PlanningJoint]:
    """Condition on the goal event; ``None`` when the goal has no mass."""
    q = p.probs * GOAL_MASK
    mass = q.sum()
    if mass <= 0:
        logger.info("goal event has zero mass at context %s; skipping goal phase", p.context)
        return None
    return replace(p, probs=q / mass)


def _conditional(joint: np.ndarray, margin: np.ndarray) -> np.ndarray:
    """joint / margin with undefined rows replaced by uniform (logged)."""
    bad = margin <= 0
    if not bad.any():
        return joint / margin[..., None]
    logger.info("uniform fallback for %d undefined conditional row(s)", int(bad.sum()))
    out = joint / np.where(bad, 1.0, margin)[..., None]
    out[bad] = 1.0 / joint.shape[-1]
    return out


def _floor(rows: np.ndarray) -> np.ndarray:
    return floor_positive(rows, axis=-1)


def m_project(q: PlanningJoint, spec: ManifoldSpec, frozen: AgentMechanisms) -> AgentMechanisms:
    """Replace the free factors of ``frozen`` by the matching conditionals of ``q``."""
    s_t, a_t, c_t = q.context
    arr = q.probs
    changes = {}
    if CONTROLLER in spec.free or POLICY in spec.free:
        # [s1, c1 bit 1, c1 bit 2, a1 bit 1, a1 bit 2]
        q_sca = arr.sum(axis=3).reshape(N_S, 2, 2, 2, 2)
        q_sc = q_sca.sum(axis=(3, 4))
    if CONTROLLER in spec.free:
        q_s = q_sc.sum(axis=(1, 2))
        rows = (_floor(_conditional(q_sc.sum(axis=2), q_s)),
                _floor(_conditional(q_sc.sum(axis=1), q_s)))
        controller = frozen.controller.copy()
        for j in (0, 1):
            controller[j, c_t] = rows[j]
            if frozen.variant.topology == SPLIT:
                # the tied rows of a split agent all take the new row
                for c in other_bit_rows(c_t, j):
                    controller[j, c] = rows[j]
        changes["controller"] = controller
    if POLICY in spec.free:
        q_sc = q_sc.reshape(N_S, N_C)
        policy = np.empty_like(frozen.policy)
        policy[0] = _floor(_conditional(q_sca.sum(axis=4).reshape(N_S, N_C, 2), q_sc))
        policy[1] = _floor(_conditional(q_sca.sum(axis=3).reshape(N_S, N_C, 2), q_sc))
        changes["policy"] = policy
    if WORLD in spec.free:
        # the internal model appears twice (first factor and s2 factor); the
        # minimiser pools both expected counts
        weights = arr.sum(axis=0).transpose(1, 0, 2).copy()   # [a1, c1, s2]
        weights[a_t, c_t] += arr.sum(axis=(1, 2, 3))
        changes["world"] = _floor(_conditional(weights, weights.sum(axis=2)))
    return frozen.evolve(**changes)


def m_project_agent(q: PlanningJoint, frozen: AgentMechanisms,
                    spec: ManifoldSpec = AGENT_MANIFOLD) -> AgentMechanisms:
    return m_project(q, spec, frozen)


def m_project_world(q: PlanningJoint, frozen: AgentMechanisms) -> AgentMechanisms:
    return m_project(q, WORLD_MANIFOLD, frozen)


def world_target(p: PlanningJoint, empirical: np.ndarray,
                 frozen_margin: Optional[np.ndarray] = None) -> np.ndarray:
    """P̄(s1, a1) * P~(s2 | s1, a1) as an ``(8, 4, 8)`` array."""
    if frozen_margin is None:
        frozen_margin = p.probs.sum(axis=(1, 3))
    return frozen_margin[:, :, None] * empirical


def e_project_world(p: PlanningJoint, empirical: np.ndarray,
                    frozen_margin: Optional[np.ndarray] = None) -> PlanningJoint:
    """Closest joint (in D(Q || p)) whose (s1, a1, s2) marginal is P̄ * P~.

    ``empirical`` is P~(s2 | s1, a1) as ``(8, 4, 8)``; ``frozen_margin``
    defaults to p's own (s1, a1) marginal.  A single scaling step solves the
    single-marginal constraint exactly.
    """
    target = world_target(p, empirical, frozen_margin)
    current = p.probs.sum(axis=1)  # [s1, a1, s2]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(current > 0, target / current, 0.0)
    return replace(p, probs=p.probs * ratio[:, None])


def inject_policy_noise(m: AgentMechanisms, sigma: float, rng: np.random.Generator) -> AgentMechanisms:
    """Add N(0, sigma) to every policy entry, floor at EPS and renormalise."""
    if sigma == 0:
        return m
    noisy = m.policy + rng.normal(0.0, sigma, size=m.policy.shape)
    return m.evolve(policy=_floor(noisy))


# --------------------------------------------------------------------------
# learning steps


def pwm_plan_step(m: AgentMechanisms, s_t: int, a_t: int, c_t: int, iters: int = DEFAULT_PROJECTIONS // 2,
                  world: Optional[np.ndarray] = None, first: Optional[np.ndarray] = None,
                  diagnostics: Optional[list] = None) -> AgentMechanisms:
    """Standard em: alternate goal e-projection and agent m-projection.

    ``world``/``first`` override the prediction factors (defaults come from
    the agent's variant).  When ``diagnostics`` is a list, one dict per
    cycle is appended with the goal mass before the cycle; a final entry
    holds the mass after the last update.
    """
    world = world_tensor(m) if world is None else world
    first = first_factor(m, s_t, a_t, c_t) if first is None else first
    for it in range(iters):
        p = compose_planning(m, s_t, a_t, c_t, world, first)
        q = e_project_goal(p)
        if diagnostics is not None:
            diagnostics.append({"cycle": it, "goal_mass": p.goal_mass,
                                "kl_goal": -np.log(p.goal_mass) if q is not None else np.inf})
        if q is None:
            if diagnostics is not None:
                diagnostics.append({"cycle": it, "skipped": True})
            return m
        m = m_project_agent(q, m)
    if diagnostics is not None:
        p = compose_planning(m, s_t, a_t, c_t, world, first)
        diagnostics.append({"cycle": iters, "goal_mass": p.goal_mass, "kl_goal": -np.log(p.goal_mass)})
    return m


def projection_schedule(n: int) -> list[str]:
    """The first ``n`` projections of the repeating four-projection cycle."""
    return [LWM_CYCLE[k % 4] for k in range(n)]


def lwm_learn_step(m: AgentMechanisms, s_t: int, a_t: int, c_t: int, cycles: int = DEFAULT_PROJECTIONS,
                   empirical: Optional[np.ndarray] = None,
                   diagnostics: Optional[list] = None) -> AgentMechanisms:
    """Modified em: goal phase then world-model phase, ``cycles`` projections in total.

    Diagnostics (if a list is given) get one dict per projection with its
    phase KL before and after.  For m-projections "before" is D(Q || P_old);
    for e-projections it is the divergence of a feasible reference point
    (the previous projection of the same phase, carried into the current
    constraint set), so ``kl_after <= kl_before`` is the e-projection
    optimality check.
    """
    emp = transition_probs(m) if empirical is None else empirical
    q_goal = q_world = None
    goal_blocked = False
    for op in projection_schedule(cycles):
        if op == "goal_e":
            p = compose_planning(m, s_t, a_t, c_t)
            q_new = e_project_goal(p)
            goal_blocked = q_new is None
            if diagnostics is not None:
                entry = {"op": op, "goal_mass": p.goal_mass, "skipped": goal_blocked}
                if not goal_blocked:
                    entry["kl_after"] = kl(q_new.probs, p.probs)
                    entry["kl_before"] = None if q_goal is None else kl(q_goal.probs, p.probs)
                diagnostics.append(entry)
            if not goal_blocked:
                q_goal = q_new
        elif op == "agent_m":
            if goal_blocked:
                continue
            m_new = m_project_agent(q_goal, m)
            if diagnostics is not None:
                before = kl(q_goal.probs, compose_planning(m, s_t, a_t, c_t).probs)
                after = kl(q_goal.probs, compose_planning(m_new, s_t, a_t, c_t).probs)
                diagnostics.append({"op": op, "kl_before": before, "kl_after": after})
            m = m_new
        elif op == "world_e":
            p = compose_planning(m, s_t, a_t, c_t)
            q_new = e_project_world(p, emp)
            if diagnostics is not None:
                entry = {"op": op, "kl_after": kl(q_new.probs, p.probs), "kl_before": None}
                if q_world is not None:
                    # previous world projection moved into the current constraint set
                    target = world_target(p, emp)
                    prev = q_world.probs
                    prev_margin = prev.sum(axis=1)
                    with np.errstate(invalid="ignore", divide="ignore"):
                        ratio = np.where(prev_margin > 0, target / prev_margin, 0.0)
                    entry["kl_before"] = kl(prev * ratio[:, None], p.probs)
                diagnostics.append(entry)
            q_world = q_new
        else:  # world_m
            m_new = m_project_world(q_world, m)
            if diagnostics is not None:
                before = kl(q_world.probs, compose_planning(m, s_t, a_t, c_t).probs)
                after = kl(q_world.probs, compose_planning(m_new, s_t, a_t, c_t).probs)
                diagnostics.append({"op": op, "kl_before": before, "kl_after": after})
            m = m_new
    return m
