"""Agent mechanisms, acting, sampled distributions and measure joints.

States of a variable group are integers whose binary digits are the bits,
first bit most significant: a sensor state ``s`` is ``4*left + 2*right +
touch``, controller and actuator states are ``2*b1 + b2``.

Mechanism arrays:

``controller[j, c_t, s_{t+1}, v]``  P(C^j_{t+1} = v | C_t = c_t, S_{t+1})
``policy[i, s_{t+1}, c_{t+1}, v]``  P(A^i_{t+1} = v | S_{t+1}, C_{t+1})
``world[a_t, c_t, s']``             internal world model P(S'_{t+1} | A_t, C_t)
``transitions[s_t, a_t, s_{t+1}]``  transition counts (plus pseudocounts)
``states[s_t, a_t, c_t]``           state counts (plus pseudocounts)
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .measures import A_T, A_T1, C_T, C_T1, CONTROLLER_VARS, S_T, S_T1, SP_T1, LoopJoint
from .prob import CondTable, JointTable, compose, floor_positive, marginalize

logger = logging.getLogger(__name__)

PWM, LWM, RANDOM = "pwm", "lwm", "random"
COMPLETE, SPLIT = "complete", "split"

N_S, N_A, N_C = 8, 4, 4


@dataclass(frozen=True)
class AgentVariant:
    world_model: str = LWM
    topology: str = COMPLETE
    #: transition-sampling horizon in steps; ``None`` samples forever
    horizon: Optional[int] = None

    def __post_init__(self):
        if self.world_model not in (PWM, LWM, RANDOM):
            raise ValueError(f"unknown world model mode {self.world_model!r}")
        if self.topology not in (COMPLETE, SPLIT):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be positive")

    @property
    def name(self) -> str:
        if self.world_model == RANDOM:
            return RANDOM
        return f"{self.world_model}-{self.topology}"

    @property
    def learns(self) -> bool:
        return self.world_model != RANDOM

    @classmethod
    def parse(cls, name: str, horizon: Optional[int] = None) -> "AgentVariant":
        name = name.strip().lower()
        if name == RANDOM:
            return cls(RANDOM, COMPLETE, horizon)
        try:
            mode, topo = name.split("-")
        except ValueError:
            raise ValueError(f"variant must be 'random' or '<pwm|lwm>-<complete|split>', got {name!r}") from None
        return cls(mode, topo, horizon)


class Experience(NamedTuple):
    s_t: int
    a_t: int
    c_t: int
    s_t1: int


def encode_bits(bits) -> int:
    out = 0
    for b in bits:
        out = 2 * out + int(b)
    return out


def decode_bits(value: int, n: int) -> tuple[int, ...]:
    return tuple((value >> (n - 1 - k)) & 1 for k in range(n))


def other_bit_rows(c_t: int, j: int) -> list[int]:
    """Controller states that agree with ``c_t`` on bit ``j``."""
    if j == 0:
        hi = c_t & 2
        return [hi, hi | 1]
    lo = c_t & 1
    return [lo, 2 | lo]


@dataclass
class AgentMechanisms:
    variant: AgentVariant
    controller: np.ndarray
    policy: np.ndarray
    world: np.ndarray
    transitions: np.ndarray
    states: np.ndarray
    alpha: float = 1.0
    n_recorded: int = 0
    n_transitions: int = 0

    def evolve(self, **changes) -> "AgentMechanisms":
        """Shallow copy with some fields replaced (cheaper than dataclasses.replace)."""
        new = copy.copy(self)
        new.__dict__.update(changes)
        return new

    def copy(self) -> "AgentMechanisms":
        return replace(
            self,
            controller=self.controller.copy(), policy=self.policy.copy(), world=self.world.copy(),
            transitions=self.transitions.copy(), states=self.states.copy(),
        )

    def snapshot(self) -> dict:
        """Learned mechanisms (not the counters) as plain lists."""
        return {
            "controller": self.controller.ravel().tolist(),
            "policy": self.policy.ravel().tolist(),
            "world": self.world.ravel().tolist(),
        }

    def with_snapshot(self, snap: dict) -> "AgentMechanisms":
        return replace(
            self,
            controller=np.asarray(snap["controller"], dtype=float).reshape(2, N_C, N_S, 2),
            policy=np.asarray(snap["policy"], dtype=float).reshape(2, N_S, N_C, 2),
            world=np.asarray(snap["world"], dtype=float).reshape(N_A, N_C, N_S),
        )


def _bit_rows(rng, shape):
    p = rng.dirichlet([1.0, 1.0], size=shape)
    return floor_positive(p, axis=-1)


def init_mechanisms(variant: AgentVariant, rng: Optional[np.random.Generator] = None,
                    alpha: float = 1.0) -> AgentMechanisms:
    """Fresh agent.  Learning variants draw every row from Dirichlet(1); the
    random-movement baseline gets uniform rows.  Counters start at ``alpha``."""
    if variant.learns:
        if rng is None:
            raise ValueError("a random generator is needed to initialise a learning agent")
        if variant.topology == SPLIT:
            # rows depend on the own previous bit only: [j, own bit, s, v]
            own = _bit_rows(rng, (2, 2, N_S))
            controller = np.empty((2, N_C, N_S, 2))
            for c in range(N_C):
                controller[0, c] = own[0, c >> 1]
                controller[1, c] = own[1, c & 1]
        else:
            controller = _bit_rows(rng, (2, N_C, N_S))
        policy = _bit_rows(rng, (2, N_S, N_C))
        world = floor_positive(rng.dirichlet(np.ones(N_S), size=(N_A, N_C)), axis=-1)
    else:
        controller = np.full((2, N_C, N_S, 2), 0.5)
        policy = np.full((2, N_S, N_C, 2), 0.5)
        world = np.full((N_A, N_C, N_S), 1.0 / N_S)
    return AgentMechanisms(
        variant=variant, controller=controller, policy=policy, world=world,
        transitions=np.full((N_S, N_A, N_S), float(alpha)),
        states=np.full((N_S, N_A, N_C), float(alpha)),
        alpha=float(alpha),
    )


def is_split(m: AgentMechanisms, atol: float = 0.0) -> bool:
    """Whether every controller row is constant in the other controller bit."""
    c = m.controller
    ok0 = np.allclose(c[0, 0], c[0, 1], rtol=0, atol=atol) and np.allclose(c[0, 2], c[0, 3], rtol=0, atol=atol)
    ok1 = np.allclose(c[1, 0], c[1, 2], rtol=0, atol=atol) and np.allclose(c[1, 1], c[1, 3], rtol=0, atol=atol)
    return ok0 and ok1


# --------------------------------------------------------------------------
# joint views of the mechanisms


def controller_joint(m: AgentMechanisms, c_t: int) -> np.ndarray:
    """P(c_{t+1} | s_{t+1}, c_t) as an ``(8, 4)`` array [s_{t+1}, c_{t+1}]."""
    c0 = m.controller[0, c_t]
    c1 = m.controller[1, c_t]
    return (c0[:, :, None] * c1[:, None, :]).reshape(N_S, N_C)


def policy_joint(m: AgentMechanisms) -> np.ndarray:
    """P(a | s, c) as an ``(8, 4, 4)`` array [s, c, a]."""
    p0, p1 = m.policy[0], m.policy[1]
    return (p0[:, :, :, None] * p1[:, :, None, :]).reshape(N_S, N_C, N_A)


def transition_probs(m: AgentMechanisms) -> np.ndarray:
    """Sampled world model P~(s_{t+1} | s_t, a_t) as ``(8, 4, 8)``."""
    return m.transitions / m.transitions.sum(axis=2, keepdims=True)


def _cond(targets, conditions, arr) -> CondTable:
    return CondTable(targets, conditions, arr.reshape((2,) * (len(conditions) + len(targets))))


def controller_table(m: AgentMechanisms) -> CondTable:
    full = np.stack([controller_joint(m, c) for c in range(N_C)])  # [c_t, s, c1]
    return _cond(C_T1, C_T + S_T1, full)


def policy_table(m: AgentMechanisms) -> CondTable:
    return _cond(A_T1, S_T1 + C_T1, policy_joint(m))


def world_model_table(m: AgentMechanisms) -> CondTable:
    return _cond(SP_T1, A_T + C_T, m.world)


def empirical_world_model(m: AgentMechanisms) -> CondTable:
    """P~(S_{t+1} | S_t, A_t) from the transition counters."""
    return _cond(S_T1, S_T + A_T, transition_probs(m))


def state_distribution(m: AgentMechanisms) -> JointTable:
    """P~(S_t, A_t, C_t) from the state counters."""
    return JointTable.from_array(S_T + A_T + C_T, m.states.reshape((2,) * 7))


def build_measure_joints(m: AgentMechanisms) -> LoopJoint:
    sac = state_distribution(m)
    emp = empirical_world_model(m)
    step = compose(sac, emp)
    base = marginalize(step, C_T + S_T1)
    ctrl = compose(compose(base, controller_table(m)), policy_table(m))
    world = compose(marginalize(sac, S_T + A_T), emp)
    prediction = None
    if m.variant.world_model == LWM:
        prediction = compose(marginalize(sac, A_T + C_T), world_model_table(m))
    return LoopJoint(ctrl.reorder(CONTROLLER_VARS), world, prediction)


# --------------------------------------------------------------------------
# acting and sampling


def act(m: AgentMechanisms, s_t1: int, c_t: int, rng: np.random.Generator) -> tuple[int, int]:
    """Sample (c_{t+1}, a_{t+1}); bits are drawn independently given their parents."""
    u = rng.random(4)
    ctrl = m.controller
    c_new = 2 * int(u[0] < ctrl[0, c_t, s_t1, 1]) + int(u[1] < ctrl[1, c_t, s_t1, 1])
    pol = m.policy
    a_new = 2 * int(u[2] < pol[0, s_t1, c_new, 1]) + int(u[3] < pol[1, s_t1, c_new, 1])
    return c_new, a_new


def record(m: AgentMechanisms, e: Experience) -> AgentMechanisms:
    """Add one experience to the counters (in place).  Transition counting
    stops once the variant's sampling horizon has been reached."""
    m.states[e.s_t, e.a_t, e.c_t] += 1
    horizon = m.variant.horizon
    if horizon is None or m.n_recorded < horizon:
        m.transitions[e.s_t, e.a_t, e.s_t1] += 1
        m.n_transitions += 1
    m.n_recorded += 1
    return m


# --------------------------------------------------------------------------
# experience log

LOG_MAGIC = "#sensorimotor-experience v1"


class LogFormatError(ValueError):
    def __init__(self, message: str, offset: int, line: int):
        super().__init__(f"{message} (line {line}, byte offset {offset})")
        self.offset = offset
        self.line = line


class ExperienceLogWriter:
    """Line-oriented text log of a run.

    ``#meta <json>`` once after the magic line, then ``E,step,s,a,c,s'``
    per step and ``M,step,<json>`` mechanism snapshots at measurement steps,
    closed by ``END,<number of E lines>``.
    """

    def __init__(self, fh, meta: dict):
        self.fh = fh
        self.count = 0
        fh.write(LOG_MAGIC + "\n")
        fh.write("#meta " + json.dumps(meta, sort_keys=True) + "\n")

    def experience(self, step: int, e: Experience) -> None:
        self.fh.write(f"E,{step},{e.s_t},{e.a_t},{e.c_t},{e.s_t1}\n")
        self.count += 1

    def snapshot(self, step: int, m: AgentMechanisms) -> None:
        self.fh.write(f"M,{step}," + json.dumps(m.snapshot()) + "\n")

    def close(self) -> None:
        self.fh.write(f"END,{self.count}\n")


class LogEntry(NamedTuple):
    kind: str
    step: int
    payload: object


def read_experience_log(text: str) -> tuple[dict, list[LogEntry]]:
    """Parse a log; raises :class:`LogFormatError` on damage or truncation."""
    offset = 0
    entries: list[LogEntry] = []
    meta = None
    ended = False
    n_exp = 0
    lines = text.splitlines(keepends=True)
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        here = offset
        offset += len(raw.encode())
        if lineno == 1:
            if line != LOG_MAGIC:
                raise LogFormatError("not an experience log (bad magic line)", here, lineno)
            continue
        if ended:
            raise LogFormatError("content after END record", here, lineno)
        if not raw.endswith("\n"):
            raise LogFormatError("truncated record", here, lineno)
        if line.startswith("#meta "):
            meta = json.loads(line[6:])
            continue
        kind, _, rest = line.partition(",")
        try:
            if kind == "E":
                vals = [int(x) for x in rest.split(",")]
                if len(vals) != 5:
                    raise ValueError
                step, s, a, c, s1 = vals
                if not (0 <= s < N_S and 0 <= a < N_A and 0 <= c < N_C and 0 <= s1 < N_S):
                    raise ValueError
                entries.append(LogEntry("E", step, Experience(s, a, c, s1)))
                n_exp += 1
            elif kind == "M":
                step_s, _, js = rest.partition(",")
                entries.append(LogEntry("M", int(step_s), json.loads(js)))
            elif kind == "END":
                if int(rest) != n_exp:
                    raise LogFormatError(f"END count {rest} does not match {n_exp} records", here, lineno)
                ended = True
            else:
                raise ValueError
        except (ValueError, json.JSONDecodeError) as exc:
            if isinstance(exc, LogFormatError):
                raise
            raise LogFormatError(f"malformed record {line[:40]!r}", here, lineno) from None
    if meta is None and lines:
        raise LogFormatError("missing #meta header", offset, len(lines))
    if not lines:
        raise LogFormatError("empty file", 0, 0)
    if not ended:
        raise LogFormatError("log truncated: no END record", offset, len(lines))
    return meta, entries


def replay_entries(meta: dict, entries: list[LogEntry]) -> Iterator[tuple[int, AgentMechanisms]]:
    """Rebuild counters from the log; yield (step, mechanisms) at every snapshot."""
    variant = AgentVariant.parse(meta["variant"], meta.get("horizon"))
    # uniform mechanisms until the first snapshot replaces them
    m = replace(init_mechanisms(AgentVariant(RANDOM), alpha=meta.get("alpha", 1.0)), variant=variant)
    for entry in entries:
        if entry.kind == "E":
            record(m, entry.payload)
        else:
            yield entry.step, m.with_snapshot(entry.payload)
    if not any(e.kind == "M" for e in entries):
        yield 0, m
