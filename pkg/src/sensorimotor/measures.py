"""Information-flow measures of the sensorimotor loop.

Each measure is the KL distance from the loop distribution to the closest
member of a "split" family lacking one information flow.  Four of them reduce
to sums of conditional mutual information terms; synergistic prediction has no
closed form and is computed with iterative scaling.

Variable naming follows :func:`bits`: ``S1_t`` ... ``S3_t`` are the sensors
at time t (left ray, right ray, touch), ``C1_t+1`` the first controller bit
at t+1, ``S'2_t+1`` the second bit of the internal prediction, and so on.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .prob import (
    DomainError,
    JointTable,
    UNITS,
    cond_mutual_information,
    ipf_fit,
    kl_divergence,
)


def bits(group: str, time: str, n: int) -> tuple[str, ...]:
    return tuple(f"{group}{i}_{time}" for i in range(1, n + 1))


S_T = bits("S", "t", 3)
A_T = bits("A", "t", 2)
C_T = bits("C", "t", 2)
S_T1 = bits("S", "t+1", 3)
A_T1 = bits("A", "t+1", 2)
C_T1 = bits("C", "t+1", 2)
SP_T1 = bits("S'", "t+1", 3)

CONTROLLER_VARS = S_T1 + C_T + C_T1 + A_T1
WORLD_VARS = S_T + A_T + S_T1
PREDICTION_VARS = A_T + C_T + SP_T1

MEASURES = ("phi_iit", "psi_si", "psi_c", "phi_eii", "psi_mc", "psi_synp")


@dataclass(frozen=True)
class LoopJoint:
    """The three joints the measures are evaluated on.

    controller: over (S_{t+1}, C_t, C_{t+1}, A_{t+1})
    world:      over (S_t, A_t, S_{t+1})
    prediction: over (A_t, C_t, S'_{t+1}); only agents with an internal
                world model have one.
    """

    controller: JointTable
    world: JointTable
    prediction: Optional[JointTable] = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "sensorimotor-loopjoint",
                "version": 1,
                "units": UNITS,
                "controller": self.controller.to_dict(),
                "world": self.world.to_dict(),
                "prediction": None if self.prediction is None else self.prediction.to_dict(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "LoopJoint":
        d = json.loads(text)
        if d.get("format") != "sensorimotor-loopjoint":
            raise ValueError("not a serialized LoopJoint")
        if d.get("version") != 1:
            raise ValueError(f"unsupported LoopJoint version {d.get('version')!r}")
        pred = d.get("prediction")
        return cls(
            JointTable.from_dict(d["controller"]),
            JointTable.from_dict(d["world"]),
            None if pred is None else JointTable.from_dict(pred),
        )


@dataclass
class MeasureRecord:
    """All measures of one agent at one step, in nats."""

    phi_iit: float
    psi_si: float
    psi_c: float
    phi_eii: float
    psi_mc: float
    psi_synp: Optional[float] = None
    step: int = 0
    meta: dict = field(default_factory=dict)

    def values(self) -> dict:
        return {k: getattr(self, k) for k in MEASURES}

    def to_dict(self) -> dict:
        return asdict(self)


def _table(j, attr: str, needed) -> JointTable:
    t = getattr(j, attr) if isinstance(j, LoopJoint) else j
    if t is None:
        raise DomainError(f"loop joint has no {attr} table")
    missing = [v for v in needed if v not in t.vars]
    if missing:
        raise DomainError(f"missing variables {missing}")
    return t


def phi_iit(j) -> float:
    """Integrated information: sum_j I(C^j_{t+1}; C^{-j}_t | C^j_t, S_{t+1})."""
    p = _table(j, "controller", S_T1 + C_T + C_T1)
    total = 0.0
    for k in range(len(C_T)):
        others = tuple(c for i, c in enumerate(C_T) if i != k)
        total += cond_mutual_information(p, [C_T1[k]], others, (C_T[k],) + S_T1)
    return total


def psi_si(j) -> float:
    """Sensory information: sum_j I(C^j_{t+1}; S_{t+1} | C_t)."""
    p = _table(j, "controller", S_T1 + C_T + C_T1)
    return sum(cond_mutual_information(p, [c], S_T1, C_T) for c in C_T1)


def psi_c(j) -> float:
    """Control: sum_i I(A^i_{t+1}; C_{t+1} | S_{t+1})."""
    p = _table(j, "controller", S_T1 + C_T1 + A_T1)
    return sum(cond_mutual_information(p, [a], C_T1, S_T1) for a in A_T1)


def phi_eii(phi: float, si: float, c: float) -> float:
    """Effective information integration, the product of the three factors."""
    return phi * si * c


def psi_mc(j) -> float:
    """Morphological computation I(S_{t+1}; S_t | A_t) on the world joint."""
    p = _table(j, "world", WORLD_VARS)
    return cond_mutual_information(p, S_T1, S_T, A_T)


def synergy_fit(j, tol: float = 1e-9, max_iter: int = 1000) -> tuple[JointTable, JointTable]:
    """Prediction joint and its max-entropy fit with the same pairwise marginals."""
    p = _table(j, "prediction", PREDICTION_VARS)
    q = ipf_fit(p, [A_T + C_T, A_T + SP_T1, C_T + SP_T1], tol=tol, max_iter=max_iter)
    return p, q


def psi_synp(j, tol: float = 1e-9, max_iter: int = 1000) -> float:
    """Synergistic prediction: KL from P(A_t, C_t, S'_{t+1}) to its pairwise max-ent fit."""
    p, q = synergy_fit(j, tol, max_iter)
    return kl_divergence(p, q)


def evaluate(j: LoopJoint, step: int = 0, meta: dict | None = None,
             tol: float = 1e-9, max_iter: int = 1000) -> MeasureRecord:
    """Compute every applicable measure of ``j``."""
    phi, si, c = phi_iit(j), psi_si(j), psi_c(j)
    synp = psi_synp(j, tol, max_iter) if j.prediction is not None else None
    return MeasureRecord(
        phi_iit=phi, psi_si=si, psi_c=c, phi_eii=phi_eii(phi, si, c),
        psi_mc=psi_mc(j), psi_synp=synp, step=step, meta=dict(meta or {}),
    )


def format_record(rec: MeasureRecord) -> str:
    lines = [f"# units: {UNITS}"]
    for name, v in rec.values().items():
        lines.append(f"{name:9s} " + ("n/a" if v is None or (isinstance(v, float) and math.isnan(v))
                                       else f"{v:.12g}"))
    return "\n".join(lines)
