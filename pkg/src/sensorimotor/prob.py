"""Exact discrete probability tables over small sets of binary variables.

A :class:`JointTable` stores a distribution as a dense ``(2,) * n`` array whose
axes follow the order of ``vars``; flattening it in C order gives the
mixed-radix encoding with the first variable as the most significant bit.
A :class:`CondTable` stores one distribution over its targets for every state
of its conditions.

All logarithms are natural, so every information quantity is in nats.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

#: Positivity floor applied to tables flagged ``positive``.
EPS = 1e-12

UNITS = "nats"


class DomainError(ValueError):
    """Raised for unknown, duplicated or colliding variables."""


class IPFConvergenceError(RuntimeError):
    """Iterative scaling did not reach the requested tolerance."""

    def __init__(self, deviation: float, iterations: int):
        super().__init__(
            f"iterative scaling did not converge after {iterations} sweeps "
            f"(max marginal deviation {deviation:.3e})"
        )
        self.deviation = deviation
        self.iterations = iterations


def _as_names(names: Iterable[str] | str) -> tuple[str, ...]:
    if isinstance(names, str):
        return (names,)
    return tuple(names)


def _check_unique(names: Sequence[str]) -> None:
    if len(set(names)) != len(names):
        raise DomainError(f"duplicate variable names in {list(names)}")


def floor_positive(arr: np.ndarray, axis=None) -> np.ndarray:
    """Clamp to at least :data:`EPS` and renormalise along ``axis``.

    The result sums to one and every entry stays at least ``EPS`` after the
    renormalisation, which plain clamping alone does not guarantee.
    """
    arr = np.maximum(arr, EPS)
    arr = arr / arr.sum(axis=axis, keepdims=axis is not None)
    n = arr.size if axis is None else arr.shape[axis]
    return EPS + (1.0 - n * EPS) * arr


@dataclass(frozen=True)
class JointTable:
    """Joint distribution over an ordered tuple of binary variables."""

    vars: tuple[str, ...]
    probs: np.ndarray
    positive: bool = False

    def __post_init__(self):
        names = _as_names(self.vars)
        _check_unique(names)
        probs = np.array(self.probs, dtype=float).reshape((2,) * len(names))
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        probs.setflags(write=False)
        object.__setattr__(self, "vars", names)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_array(cls, vars, probs, positive: bool = False) -> "JointTable":
        """Build a normalised table from unnormalised non-negative weights."""
        probs = np.asarray(probs, dtype=float)
        if positive:
            probs = floor_positive(probs / probs.sum())
        else:
            probs = probs / probs.sum()
        return cls(tuple(vars), probs, positive)

    @classmethod
    def uniform(cls, vars) -> "JointTable":
        n = len(_as_names(vars))
        return cls(_as_names(vars), np.full((2,) * n, 0.5**n), True)

    @classmethod
    def random(cls, vars, rng: np.random.Generator, alpha: float = 1.0) -> "JointTable":
        """Draw a table from a symmetric Dirichlet; the result is positive."""
        n = len(_as_names(vars))
        w = rng.dirichlet(np.full(2**n, alpha))
        return cls.from_array(vars, w.reshape((2,) * n), positive=True)

    @property
    def flat(self) -> np.ndarray:
        return self.probs.reshape(-1)

    def __len__(self):
        return len(self.vars)

    def normalize(self, positive: bool | None = None) -> "JointTable":
        positive = self.positive if positive is None else positive
        return JointTable.from_array(self.vars, self.probs, positive)

    def reorder(self, vars) -> "JointTable":
        """Same distribution with axes permuted into ``vars`` order."""
        vars = _as_names(vars)
        if sorted(vars) != sorted(self.vars):
            raise DomainError(f"{vars} is not a permutation of {self.vars}")
        axes = [self.vars.index(v) for v in vars]
        return JointTable(vars, np.transpose(self.probs, axes), self.positive)

    def rename(self, mapping: dict[str, str]) -> "JointTable":
        return JointTable(tuple(mapping.get(v, v) for v in self.vars), self.probs, self.positive)

    def to_dict(self) -> dict:
        return {"vars": list(self.vars), "probs": [float(x) for x in self.flat]}

    @classmethod
    def from_dict(cls, d: dict) -> "JointTable":
        vars = tuple(d["vars"])
        probs = np.asarray(d["probs"], dtype=float)
        if probs.size != 2 ** len(vars):
            raise ValueError(f"expected {2 ** len(vars)} probabilities, got {probs.size}")
        return cls(vars, probs.reshape((2,) * len(vars)))


@dataclass(frozen=True)
class CondTable:
    """Conditional distribution P(targets | conditions).

    ``table`` has shape ``(2,)*len(conditions) + (2,)*len(targets)``. Rows whose
    condition state had zero probability are marked in ``undefined``.
    """

    targets: tuple[str, ...]
    conditions: tuple[str, ...]
    table: np.ndarray
    undefined: np.ndarray = field(default=None)

    def __post_init__(self):
        targets, conditions = _as_names(self.targets), _as_names(self.conditions)
        _check_unique(targets + conditions)
        shape = (2,) * (len(conditions) + len(targets))
        table = np.array(self.table, dtype=float).reshape(shape)
        table.setflags(write=False)
        undefined = self.undefined
        if undefined is None:
            undefined = np.zeros((2,) * len(conditions), dtype=bool)
        undefined = np.array(undefined, dtype=bool).reshape((2,) * len(conditions))
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "conditions", conditions)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "undefined", undefined)

    @property
    def rows(self) -> np.ndarray:
        """Rows as a ``(2**|conditions|, 2**|targets|)`` matrix."""
        return self.table.reshape(2 ** len(self.conditions), 2 ** len(self.targets))

    def total(self) -> "CondTable":
        """Copy with undefined rows replaced by the uniform distribution."""
        if not self.undefined.any():
            return self
        logger.info(
            "replacing %d undefined row(s) of P(%s | %s) by uniform",
            int(self.undefined.sum()), ",".join(self.targets), ",".join(self.conditions),
        )
        rows = self.rows.copy()
        rows[self.undefined.reshape(-1)] = 1.0 / rows.shape[1]
        return CondTable(self.targets, self.conditions, rows)

    def positive(self) -> "CondTable":
        """Total copy with every row floored at :data:`EPS`."""
        rows = floor_positive(self.total().rows, axis=1)
        return CondTable(self.targets, self.conditions, rows)


def _align(arr: np.ndarray, arr_vars: Sequence[str], out_vars: Sequence[str]) -> np.ndarray:
    """Transpose/reshape ``arr`` so it broadcasts against a table over ``out_vars``."""
    present = [v for v in out_vars if v in arr_vars]
    arr = np.transpose(arr, [list(arr_vars).index(v) for v in present])
    return arr.reshape([2 if v in arr_vars else 1 for v in out_vars])


def _check_subset(names: Iterable[str], p: JointTable) -> tuple[str, ...]:
    names = _as_names(names)
    unknown = [v for v in names if v not in p.vars]
    if unknown:
        raise DomainError(f"unknown variables {unknown}; table has {list(p.vars)}")
    return names


def marginalize(p: JointTable, keep) -> JointTable:
    """Sum out every variable not in ``keep``; variable order follows ``p.vars``."""
    keep = set(_check_subset(keep, p))
    axes = tuple(i for i, v in enumerate(p.vars) if v not in keep)
    vars = tuple(v for v in p.vars if v in keep)
    return JointTable(vars, p.probs.sum(axis=axes), p.positive)


def condition(p: JointTable, targets) -> CondTable:
    """P(targets | rest) from a joint; zero-mass condition rows are flagged."""
    targets = set(_check_subset(targets, p))
    tvars = tuple(v for v in p.vars if v in targets)
    cvars = tuple(v for v in p.vars if v not in targets)
    arr = p.reorder(cvars + tvars).probs
    rows = arr.reshape(2 ** len(cvars), 2 ** len(tvars))
    mass = rows.sum(axis=1)
    undefined = mass <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        rows = np.where(undefined[:, None], 1.0 / rows.shape[1], rows / mass[:, None])
    return CondTable(tvars, cvars, rows, undefined)


def compose(base: JointTable, mech: CondTable) -> JointTable:
    """Joint of ``base`` with ``mech`` attached: base(x) * mech(t | x_cond)."""
    _check_subset(mech.conditions, base)
    clash = set(mech.targets) & set(base.vars)
    if clash:
        raise DomainError(f"targets {sorted(clash)} already present in base table")
    mech = mech.total()
    out_vars = base.vars + mech.targets
    m = _align(mech.table, mech.conditions + mech.targets, out_vars)
    b = base.probs.reshape(base.probs.shape + (1,) * len(mech.targets))
    return JointTable(out_vars, b * m, base.positive)


def product(*tables: JointTable) -> JointTable:
    """Independent product of tables over disjoint variables."""
    out = tables[0]
    for t in tables[1:]:
        out = compose(out, CondTable(t.vars, (), t.probs))
    return out


def kl_divergence(p: JointTable, q: JointTable) -> float:
    """D(p || q) in nats; returns ``inf`` (and logs) when supp p ⊄ supp q."""
    if p.vars != q.vars:
        raise DomainError(f"variable mismatch: {p.vars} vs {q.vars}")
    pf, qf = p.flat, q.flat
    mask = pf > 0
    if np.any(qf[mask] <= 0):
        logger.warning("support violation in kl_divergence; returning inf")
        return math.inf
    return float(np.sum(pf[mask] * np.log(pf[mask] / qf[mask])))


def entropy(p: JointTable) -> float:
    pf = p.flat[p.flat > 0]
    return float(-np.sum(pf * np.log(pf)))


def _disjoint(*groups) -> list[tuple[str, ...]]:
    groups = [_as_names(g) for g in groups]
    seen: set[str] = set()
    for g in groups:
        if seen & set(g):
            raise DomainError(f"variable sets overlap: {sorted(seen & set(g))}")
        seen |= set(g)
    return groups


def mutual_information(p: JointTable, xs, ys) -> float:
    """I(xs; ys) = D(p(xs, ys) || p(xs) p(ys))."""
    xs, ys = _disjoint(xs, ys)
    _check_subset(xs + ys, p)
    joint = marginalize(p, xs + ys)
    px = marginalize(joint, xs)
    py = marginalize(joint, ys)
    indep = product(px, py).reorder(joint.vars)
    return kl_divergence(joint, indep)


def cond_mutual_information(p: JointTable, xs, ys, zs) -> float:
    """I(xs; ys | zs); z-slices with zero mass contribute nothing."""
    xs, ys, zs = _disjoint(xs, ys, zs)
    _check_subset(xs + ys + zs, p)
    if not zs:
        return mutual_information(p, xs, ys)
    order = xs + ys + zs
    pxyz = marginalize(p, order).reorder(order).probs
    nx, ny, nz = 2 ** len(xs), 2 ** len(ys), 2 ** len(zs)
    pxyz = pxyz.reshape(nx, ny, nz)
    pxz = pxyz.sum(axis=1, keepdims=True)
    pyz = pxyz.sum(axis=0, keepdims=True)
    pz = pxyz.sum(axis=(0, 1), keepdims=True)
    num = pxyz * pz
    den = pxz * pyz
    mask = pxyz > 0
    return float(np.sum(pxyz[mask] * np.log(num[mask] / den[mask])))


def ipf_fit(
    p: JointTable,
    fixed_pairs,
    tol: float = 1e-9,
    max_iter: int = 1000,
    history: list | None = None,
) -> JointTable:
    """Maximum-entropy table sharing ``p``'s marginals on each set in ``fixed_pairs``.

    Iterative scaling from the uniform table. Each sweep rescales the current
    fit once per constraint set; iteration stops when every constrained
    marginal is within ``tol`` (L-infinity) of the target.

    If ``history`` is a list, D(p || Q) after each sweep is appended to it.
    """
    sets = [set(_check_subset(s, p)) for s in fixed_pairs]
    axes = [tuple(i for i, v in enumerate(p.vars) if v not in s) for s in sets]
    targets = [p.probs.sum(axis=ax, keepdims=True) for ax in axes]
    q = np.full(p.probs.shape, 1.0 / p.probs.size)
    dev = math.inf
    for it in range(1, max_iter + 1):
        for ax, t in zip(axes, targets):
            cur = q.sum(axis=ax, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                q = q * np.where(cur > 0, t / cur, 0.0)
        if history is not None:
            history.append(kl_divergence(p, JointTable(p.vars, q)))
        dev = max(float(np.max(np.abs(q.sum(axis=ax, keepdims=True) - t))) for ax, t in zip(axes, targets))
        if dev <= tol:
            return JointTable(p.vars, q / q.sum())
    raise IPFConvergenceError(dev, max_iter)
