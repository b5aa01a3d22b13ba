import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import controller_from, dirichlet_rows, random_loop_joint
from oracles import (
    PHI_IIT_FAMILY,
    PSI_C_FAMILY,
    PSI_MC_FAMILY,
    PSI_SI_FAMILY,
    maxent_pairwise_kl,
    split_family_kl,
)
from sensorimotor.harness import MEASURE_MAX_ITER
from sensorimotor.measures import (
    A_T,
    C_T,
    MEASURES,
    S_T,
    S_T1,
    SP_T1,
    WORLD_VARS,
    LoopJoint,
    MeasureRecord,
    evaluate,
    format_record,
    phi_eii,
    phi_iit,
    psi_c,
    psi_mc,
    psi_si,
    psi_synp,
    synergy_fit,
)
from sensorimotor.prob import DomainError, JointTable, marginalize, mutual_information

LOG2 = math.log(2)
UNIFORM_SC = np.full((8, 4), 1 / 32)


def pair_rows(b1, b2):
    """Distribution over a 2-bit state from the probabilities that each bit is 1."""
    p1 = np.stack([1 - b1, b1], axis=-1)
    p2 = np.stack([1 - b2, b2], axis=-1)
    return (p1[..., :, None] * p2[..., None, :]).reshape(p1.shape[:-1] + (4,))


def joint_with(controller):
    rng = np.random.default_rng(0)
    world = JointTable.random(WORLD_VARS, rng)
    return LoopJoint(controller, world)


# --------------------------------------------------------------------------
# oracle agreement


@pytest.mark.parametrize("seed", range(10))
def test_closed_forms_match_split_family_minimisation(seed):
    j = random_loop_joint(np.random.default_rng(seed))
    assert phi_iit(j) == pytest.approx(split_family_kl(j.controller, PHI_IIT_FAMILY), abs=1e-6)
    assert psi_si(j) == pytest.approx(split_family_kl(j.controller, PSI_SI_FAMILY), abs=1e-6)
    assert psi_c(j) == pytest.approx(split_family_kl(j.controller, PSI_C_FAMILY), abs=1e-6)
    assert psi_mc(j) == pytest.approx(split_family_kl(j.world, PSI_MC_FAMILY), abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_synergy_matches_maxent_oracle(seed):
    j = random_loop_joint(np.random.default_rng(100 + seed))
    value, q_star = maxent_pairwise_kl(j.prediction)
    assert psi_synp(j) == pytest.approx(value, abs=1e-6)
    _, q = synergy_fit(j)
    np.testing.assert_allclose(q.probs, q_star, atol=1e-7)


# --------------------------------------------------------------------------
# closed-form cases


def test_split_controller_has_no_integration():
    rng = np.random.default_rng(1)
    own = rng.random((2, 2, 8))  # P(bit j = 1 | own bit, s1) as [j, own, s1]
    c_next = np.empty((8, 4, 4))
    for s1, c in itertools.product(range(8), range(4)):
        c_next[s1, c] = pair_rows(own[0, c >> 1, s1], own[1, c & 1, s1])
    a_next = dirichlet_rows(rng, (8, 4, 4))
    j = joint_with(controller_from(rng.dirichlet(np.ones(32)).reshape(8, 4), c_next, a_next))
    assert abs(phi_iit(j)) <= 1e-12


def test_controller_ignoring_history_and_sensors():
    rng = np.random.default_rng(2)
    row = rng.dirichlet(np.ones(4))
    c_next = np.broadcast_to(row, (8, 4, 4))
    j = joint_with(controller_from(UNIFORM_SC, c_next, dirichlet_rows(rng, (8, 4, 4))))
    assert abs(phi_iit(j)) < 1e-14
    assert abs(psi_si(j)) < 1e-14


def test_copying_one_sensor_bit_gives_log2_sensory_information():
    c_next = np.zeros((8, 4, 4))
    for s1 in range(8):
        c_next[s1, :, 2 * (s1 >> 2)] = 1.0  # C1 copies the left ray, C2 = 0
    j = joint_with(controller_from(UNIFORM_SC, c_next, np.full((8, 4, 4), 0.25)))
    assert psi_si(j) == pytest.approx(LOG2, abs=1e-12)
    assert abs(phi_iit(j)) < 1e-14


def test_policy_ignoring_controller_has_no_control():
    rng = np.random.default_rng(3)
    a_rows = dirichlet_rows(rng, (8, 4))
    a_next = np.repeat(a_rows[:, None, :], 4, axis=1)
    j = joint_with(controller_from(UNIFORM_SC, dirichlet_rows(rng, (8, 4, 4)), a_next))
    assert abs(psi_c(j)) <= 1e-12


def test_actuator_copying_controller_bit_gives_log2_control():
    c_next = np.full((8, 4, 4), 0.25)
    a_next = np.zeros((8, 4, 4))
    for c1 in range(4):
        a_next[:, c1, 2 * (c1 >> 1)] = 1.0  # A1 = C1, A2 = 0
    j = joint_with(controller_from(UNIFORM_SC, c_next, a_next))
    assert psi_c(j) == pytest.approx(LOG2, abs=1e-12)


def test_morphological_computation_cases():
    rng = np.random.default_rng(4)
    p_sa = np.full((8, 4), 1 / 32)
    by_action = dirichlet_rows(rng, (4, 8))
    ignore = JointTable(WORLD_VARS, p_sa[:, :, None] * by_action[None])
    assert abs(psi_mc(ignore)) < 1e-14
    copy = np.zeros((8, 4, 8))
    for s in range(8):
        copy[s, :, s] = 1.0
    same = JointTable(WORLD_VARS, p_sa[:, :, None] * copy)
    assert psi_mc(same) == pytest.approx(3 * LOG2, abs=1e-12)


def test_plugin_mc_matches_summation_oracle():
    j = random_loop_joint(np.random.default_rng(5))
    a = j.world.probs.reshape(8, 4, 8)
    oracle = 0.0
    for s, act, s1 in itertools.product(range(8), range(4), range(8)):
        pa = a[:, act, :].sum()
        oracle += a[s, act, s1] * math.log(a[s, act, s1] * pa / (a[s, act, :].sum() * a[:, act, s1].sum()))
    assert psi_mc(j) == pytest.approx(oracle, abs=1e-12)


def xor_prediction():
    arr = np.zeros((4, 4, 8))
    for a, c in itertools.product(range(4), range(4)):
        arr[a, c, 4 * ((a >> 1) ^ (c >> 1))] = 1 / 16
    return JointTable(A_T + C_T + SP_T1, arr)


def test_xor_prediction_is_pure_synergy():
    assert psi_synp(xor_prediction()) == pytest.approx(LOG2, abs=1e-6)


def test_pairwise_only_prediction_has_no_synergy():
    rng = np.random.default_rng(6)
    f_ac, f_as, f_cs = rng.random((4, 4)) + 0.1, rng.random((4, 8)) + 0.1, rng.random((4, 8)) + 0.1
    arr = np.einsum("ac,as,cs->acs", f_ac, f_as, f_cs)
    p = JointTable.from_array(A_T + C_T + SP_T1, arr)
    assert abs(psi_synp(p)) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_synergy_bounded_by_total_dependence(seed):
    j = random_loop_joint(np.random.default_rng(seed), alpha=0.3)
    total = mutual_information(j.prediction, A_T + C_T, SP_T1)
    assert -1e-9 <= psi_synp(j, max_iter=MEASURE_MAX_ITER) <= total + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_measures_invariant_under_controller_bit_relabelling(seed):
    j = random_loop_joint(np.random.default_rng(seed))
    swap = {"C1_t": "C2_t", "C2_t": "C1_t", "C1_t+1": "C2_t+1", "C2_t+1": "C1_t+1"}
    ctrl = j.controller.rename(swap).reorder(j.controller.vars)
    pred = j.prediction.rename(swap).reorder(j.prediction.vars)
    k = LoopJoint(ctrl, j.world, pred)
    a, b = evaluate(j), evaluate(k)
    for name in MEASURES:
        assert getattr(a, name) == pytest.approx(getattr(b, name), abs=1e-10)
    for name in MEASURES:
        assert getattr(a, name) >= -1e-9


# --------------------------------------------------------------------------
# records and plumbing


def test_phi_eii_is_the_product():
    assert phi_eii(0.1, 0.2, 0.3) == pytest.approx(0.006, abs=1e-15)
    assert phi_eii(0.0, 5.0, 7.0) == 0.0


def test_evaluate_fills_record():
    j = random_loop_joint(np.random.default_rng(7))
    rec = evaluate(j, step=12, meta={"run_id": "x"})
    assert rec.step == 12 and rec.meta == {"run_id": "x"}
    assert rec.phi_eii == rec.phi_iit * rec.psi_si * rec.psi_c
    assert set(rec.values()) == set(MEASURES)
    assert "units: nats" in format_record(rec)
    no_pred = evaluate(LoopJoint(j.controller, j.world))
    assert no_pred.psi_synp is None
    assert "n/a" in format_record(no_pred)


def test_product_joint_has_all_measures_zero():
    ctrl = JointTable.uniform(S_T1 + C_T + ("C1_t+1", "C2_t+1", "A1_t+1", "A2_t+1"))
    world = JointTable.uniform(WORLD_VARS)
    pred = JointTable.uniform(A_T + C_T + SP_T1)
    rec = evaluate(LoopJoint(ctrl, world, pred))
    for name in MEASURES:
        assert abs(getattr(rec, name)) < 1e-12


def test_missing_tables_and_variables_raise():
    j = random_loop_joint(np.random.default_rng(8))
    with pytest.raises(DomainError):
        psi_synp(LoopJoint(j.controller, j.world))
    with pytest.raises(DomainError):
        phi_iit(marginalize(j.controller, S_T1 + C_T))


def test_loop_joint_json_round_trip():
    j = random_loop_joint(np.random.default_rng(9))
    k = LoopJoint.from_json(j.to_json())
    np.testing.assert_array_equal(k.controller.probs, j.controller.probs)
    np.testing.assert_array_equal(k.prediction.probs, j.prediction.probs)
    assert evaluate(k).values() == evaluate(j).values()
    with pytest.raises(ValueError):
        LoopJoint.from_json(json.dumps({"format": "other"}))


def test_record_to_dict():
    rec = MeasureRecord(0.1, 0.2, 0.3, 0.006, 0.5, None, step=3)
    d = rec.to_dict()
    assert d["step"] == 3 and d["psi_synp"] is None
