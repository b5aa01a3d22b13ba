import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensorimotor.env import (
    CONTACT_TOL,
    TURN,
    BodySpec,
    SpawnError,
    Track,
    TrackError,
    WorldState,
    apply_action,
    corridor_width,
    format_track,
    load_track,
    parse_track,
    racetrack,
    sense,
    spawn,
    validate_track,
)

SLOW, LEFT, RIGHT, FAST = 0, 1, 2, 3


def box(half):
    return np.array([[-half, -half], [half, -half], [half, half], [-half, half]], dtype=float)


# big square room with a small pillar far from the origin region
ROOM = Track(box(10.0), box(1.0) + [7.0, 7.0], name="room")
BODY = BodySpec(radius=0.5, sensor_length=1.0)


def state(x, y, heading, track=ROOM, body=BODY):
    w = WorldState(x, y, heading)
    bits = sense(w, track, body)
    return WorldState(x, y, heading, stuck=bool(bits[2]), sensors=bits)


def brute_force_distance(p, track):
    best = math.inf
    for poly in (track.outer, track.inner):
        for a, b in zip(poly, np.roll(poly, -1, axis=0)):
            d = b - a
            t = min(1.0, max(0.0, float(np.dot(p - a, d) / np.dot(d, d))))
            best = min(best, float(np.linalg.norm(p - (a + t * d))))
    return best


# --------------------------------------------------------------------------
# movement


def test_fast_forward_in_free_space():
    w = apply_action(state(0.0, 0.0, 0.3), ROOM, BODY, FAST)
    assert w.x == pytest.approx(0.6 * math.cos(0.3), abs=1e-12)
    assert w.y == pytest.approx(0.6 * math.sin(0.3), abs=1e-12)
    assert w.heading == pytest.approx(0.3, abs=1e-15)


def test_slow_forward_and_right_turn():
    w = apply_action(state(0.0, 0.0, 0.0), ROOM, BODY, SLOW)
    assert (w.x, w.y) == pytest.approx((0.2, 0.0), abs=1e-12)
    w = apply_action(state(0.0, 0.0, 1.0), ROOM, BODY, RIGHT)
    assert w.heading == pytest.approx(1.0 - TURN, abs=1e-12)


def test_left_turn_rotates_then_translates():
    w = apply_action(state(0.0, 0.0, 0.0), ROOM, BODY, LEFT)
    assert TURN == pytest.approx(0.2443, abs=1e-4)
    assert w.heading == pytest.approx(TURN, abs=1e-15)
    assert w.x == pytest.approx(0.4 * math.cos(TURN), abs=1e-12)
    assert w.y == pytest.approx(0.4 * math.sin(TURN), abs=1e-12)


def test_translation_stops_at_wall_and_sticks():
    w = apply_action(state(9.2, 0.0, 0.0), ROOM, BODY, FAST)
    assert w.x == pytest.approx(9.5, abs=1e-6)
    assert w.stuck and w.sensors[2] == 1


def test_stuck_with_ray_hit_does_not_move():
    w = apply_action(state(9.2, 0.0, 0.0), ROOM, BODY, FAST)
    assert w.stuck and (w.sensors[0] or w.sensors[1])
    for a in (SLOW, LEFT, RIGHT, FAST):
        nxt = apply_action(w, ROOM, BODY, a)
        assert (nxt.x, nxt.y) == (w.x, w.y)


def test_stuck_agent_leaves_once_rays_are_clear():
    w = apply_action(state(9.2, 0.0, 0.0), ROOM, BODY, FAST)
    for _ in range(40):
        if not (w.sensors[0] or w.sensors[1]):
            break
        w = apply_action(w, ROOM, BODY, LEFT)
    assert not (w.sensors[0] or w.sensors[1])
    nxt = apply_action(w, ROOM, BODY, FAST)
    assert nxt.x < w.x - 0.1
    assert not nxt.stuck


@settings(max_examples=60, deadline=None)
@given(st.floats(-9.4, 9.4), st.floats(-9.4, 9.4), st.floats(0, 2 * math.pi),
       st.lists(st.integers(0, 3), min_size=1, max_size=30))
def test_body_never_penetrates_walls(x, y, heading, actions):
    track = load_track()
    w = WorldState(x, y, heading)
    if brute_force_distance(np.array([x, y]), track) <= BODY.radius + CONTACT_TOL:
        return
    inside = track.outer[:, 0].min() < x < track.outer[:, 0].max()
    if not inside:
        return
    w = state(x, y, heading, track)
    for a in actions:
        w = apply_action(w, track, BODY, a)
        assert brute_force_distance(w.position, track) >= BODY.radius - CONTACT_TOL


def test_apply_action_is_deterministic():
    w = state(9.0, -9.0, 5.5)
    a = apply_action(w, ROOM, BODY, FAST)
    b = apply_action(w, ROOM, BODY, FAST)
    assert a == b


# --------------------------------------------------------------------------
# sensing


def test_far_from_walls_reads_nothing():
    assert sense(WorldState(0.0, 0.0, 0.0), ROOM, BODY) == (0, 0, 0)


def test_contact_facing_wall_reads_everything():
    assert sense(WorldState(9.5, 0.0, 0.0), ROOM, BODY) == (1, 1, 1)


def test_grazing_ray_at_exact_length_is_a_hit():
    mount = BODY.sensor_angles[0]
    ox = BODY.radius * math.cos(mount)
    reach = ox + BODY.sensor_length * math.cos(mount)
    x = 10.0 - reach
    w = WorldState(x, -9.0 + 0.6, 0.0)  # keep the right ray far from the bottom wall
    left, right, _ = sense(w, ROOM, BODY)
    assert left == 1 and right == 1
    short = WorldState(x - 1e-6, 0.0, 0.0)
    assert sense(short, ROOM, BODY)[:2] == (0, 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-9.6, 9.6), st.floats(-9.6, 9.6))
def test_contact_bit_matches_brute_force_distance(x, y):
    w = WorldState(x, y, 0.0)
    touch = sense(w, ROOM, BODY)[2]
    assert touch == int(brute_force_distance(np.array([x, y]), ROOM) <= BODY.radius + CONTACT_TOL)


@settings(max_examples=200, deadline=None)
@given(st.floats(-9.4, 9.4), st.floats(-9.4, 9.4), st.floats(0, 2 * math.pi),
       st.floats(0.5, 2.0), st.floats(0.0, 1.5))
def test_longer_sensors_never_lose_a_hit(x, y, heading, length, extra):
    short = BodySpec(sensor_length=length)
    long = BodySpec(sensor_length=min(2.0, length + extra))
    w = WorldState(x, y, heading)
    a, b = sense(w, ROOM, short), sense(w, ROOM, long)
    assert b[0] >= a[0] and b[1] >= a[1]


def test_body_spec_validation():
    with pytest.raises(ValueError):
        BodySpec(sensor_length=2.5)
    with pytest.raises(ValueError):
        BodySpec(radius=0.0)


# --------------------------------------------------------------------------
# spawning


def test_spawn_reproducible_and_contact_free():
    track = load_track()
    a = spawn(track, BODY, np.random.default_rng(3))
    b = spawn(track, BODY, np.random.default_rng(3))
    assert a == b
    rng = np.random.default_rng(4)
    for _ in range(10_000):
        w = spawn(track, BODY, rng)
        assert w.sensors[2] == 0 and not w.stuck
        assert 0 <= w.heading < 2 * math.pi


def test_spawn_fails_on_track_narrower_than_body():
    thin = racetrack(corridor=0.8)
    with pytest.raises(SpawnError):
        spawn(thin, BODY, np.random.default_rng(0), max_tries=5000)


# --------------------------------------------------------------------------
# track files


def test_bundled_track_is_valid():
    track = load_track()
    assert validate_track(track) == []
    assert 3.9 < corridor_width(track) <= 4.0


def test_track_format_round_trip():
    track = racetrack()
    again = parse_track(format_track(track))
    np.testing.assert_allclose(again.outer, track.outer, atol=1e-11)
    np.testing.assert_allclose(again.inner, track.inner, atol=1e-11)


@pytest.mark.parametrize("text, fragment", [
    ("1 2\nouter\n", "line 1"),
    ("outer\n0 0\n1 0\n1 1\ninner\n0.1 x\n", "non-numeric"),
    ("outer\n0 0\n1 0\n1 1\n", "missing section 'inner'"),
    ("outer\n0 0\n1 0\ninner\n0 0\n1 0\n1 1\n", "at least 3"),
    ("outer\n0 0 0\n", "expected 'x y'"),
])
def test_track_parse_errors(text, fragment):
    with pytest.raises(TrackError, match=fragment):
        parse_track(text)


def test_validate_track_reports_problems():
    bow_tie = np.array([[0, 0], [4, 4], [4, 0], [0, 4]], dtype=float)
    assert "outer boundary self-intersects" in validate_track(Track(bow_tie, box(0.5) + 2))
    outside = Track(box(5), box(1) + [10, 10])
    assert any("inside" in p for p in validate_track(outside))


def test_load_track_from_file(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text(format_track(ROOM))
    track = load_track(path)
    assert track.name == "t"
    assert len(track.outer) == 4
