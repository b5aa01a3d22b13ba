"""Racetrack world: pose updates, ray sensors, wall contact and the stuck rule.

Geometry is deterministic and pure: every function maps a state to a new
state without touching globals.  The agent body is a disc; its two wall
sensors are rays starting on the body surface at fixed angles from the
heading; the third sensor bit reports body-wall contact.

Track files are plain text::

    # comments start with '#', blank lines are ignored
    outer
    -10.0 -6.0
    10.0 -6.0
    ...
    inner
    ...

Each section header (``outer`` or ``inner``) is followed by at least three
``x y`` vertex lines.  Polylines close implicitly (the last vertex connects
back to the first).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

CONTACT_TOL = 1e-6
_BACKOFF = 1e-9
_LEAVING = 1e-7

TURN = math.radians(14.0)

#: action index (2*a1 + a2) -> (heading change, translation)
MOVES = {
    0: (0.0, 0.2),    # (0,0) slow forward
    1: (TURN, 0.4),   # (0,1) left
    2: (-TURN, 0.4),  # (1,0) right
    3: (0.0, 0.6),    # (1,1) fast forward
}
MOVE_NAMES = {0: "slow", 1: "left", 2: "right", 3: "fast"}


class TrackError(ValueError):
    """Malformed or geometrically invalid track."""


class SpawnError(RuntimeError):
    """No collision-free pose found."""


@dataclass(frozen=True)
class Track:
    outer: np.ndarray
    inner: np.ndarray
    name: str = "track"
    seg_a: np.ndarray = field(init=False, repr=False)
    seg_d: np.ndarray = field(init=False, repr=False)
    seg_len2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        outer = np.asarray(self.outer, dtype=float).reshape(-1, 2)
        inner = np.asarray(self.inner, dtype=float).reshape(-1, 2)
        if len(outer) < 3 or len(inner) < 3:
            raise TrackError("each boundary needs at least 3 vertices")
        a = np.concatenate([outer, inner])
        b = np.concatenate([np.roll(outer, -1, axis=0), np.roll(inner, -1, axis=0)])
        d = b - a
        len2 = np.einsum("ij,ij->i", d, d)
        if np.any(len2 <= 0):
            raise TrackError("zero-length boundary segment (repeated vertex)")
        for name, arr in (("outer", outer), ("inner", inner), ("seg_a", a), ("seg_d", d), ("seg_len2", len2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def segments(self) -> np.ndarray:
        """Wall segments as an ``(n, 2, 2)`` array of endpoint pairs."""
        return np.stack([self.seg_a, self.seg_a + self.seg_d], axis=1)

    def bounds(self):
        return self.outer.min(axis=0), self.outer.max(axis=0)


@dataclass(frozen=True)
class BodySpec:
    radius: float = 0.5
    sensor_length: float = 1.0
    #: mount angles (left, right) relative to the heading, radians
    sensor_angles: tuple[float, float] = (math.radians(30.0), math.radians(-30.0))

    def __post_init__(self):
        if not 0.5 <= self.sensor_length <= 2.0:
            raise ValueError(f"sensor length {self.sensor_length} outside [0.5, 2]")
        if self.radius <= 0:
            raise ValueError("body radius must be positive")


@dataclass(frozen=True)
class WorldState:
    x: float
    y: float
    heading: float
    stuck: bool = False
    sensors: tuple[int, int, int] = (0, 0, 0)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


# --------------------------------------------------------------------------
# track construction and IO


def rounded_rectangle(width, height, radius, center=(0.0, 0.0), arc_segments=6) -> np.ndarray:
    """Counter-clockwise polyline of a rectangle with circular corners."""
    cx, cy = center
    hw, hh = width / 2, height / 2
    if radius <= 0:
        return np.array([[cx - hw, cy - hh], [cx + hw, cy - hh], [cx + hw, cy + hh], [cx - hw, cy + hh]])
    corners = [
        (cx + hw - radius, cy - hh + radius, -math.pi / 2),
        (cx + hw - radius, cy + hh - radius, 0.0),
        (cx - hw + radius, cy + hh - radius, math.pi / 2),
        (cx - hw + radius, cy - hh + radius, math.pi),
    ]
    pts = []
    for ox, oy, start in corners:
        for k in range(arc_segments + 1):
            ang = start + (math.pi / 2) * k / arc_segments
            pts.append((ox + radius * math.cos(ang), oy + radius * math.sin(ang)))
    return np.array(pts)


def racetrack(width=20.0, height=12.0, corridor=4.0, corner_radius=5.0, arc_segments=6) -> Track:
    """Rounded-rectangle annulus; the inner boundary is the outer one inset by ``corridor``."""
    outer = rounded_rectangle(width, height, corner_radius, arc_segments=arc_segments)
    inner_r = max(corner_radius - corridor, 0.0)
    inner = rounded_rectangle(width - 2 * corridor, height - 2 * corridor, inner_r,
                              arc_segments=max(arc_segments // 2, 1) if inner_r > 0 else 0)
    return Track(outer, inner, name=f"racetrack-{width:g}x{height:g}-w{corridor:g}")


def parse_track(text: str, name: str = "track") -> Track:
    sections: dict[str, list] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in ("outer", "inner"):
            if key in sections:
                raise TrackError(f"line {lineno}: duplicate section '{key}'")
            current = sections[key] = []
            continue
        if current is None:
            raise TrackError(f"line {lineno}: vertex before any 'outer'/'inner' header")
        parts = line.split()
        if len(parts) != 2:
            raise TrackError(f"line {lineno}: expected 'x y', got {raw.strip()!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise TrackError(f"line {lineno}: non-numeric vertex {raw.strip()!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise TrackError(f"line {lineno}: non-finite vertex")
        current.append((x, y))
    for key in ("outer", "inner"):
        if key not in sections:
            raise TrackError(f"missing section '{key}'")
        if len(sections[key]) < 3:
            raise TrackError(f"section '{key}' needs at least 3 vertices")
    return Track(np.array(sections["outer"]), np.array(sections["inner"]), name=name)


def format_track(track: Track) -> str:
    out = [f"# {track.name}", "outer"]
    out += [f"{x:.12g} {y:.12g}" for x, y in track.outer]
    out.append("inner")
    out += [f"{x:.12g} {y:.12g}" for x, y in track.inner]
    return "\n".join(out) + "\n"


def load_track(path=None) -> Track:
    """Load a track file; ``None`` loads the bundled default racetrack."""
    if path is None:
        text = resources.files("sensorimotor").joinpath("data/racetrack.txt").read_text()
        return parse_track(text, name="default-racetrack")
    path = Path(path)
    return parse_track(path.read_text(), name=path.stem)


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return True

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    return any(
        d == 0 and on_seg(a, b, c)
        for d, a, b, c in ((d1, q1, q2, p1), (d2, q1, q2, p2), (d3, p1, p2, q1), (d4, p1, p2, q2))
    )


def _is_simple(poly: np.ndarray) -> bool:
    n = len(poly)
    for i in range(n):
        for k in range(i + 1, n):
            if k == i + 1 or (i == 0 and k == n - 1):
                continue
            if _segments_cross(poly[i], poly[(i + 1) % n], poly[k], poly[(k + 1) % n]):
                return False
    return True


def validate_track(track: Track) -> list[str]:
    """Return a list of problems; empty means the track is usable."""
    problems = []
    if not _is_simple(track.outer):
        problems.append("outer boundary self-intersects")
    if not _is_simple(track.inner):
        problems.append("inner boundary self-intersects")
    if not np.all(points_in_polygon(track.inner, track.outer)):
        problems.append("inner boundary is not strictly inside the outer boundary")
    no, ni = len(track.outer), len(track.inner)
    for i in range(no):
        for k in range(ni):
            if _segments_cross(track.outer[i], track.outer[(i + 1) % no],
                               track.inner[k], track.inner[(k + 1) % ni]):
                problems.append("inner and outer boundaries intersect")
                return problems
    return problems


def corridor_width(track: Track) -> float:
    """Smallest distance from an inner vertex to the outer boundary (and vice versa)."""
    outer_only = Track(track.outer, track.outer[::-1])
    inner_only = Track(track.inner, track.inner[::-1])
    d1 = min(wall_distance(p, inner_only) for p in track.outer)
    d2 = min(wall_distance(p, outer_only) for p in track.inner)
    return float(min(d1, d2))


# --------------------------------------------------------------------------
# geometry


def points_in_polygon(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule point-in-polygon test for an ``(n, 2)`` point array."""
    pts = np.atleast_2d(points)
    x, y = pts[:, 0:1], pts[:, 1:2]
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    straddle = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        xcross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    inside = np.sum(straddle & (x < xcross), axis=1) % 2 == 1
    return inside


def wall_distances(points: np.ndarray, track: Track) -> np.ndarray:
    """Distance from each of ``points`` to the nearest wall segment."""
    p = np.atleast_2d(points)[:, None, :]
    rel = p - track.seg_a
    t = np.clip(np.einsum("nkj,kj->nk", rel, track.seg_d) / track.seg_len2, 0.0, 1.0)
    diff = rel - t[..., None] * track.seg_d
    return np.sqrt(np.einsum("nkj,nkj->nk", diff, diff).min(axis=1))


def wall_distance(point, track: Track) -> float:
    rel = np.asarray(point, dtype=float) - track.seg_a
    t = np.clip((rel[:, 0] * track.seg_d[:, 0] + rel[:, 1] * track.seg_d[:, 1]) / track.seg_len2, 0.0, 1.0)
    dx = rel[:, 0] - t * track.seg_d[:, 0]
    dy = rel[:, 1] - t * track.seg_d[:, 1]
    return float(np.sqrt((dx * dx + dy * dy).min()))


def ray_hit(origin, angle: float, length: float, track: Track) -> bool:
    """Whether the closed ray segment [origin, origin + length*dir] meets a wall."""
    ux, uy = math.cos(angle), math.sin(angle)
    ax = track.seg_a[:, 0] - origin[0]
    ay = track.seg_a[:, 1] - origin[1]
    dx, dy = track.seg_d[:, 0], track.seg_d[:, 1]
    denom = ux * dy - uy * dx
    num_lam = ax * dy - ay * dx
    num_mu = ax * uy - ay * ux
    tol = 1e-12
    regular = np.abs(denom) > 1e-15
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lam = num_lam / denom
        mu = num_mu / denom
    hit = regular & (lam >= -tol) & (lam <= length * (1 + tol) + tol) & (mu >= -tol) & (mu <= 1 + tol)
    if hit.any():
        return True
    # parallel and collinear segments
    par = ~regular & (np.abs(num_mu) <= 1e-12)
    if par.any():
        l0 = ax[par] * ux + ay[par] * uy
        l1 = (ax[par] + dx[par]) * ux + (ay[par] + dy[par]) * uy
        lo, hi = np.minimum(l0, l1), np.maximum(l0, l1)
        return bool(np.any((hi >= -tol) & (lo <= length + tol)))
    return False


def _ray_bits(x, y, heading, track: Track, body: BodySpec) -> tuple[int, int]:
    out = []
    for mount in body.sensor_angles:
        ang = heading + mount
        origin = (x + body.radius * math.cos(ang), y + body.radius * math.sin(ang))
        out.append(int(ray_hit(origin, ang, body.sensor_length, track)))
    return out[0], out[1]


def sense(w: WorldState, track: Track, body: BodySpec) -> tuple[int, int, int]:
    """Sensor bits (left ray hit, right ray hit, body touching a wall)."""
    left, right = _ray_bits(w.x, w.y, w.heading, track, body)
    touch = int(wall_distance((w.x, w.y), track) <= body.radius + CONTACT_TOL)
    return left, right, touch


def _interval(v0, dv, lo, hi):
    """Parameter interval where v0 + s*dv lies in [lo, hi] (vectorised)."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        s1 = (lo - v0) / dv
        s2 = (hi - v0) / dv
    still = np.abs(dv) < 1e-15
    inside = (v0 >= lo) & (v0 <= hi)
    a = np.where(still, np.where(inside, -np.inf, np.inf), np.minimum(s1, s2))
    b = np.where(still, np.where(inside, np.inf, -np.inf), np.maximum(s1, s2))
    return a, b


def sweep_distance(x, y, angle, distance, radius, track: Track) -> tuple[float, bool]:
    """How far a disc can translate along ``angle`` before touching a wall.

    Returns ``(travel, blocked)``.  Each wall segment inflated by ``radius`` is
    a capsule; the path is intersected with every capsule and the earliest
    entry wins.  A disc already touching a wall may move away from it freely.
    """
    ux, uy = math.cos(angle), math.sin(angle)
    a = track.seg_a
    d = track.seg_d
    seg_len = np.sqrt(track.seg_len2)
    ex, ey = d[:, 0] / seg_len, d[:, 1] / seg_len
    rx, ry = x - a[:, 0], y - a[:, 1]
    # straight strip of the capsule
    lo1, hi1 = _interval(rx * ex + ry * ey, ux * ex + uy * ey, 0.0, seg_len)
    lo2, hi2 = _interval(-rx * ey + ry * ex, -ux * ey + uy * ex, -radius, radius)
    lo_s, hi_s = np.maximum(lo1, lo2), np.minimum(hi1, hi2)
    los, his = [lo_s], [hi_s]
    # end caps
    for px, py in ((a[:, 0], a[:, 1]), (a[:, 0] + d[:, 0], a[:, 1] + d[:, 1])):
        qx, qy = x - px, y - py
        b = ux * qx + uy * qy
        c = qx * qx + qy * qy - radius * radius
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        ok = disc >= 0
        los.append(np.where(ok, -b - root, np.inf))
        his.append(np.where(ok, -b + root, -np.inf))
    lo_all = np.stack(los)
    hi_all = np.stack(his)
    nonempty = lo_all <= hi_all
    lo = np.where(nonempty, lo_all, np.inf).min(axis=0)
    hi = np.where(nonempty, hi_all, -np.inf).max(axis=0)
    hits = (lo <= hi) & (hi > _LEAVING) & (lo <= distance)
    if not hits.any():
        return float(distance), False
    s_hit = float(np.maximum(lo[hits], 0.0).min())
    return max(0.0, s_hit - _BACKOFF), True


def apply_action(w: WorldState, track: Track, body: BodySpec, action: int) -> WorldState:
    """Advance one step: rotate, then translate along the new heading.

    A stuck agent only rotates in place while either ray sensor of its last
    reading detects a wall.  The agent is stuck after the step whenever its
    body touches a wall.
    """
    turn, dist = MOVES[int(action)]
    heading = (w.heading + turn) % (2 * math.pi)
    x, y = w.x, w.y
    if not (w.stuck and (w.sensors[0] or w.sensors[1])):
        travel, _ = sweep_distance(x, y, heading, dist, body.radius, track)
        x += travel * math.cos(heading)
        y += travel * math.sin(heading)
    nxt = WorldState(x, y, heading)
    bits = sense(nxt, track, body)
    return replace(nxt, stuck=bool(bits[2]), sensors=bits)


def spawn(track: Track, body: BodySpec, rng: np.random.Generator,
          max_tries: int = 100_000, batch: int = 64) -> WorldState:
    """Uniform collision-free pose inside the corridor, uniform heading."""
    lo, hi = track.bounds()
    tried = 0
    while tried < max_tries:
        n = min(batch, max_tries - tried)
        u = rng.random((n, 3))
        tried += n
        pts = lo + u[:, :2] * (hi - lo)
        ok = points_in_polygon(pts, track.outer) & ~points_in_polygon(pts, track.inner)
        if ok.any():
            idx = np.flatnonzero(ok)
            clear = wall_distances(pts[idx], track) > body.radius + CONTACT_TOL
            if clear.any():
                k = idx[np.argmax(clear)]
                w = WorldState(float(pts[k, 0]), float(pts[k, 1]), float(u[k, 2] * 2 * math.pi))
                return replace(w, sensors=sense(w, track, body))
    raise SpawnError(f"no collision-free pose after {max_tries} tries")
