"""Planar fixed-wing world: obstacle fields, scenario files, waypoint flight
and ray-cast depth sensing.

Everything here is deterministic. The vehicle flies at constant speed with a
bounded turn rate, so a waypoint command is tracked by pure pursuit at a fine
sub-step resolution and every sub-step is checked for collision, target capture
and leaving the world bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "UavKinematicState",
    "ObstacleField",
    "ScenarioSpec",
    "ScenarioError",
    "KinematicParams",
    "SensorParams",
    "DepthMap",
    "StepEvents",
    "wrap_angle",
    "load_scenario",
    "dump_scenario",
    "load_scenario_file",
    "bundled_scenario",
    "step_to_waypoint",
    "raycast_depth",
    "ray_distances",
    "check_termination",
]


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class UavKinematicState:
    x: float
    y: float
    yaw: float
    speed: float = 30.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise ValueError("non-finite kinematic state")
        if not self.speed > 0:
            raise ValueError("speed must be strictly positive")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ObstacleField:
    """Circles ``(cx, cy, r)`` and axis-aligned boxes ``(xmin, ymin, xmax, ymax)``."""

    circles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    bounds: tuple = (-1e4, -1e4, 1e4, 1e4)

    def __post_init__(self):
        circles = np.asarray(self.circles, dtype=np.float64).reshape(-1, 3)
        boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        object.__setattr__(self, "circles", circles)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        # plain tuples for the per-sub-step checks
        object.__setattr__(self, "_circle_list", [tuple(c) for c in circles.tolist()])
        object.__setattr__(self, "_box_list", [tuple(b) for b in boxes.tolist()])

    def __eq__(self, other):
        if not isinstance(other, ObstacleField):
            return NotImplemented
        return (self.bounds == other.bounds and np.array_equal(self.circles, other.circles)
                and np.array_equal(self.boxes, other.boxes))

    __hash__ = None

    def validate(self) -> None:
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ScenarioError("world bounds have non-positive area")
        for cx, cy, r in self._circle_list:
            if not r > 0:
                raise ScenarioError(f"circle at ({cx}, {cy}) has non-positive radius")
            if cx - r < xmin or cx + r > xmax or cy - r < ymin or cy + r > ymax:
                raise ScenarioError(f"circle at ({cx}, {cy}) lies outside world bounds")
        for bx0, by0, bx1, by1 in self._box_list:
            if not (bx1 > bx0 and by1 > by0):
                raise ScenarioError("box has non-positive area")
            if bx0 < xmin or bx1 > xmax or by0 < ymin or by1 > ymax:
                raise ScenarioError(f"box ({bx0}, {by0}, {bx1}, {by1}) lies outside world bounds")

    def collides(self, x: float, y: float) -> bool:
        # strict interior for circles, closed box
        for cx, cy, r in self._circle_list:
            dx = x - cx
            dy = y - cy
            if dx * dx + dy * dy < r * r:
                return True
        for bx0, by0, bx1, by1 in self._box_list:
            if bx0 <= x <= bx1 and by0 <= y <= by1:
                return True
        return False

    def in_bounds(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ScenarioSpec:
    field: ObstacleField
    start: UavKinematicState
    target: tuple
    capture_radius: float = 40.0
    d_max: float = 1300.0
    max_steps: int = 60
    name: str = ""

    def validate(self) -> None:
        self.field.validate()
        if not self.capture_radius > 0:
            raise ScenarioError("capture_radius must be positive")
        if not self.d_max > 0:
            raise ScenarioError("d_max must be positive")
        if self.max_steps < 1:
            raise ScenarioError("max_steps must be >= 1")
        sx, sy = self.start.x, self.start.y
        tx, ty = self.target
        if self.field.collides(sx, sy):
            raise ScenarioError("start in collision")
        if self.field.collides(tx, ty):
            raise ScenarioError("target in collision")
        if not self.field.in_bounds(sx, sy):
            raise ScenarioError("start outside world bounds")
        if not self.field.in_bounds(tx, ty):
            raise ScenarioError("target outside world bounds")
        if math.hypot(tx - sx, ty - sy) > self.d_max:
            raise ScenarioError("start-target distance exceeds d_max")


_SCALAR_KEYS = {"capture_radius": float, "d_max": float, "max_steps": int}
_ARITY = {"start": 3, "target": 2, "bounds": 4, "circle": 3, "box": 4}


def load_scenario(text: str, name: str = "") -> ScenarioSpec:
    """Parse scenario file contents.

    One ``key: values`` declaration per line, ``#`` starts a comment. ``start``
    and ``target`` are required; bounds default to the start/target bounding
    box grown by ``d_max`` on every side.
    """
    start = target = bounds = None
    circles, boxes = [], []
    scalars = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep:
            raise ScenarioError(f"expected 'key: values', got {raw.strip()!r}", lineno)
        tokens = rest.split()
        if key in _SCALAR_KEYS:
            if len(tokens) != 1:
                raise ScenarioError(f"{key} takes exactly one value", lineno)
            try:
                value = _SCALAR_KEYS[key](tokens[0])
            except ValueError:
                raise ScenarioError(f"cannot parse {key} value {tokens[0]!r}", lineno) from None
            if key in scalars:
                raise ScenarioError(f"duplicate {key}", lineno)
            scalars[key] = value
            continue
        if key not in _ARITY:
            raise ScenarioError(f"unknown key {key!r}", lineno)
        if len(tokens) != _ARITY[key]:
            raise ScenarioError(f"{key} takes {_ARITY[key]} values, got {len(tokens)}", lineno)
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            raise ScenarioError(f"non-numeric value in {key}", lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise ScenarioError(f"non-finite value in {key}", lineno)
        if key == "circle":
            circles.append(values)
        elif key == "box":
            boxes.append(values)
        else:
            if {"start": start, "target": target, "bounds": bounds}[key] is not None:
                raise ScenarioError(f"duplicate {key}", lineno)
            if key == "start":
                start = values
            elif key == "target":
                target = values
            else:
                bounds = values
    if start is None:
        raise ScenarioError("missing start declaration")
    if target is None:
        raise ScenarioError("missing target declaration")
    d_max = scalars.get("d_max", 1300.0)
    if bounds is None:
        bounds = [
            min(start[0], target[0]) - d_max,
            min(start[1], target[1]) - d_max,
            max(start[0], target[0]) + d_max,
            max(start[1], target[1]) + d_max,
        ]
    spec = ScenarioSpec(
        field=ObstacleField(circles=circles, boxes=boxes, bounds=tuple(bounds)),
        start=UavKinematicState(start[0], start[1], start[2]),
        target=(target[0], target[1]),
        capture_radius=scalars.get("capture_radius", 40.0),
        d_max=d_max,
        max_steps=scalars.get("max_steps", 60),
        name=name,
    )
    spec.validate()
    return spec


def dump_scenario(spec: ScenarioSpec) -> str:
    """Serialize a scenario; ``load_scenario(dump_scenario(s))`` reproduces ``s``."""
    f = spec.field
    lines = [
        f"start: {spec.start.x!r} {spec.start.y!r} {spec.start.yaw!r}",
        f"target: {spec.target[0]!r} {spec.target[1]!r}",
        f"capture_radius: {spec.capture_radius!r}",
        f"d_max: {spec.d_max!r}",
        f"max_steps: {spec.max_steps}",
        "bounds: " + " ".join(repr(b) for b in f.bounds),
    ]
    lines += ["circle: " + " ".join(repr(v) for v in c) for c in f._circle_list]
    lines += ["box: " + " ".join(repr(v) for v in b) for b in f._box_list]
    return "\n".join(lines) + "\n"


def load_scenario_file(path) -> ScenarioSpec:
    from pathlib import Path

    path = Path(path)
    return load_scenario(path.read_text(encoding="utf-8"), name=path.stem)


def bundled_scenario(name: str) -> ScenarioSpec:
    """Load one of the scenarios shipped with the package (``open``, ``corridor5``, ...)."""
    from importlib.resources import files

    text = files("ippo_uav").joinpath("scenarios").joinpath(f"{name}.scn").read_text(encoding="utf-8")
    return load_scenario(text, name=name)


@dataclass(frozen=True)
class KinematicParams:
    dt: float = 0.1
    max_turn_rate: float = 0.327
    waypoint_tolerance: float = 10.0
    max_substeps: int = 200
    # treat the waypoint as done once it is abeam or behind (closest approach passed)
    stop_on_recede: bool = True
    # shortest decision step in seconds; once the waypoint is done the heading
    # is held until this much time has passed (default: 50 m at 30 m/s)
    min_step_time: float = 5.0 / 3.0

    @property
    def min_substeps(self) -> int:
        return max(1, math.ceil(self.min_step_time / self.dt - 1e-9))


@dataclass(frozen=True)
class StepEvents:
    collided: bool = False
    reached_target: bool = False
    exceeded_cap: bool = False
    out_of_bounds: bool = False
    sub_path: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    @property
    def terminal(self) -> bool:
        return self.collided or self.reached_target or self.exceeded_cap or self.out_of_bounds


def step_to_waypoint(
    state: UavKinematicState,
    waypoint,
    field: ObstacleField,
    target,
    kin: KinematicParams = KinematicParams(),
    capture_radius: float = 0.0,
) -> tuple[UavKinematicState, StepEvents]:
    """Fly turn-rate-limited pure pursuit toward ``waypoint``.

    Each sub-step turns by at most ``max_turn_rate * dt`` toward the bearing of
    the waypoint and then advances ``speed * dt`` along the mid-step heading, so
    consecutive positions are exactly one sub-step length apart. The waypoint
    is done when it is within tolerance or lies abeam or behind (if enabled); after
    that the heading is held until ``kin.min_substeps`` sub-steps have been
    flown. Collision, target capture, leaving bounds and the sub-step cap end
    the step at once.

    ``sub_path`` holds ``(x, y, yaw)`` rows starting with the initial state.
    """
    wx, wy = float(waypoint[0]), float(waypoint[1])
    tx, ty = float(target[0]), float(target[1])
    if not all(math.isfinite(v) for v in (wx, wy, tx, ty)):
        raise ValueError("non-finite waypoint or target")
    x, y, yaw, v = state.x, state.y, state.yaw, state.speed
    max_dyaw = kin.max_turn_rate * kin.dt
    ds = v * kin.dt
    tol = kin.waypoint_tolerance
    cap2 = capture_radius * capture_radius
    path = [(x, y, yaw)]
    collided = reached = out = False
    min_n = kin.min_substeps
    holding = False
    for n in range(kin.max_substeps):
        if not holding:
            err = wrap_angle(math.atan2(wy - y, wx - x) - yaw)
            # abeam or behind means the closest approach has passed
            holding = math.hypot(wx - x, wy - y) <= tol or (kin.stop_on_recede and abs(err) > 0.5 * math.pi)
        if holding and n >= min_n:
            break
        dyaw = 0.0 if holding else min(max(err, -max_dyaw), max_dyaw)
        heading = yaw + 0.5 * dyaw
        x += ds * math.cos(heading)
        y += ds * math.sin(heading)
        yaw = wrap_angle(yaw + dyaw)
        path.append((x, y, yaw))
        if field.collides(x, y):
            collided = True
            break
        if (x - tx) ** 2 + (y - ty) ** 2 <= cap2:
            reached = True
            break
        if not field.in_bounds(x, y):
            out = True
            break
    final = UavKinematicState(x, y, yaw, v)
    events = StepEvents(
        collided=collided,
        reached_target=reached,
        out_of_bounds=out,
        sub_path=np.array(path),
    )
    return final, events


@dataclass(frozen=True)
class SensorParams:
    height: int = 16
    width: int = 32
    hfov: float = math.pi / 2
    vfov: float = math.pi / 3
    max_range: float = 300.0

    def validate(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("depth map needs H, W >= 1")
        if not (0 < self.hfov < math.pi and 0 < self.vfov < math.pi):
            raise ValueError("field of view must lie in (0, pi)")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")

    def azimuth_offsets(self) -> np.ndarray:
        """Per-column azimuth offsets at pixel centres; column 0 is leftmost (positive)."""
        j = np.arange(self.width)
        return self.hfov * (0.5 - (j + 0.5) / self.width)


@dataclass(frozen=True)
class DepthMap:
    values: np.ndarray
    sensor: SensorParams

    @property
    def shape(self):
        return self.values.shape

    def normalized(self) -> np.ndarray:
        return self.values / self.sensor.max_range


_MIN_RANGE = 1e-9


def ray_distances(origin, angles: np.ndarray, field: ObstacleField, max_range: float) -> np.ndarray:
    """First-hit distance along each ray from ``origin`` (world-frame ``angles``).

    A ray starting inside an obstacle reports the exit distance. Misses and
    long hits are clamped to ``max_range``.
    """
    ox, oy = float(origin[0]), float(origin[1])
    angles = np.asarray(angles, dtype=np.float64)
    ux = np.cos(angles)[:, None]
    uy = np.sin(angles)[:, None]
    best = np.full(angles.shape[0], np.inf)
    if len(field.circles):
        cx, cy, r = field.circles.T
        fx = ox - cx
        fy = oy - cy
        b = ux * fx + uy * fy
        c = fx * fx + fy * fy - r * r
        disc = b * b - c
        with np.errstate(invalid="ignore"):
            sq = np.sqrt(disc)
        t1 = -b - sq
        t2 = -b + sq
        t = np.where(t1 > 0, t1, np.where(t2 > 0, t2, np.inf))
        t = np.where(disc >= 0, t, np.inf)
        best = np.minimum(best, t.min(axis=1))
    if len(field.boxes):
        x0, y0, x1, y1 = field.boxes.T
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_x = 1.0 / ux
            inv_y = 1.0 / uy
            tx0 = (x0 - ox) * inv_x
            tx1 = (x1 - ox) * inv_x
            ty0 = (y0 - oy) * inv_y
            ty1 = (y1 - oy) * inv_y
        # axis-parallel rays: inside the slab means unconstrained, outside means miss
        in_x = (x0 <= ox) & (ox <= x1)
        in_y = (y0 <= oy) & (oy <= y1)
        par_x = ux == 0
        par_y = uy == 0
        tx_near = np.where(par_x, np.where(in_x, -np.inf, np.inf), np.minimum(tx0, tx1))
        tx_far = np.where(par_x, np.where(in_x, np.inf, -np.inf), np.maximum(tx0, tx1))
        ty_near = np.where(par_y, np.where(in_y, -np.inf, np.inf), np.minimum(ty0, ty1))
        ty_far = np.where(par_y, np.where(in_y, np.inf, -np.inf), np.maximum(ty0, ty1))
        t_near = np.maximum(tx_near, ty_near)
        t_far = np.minimum(tx_far, ty_far)
        hit = (t_far >= t_near) & (t_far > 0)
        t = np.where(hit, np.where(t_near > 0, t_near, t_far), np.inf)
        best = np.minimum(best, t.min(axis=1))
    return np.clip(best, _MIN_RANGE, max_range)


def raycast_depth(state: UavKinematicState, field: ObstacleField, sensor: SensorParams = SensorParams()) -> DepthMap:
    """Synthetic depth image: one ray per column, rows duplicate the sweep."""
    sensor.validate()
    row = ray_distances((state.x, state.y), state.yaw + sensor.azimuth_offsets(), field, sensor.max_range)
    return DepthMap(np.tile(row, (sensor.height, 1)), sensor)


def check_termination(
    state: UavKinematicState,
    field: ObstacleField,
    target,
    spec: ScenarioSpec,
    steps: int = 0,
) -> StepEvents:
    """Terminal flags for a position after ``steps`` decision steps."""
    x, y = state.x, state.y
    dist = math.hypot(target[0] - x, target[1] - y)
    return StepEvents(
        collided=field.collides(x, y),
        reached_target=dist <= spec.capture_radius,
        exceeded_cap=dist > spec.d_max or steps >= spec.max_steps,
        out_of_bounds=not field.in_bounds(x, y),
    )
