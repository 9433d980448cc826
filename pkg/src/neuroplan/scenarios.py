"""Scenario data model, synthetic generation, recentering and file I/O.

A scenario is everything the planner sees: initial speed/heading, desired
speed, the commanded lane's centerline, both road boundaries, and the
k-nearest static objects padded with (0, 0) placeholders.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dynamics import DEFAULT_A_MAX, DEFAULT_DT, DEFAULT_HORIZON, DEFAULT_YAW_RATE_MAX
from .geometry import GeometryError, Point2, Polyline, arc_lengths, wrap_angle

SCHEMA_VERSION = 1
DEFAULT_K = 8
FIXTURE_DIR = Path(__file__).parent / "fixtures"

# Padding for stacked polylines of unequal length; never the nearest midpoint.
FAR = 1.0e6


class ScenarioError(ValueError):
    pass


class ScenarioFormatError(ScenarioError):
    def __init__(self, msg: str, field_name: str | None = None):
        super().__init__(msg)
        self.field = field_name


class ObjectSet:
    """Exactly ``k`` object slots: real objects first, then (0, 0) placeholders."""

    __slots__ = ("slots",)

    def __init__(self, slots):
        s = np.array(slots, dtype=float).reshape(-1, 2)
        if not np.isfinite(s).all():
            raise ScenarioError("object coordinates must be finite")
        s.setflags(write=False)
        self.slots = s

    @property
    def k(self) -> int:
        return self.slots.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return ~((self.slots[:, 0] == 0.0) & (self.slots[:, 1] == 0.0))

    @property
    def real(self) -> np.ndarray:
        return self.slots[self.mask]

    def __len__(self):
        return self.k

    def __eq__(self, other):
        return isinstance(other, ObjectSet) and np.array_equal(self.slots, other.slots)

    def __repr__(self):
        return f"ObjectSet(k={self.k}, real={int(self.mask.sum())})"


@dataclass
class Scenario:
    id: str
    v0: float
    h0: float
    v_d: float
    centerline: Polyline
    left_boundary: Polyline
    right_boundary: Polyline
    objects: ObjectSet
    ego: Point2 = Point2(0.0, 0.0)
    a_max: float = DEFAULT_A_MAX
    yaw_rate_max: float = DEFAULT_YAW_RATE_MAX
    dt: float = DEFAULT_DT
    horizon: int = DEFAULT_HORIZON
    predicate: dict | None = None
    description: str = ""

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return all(_field_eq(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))

    @property
    def is_centered(self) -> bool:
        return self.ego[0] == 0.0 and self.ego[1] == 0.0


def _field_eq(a, b):
    if isinstance(a, float) and isinstance(b, float):
        return a == b or (math.isnan(a) and math.isnan(b))
    return a == b


# --- geometric operations -------------------------------------------------

def recenter(s: Scenario) -> Scenario:
    """Translate every piece of geometry so the ego start sits at (0, 0)."""
    ex, ey = float(s.ego[0]), float(s.ego[1])
    if ex == 0.0 and ey == 0.0:
        return replace(s, ego=Point2(0.0, 0.0))
    shift = np.array([ex, ey])
    mask = s.objects.mask
    slots = s.objects.slots.copy()
    slots[mask] = slots[mask] - shift
    if ((slots[mask] == 0.0).all(axis=1)).any():
        raise ScenarioError("a real object coincides with the ego start")
    return replace(
        s,
        ego=Point2(0.0, 0.0),
        centerline=Polyline(s.centerline.points - shift),
        left_boundary=Polyline(s.left_boundary.points - shift),
        right_boundary=Polyline(s.right_boundary.points - shift),
        objects=ObjectSet(slots),
    )


def translate(s: Scenario, dx: float, dy: float) -> Scenario:
    """Shift the whole scene, ego included (placeholders stay placeholders)."""
    d = np.array([dx, dy])
    mask = s.objects.mask
    slots = s.objects.slots.copy()
    slots[mask] = slots[mask] + d
    return replace(
        s,
        ego=Point2(s.ego[0] + dx, s.ego[1] + dy),
        centerline=Polyline(s.centerline.points + d),
        left_boundary=Polyline(s.left_boundary.points + d),
        right_boundary=Polyline(s.right_boundary.points + d),
        objects=ObjectSet(slots),
    )


def resample_polyline(poly: Polyline, n: int) -> Polyline:
    """``n`` points at uniform arc-length fractions; endpoints kept exactly."""
    if n < 2:
        raise ValueError("resample needs n >= 2")
    pts = poly.points if isinstance(poly, Polyline) else Polyline(poly).points
    s = arc_lengths(pts)
    target = np.linspace(0.0, s[-1], n)
    out = np.column_stack([np.interp(target, s, pts[:, 0]), np.interp(target, s, pts[:, 1])])
    out[0] = pts[0]
    out[-1] = pts[-1]
    # a closed or doubled-back path can put two samples on the same point
    same = (np.diff(out, axis=0) == 0.0).all(axis=1)
    if same.any():
        raise GeometryError(f"resampling to {n} points puts samples {int(np.argmax(same))} and "
                            f"{int(np.argmax(same)) + 1} on the same point")
    return Polyline(out)


def pad_objects(objs, ego=(0.0, 0.0), k: int = DEFAULT_K) -> ObjectSet:
    """Keep the ``k`` objects nearest ``ego`` (stable on ties), nearest first,
    and fill the remaining slots with (0, 0)."""
    pts = np.array(objs, dtype=float).reshape(-1, 2)
    d = np.hypot(pts[:, 0] - ego[0], pts[:, 1] - ego[1])
    keep = pts[np.argsort(d, kind="stable")[:k]]
    slots = np.zeros((k, 2))
    slots[: len(keep)] = keep
    return ObjectSet(slots)


def check_invariants(s: Scenario, n: int = 50) -> None:
    """Raise ScenarioError if ``s`` breaks the data-model invariants."""
    for name in ("v0", "h0", "v_d", "a_max", "yaw_rate_max", "dt"):
        if not math.isfinite(getattr(s, name)):
            raise ScenarioError(f"{name} is not finite")
    if s.a_max <= 0 or s.yaw_rate_max <= 0 or s.dt <= 0 or s.horizon < 1:
        raise ScenarioError("limits, dt and horizon must be positive")
    mask = s.objects.mask
    if mask.any() and not mask[: int(mask.sum())].all():
        raise ScenarioError("placeholder slot precedes a real object")
    real = s.objects.real
    d = np.hypot(real[:, 0] - s.ego[0], real[:, 1] - s.ego[1])
    if (np.diff(d) < 0).any():
        raise ScenarioError("real objects are not sorted by distance to the ego")
    c = resample_polyline(s.centerline, n).points
    left = resample_polyline(s.left_boundary, n).points
    right = resample_polyline(s.right_boundary, n).points
    tangent = np.gradient(c, axis=0)
    for side, pts, sign in (("left", left, 1.0), ("right", right, -1.0)):
        off = pts - c
        cross = tangent[:, 0] * off[:, 1] - tangent[:, 1] * off[:, 0]
        if (sign * cross <= 0).any():
            i = int(np.argmax(sign * cross <= 0))
            raise ScenarioError(f"{side} boundary on the wrong side of the centerline at sample {i}")


# --- road construction ----------------------------------------------------

@dataclass
class Road:
    """Straight or constant-curvature reference line with lanes to its sides.

    Lateral offsets are positive to the left of travel; lane 0 is the
    rightmost lane.
    """

    origin: tuple[float, float]
    heading: float
    length: float
    curvature: float = 0.0
    lanes: int = 2
    lane_width: float = 3.5
    boundary_offset: float = 0.0
    spacing: float = 1.0

    @property
    def half_width(self) -> float:
        return self.lanes * self.lane_width / 2.0

    def lane_offset(self, lane: int) -> float:
        return -self.half_width + (lane + 0.5) * self.lane_width

    def heading_at(self, s):
        return self.heading + self.curvature * np.asarray(s, dtype=float)

    def point(self, s, d=0.0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        th = self.heading_at(s)
        if self.curvature == 0.0:
            x = self.origin[0] + s * math.cos(self.heading)
            y = self.origin[1] + s * math.sin(self.heading)
        else:
            k = self.curvature
            x = self.origin[0] + (np.sin(th) - math.sin(self.heading)) / k
            y = self.origin[1] + (math.cos(self.heading) - np.cos(th)) / k
        return np.stack([x - d * np.sin(th), y + d * np.cos(th)], axis=-1)

    def polyline(self, d: float) -> Polyline:
        count = max(2, int(round(self.length / self.spacing)) + 1)
        return Polyline(self.point(np.linspace(0.0, self.length, count), d))

    def centerline(self, lane: int) -> Polyline:
        return self.polyline(self.lane_offset(lane))

    def boundaries(self) -> tuple[Polyline, Polyline]:
        w = self.half_width + self.boundary_offset
        return self.polyline(w), self.polyline(-w)


# --- synthesis ------------------------------------------------------------

@dataclass
class GenConfig:
    k: int = DEFAULT_K
    preset: str = "default"          # or "red_light"
    lanes: tuple[int, int] = (2, 3)
    lane_width: float = 3.5
    length: tuple[float, float] = (60.0, 120.0)
    max_curvature: float = 0.02
    spacing: float = 1.0
    boundary_offset: tuple[float, float] = (0.0, 0.5)
    ego_s: tuple[float, float] = (10.0, 20.0)
    lateral_noise: float = 1.5
    heading_noise_deg: float = 45.0
    v0: tuple[float, float] = (0.0, 15.0)
    v_d: tuple[float, float] = (0.0, 15.0)
    object_ahead: float = 8.0
    object_spacing: float = 6.0
    row_distance: tuple[float, float] = (15.0, 25.0)
    row_spacing: float = 1.75
    a_max: float = DEFAULT_A_MAX
    yaw_rate_max: float = DEFAULT_YAW_RATE_MAX
    dt: float = DEFAULT_DT
    horizon: int = DEFAULT_HORIZON

    def validate(self):
        if self.k < 1:
            raise ScenarioError("k must be at least 1")
        if self.lanes[0] < 1 or self.lanes[1] < self.lanes[0]:
            raise ScenarioError("lane count range is invalid")
        if self.lane_width <= 0:
            raise ScenarioError("lane width must be positive")
        if self.lateral_noise >= self.lane_width:
            raise ScenarioError("lateral noise must stay below the lane width")
        if self.length[0] <= self.ego_s[1] + self.object_ahead:
            raise ScenarioError("road too short for the ego placement range")
        if abs(self.max_curvature) * (self.lanes[1] * self.lane_width) >= 1.0:
            raise ScenarioError("curvature too tight for the road width")
        if self.preset not in ("default", "red_light"):
            raise ScenarioError(f"unknown preset {self.preset!r}")


def synthesize(seed: int, cfg: GenConfig | None = None) -> Scenario:
    """Random road, ego state and static objects; a pure function of the inputs."""
    cfg = cfg or GenConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    red = cfg.preset == "red_light"
    lanes = int(rng.integers(cfg.lanes[0], cfg.lanes[1] + 1))
    length = rng.uniform(*cfg.length)
    curvature = 0.0 if red or rng.random() < 0.5 else rng.uniform(-cfg.max_curvature, cfg.max_curvature)
    road = Road(
        origin=(0.0, 0.0),
        heading=rng.uniform(-math.pi, math.pi),
        length=length,
        curvature=curvature,
        lanes=lanes,
        lane_width=cfg.lane_width,
        boundary_offset=rng.uniform(*cfg.boundary_offset),
        spacing=cfg.spacing,
    )
    target_lane = int(rng.integers(lanes))
    ego_lane = int(rng.integers(lanes))
    s_e = rng.uniform(*cfg.ego_s)
    d_e = road.lane_offset(ego_lane) + rng.uniform(-cfg.lateral_noise, cfg.lateral_noise)
    d_e = float(np.clip(d_e, -road.half_width + 0.25, road.half_width - 0.25))
    ego = road.point(s_e, d_e)
    h0 = wrap_angle(float(road.heading_at(s_e)) + math.radians(rng.uniform(-cfg.heading_noise_deg, cfg.heading_noise_deg)))
    v0 = rng.uniform(*cfg.v0)
    v_d = 0.0 if red else rng.uniform(*cfg.v_d)

    objs = []
    if red:
        s_row = s_e + rng.uniform(*cfg.row_distance)
        objs = list(_row(road, s_row, cfg.row_spacing, cfg.k))
    else:
        wanted = int(rng.integers(0, cfg.k + 1))
        w = road.half_width - 0.5
        for _ in range(wanted * 20):
            if len(objs) == wanted:
                break
            s_o = rng.uniform(s_e + cfg.object_ahead, road.length - 2.0)
            p = road.point(s_o, rng.uniform(-w, w))
            if all(np.hypot(*(p - q)) >= cfg.object_spacing for q in objs):
                objs.append(p)

    left, right = road.boundaries()
    scen = Scenario(
        id=f"synth-{cfg.preset}-{seed}",
        v0=float(v0), h0=float(h0), v_d=float(v_d),
        centerline=road.centerline(target_lane),
        left_boundary=left,
        right_boundary=right,
        objects=pad_objects(objs, ego, cfg.k),
        ego=Point2(float(ego[0]), float(ego[1])),
        a_max=cfg.a_max, yaw_rate_max=cfg.yaw_rate_max, dt=cfg.dt, horizon=cfg.horizon,
    )
    return recenter(scen)


def _row(road: Road, s_row: float, spacing: float, k: int):
    w = road.half_width - 0.25
    count = min(k, int(math.floor(2 * w / spacing)) + 1)
    for d in np.linspace(-w, w, count):
        yield road.point(s_row, d)


def synthesize_dataset(count: int, seed: int = 0, cfg: GenConfig | None = None) -> list[Scenario]:
    base = np.random.SeedSequence(seed)
    seeds = [int(c.generate_state(1)[0]) for c in base.spawn(count)]
    return [synthesize(s, cfg) for s in seeds]


# --- case studies ---------------------------------------------------------

def _case(name, description, road, ego_lane, target_lane, v0, h0_deg, v_d, objects=(),
          s_e=10.0, lateral=0.0, predicate=None, k=DEFAULT_K) -> Scenario:
    ego = road.point(s_e, road.lane_offset(ego_lane) + lateral)
    pts = [road.point(s, road.lane_offset(lane) + dl) for s, lane, dl in objects]
    left, right = road.boundaries()
    scen = Scenario(
        id=name, v0=float(v0), h0=math.radians(h0_deg), v_d=float(v_d),
        centerline=road.centerline(target_lane),
        left_boundary=left, right_boundary=right,
        objects=pad_objects(pts, ego, k),
        ego=Point2(float(ego[0]), float(ego[1])),
        predicate=predicate, description=description,
    )
    return recenter(scen)


def case_studies() -> list[Scenario]:
    """The eight case-study scenarios with their initial conditions and predicates."""
    straight = Road(origin=(-10.0, 0.0), heading=0.0, length=90.0)
    out = [
        _case("a_follow_centerline", "Follow the centerline. v0 5 m/s, heading 0 deg, desired 5 m/s.",
              straight, 0, 0, 5, 0, 5,
              predicate={"name": "follow_centerline",
                         "params": {"cte_from_step": 5, "cte_max": 1.0, "last_steps": 10, "speed_tol": 1.0}}),
        _case("b_lane_change_left_to_right",
              "Change lanes left to right on a road running at 40 deg. v0 3 m/s, heading 40 deg, desired 8 m/s.",
              Road(origin=(0.0, 0.0), heading=math.radians(40.0), length=90.0), 1, 0, 3, 40, 8,
              predicate={"name": "lane_change", "params": {"final_cte_max": 1.0}}),
        _case("c_go_around", "Move around an object directly ahead. v0 2 m/s, heading 0 deg, desired 7 m/s.",
              straight, 0, 0, 2, 0, 7, objects=[(25.0, 0, 0.0)],
              predicate={"name": "go_around",
                         "params": {"clearance_min": 2.0, "last_steps": 10, "speed_tol": 2.0}}),
        _case("d_lane_change_avoid_object",
              "Change lanes while avoiding an object. v0 5 m/s, heading 0 deg, desired 10 m/s.",
              straight, 0, 1, 5, 0, 10, objects=[(24.0, 0, 0.0)],
              predicate={"name": "lane_change_clear", "params": {"final_cte_max": 1.0, "clearance_min": 2.0}}),
        _case("e_lane_change", "Another lane change. v0 10 m/s, heading 0 deg, desired 3 m/s.",
              straight, 1, 0, 10, 0, 3,
              predicate={"name": "lane_change", "params": {"final_cte_max": 1.0}}),
        _case("f_right_to_left_avoid",
              "Avoid objects while moving from right to left. v0 10 m/s, heading 0 deg, desired 10 m/s.",
              Road(origin=(-10.0, 0.0), heading=0.0, length=90.0, lanes=3), 0, 2, 10, 0, 10,
              objects=[(22.0, 0, -0.8), (30.0, 0, -0.8)],
              predicate={"name": "lane_change_clear", "params": {"final_cte_max": 1.0, "clearance_min": 2.0}}),
        _reverse_case(),
        _red_light_case(),
    ]
    return out


def _reverse_case() -> Scenario:
    road = Road(origin=(0.0, -10.0), heading=math.radians(75.0), length=90.0)
    # ego 1 m inside the right edge, nose pointing at the boundary
    lateral = -road.half_width + 1.0 - road.lane_offset(0)
    return _case("g_reverse_to_correct_heading",
                 "Heading almost orthogonal to the road, close to the right boundary. "
                 "v0 0 m/s, heading 0 deg, desired 7 m/s.",
                 road, 0, 0, 0, 0, 7, lateral=lateral,
                 predicate={"name": "reverse_then_forward",
                            "params": {"early_steps": 10, "reverse_speed": -0.1, "heading_error_max_deg": 30.0}})


def _red_light_case() -> Scenario:
    road = Road(origin=(-10.0, 0.0), heading=0.0, length=90.0)
    s_e, s_row = 10.0, 24.0
    row = list(_row(road, s_row, 1.75, DEFAULT_K))
    ego = road.point(s_e, road.lane_offset(0))
    row_point = road.point(s_row, 0.0) - ego
    left, right = road.boundaries()
    scen = Scenario(
        id="h_red_light", v0=6.0, h0=0.0, v_d=0.0,
        centerline=road.centerline(0), left_boundary=left, right_boundary=right,
        objects=pad_objects(row, ego, DEFAULT_K),
        ego=Point2(float(ego[0]), float(ego[1])),
        predicate={"name": "red_light",
                   "params": {"final_speed_max": 0.5,
                              "row_point": [float(row_point[0]), float(row_point[1])],
                              "row_normal": [1.0, 0.0]}},
        description="Stop before a red light modelled as a row of static objects. "
                    "v0 6 m/s, heading 0 deg, desired 0 m/s.",
    )
    return recenter(scen)


# --- serialization --------------------------------------------------------

def to_dict(s: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "id": s.id,
        "description": s.description,
        "v0": s.v0,
        "h0": s.h0,
        "v_d": s.v_d,
        "ego": [float(s.ego[0]), float(s.ego[1])],
        "a_max": s.a_max,
        "yaw_rate_max": s.yaw_rate_max,
        "dt": s.dt,
        "horizon": s.horizon,
        "centerline": s.centerline.points.tolist(),
        "left_boundary": s.left_boundary.points.tolist(),
        "right_boundary": s.right_boundary.points.tolist(),
        "objects": s.objects.slots.tolist(),
        "predicate": s.predicate,
    }


_REQUIRED = ("schema_version", "id", "v0", "h0", "v_d", "centerline", "left_boundary",
             "right_boundary", "objects")


def from_dict(d: dict) -> Scenario:
    for name in _REQUIRED:
        if name not in d:
            raise ScenarioFormatError(f"missing field {name!r}", name)
    if d["schema_version"] != SCHEMA_VERSION:
        raise ScenarioFormatError(f"unsupported schema_version {d['schema_version']!r}", "schema_version")
    try:
        return Scenario(
            id=str(d["id"]),
            v0=float(d["v0"]), h0=float(d["h0"]), v_d=float(d["v_d"]),
            centerline=Polyline(d["centerline"]),
            left_boundary=Polyline(d["left_boundary"]),
            right_boundary=Polyline(d["right_boundary"]),
            objects=ObjectSet(d["objects"]),
            ego=Point2.of(d.get("ego", (0.0, 0.0))),
            a_max=float(d.get("a_max", DEFAULT_A_MAX)),
            yaw_rate_max=float(d.get("yaw_rate_max", DEFAULT_YAW_RATE_MAX)),
            dt=float(d.get("dt", DEFAULT_DT)),
            horizon=int(d.get("horizon", DEFAULT_HORIZON)),
            predicate=d.get("predicate"),
            description=str(d.get("description", "")),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ScenarioFormatError):
            raise
        raise ScenarioFormatError(f"malformed scenario: {e}") from e


def save(s: Scenario, path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(to_dict(s), indent=1) + "\n")


def load(path) -> Scenario:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(d, dict):
        raise ScenarioFormatError(f"{path}: top level must be an object")
    return from_dict(d)


def load_dir(path) -> list[Scenario]:
    files = sorted(Path(path).glob("*.json"))
    return [load(f) for f in files]


def write_fixtures(path=FIXTURE_DIR) -> list[Path]:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    written = []
    for s in case_studies():
        p = path / f"{s.id}.json"
        save(s, p)
        written.append(p)
    return written


@dataclass
class SceneBatch:
    """Scenarios stacked for vectorized loss evaluation.

    Polylines of unequal length are padded with far-away midpoints so they
    can never be selected as nearest.
    """

    ids: list[str]
    v0: np.ndarray
    h0: np.ndarray
    v_d: np.ndarray
    a_max: np.ndarray
    yaw_rate_max: np.ndarray
    center_mid: np.ndarray          # (B, M, 2)
    center_heading: np.ndarray      # (B, M)
    center_seg: np.ndarray          # (B, M, 2, 2) segment endpoints
    left_mid: np.ndarray
    left_seg: np.ndarray
    right_mid: np.ndarray
    right_seg: np.ndarray
    objects: np.ndarray             # (B, k, 2)
    object_mask: np.ndarray         # (B, k)
    dt: float
    horizon: int
    scenarios: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.ids)


def _stack_poly(polys):
    m = max(len(p) - 1 for p in polys)
    mid = np.full((len(polys), m, 2), FAR)
    seg = np.empty((len(polys), m, 2, 2))
    seg[:, :, 0, :] = FAR
    seg[:, :, 1, :] = FAR + 1.0
    head = np.zeros((len(polys), m))
    for b, p in enumerate(polys):
        j = len(p) - 1
        mid[b, :j] = p.midpoints
        seg[b, :j, 0] = p.points[:-1]
        seg[b, :j, 1] = p.points[1:]
        head[b, :j] = p.headings
    return mid, seg, head


def make_batch(scenarios) -> SceneBatch:
    scenarios = list(scenarios)
    if not scenarios:
        raise ScenarioError("empty batch")
    dt, horizon = scenarios[0].dt, scenarios[0].horizon
    ks = {s.objects.k for s in scenarios}
    for s in scenarios:
        if not s.is_centered:
            raise ScenarioError(f"scenario {s.id} is not recentered")
        if s.dt != dt or s.horizon != horizon:
            raise ScenarioError("a batch must share dt and horizon")
    if len(ks) != 1:
        raise ScenarioError("a batch must share the object slot count")
    cm, cs, ch = _stack_poly([s.centerline for s in scenarios])
    lm, ls, _ = _stack_poly([s.left_boundary for s in scenarios])
    rm, rs, _ = _stack_poly([s.right_boundary for s in scenarios])
    arr = lambda name: np.array([getattr(s, name) for s in scenarios], dtype=float)  # noqa: E731
    return SceneBatch(
        ids=[s.id for s in scenarios],
        v0=arr("v0"), h0=arr("h0"), v_d=arr("v_d"), a_max=arr("a_max"), yaw_rate_max=arr("yaw_rate_max"),
        center_mid=cm, center_heading=ch, center_seg=cs,
        left_mid=lm, left_seg=ls, right_mid=rm, right_seg=rs,
        objects=np.stack([s.objects.slots for s in scenarios]),
        object_mask=np.stack([s.objects.mask for s in scenarios]),
        dt=dt, horizon=horizon, scenarios=scenarios,
    )
