"""Continuous 2D four-room world with a constant north/south drift.

A class of deterministic environments sharing one map: four square rooms,
one per quadrant, connected in a loop by four narrow hallways.  Class
members differ only in the drift direction applied every step.  Movement
is clipped per axis, then the motion segment is cut at the first wall hit
(no sliding) and pulled back by a small inset so positions stay interior.

All geometry constants default to exactly representable binary fractions
so the north and south members are exact mirror images of each other.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, InputError

DEFAULT_SIDE = 10.0
DEFAULT_ROOM_SIDE = 4.375
DEFAULT_HALLWAY_WIDTH = 1.0
DEFAULT_WALL_INSET = 1e-3
DEFAULT_HORIZON = 150
DEFAULT_MAX_STEP = 0.25
DEFAULT_SLOPE = 0.05


class SlopeDirection(Enum):
    NORTH = "north"
    SOUTH = "south"


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float
    y0: float
    x1: float
    y1: float

    def center(self) -> np.ndarray:
        return np.array([0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)])

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


def _subtract_opening(lo: float, hi: float, open_lo: float, open_hi: float) -> list[tuple[float, float]]:
    """Split interval [lo, hi] by removing [open_lo, open_hi]."""
    out = []
    if open_lo > lo:
        out.append((lo, open_lo))
    if open_hi < hi:
        out.append((open_hi, hi))
    return out


@dataclass(frozen=True, eq=False)
class RoomMap:
    """Free region (rooms + hallways) and its wall segments.

    Walls are kept as two arrays for vectorized collision tests:
    ``v_walls`` rows are (x, y0, y1) vertical segments and ``h_walls``
    rows are (y, x0, x1) horizontal segments.  Compared by identity; maps
    are immutable after construction and shared across class members.
    """

    side: float
    rooms: tuple[Rect, ...]
    hallways: tuple[Rect, ...]
    v_walls: np.ndarray = field(repr=False)
    h_walls: np.ndarray = field(repr=False)

    @property
    def free_rects(self) -> tuple[Rect, ...]:
        return self.rooms + self.hallways

    def contains(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        return any(r.contains(x, y) for r in self.free_rects)

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Vectorized membership test for an (n, 2) array."""
        points = np.asarray(points, dtype=np.float64)
        inside = np.zeros(len(points), dtype=bool)
        for r in self.free_rects:
            inside |= (
                (points[:, 0] >= r.x0) & (points[:, 0] <= r.x1)
                & (points[:, 1] >= r.y0) & (points[:, 1] <= r.y1)
            )
        return inside

    def free_area(self) -> float:
        return sum((r.x1 - r.x0) * (r.y1 - r.y0) for r in self.free_rects)

    def wall_segments(self) -> list[tuple[float, float, float, float]]:
        """All walls as (x0, y0, x1, y1) tuples, for export and plotting."""
        segs = [(x, y0, x, y1) for x, y0, y1 in self.v_walls]
        segs += [(x0, y, x1, y) for y, x0, x1 in self.h_walls]
        return segs


def build_room_map(
    side: float = DEFAULT_SIDE,
    room_side: float = DEFAULT_ROOM_SIDE,
    hallway_width: float = DEFAULT_HALLWAY_WIDTH,
) -> RoomMap:
    """Construct the four-room loop map.

    Rooms sit centered in each quadrant; each pair of adjacent rooms is
    joined by a hallway across the gap, centered on the midpoint of the
    shared quadrant boundary.  The connectivity graph is the 4-cycle
    SW-NW-NE-SE, with no opening at the map center.
    """
    half = side / 2.0
    if not 0 < hallway_width < room_side < half:
        raise ConfigError(
            f"need 0 < hallway_width < room_side < side/2, got "
            f"hallway_width={hallway_width}, room_side={room_side}, side={side}"
        )
    margin = (half - room_side) / 2.0
    rh = room_side / 2.0
    wh = hallway_width / 2.0
    # Quadrant centers; room i occupies [cx - rh, cx + rh] x [cy - rh, cy + rh].
    centers = {
        "sw": (half / 2.0, half / 2.0),
        "se": (half + half / 2.0, half / 2.0),
        "nw": (half / 2.0, half + half / 2.0),
        "ne": (half + half / 2.0, half + half / 2.0),
    }
    rooms = {
        name: Rect(cx - rh, cy - rh, cx + rh, cy + rh) for name, (cx, cy) in centers.items()
    }
    # Hallways bridge the inter-room gap of width 2*margin; each opening has
    # width hallway_width centered at the midpoint of the shared boundary.
    hallways = {
        "north": Rect(half - margin, half + half / 2.0 - wh, half + margin, half + half / 2.0 + wh),
        "south": Rect(half - margin, half / 2.0 - wh, half + margin, half / 2.0 + wh),
        "west": Rect(half / 2.0 - wh, half - margin, half / 2.0 + wh, half + margin),
        "east": Rect(half + half / 2.0 - wh, half - margin, half + half / 2.0 + wh, half + margin),
    }

    v_walls: list[tuple[float, float, float]] = []
    h_walls: list[tuple[float, float, float]] = []

    # Room edges, with openings where a hallway attaches.  Horizontal
    # hallways open the facing vertical room edges; vertical hallways the
    # horizontal ones.  Attachment is matched with a tolerance so custom
    # (non-dyadic) dimensions still produce a connected map.
    tol = 1e-9

    def room_walls(r: Rect) -> None:
        right_open = left_open = top_open = bottom_open = None
        for h in (hallways["north"], hallways["south"]):
            if h.y0 >= r.y0 and h.y1 <= r.y1:
                if abs(h.x0 - r.x1) < tol:
                    right_open = (h.y0, h.y1)
                if abs(h.x1 - r.x0) < tol:
                    left_open = (h.y0, h.y1)
        for h in (hallways["west"], hallways["east"]):
            if h.x0 >= r.x0 and h.x1 <= r.x1:
                if abs(h.y0 - r.y1) < tol:
                    top_open = (h.x0, h.x1)
                if abs(h.y1 - r.y0) < tol:
                    bottom_open = (h.x0, h.x1)
        for x, opening in ((r.x0, left_open), (r.x1, right_open)):
            if opening is None:
                v_walls.append((x, r.y0, r.y1))
            else:
                v_walls.extend((x, lo, hi) for lo, hi in _subtract_opening(r.y0, r.y1, *opening))
        for y, opening in ((r.y0, bottom_open), (r.y1, top_open)):
            if opening is None:
                h_walls.append((y, r.x0, r.x1))
            else:
                h_walls.extend((y, lo, hi) for lo, hi in _subtract_opening(r.x0, r.x1, *opening))

    for r in rooms.values():
        room_walls(r)
    # Hallway side walls run along the corridor axis.
    for name in ("north", "south"):
        h = hallways[name]
        h_walls.append((h.y0, h.x0, h.x1))
        h_walls.append((h.y1, h.x0, h.x1))
    for name in ("west", "east"):
        h = hallways[name]
        v_walls.append((h.x0, h.y0, h.y1))
        v_walls.append((h.x1, h.y0, h.y1))

    return RoomMap(
        side=side,
        rooms=(rooms["sw"], rooms["se"], rooms["nw"], rooms["ne"]),
        hallways=(hallways["north"], hallways["south"], hallways["west"], hallways["east"]),
        v_walls=np.array(v_walls, dtype=np.float64),
        h_walls=np.array(h_walls, dtype=np.float64),
    )


@dataclass(frozen=True)
class EnvSpec:
    """One class member: shared geometry plus a drift direction."""

    slope_direction: SlopeDirection
    slope_magnitude: float
    geometry: RoomMap
    horizon: int
    max_step: float = DEFAULT_MAX_STEP
    wall_inset: float = DEFAULT_WALL_INSET

    def __post_init__(self):
        if self.slope_magnitude < 0:
            raise ConfigError(f"slope_magnitude must be >= 0, got {self.slope_magnitude}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")

    @property
    def start_position(self) -> np.ndarray:
        # Fixed start at the center of the north-west room.
        return self.geometry.rooms[2].center()


@dataclass(frozen=True)
class EnvClass:
    """Uniformly sampled set of environments sharing one geometry."""

    members: tuple[EnvSpec, ...]

    def __post_init__(self):
        if not self.members:
            raise ConfigError("environment class must have at least one member")

    @property
    def geometry(self) -> RoomMap:
        return self.members[0].geometry

    @property
    def horizon(self) -> int:
        return self.members[0].horizon


@dataclass
class EnvState:
    """Agent position and elapsed step count; a plain value, never shared."""

    position: np.ndarray
    steps_elapsed: int


def make_slope_class(
    horizon: int = DEFAULT_HORIZON,
    slope_magnitude: float = DEFAULT_SLOPE,
    max_step: float = DEFAULT_MAX_STEP,
    side: float = DEFAULT_SIDE,
    room_side: float = DEFAULT_ROOM_SIDE,
    hallway_width: float = DEFAULT_HALLWAY_WIDTH,
    wall_inset: float = DEFAULT_WALL_INSET,
) -> EnvClass:
    """Build the two-member class: north drift and south drift."""
    geometry = build_room_map(side=side, room_side=room_side, hallway_width=hallway_width)
    members = tuple(
        EnvSpec(
            slope_direction=direction,
            slope_magnitude=slope_magnitude,
            geometry=geometry,
            horizon=horizon,
            max_step=max_step,
            wall_inset=wall_inset,
        )
        for direction in (SlopeDirection.NORTH, SlopeDirection.SOUTH)
    )
    return EnvClass(members=members)


def sample_env_index(env_class: EnvClass, rng: np.random.Generator) -> int:
    """Draw the index of one class member uniformly."""
    return int(rng.integers(len(env_class.members)))


def sample_env(env_class: EnvClass, rng: np.random.Generator) -> EnvSpec:
    """Draw one class member uniformly."""
    return env_class.members[sample_env_index(env_class, rng)]


def reset(spec: EnvSpec, rng: np.random.Generator | None = None) -> EnvState:
    """Start a new episode at the fixed start position."""
    return EnvState(position=spec.start_position.copy(), steps_elapsed=0)


def _first_wall_hit(geometry: RoomMap, p: np.ndarray, delta: np.ndarray) -> float:
    """Smallest t in (0, 1] where p + t*delta meets a wall, or inf."""
    t_min = np.inf
    dx, dy = delta
    if dx != 0.0:
        vw = geometry.v_walls
        t = (vw[:, 0] - p[0]) / dx
        y_at = p[1] + t * dy
        ok = (t > 0.0) & (t <= 1.0) & (y_at >= vw[:, 1]) & (y_at <= vw[:, 2])
        if ok.any():
            t_min = t[ok].min()
    if dy != 0.0:
        hw = geometry.h_walls
        t = (hw[:, 0] - p[1]) / dy
        x_at = p[0] + t * dx
        ok = (t > 0.0) & (t <= 1.0) & (x_at >= hw[:, 1]) & (x_at <= hw[:, 2])
        if ok.any():
            t_min = min(t_min, t[ok].min())
    return t_min


def step(spec: EnvSpec, state: EnvState, action) -> tuple[EnvState, bool]:
    """Apply one clipped action plus drift; stop at the first wall hit.

    Pure function of (spec, state, action): inputs are not mutated.
    """
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (2,) or not np.all(np.isfinite(action)):
        raise InputError(f"action must be a finite 2-vector, got {action!r}")
    clipped = np.clip(action, -spec.max_step, spec.max_step)
    drift = spec.slope_magnitude if spec.slope_direction is SlopeDirection.NORTH else -spec.slope_magnitude
    delta = np.array([clipped[0], clipped[1] + drift])

    p = state.position
    norm = float(np.hypot(delta[0], delta[1]))
    if norm == 0.0:
        new_pos = p.copy()
    else:
        t_hit = _first_wall_hit(spec.geometry, p, delta)
        if np.isinf(t_hit):
            new_pos = p + delta
        else:
            t_back = max(0.0, t_hit - spec.wall_inset / norm)
            new_pos = p + t_back * delta

    steps = state.steps_elapsed + 1
    return EnvState(position=new_pos, steps_elapsed=steps), steps >= spec.horizon
