"""2D configuration spaces, exact collision tests, and a seeded bidirectional RRT.

Obstacles are tagged discs and convex polygons; the robot footprint is a disc
or a convex polygon translated (never rotated) to the query configuration.
Only the first two configuration dimensions are geometric; an optional third
dimension passes through interpolation untouched.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union


class MotionError(Exception):
    pass


class OutOfBoundsError(MotionError):
    pass


@dataclass(frozen=True)
class Disc:
    tag: str
    center: tuple
    radius: float
    movable: bool = False


@dataclass(frozen=True)
class ConvexPolygon:
    tag: str
    vertices: tuple
    movable: bool = False


Obstacle = Union[Disc, ConvexPolygon]


@dataclass(frozen=True)
class ConfigSpace:
    bounds: tuple
    obstacles: tuple = ()
    robot_radius: float = 0.05
    robot_polygon: tuple | None = None
    grasp_offsets: tuple = ()

    def __post_init__(self) -> None:
        if len(self.bounds) not in (2, 3):
            raise MotionError("configuration space must have 2 or 3 dimensions")
        for lo, hi in self.bounds:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise MotionError("bounds must be finite and ordered")

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    def diagonal(self) -> float:
        (x0, x1), (y0, y1) = self.bounds[0], self.bounds[1]
        return math.hypot(x1 - x0, y1 - y0)

    def contains(self, config: Sequence[float]) -> bool:
        if len(config) != self.dimension:
            return False
        return all(lo <= c <= hi for c, (lo, hi) in zip(config, self.bounds))

    def grasp_offset(self, tag: str) -> tuple:
        for t, off in self.grasp_offsets:
            if t == tag:
                return tuple(off)
        return (0.0, 0.0)


@dataclass(frozen=True)
class MotionProblem:
    cspace: ConfigSpace
    start: tuple
    target: tuple

    def __post_init__(self) -> None:
        for cfg in (self.start, self.target):
            if not self.cspace.contains(cfg):
                raise OutOfBoundsError(f"configuration {cfg} outside bounds")


@dataclass(frozen=True)
class Trajectory:
    """Dense waypoint path; consecutive waypoints within ``resolution``."""

    waypoints: tuple
    resolution: float

    def __post_init__(self) -> None:
        if not self.waypoints:
            raise MotionError("trajectory needs at least one waypoint")
        if self.resolution <= 0:
            raise MotionError("resolution must be positive")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if _dist(a, b) > self.resolution * (1 + 1e-9):
                raise MotionError("waypoint spacing exceeds resolution")

    def length(self) -> float:
        return sum(_dist(a, b) for a, b in zip(self.waypoints, self.waypoints[1:]))

    @property
    def start(self) -> tuple:
        return self.waypoints[0]

    @property
    def end(self) -> tuple:
        return self.waypoints[-1]


@dataclass(frozen=True)
class InfeasibleReport:
    """Planner failure, with obstacle tags ordered by collision frequency."""

    blocking_tags: tuple
    reason: str
    iterations: int = 0


# -- geometric primitives ---------------------------------------------------


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def _point_segment_dist(p, a, b) -> float:
    ax, ay = a[0], a[1]
    bx, by = b[0], b[1]
    px, py = p[0], p[1]
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / denom))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _point_in_polygon(p, vertices) -> bool:
    n = len(vertices)
    sign = 0
    for i in range(n):
        ax, ay = vertices[i]
        bx, by = vertices[(i + 1) % n]
        cross = (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax)
        if abs(cross) < 1e-15:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def _disc_polygon_collide(center, radius, vertices) -> bool:
    if _point_in_polygon(center, vertices):
        return True
    n = len(vertices)
    for i in range(n):
        if _point_segment_dist(center, vertices[i], vertices[(i + 1) % n]) < radius:
            return True
    return False


def _polygons_collide(verts_a, verts_b) -> bool:
    # Separating axis test for convex polygons.
    for verts in (verts_a, verts_b):
        n = len(verts)
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            nx, ny = ay - by, bx - ax
            proj_a = [nx * x + ny * y for x, y in verts_a]
            proj_b = [nx * x + ny * y for x, y in verts_b]
            if max(proj_a) <= min(proj_b) or max(proj_b) <= min(proj_a):
                return False
    return True


def _footprint_collides(cspace: ConfigSpace, config, obstacle: Obstacle) -> bool:
    cx, cy = config[0], config[1]
    if cspace.robot_polygon is not None:
        robot = tuple((vx + cx, vy + cy) for vx, vy in cspace.robot_polygon)
        if isinstance(obstacle, Disc):
            return _disc_polygon_collide(obstacle.center, obstacle.radius, robot)
        return _polygons_collide(robot, obstacle.vertices)
    r = cspace.robot_radius
    if isinstance(obstacle, Disc):
        return _dist((cx, cy), obstacle.center) < r + obstacle.radius
    return _disc_polygon_collide((cx, cy), r, obstacle.vertices)


def colliding_tags(
    cspace: ConfigSpace,
    config: Sequence[float],
    ignore_tags: Iterable[str] = (),
) -> tuple:
    """Tags of obstacles the footprint intersects, sorted."""
    if not cspace.contains(config):
        raise OutOfBoundsError(f"configuration {tuple(config)} outside bounds")
    ignore = set(ignore_tags)
    hit = {
        obs.tag
        for obs in cspace.obstacles
        if obs.tag not in ignore and _footprint_collides(cspace, config, obs)
    }
    return tuple(sorted(hit))


def in_collision(
    cspace: ConfigSpace,
    config: Sequence[float],
    ignore_tags: Iterable[str] = (),
) -> bool:
    return bool(colliding_tags(cspace, config, ignore_tags))


# -- trajectories -------------------------------------------------------------


def densify(points: Sequence[Sequence[float]], resolution: float) -> tuple:
    """Insert intermediate configurations so spacing is at most resolution."""
    out = [tuple(points[0])]
    for a, b in zip(points, points[1:]):
        d = _dist(a, b)
        steps = max(1, math.ceil(d / resolution))
        for i in range(1, steps + 1):
            t = i / steps
            out.append(tuple(x + (y - x) * t for x, y in zip(a, b)))
    return tuple(out)


def _segment_tags(cspace, a, b, resolution, ignore, counter: Counter | None) -> bool:
    """True when the interpolated segment is collision free."""
    d = _dist(a, b)
    steps = max(1, math.ceil(d / resolution))
    for i in range(steps + 1):
        t = i / steps
        cfg = tuple(x + (y - x) * t for x, y in zip(a, b))
        tags = colliding_tags(cspace, cfg, ignore)
        if tags:
            if counter is not None:
                counter.update(tags)
            return False
    return True


def swept_tags(
    cspace: ConfigSpace,
    trajectory: Trajectory,
    ignore_tags: Iterable[str] = (),
) -> frozenset:
    """Tags of all obstacles intersecting the footprint swept along the path."""
    hit: set = set()
    ignore = set(ignore_tags)
    for wp in trajectory.waypoints:
        hit.update(colliding_tags(cspace, wp, ignore))
    return frozenset(hit)


def is_placement_config(
    cspace: ConfigSpace,
    obj: str,
    config: Sequence[float],
    target_pose: Sequence[float],
    tol: float = 1e-6,
) -> bool:
    """Gripper at config puts the object at target_pose under its grasp offset."""
    off = cspace.grasp_offset(obj)
    expected = (target_pose[0] + off[0], target_pose[1] + off[1])
    return math.hypot(config[0] - expected[0], config[1] - expected[1]) <= tol


# -- planner ------------------------------------------------------------------


class _Tree:
    """RRT tree with a uniform-grid nearest neighbour index."""

    def __init__(self, root: tuple, cell: float) -> None:
        self.nodes = [root]
        self.parents = [-1]
        self.cell = cell
        self.grid: dict = {}
        self._index(0)

    def _cell_of(self, cfg) -> tuple:
        return (int(math.floor(cfg[0] / self.cell)), int(math.floor(cfg[1] / self.cell)))

    def _index(self, idx: int) -> None:
        self.grid.setdefault(self._cell_of(self.nodes[idx]), []).append(idx)

    def add(self, cfg: tuple, parent: int) -> int:
        self.nodes.append(cfg)
        self.parents.append(parent)
        idx = len(self.nodes) - 1
        self._index(idx)
        return idx

    def nearest(self, cfg) -> int:
        cx, cy = self._cell_of(cfg)
        best, best_d = 0, float("inf")
        for ring in range(0, 64):
            found = False
            for dx in range(-ring, ring + 1):
                for dy in range(-ring, ring + 1):
                    if max(abs(dx), abs(dy)) != ring:
                        continue
                    for idx in self.grid.get((cx + dx, cy + dy), ()):
                        found = True
                        d = _dist(cfg, self.nodes[idx])
                        if d < best_d:
                            best, best_d = idx, d
            if best_d < (ring * self.cell):
                return best
            if found and ring > 0 and best_d < ((ring + 1) * self.cell):
                return best
        if best_d == float("inf"):
            best = min(range(len(self.nodes)), key=lambda i: _dist(cfg, self.nodes[i]))
        return best

    def path_to_root(self, idx: int) -> list:
        out = []
        while idx >= 0:
            out.append(self.nodes[idx])
            idx = self.parents[idx]
        return out


def plan_motion(
    problem: MotionProblem,
    rng: random.Random,
    iteration_budget: int = 10000,
    step_fraction: float = 0.05,
    resolution_fraction: float = 0.01,
    goal_bias: float = 0.1,
    ignore_tags: Iterable[str] = (),
) -> Trajectory | InfeasibleReport:
    """Bidirectional RRT with goal connection.

    Deterministic for a fixed rng state and budget.  On failure the report
    carries the obstacle tags most often responsible for rejected extensions.
    """
    cspace = problem.cspace
    ignore = frozenset(ignore_tags)
    resolution = resolution_fraction * cspace.diagonal()
    step = step_fraction * cspace.diagonal()
    blocked: Counter = Counter()

    start_tags = colliding_tags(cspace, problem.start, ignore)
    if start_tags:
        return InfeasibleReport(start_tags, "start_in_collision", 0)
    target_tags = colliding_tags(cspace, problem.target, ignore)
    if target_tags:
        return InfeasibleReport(target_tags, "target_in_collision", 0)

    if _segment_tags(cspace, problem.start, problem.target, resolution, ignore, blocked):
        return Trajectory(densify([problem.start, problem.target], resolution), resolution)

    tree_a = _Tree(tuple(problem.start), step)
    tree_b = _Tree(tuple(problem.target), step)
    iterations = 1  # straight-line attempt counted

    def steer(from_cfg, to_cfg):
        d = _dist(from_cfg, to_cfg)
        if d <= step:
            return tuple(to_cfg)
        return tuple(x + (y - x) * (step / d) for x, y in zip(from_cfg, to_cfg))

    def sample(toward_root):
        if rng.random() < goal_bias:
            return toward_root
        return tuple(rng.uniform(lo, hi) for lo, hi in cspace.bounds)

    while iterations < iteration_budget:
        iterations += 1
        target_sample = sample(tree_b.nodes[0])
        near = tree_a.nearest(target_sample)
        new_cfg = steer(tree_a.nodes[near], target_sample)
        if not _segment_tags(cspace, tree_a.nodes[near], new_cfg, resolution, ignore, blocked):
            tree_a, tree_b = tree_b, tree_a
            continue
        new_idx = tree_a.add(new_cfg, near)

        # connect: greedily extend the other tree toward the new node
        conn = tree_b.nearest(new_cfg)
        while iterations < iteration_budget:
            iterations += 1
            reach = steer(tree_b.nodes[conn], new_cfg)
            if not _segment_tags(cspace, tree_b.nodes[conn], reach, resolution, ignore, blocked):
                break
            conn = tree_b.add(reach, conn)
            if _dist(reach, new_cfg) < 1e-12:
                part_a = tree_a.path_to_root(new_idx)[::-1]
                part_b = tree_b.path_to_root(conn)
                points = part_a + part_b[1:]
                if points[0] != tuple(problem.start):
                    points = points[::-1]
                waypoints = densify(points, resolution)
                return Trajectory(waypoints, resolution)
        tree_a, tree_b = tree_b, tree_a

    tags = tuple(tag for tag, _ in blocked.most_common())
    return InfeasibleReport(tags, "budget_exhausted", iterations)
