"""Waypoint planning over occupancy bitmaps and smooth reference generation.

A lattice hybrid A* (position plus 16 heading bins, straight and
minimum-radius arc primitives) finds a collision-free polyline, which a
minimum-snap piecewise polynomial then interpolates. The simulator tracks
the polynomial, never the raw grid path.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from barlift.model import ReferenceSample


class NoPathError(RuntimeError):
    """Goal unreachable from start on the given grid."""


class DegenerateTiming(ValueError):
    """Waypoint times that admit no polynomial fit (duplicates, reversals)."""


class TimeOutOfRange(ValueError):
    """Trajectory queried outside its time span; the caller clamps."""


class CurvatureUndefined(ValueError):
    """Curvature requested where the reference is (near) stationary."""


# ---------------------------------------------------------------------------
# occupancy grids


@dataclass
class OccupancyGrid:
    """Row-major bitmap; cells[iy, ix] == 1 means obstacle.

    Row 0 is y = 0. Any query outside the bounds reads as occupied.
    """

    width: int
    height: int
    resolution: float
    cells: np.ndarray

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.shape != (self.height, self.width):
            raise ValueError("cells shape must be (height, width)")

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(x / self.resolution)), int(math.floor(y / self.resolution))

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_free_cell(self, ix: int, iy: int) -> bool:
        return self.in_bounds(ix, iy) and self.cells[iy, ix] == 0

    def is_free(self, x: float, y: float) -> bool:
        return self.is_free_cell(*self.cell_of(x, y))

    def center(self, ix: int, iy: int) -> tuple[float, float]:
        return (ix + 0.5) * self.resolution, (iy + 0.5) * self.resolution


def load_grid(path: str) -> OccupancyGrid:
    """Read the plain-text format: 'width height resolution' header, then
    height rows of width 0/1 characters, row 0 first."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError("empty grid file")
    head = lines[0].split()
    if len(head) != 3:
        raise ValueError("grid header must be 'width height resolution'")
    width, height = int(head[0]), int(head[1])
    resolution = float(head[2])
    rows = lines[1:]
    if len(rows) != height:
        raise ValueError(f"expected {height} rows, found {len(rows)}")
    cells = np.zeros((height, width), dtype=np.uint8)
    for iy, row in enumerate(rows):
        if len(row) != width or set(row) - {"0", "1"}:
            raise ValueError(f"row {iy} must be {width} 0/1 characters")
        cells[iy] = np.frombuffer(row.encode("ascii"), dtype=np.uint8) - ord("0")
    return OccupancyGrid(width, height, resolution, cells)


def save_grid(grid: OccupancyGrid, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{grid.width} {grid.height} {grid.resolution:g}\n")
        for iy in range(grid.height):
            fh.write("".join("1" if c else "0" for c in grid.cells[iy]) + "\n")


# ---------------------------------------------------------------------------
# hybrid A*


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    t: float


@dataclass(frozen=True)
class PlannerConfig:
    rho_min: float = 1.0  # minimum turn radius [m]
    heading_bins: int = 16
    speed: float = 0.5  # reference speed for time allocation [m/s]

    def __post_init__(self) -> None:
        if self.rho_min <= 0.0 or self.speed <= 0.0:
            raise ValueError("rho_min and speed must be positive")
        if self.heading_bins < 8:
            raise ValueError("need at least 8 heading bins")


def _grid_distance_map(grid: OccupancyGrid, goal_cell: tuple[int, int]) -> np.ndarray:
    """8-connected distance-to-goal in meters; inf where unreachable."""
    dist = np.full((grid.height, grid.width), np.inf)
    gx, gy = goal_cell
    dist[gy, gx] = 0.0
    heap = [(0.0, gx, gy)]
    res = grid.resolution
    diag = math.sqrt(2.0) * res
    while heap:
        d, ix, iy = heapq.heappop(heap)
        if d > dist[iy, ix]:
            continue
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = ix + dx, iy + dy
                if not grid.is_free_cell(nx, ny):
                    continue
                nd = d + (diag if dx and dy else res)
                if nd < dist[ny, nx]:
                    dist[ny, nx] = nd
                    heapq.heappush(heap, (nd, nx, ny))
    return dist


def _arc_end(pose, turn, rho, dth):
    """Endpoint after following an arc of signed heading change dth
    (turn = +1 puts the center on the left)."""
    x, y, th = pose
    cx = x - turn * rho * math.sin(th)
    cy = y + turn * rho * math.cos(th)
    phi = th - turn * math.pi / 2.0 + dth
    return cx + rho * math.cos(phi), cy + rho * math.sin(phi), th + dth


def _segment_free(grid: OccupancyGrid, p0, p1) -> bool:
    """Straight segment collision check by exact cell traversal.

    Walks every cell the segment passes through (a corner transit checks
    both side cells), so thin clips between sample points cannot slip
    through the way they can with stepped sampling.
    """
    res = grid.resolution
    x0, y0 = p0[0] / res, p0[1] / res
    x1, y1 = p1[0] / res, p1[1] / res
    ix, iy = int(math.floor(x0)), int(math.floor(y0))
    ix1, iy1 = int(math.floor(x1)), int(math.floor(y1))
    if not grid.is_free_cell(ix, iy):
        return False
    dx, dy = x1 - x0, y1 - y0
    sx = 1 if dx >= 0 else -1
    sy = 1 if dy >= 0 else -1
    tx = math.inf if dx == 0 else ((ix + (sx > 0)) - x0) / dx
    ty = math.inf if dy == 0 else ((iy + (sy > 0)) - y0) / dy
    dtx = math.inf if dx == 0 else sx / dx
    dty = math.inf if dy == 0 else sy / dy
    while (ix, iy) != (ix1, iy1):
        if min(tx, ty) > 1.0:  # numeric guard: crossing lies past the end
            break
        if abs(tx - ty) < 1e-12:
            if not (
                grid.is_free_cell(ix + sx, iy) and grid.is_free_cell(ix, iy + sy)
            ):
                return False
            ix += sx
            iy += sy
            tx += dtx
            ty += dty
        elif tx < ty:
            ix += sx
            tx += dtx
        else:
            iy += sy
            ty += dty
        if not grid.is_free_cell(ix, iy):
            return False
    return True


def _arc_free(grid: OccupancyGrid, pose, turn, rho, dth) -> bool:
    n = max(2, int(math.ceil(abs(dth) * rho / (0.5 * grid.resolution))))
    for k in range(1, n + 1):
        x, y, _ = _arc_end(pose, turn, rho, dth * k / n)
        if not grid.is_free(x, y):
            return False
    return True


def _shortcut(grid: OccupancyGrid, points: list) -> list:
    """Shortest polyline through an in-order subset of the chain vertices.

    Greedy farthest-visible jumping is not length optimal: the farthest
    visible vertex can sit on the wrong side of an obstacle and commit the
    rest of the route to a detour. Chains are short, so solve the one
    dimensional shortest path over all vertex pairs instead.
    """
    n = len(points)
    dist = [math.inf] * n
    hop: list[int | None] = [None] * n
    dist[0] = 0.0
    for j in range(1, n):
        pj = points[j]
        for i in range(j):
            d = dist[i] + math.hypot(pj[0] - points[i][0], pj[1] - points[i][1])
            if d < dist[j] - 1e-12 and _segment_free(grid, points[i], pj):
                dist[j] = d
                hop[j] = i
    idx = [n - 1]
    while hop[idx[-1]] is not None:
        idx.append(hop[idx[-1]])
    idx.reverse()
    return [points[k] for k in idx]


def plan_waypoints(
    grid: OccupancyGrid,
    start: tuple[float, float, float],
    goal: tuple[float, float, float],
    cfg: PlannerConfig | None = None,
) -> list[Waypoint]:
    """Collision-free waypoint sequence from start pose to goal position.

    Search states are (cell x, cell y, heading bin); primitives are one
    straight step of one cell length and left/right arcs of one heading bin
    at the minimum radius. The goal test is position only (same cell). The
    found pose chain is shortcut by line of sight before time allocation at
    constant speed.
    """
    cfg = cfg or PlannerConfig()
    if not grid.is_free(start[0], start[1]):
        raise ValueError("start pose lies in occupied space")
    if not grid.is_free(goal[0], goal[1]):
        raise ValueError("goal pose lies in occupied space")
    # Every link of the returned polyline has passed _segment_free: expansion
    # links against the true primitive endpoint, re-centering hops and the
    # start and goal splices inside one free (convex) cell, shortcut links in
    # the chain pass.

    goal_cell = grid.cell_of(goal[0], goal[1])
    if grid.cell_of(start[0], start[1]) == goal_cell:
        d = math.hypot(goal[0] - start[0], goal[1] - start[1])
        return [
            Waypoint(start[0], start[1], 0.0),
            Waypoint(goal[0], goal[1], max(d, grid.resolution) / cfg.speed),
        ]

    dmap = _grid_distance_map(grid, goal_cell)
    binw = 2.0 * math.pi / cfg.heading_bins
    dth = binw  # arcs advance exactly one heading bin
    arc_len = cfg.rho_min * dth
    straight_len = grid.resolution

    def snap(pose):
        ix, iy = grid.cell_of(pose[0], pose[1])
        ib = int(round(pose[2] / binw)) % cfg.heading_bins
        return ix, iy, ib

    def canonical(key):
        # re-centering keeps the lattice finite; the hop from the true
        # primitive endpoint to the center stays inside the endpoint's own
        # free cell, so the output polyline threads it safely
        cx, cy = grid.center(key[0], key[1])
        return (cx, cy, key[2] * binw)

    def heuristic(pose):
        ix, iy = grid.cell_of(pose[0], pose[1])
        eu = math.hypot(goal[0] - pose[0], goal[1] - pose[1])
        return max(eu, float(dmap[iy, ix]))

    start_key = snap(start)
    if not math.isfinite(dmap[start_key[1], start_key[0]]):
        raise NoPathError("goal not reachable from start")

    best = {start_key: 0.0}
    parent: dict[tuple, tuple | None] = {start_key: None}
    pose_of = {start_key: start}  # first step leaves from the true pose
    via: dict[tuple, tuple | None] = {start_key: None}
    counter = 0
    heap = [(heuristic(start), counter, start_key)]
    goal_key = None
    while heap:
        f, _, key = heapq.heappop(heap)
        g = best[key]
        pose = pose_of[key]
        if (key[0], key[1]) == goal_cell:
            goal_key = key
            break
        for turn in (0, 1, -1):
            if turn == 0:
                nx = pose[0] + straight_len * math.cos(pose[2])
                ny = pose[1] + straight_len * math.sin(pose[2])
                npose = (nx, ny, pose[2])
                step = straight_len
            else:
                if not _arc_free(grid, pose, turn, cfg.rho_min, turn * dth):
                    continue
                npose = _arc_end(pose, turn, cfg.rho_min, turn * dth)
                step = arc_len
            if not _segment_free(grid, pose, npose):
                continue
            nkey = snap(npose)
            if not grid.is_free_cell(nkey[0], nkey[1]):
                continue
            ng = g + step
            if ng < best.get(nkey, math.inf) - 1e-12:
                best[nkey] = ng
                parent[nkey] = key
                pose_of[nkey] = canonical(nkey)
                via[nkey] = npose
                counter += 1
                heapq.heappush(heap, (ng + heuristic(pose_of[nkey]), counter, nkey))
    if goal_key is None:
        raise NoPathError("open set exhausted before reaching the goal")

    chain = []
    key = goal_key
    while key is not None:
        chain.append(pose_of[key])
        v = via.get(key)
        if v is not None:
            chain.append(v)
        key = parent[key]
    chain.reverse()
    points = [(p[0], p[1]) for p in chain]
    points.append((goal[0], goal[1]))

    short = _shortcut(grid, points)

    waypoints = [Waypoint(short[0][0], short[0][1], 0.0)]
    for p in short[1:]:
        prev = waypoints[-1]
        d = math.hypot(p[0] - prev.x, p[1] - prev.y)
        if d < 1e-9:
            continue
        waypoints.append(Waypoint(p[0], p[1], prev.t + d / cfg.speed))
    return waypoints


def path_length(waypoints: list[Waypoint]) -> float:
    return sum(
        math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(waypoints, waypoints[1:])
    )


# ---------------------------------------------------------------------------
# minimum-snap trajectories


@dataclass(frozen=True)
class PolySegment:
    """Degree-7 polynomial in the unit-time variable tau = (t-t_start)/T."""

    a: np.ndarray
    t_start: float
    t_end: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        if self.a.shape != (8,):
            raise ValueError("segment needs exactly 8 coefficients")
        if not self.t_end > self.t_start:
            raise ValueError("segment must span positive time")

    @property
    def T(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class TrajectorySpec:
    x_segments: tuple[PolySegment, ...]
    y_segments: tuple[PolySegment, ...]
    generation: int = 0

    def __post_init__(self) -> None:
        if len(self.x_segments) != len(self.y_segments) or not self.x_segments:
            raise ValueError("axis segment lists must be equal and nonempty")
        for sx, sy in zip(self.x_segments, self.y_segments):
            if sx.t_start != sy.t_start or sx.t_end != sy.t_end:
                raise ValueError("axis knots must coincide")
        object.__setattr__(self, "x_segments", tuple(self.x_segments))
        object.__setattr__(self, "y_segments", tuple(self.y_segments))

    @property
    def t0(self) -> float:
        return self.x_segments[0].t_start

    @property
    def t1(self) -> float:
        return self.x_segments[-1].t_end


@dataclass(frozen=True)
class BoundaryConditions:
    """Physical derivatives (orders 1..3) pinned at the trajectory ends.

    Rows are derivative order 1, 2, 3; columns are the x and y axes.
    """

    start: np.ndarray = field(default_factory=lambda: np.zeros((3, 2)))
    end: np.ndarray = field(default_factory=lambda: np.zeros((3, 2)))

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float))
        if self.start.shape != (3, 2) or self.end.shape != (3, 2):
            raise ValueError("boundary arrays must have shape (3, 2)")


def _deriv_row(order: int, tau: float) -> np.ndarray:
    """Row r with r @ a = d^order/dtau^order of sum a_j tau^j."""
    row = np.zeros(8)
    for j in range(order, 8):
        row[j] = math.perm(j, order) * tau ** (j - order)
    return row


def _snap_gram() -> np.ndarray:
    """Integral over [0,1] of the outer product of 4th-derivative rows."""
    Q = np.zeros((8, 8))
    for j in range(4, 8):
        for k in range(4, 8):
            Q[j, k] = math.perm(j, 4) * math.perm(k, 4) / (j + k - 7)
    return Q


_SNAP_GRAM = _snap_gram()


def _solve_axis(
    values: np.ndarray, times: np.ndarray, bc_start: np.ndarray, bc_end: np.ndarray
) -> list[np.ndarray]:
    M = len(times) - 1
    T = np.diff(times)
    n = 8 * M

    H = np.zeros((n, n))
    for i in range(M):
        H[8 * i : 8 * i + 8, 8 * i : 8 * i + 8] = _SNAP_GRAM / T[i] ** 7
    H /= np.abs(H).max()

    rows, rhs = [], []

    def add(row, b):
        rows.append(row)
        rhs.append(b)

    for i in range(M):
        r0 = np.zeros(n)
        r0[8 * i : 8 * i + 8] = _deriv_row(0, 0.0)
        add(r0, values[i])
        r1 = np.zeros(n)
        r1[8 * i : 8 * i + 8] = _deriv_row(0, 1.0)
        add(r1, values[i + 1])
    for i in range(M - 1):
        for k in (1, 2, 3):
            r = np.zeros(n)
            r[8 * i : 8 * i + 8] = _deriv_row(k, 1.0) / T[i] ** k
            r[8 * (i + 1) : 8 * (i + 1) + 8] = -_deriv_row(k, 0.0) / T[i + 1] ** k
            add(r, 0.0)
    for k in (1, 2, 3):
        r = np.zeros(n)
        r[0:8] = _deriv_row(k, 0.0) / T[0] ** k
        add(r, bc_start[k - 1])
        r = np.zeros(n)
        r[8 * (M - 1) :] = _deriv_row(k, 1.0) / T[M - 1] ** k
        add(r, bc_end[k - 1])

    A = np.vstack(rows)
    m = A.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = H
    kkt[:n, n:] = A.T
    kkt[n:, :n] = A
    b = np.concatenate([np.zeros(n), np.asarray(rhs)])
    try:
        sol = np.linalg.solve(kkt, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateTiming(f"singular interpolation system: {exc}") from exc
    return [sol[8 * i : 8 * i + 8] for i in range(M)]


def generate_min_snap(
    waypoints: list[Waypoint],
    boundary: BoundaryConditions | None = None,
    generation: int = 0,
) -> TrajectorySpec:
    """Piecewise degree-7 polynomial through the waypoints minimizing the
    integrated squared snap, with C3 continuity at interior knots.

    Solved per axis as an equality-constrained quadratic program via its
    KKT system; with a single segment the constraints determine the
    polynomial completely.
    """
    if len(waypoints) < 2:
        raise ValueError("need at least two waypoints")
    times = np.array([w.t for w in waypoints])
    if np.any(np.diff(times) <= 1e-12):
        raise DegenerateTiming("waypoint times must be strictly increasing")
    boundary = boundary or BoundaryConditions()

    xs = np.array([w.x for w in waypoints])
    ys = np.array([w.y for w in waypoints])
    ax = _solve_axis(xs, times, boundary.start[:, 0], boundary.end[:, 0])
    ay = _solve_axis(ys, times, boundary.start[:, 1], boundary.end[:, 1])
    segx = tuple(
        PolySegment(a, times[i], times[i + 1]) for i, a in enumerate(ax)
    )
    segy = tuple(
        PolySegment(a, times[i], times[i + 1]) for i, a in enumerate(ay)
    )
    return TrajectorySpec(segx, segy, generation)


def _segment_index(spec: TrajectorySpec, t: float) -> int:
    starts = [s.t_start for s in spec.x_segments]
    i = int(np.searchsorted(starts, t, side="right")) - 1
    return min(max(i, 0), len(starts) - 1)


def _eval_segment(seg: PolySegment, t: float, order: int) -> float:
    tau = (t - seg.t_start) / seg.T
    c = seg.a
    for _ in range(order):
        c = c[1:] * np.arange(1, len(c))
    val = 0.0
    for coeff in c[::-1]:
        val = val * tau + coeff
    return val / seg.T**order


def evaluate_trajectory(spec: TrajectorySpec, t: float, order: int = 0) -> np.ndarray:
    """(x, y) value of the given time derivative at t."""
    if not 0 <= order <= 4:
        raise ValueError("derivative order must be 0..4")
    if t < spec.t0 - 1e-12 or t > spec.t1 + 1e-12:
        raise TimeOutOfRange(f"t={t} outside [{spec.t0}, {spec.t1}]")
    t = min(max(t, spec.t0), spec.t1)
    i = _segment_index(spec, t)
    return np.array(
        [
            _eval_segment(spec.x_segments[i], t, order),
            _eval_segment(spec.y_segments[i], t, order),
        ]
    )


def signed_curvature_radius(spec: TrajectorySpec, t: float) -> float:
    """Curvature radius with the turn side in the sign (+ = left/CCW).

    Straight running (cross term below 1e-12) reads as +inf.
    """
    v = evaluate_trajectory(spec, t, 1)
    speed2 = float(v @ v)
    if speed2 <= 1e-12:
        raise CurvatureUndefined("reference is stationary at this time")
    a = evaluate_trajectory(spec, t, 2)
    cross = v[0] * a[1] - v[1] * a[0]
    if abs(cross) < 1e-12:
        return math.inf
    return speed2 ** 1.5 / cross


def curvature_radius(spec: TrajectorySpec, t: float) -> float:
    """Unsigned curvature radius; +inf on straight segments."""
    return abs(signed_curvature_radius(spec, t))


def _end_taylor(seg: PolySegment, t: float) -> tuple[float, float, float]:
    """Velocity, acceleration and jerk of seg at t, expanded about t_end.

    Near a rest endpoint the speed decays like (t_end-t)^3 and the direct
    Horner sum at tau ~ 1 loses it to cancellation; re-expanding about the
    end keeps every term at the scale of the answer.  Derivative values at
    the end that sit below 1e-9 of the leading ones are boundary-condition
    residuals, not signal, and are snapped to zero.
    """
    c = seg.a
    e = [0.0] * 8
    for k in range(1, 8):
        c = c[1:] * np.arange(1, len(c))
        e[k] = float(c.sum())  # Horner at tau = 1 is the coefficient sum
    scale = max(abs(e[4]), abs(e[5]), abs(e[6]), abs(e[7]), 1e-30)
    for k in (1, 2, 3):
        if abs(e[k]) < 1e-9 * scale:
            e[k] = 0.0
    s = (seg.t_end - t) / seg.T
    out = []
    for m in (1, 2, 3):
        acc = 0.0
        for k in range(7, m - 1, -1):
            acc = acc * -s + e[k] / math.factorial(k - m)
        out.append(acc / seg.T**m)
    return out[0], out[1], out[2]


def reference_sample(
    spec: TrajectorySpec, t: float, theta_fallback: float = 0.0
) -> ReferenceSample:
    """Full tracking reference at time t.

    Heading, rates and their derivatives follow from the planar flat
    outputs.  At a true standstill (clamped endpoints at rest, or speed
    below 1e-12 m/s) the heading is undefined and theta_fallback is held
    with zero rates.
    """
    p = evaluate_trajectory(spec, t, 0)
    v = evaluate_trajectory(spec, t, 1)
    a = evaluate_trajectory(spec, t, 2)
    j = evaluate_trajectory(spec, t, 3)
    speed = math.hypot(v[0], v[1])
    at_edge = t <= spec.t0 or t >= spec.t1
    if speed < 1e-7 and not at_edge:
        i = _segment_index(spec, t)
        sx = spec.x_segments[i]
        if t - sx.t_start > 0.5 * sx.T:
            vx, ax, jx = _end_taylor(sx, t)
            vy, ay, jy = _end_taylor(spec.y_segments[i], t)
            v = np.array([vx, vy])
            a = np.array([ax, ay])
            j = np.array([jx, jy])
            speed = math.hypot(vx, vy)
    p3 = np.array([p[0], p[1], 0.0])
    v3 = np.array([v[0], v[1], 0.0])
    a3 = np.array([a[0], a[1], 0.0])
    if speed < 1e-12 or (at_edge and speed < 1e-7):
        heading = np.array([math.cos(theta_fallback), math.sin(theta_fallback)])
        return ReferenceSample(
            p_r=p3, pdot_r=v3, pddot_r=a3,
            theta_r=theta_fallback, omega_r=0.0, v_r=speed,
            vdot_r=float(a @ heading), omegadot_r=0.0, rho=math.inf,
        )
    cross = v[0] * a[1] - v[1] * a[0]
    dot_va = float(v @ a)
    cross_j = v[0] * j[1] - v[1] * j[0]
    omega_r = cross / speed**2
    return ReferenceSample(
        p_r=p3, pdot_r=v3, pddot_r=a3,
        theta_r=math.atan2(v[1], v[0]),
        omega_r=omega_r,
        v_r=speed,
        vdot_r=dot_va / speed,
        omegadot_r=cross_j / speed**2 - 2.0 * cross * dot_va / speed**4,
        rho=math.inf if abs(cross) < 1e-12 else speed**3 / cross,
    )
