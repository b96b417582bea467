"""Point-maze safety filtering with reachability-based backup maneuvers.

A velocity-controlled point robot (double integrator, componentwise force
and velocity limits) must cross a U-shaped maze whose walls are inflated at
evaluation time by a padding width the demonstrations never saw. Plans are
fixed-horizon force sequences; the model-based output k is a backup
acceleration applied for 0.5 s before braking to rest. Safety of a
(plan, backup) pair is certified by interval reach tubes: axis-aligned
boxes sweeping consecutive positions, inflated by the robot radius plus a
discretization margin, checked against walls and workspace bounds.

The receding-horizon loop commits the first ``COMMIT_STEPS`` actions of a
certified plan and stores its backup; when no certified pair can be drawn
it executes the stored backup to a full stop and replans from rest.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .gmm import fit_kde, reverse_chain
from .potentials import InteractionPotential, ModelBasedPrior, uniform_box_prior
from .sampler import JM2DConfig, jm2d_sample
from .schedules import StochasticityPolicy

DT = 0.1
A_MAX = 1.0
V_MAX = 2.0
ROBOT_RADIUS = 0.1
PLAN_HORIZON = 32        # actions per plan window (x is 64-dimensional)
COMMIT_STEPS = 8         # actions executed per replanning event
STEP_CAP = 600
V_STOP = 0.05
ACCEL_STEPS = 5          # 0.5 s backup acceleration phase at DT = 0.1
TUBE_MARGIN = 0.5 * V_MAX * DT
BRAKE_STEPS = int(math.ceil(V_MAX / (A_MAX * DT))) + 2
TUBE_STEPS = ACCEL_STEPS + BRAKE_STEPS

VARIANTS = ("high_quality", "x_plus_y_plus", "x_minus_y_minus")
SAMPLERS = ("jm2d", "sequential", "gibbs", "unfiltered")


class MazeConfigError(ValueError):
    pass


@dataclass
class RobotState:
    pos: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        if not (np.all(np.isfinite(self.pos)) and np.all(np.isfinite(self.vel))):
            raise ValueError("state components must be finite")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])


@dataclass(frozen=True)
class MazeSpec:
    """Axis-aligned walls (xmin, ymin, xmax, ymax) inside a workspace box."""

    walls: np.ndarray
    bounds: np.ndarray                     # (xmin, ymin, xmax, ymax)
    start: np.ndarray
    goal: np.ndarray
    goal_radius: float = 0.4
    robot_radius: float = ROBOT_RADIUS

    def __post_init__(self):
        object.__setattr__(self, "walls",
                           np.asarray(self.walls, dtype=float).reshape(-1, 4))
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=float))
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))


def default_maze() -> MazeSpec:
    """U-shaped three-wall maze: start inside the U, goal below it."""
    walls = np.array([
        [2.3, 3.3, 5.7, 3.7],   # bottom of the U
        [2.3, 3.7, 2.7, 6.0],   # left arm
        [5.3, 3.7, 5.7, 6.0],   # right arm
    ])
    return MazeSpec(
        walls=walls,
        bounds=np.array([0.0, 0.0, 8.0, 8.0]),
        start=np.array([4.0, 4.8]),
        goal=np.array([4.0, 1.6]),
    )


def _step_arrays(pos, vel, action):
    """Shared integrator: clip force, advance position, clip velocity."""
    a = np.clip(action, -A_MAX, A_MAX)
    new_pos = pos + vel * DT + 0.5 * a * DT * DT
    new_vel = np.clip(vel + a * DT, -V_MAX, V_MAX)
    return new_pos, new_vel


def step_dynamics(state: RobotState, action, dt: float = DT) -> RobotState:
    """Advance the double integrator one step (dt is fixed at module DT)."""
    if dt != DT:
        raise ValueError("the integrator step is fixed at module DT")
    pos, vel = _step_arrays(state.pos, state.vel, np.asarray(action, dtype=float))
    return RobotState(pos, vel)


def inflate_walls(maze: MazeSpec, w: float) -> MazeSpec:
    """Grow every wall by w on all four sides; w = 0 returns equal geometry."""
    if w < 0.0:
        raise ValueError("inflation width must be >= 0")
    grown = maze.walls + np.array([-w, -w, w, w])
    out = MazeSpec(grown, maze.bounds, maze.start, maze.goal,
                   maze.goal_radius, maze.robot_radius)
    for name, point in (("start", maze.start), ("goal", maze.goal)):
        if _point_walls_distance(point, grown) <= maze.robot_radius:
            raise MazeConfigError(f"inflation w = {w} makes the {name} infeasible")
    return out


def _point_walls_distance(p, walls) -> float:
    p = np.asarray(p, dtype=float)
    if walls.shape[0] == 0:
        return np.inf
    dx = np.maximum(np.maximum(walls[:, 0] - p[0], p[0] - walls[:, 2]), 0.0)
    dy = np.maximum(np.maximum(walls[:, 1] - p[1], p[1] - walls[:, 3]), 0.0)
    return float(np.min(np.hypot(dx, dy)))


def _collides(p, maze: MazeSpec) -> bool:
    """Robot disc at p intersects a wall or leaves the workspace."""
    r = maze.robot_radius
    b = maze.bounds
    if (p[0] - r < b[0] or p[1] - r < b[1] or p[0] + r > b[2] or p[1] + r > b[3]):
        return True
    return _point_walls_distance(p, maze.walls) < r


def _clamp_backup(k, variant):
    k = np.clip(np.asarray(k, dtype=float), -A_MAX, A_MAX)
    if variant == "x_plus_y_plus":
        return np.maximum(k, 0.0)
    if variant == "x_minus_y_minus":
        return np.minimum(k, 0.0)
    if variant != "high_quality":
        raise ValueError(f"unknown backup variant: {variant!r}")
    return k


def backup_prior(variant: str) -> ModelBasedPrior:
    """Prior over the backup acceleration, restricted by the variant."""
    if variant == "x_plus_y_plus":
        return uniform_box_prior([0.0, 0.0], [A_MAX, A_MAX])
    if variant == "x_minus_y_minus":
        return uniform_box_prior([-A_MAX, -A_MAX], [0.0, 0.0])
    if variant == "high_quality":
        return uniform_box_prior([-A_MAX, -A_MAX], [A_MAX, A_MAX])
    raise ValueError(f"unknown backup variant: {variant!r}")


def _backup_positions(pos, vel, k, variant):
    """Positions of the backup maneuver, batched: (B, TUBE_STEPS + 1, 2).

    Applies the (variant-clamped) acceleration k for the fixed accel phase,
    then brakes with a = -clip(v / DT) until rest; the braking law reaches
    v = 0 exactly within the fixed simulation length.
    """
    k = _clamp_backup(k, variant)
    B = pos.shape[0]
    out = np.empty((B, TUBE_STEPS + 1, 2))
    out[:, 0] = pos
    p, v = pos.copy(), vel.copy()
    for t in range(TUBE_STEPS):
        a = k if t < ACCEL_STEPS else -np.clip(v / DT, -A_MAX, A_MAX)
        p, v = _step_arrays(p, v, a)
        out[:, t + 1] = p
    return out


def _swept_boxes(positions, inflation):
    """(B, T, 4) boxes covering consecutive position pairs plus inflation."""
    lo = np.minimum(positions[:, :-1], positions[:, 1:]) - inflation
    hi = np.maximum(positions[:, :-1], positions[:, 1:]) + inflation
    return np.concatenate([lo, hi], axis=2)


def _boxes_overlap(boxes, walls, bounds):
    """Worst signed overlap of (B, T, 4) boxes with walls and bounds: (B,)."""
    lo_x, lo_y = boxes[..., 0], boxes[..., 1]
    hi_x, hi_y = boxes[..., 2], boxes[..., 3]
    viol = np.maximum.reduce([
        bounds[0] - lo_x, bounds[1] - lo_y, hi_x - bounds[2], hi_y - bounds[3],
    ])
    worst = viol.max(axis=-1)
    for wall in walls:
        ox = np.minimum(hi_x, wall[2]) - np.maximum(lo_x, wall[0])
        oy = np.minimum(hi_y, wall[3]) - np.maximum(lo_y, wall[1])
        worst = np.maximum(worst, np.minimum(ox, oy).max(axis=-1))
    return worst


def backup_reach_tube(state: RobotState, k, variant: str = "high_quality",
                      dt: float = DT, a_max: float = A_MAX) -> np.ndarray:
    """Interval over-approximation of the backup maneuver, one box per step.

    Boxes are inflated by robot_radius + TUBE_MARGIN. Trailing steps after
    the robot is at rest collapse into the final box, so an already-resting
    maneuver yields a single stationary box.
    """
    if dt != DT or a_max != A_MAX:
        raise ValueError("tube constants are fixed at module DT / A_MAX")
    positions = _backup_positions(state.pos[None, :], state.vel[None, :],
                                  np.asarray(k, dtype=float)[None, :], variant)[0]
    boxes = _swept_boxes(positions[None], ROBOT_RADIUS + TUBE_MARGIN)[0]
    keep = [0]
    for t in range(1, boxes.shape[0]):
        if not np.array_equal(boxes[t], boxes[keep[-1]]):
            keep.append(t)
    return boxes[keep]


def check_safe(tube: np.ndarray, maze: MazeSpec) -> float:
    """Max signed overlap of tube boxes with walls/bounds (<= 0 means safe)."""
    tube = np.asarray(tube, dtype=float).reshape(1, -1, 4)
    return float(_boxes_overlap(tube, maze.walls, maze.bounds)[0])


def _roll_plans(state: RobotState, actions):
    """Batched rollout of (B, T, 2) action segments from one state."""
    B, T, _ = actions.shape
    pos = np.broadcast_to(state.pos, (B, 2)).copy()
    vel = np.broadcast_to(state.vel, (B, 2)).copy()
    positions = np.empty((B, T + 1, 2))
    positions[:, 0] = pos
    for t in range(T):
        pos, vel = _step_arrays(pos, vel, actions[:, t])
        positions[:, t + 1] = pos
    return positions, pos, vel


def maze_potential(maze: MazeSpec, state: RobotState, variant: str = "high_quality",
                   t_commit: int = COMMIT_STEPS,
                   temperature: float = 1.0) -> InteractionPotential:
    """Interaction potential for one replanning event at ``state``.

    J(k | x) is the distance from the end of the committed plan segment to
    the goal; g is the worst wall/bounds overlap over both the committed
    segment's swept boxes and the backup tube started from the segment's
    predicted end state.
    """
    if t_commit > PLAN_HORIZON:
        raise ValueError("t_commit cannot exceed the plan horizon")
    walls, bounds, goal = maze.walls, maze.bounds, maze.goal
    inflation = maze.robot_radius + TUBE_MARGIN
    n_a = 2 * t_commit

    def _plan_part(X):
        acts = X[:, :n_a].reshape(-1, t_commit, 2)
        positions, end_pos, end_vel = _roll_plans(state, acts)
        plan_g = _boxes_overlap(_swept_boxes(positions, inflation), walls, bounds)
        jvals = np.linalg.norm(end_pos - goal, axis=-1)
        return jvals, plan_g, end_pos, end_vel

    def product_eval(X, K):
        N, M = X.shape[0], K.shape[0]
        jvals, plan_g, end_pos, end_vel = _plan_part(X)
        pos_rep = np.repeat(end_pos, M, axis=0)
        vel_rep = np.repeat(end_vel, M, axis=0)
        k_tile = np.tile(K, (N, 1))
        tube_pos = _backup_positions(pos_rep, vel_rep, k_tile, variant)
        tube_g = _boxes_overlap(_swept_boxes(tube_pos, inflation), walls, bounds)
        g = np.maximum(plan_g[:, None], tube_g.reshape(N, M))
        return np.broadcast_to(jvals[:, None], (N, M)), g

    def objective(k, x):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(k)[:-1])
        X = np.broadcast_to(x, shape + (x.shape[-1],)).reshape(-1, x.shape[-1])
        jvals = _plan_part(X)[0]
        return jvals.reshape(shape)

    def constraint(k, x):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(k)[:-1])
        X = np.broadcast_to(x, shape + (x.shape[-1],)).reshape(-1, x.shape[-1])
        Kf = np.broadcast_to(k, shape + (2,)).reshape(-1, 2)
        _, plan_g, end_pos, end_vel = _plan_part(X)
        tube_pos = _backup_positions(end_pos, end_vel, Kf, variant)
        tube_g = _boxes_overlap(_swept_boxes(tube_pos, inflation), walls, bounds)
        return np.maximum(plan_g, tube_g).reshape(shape)

    return InteractionPotential(objective, constraint, temperature,
                                product_eval=product_eval)


# ---------------------------------------------------------------------------
# Scripted expert demonstrations
# ---------------------------------------------------------------------------

_GRID_RES = 0.2
_ASTAR_CLEARANCE = 0.75
_BOUNDS_CLEARANCE = 0.9
_PD_KP = 2.5
_PD_KD = 3.0
_CARROT_AHEAD = 3     # path vertices of lookahead
_EXPERT_SPEED = 1.0   # cruise speed of the scripted expert
_EXPERT_KICK = 0.3    # process-noise std during demonstrations


def _grid_path(maze: MazeSpec, extra_walls, start, goal):
    b = maze.bounds
    nx = int(round((b[2] - b[0]) / _GRID_RES))
    ny = int(round((b[3] - b[1]) / _GRID_RES))
    xs = b[0] + (np.arange(nx) + 0.5) * _GRID_RES
    ys = b[1] + (np.arange(ny) + 0.5) * _GRID_RES
    cx, cy = np.meshgrid(xs, ys, indexing="ij")
    blocked = (cx < b[0] + _BOUNDS_CLEARANCE) | (cx > b[2] - _BOUNDS_CLEARANCE) | \
              (cy < b[1] + _BOUNDS_CLEARANCE) | (cy > b[3] - _BOUNDS_CLEARANCE)
    for wall in np.vstack([maze.walls] + list(extra_walls)).reshape(-1, 4):
        dx = np.maximum(np.maximum(wall[0] - cx, cx - wall[2]), 0.0)
        dy = np.maximum(np.maximum(wall[1] - cy, cy - wall[3]), 0.0)
        blocked |= np.hypot(dx, dy) <= _ASTAR_CLEARANCE

    def cell_of(p):
        return (int(np.clip((p[0] - b[0]) / _GRID_RES, 0, nx - 1)),
                int(np.clip((p[1] - b[1]) / _GRID_RES, 0, ny - 1)))

    start_c, goal_c = cell_of(start), cell_of(goal)
    blocked[start_c] = False
    blocked[goal_c] = False
    moves = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
             (1, 1, math.sqrt(2)), (1, -1, math.sqrt(2)),
             (-1, 1, math.sqrt(2)), (-1, -1, math.sqrt(2))]
    dist = {start_c: 0.0}
    prev = {}
    frontier = [(0.0, start_c)]
    closed = set()
    while frontier:
        _, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        closed.add(cell)
        if cell == goal_c:
            break
        for mx, my, cost in moves:
            nxt = (cell[0] + mx, cell[1] + my)
            if not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny) or blocked[nxt]:
                continue
            nd = dist[cell] + cost
            if nd < dist.get(nxt, np.inf):
                dist[nxt] = nd
                prev[nxt] = cell
                h = np.hypot(nxt[0] - goal_c[0], nxt[1] - goal_c[1])
                heapq.heappush(frontier, (nd + h, nxt))
    if goal_c not in dist:
        raise MazeConfigError("goal unreachable on the planning grid")
    cells = [goal_c]
    while cells[-1] != start_c:
        cells.append(prev[cells[-1]])
    cells.reverse()
    pts = np.array([[xs[c[0]], ys[c[1]]] for c in cells])
    pts = np.vstack([pts, maze.goal])
    # round the grid corners so tracking does not get kicked sideways, but
    # never at the price of clearance: averaging cuts corners inward, so any
    # smoothed vertex that lost wall distance reverts to the grid vertex
    walls = np.vstack([maze.walls] + list(extra_walls)).reshape(-1, 4)
    for _ in range(2):
        if len(pts) > 4:
            inner = (pts[:-2] + 2.0 * pts[1:-1] + pts[2:]) / 4.0
            for j, cand in enumerate(inner):
                if _point_walls_distance(cand, walls) < _ASTAR_CLEARANCE:
                    inner[j] = pts[j + 1]
            pts = np.vstack([pts[:1], inner, pts[-1:]])
    return pts


def _route_block(maze: MazeSpec, side: str) -> np.ndarray:
    """Virtual wall sealing one descent corridor to force the other route."""
    b = maze.bounds
    left_arm = maze.walls[1]
    right_arm = maze.walls[2]
    if side == "right":   # block the left corridor
        return np.array([[b[0], 4.5, left_arm[0], 5.0]])
    return np.array([[right_arm[2], 4.5, b[2], 5.0]])


@dataclass
class DemoWindows:
    """Fixed-horizon action windows sliced from expert trajectories."""

    start_pos: np.ndarray    # (n, 2)
    start_vel: np.ndarray    # (n, 2)
    actions: np.ndarray      # (n, 2 * PLAN_HORIZON) flattened windows

    def __len__(self):
        return self.actions.shape[0]


def _pd_action(path, nearest, state, rng=None):
    """Carrot-tracking PD force, optionally with exploration noise."""
    d = np.linalg.norm(path[nearest:nearest + 8] - state.pos, axis=1)
    nearest = nearest + int(np.argmin(d))
    carrot = path[min(nearest + _CARROT_AHEAD, len(path) - 1)]
    to_carrot = carrot - state.pos
    gap = np.linalg.norm(to_carrot)
    # bounded cruise velocity along the carrot direction, slowing at the end
    v_des = to_carrot / max(gap, 1e-9) * min(_EXPERT_SPEED, 1.5 * gap)
    a = _PD_KP * to_carrot - _PD_KD * (state.vel - v_des)
    if rng is not None:
        a = a + _EXPERT_KICK * rng.standard_normal(2)
    return np.clip(a, -A_MAX, A_MAX), nearest


def _pd_window(maze: MazeSpec, path, state: RobotState) -> np.ndarray:
    """Deterministic PD rollout of one plan horizon from a given state.

    Windows re-simulate the tracking policy from their tagged start state,
    so a window replayed near that state steers back to the path instead
    of reproducing someone else's trajectory. The rollout must stay inside
    the free space; braking to rest fills the horizon once the goal stops
    the expert.
    """
    actions = np.zeros((PLAN_HORIZON, 2))
    nearest = int(np.argmin(np.linalg.norm(path - state.pos, axis=1)))
    for t in range(PLAN_HORIZON):
        if (np.linalg.norm(state.pos - maze.goal) <= maze.goal_radius * 0.7
                and np.linalg.norm(state.vel) <= 1e-9):
            break   # at the goal and at rest: hold zero force
        if np.linalg.norm(state.pos - maze.goal) <= maze.goal_radius * 0.7:
            a = -np.clip(state.vel / DT, -A_MAX, A_MAX)
        else:
            a, nearest = _pd_action(path, nearest, state)
        state = step_dynamics(state, a)
        actions[t] = a
        if _collides(state.pos, maze):
            raise MazeConfigError("scripted expert window left the free space")
    return actions


def _exploration_states(maze: MazeSpec, path, start_pos, rng):
    """Noise-kicked tracking rollout; returns the visited states."""
    state = RobotState(start_pos, np.zeros(2))
    visited = [state]
    nearest = 0
    for _ in range(STEP_CAP):
        a, nearest = _pd_action(path, nearest, state, rng)
        state = step_dynamics(state, a)
        if _collides(state.pos, maze):
            raise MazeConfigError("scripted expert left the free space")
        visited.append(state)
        if np.linalg.norm(state.pos - maze.goal) <= maze.goal_radius * 0.7:
            return visited
    raise MazeConfigError("scripted expert did not reach the goal in time")


def generate_demos(maze: MazeSpec, count: int, rng: np.random.Generator,
                   skew: float = 0.0, stride: int = 2) -> DemoWindows:
    """Scripted-expert demonstration windows on the uninflated maze.

    Each episode picks the right-hand route with probability (1 + skew) / 2
    (so skew biases the dataset toward one side) and jitters its start.
    A noise-kicked tracking rollout supplies diverse visited states; every
    stride-th state is tagged with a deterministic PD plan window simulated
    from exactly that state. All windows are collision-free by construction
    (the simulation asserts it).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not -1.0 <= skew <= 1.0:
        raise ValueError("skew must lie in [-1, 1]")
    paths = {side: _grid_path(maze, [_route_block(maze, side)], maze.start, maze.goal)
             for side in ("left", "right")}
    pos_list, vel_list, act_list = [], [], []
    for _ in range(count):
        side = "right" if rng.random() < (1.0 + skew) / 2.0 else "left"
        for _ in range(32):
            jitter = rng.uniform(-0.3, 0.3, size=2)
            start = maze.start + jitter
            if _point_walls_distance(start, maze.walls) > _ASTAR_CLEARANCE:
                break
        visited = _exploration_states(maze, paths[side], start, rng)
        for state in visited[::stride]:
            window = _pd_window(maze, paths[side], state)
            pos_list.append(state.pos.copy())
            vel_list.append(state.vel.copy())
            act_list.append(window.ravel())
    return DemoWindows(np.array(pos_list), np.array(vel_list), np.array(act_list))


def local_kde(demos: DemoWindows, state: RobotState, radius: float = 0.5,
              min_count: int = 16, bandwidth_scale: float = 0.05):
    """KDE prior over plan windows whose start state lies near the current one.

    Windows are matched in the full (position, velocity) state space:
    replaying an action window recorded at a different velocity drifts the
    rollout immediately, so velocity agreement matters as much as position.
    Falls back to the min_count nearest windows when the radius is too
    sparse; bandwidth is bandwidth_scale times the selected data range.
    """
    d = np.sqrt(
        np.sum((demos.start_pos - state.pos) ** 2, axis=1)
        + np.sum((demos.start_vel - state.vel) ** 2, axis=1)
    )
    sel = d <= radius
    if sel.sum() < min_count:
        sel = np.argsort(d)[:min_count]
    data = demos.actions[sel]
    bw = max(bandwidth_scale * float(data.max() - data.min()), 1e-3)
    return fit_kde(data, bw)


# ---------------------------------------------------------------------------
# Receding-horizon episode
# ---------------------------------------------------------------------------

@dataclass
class EpisodeMetrics:
    safe_success: bool
    collided: bool
    task_horizon: int
    intervention_rate: float
    replans: int = 0
    interventions: int = 0


@dataclass
class EpisodeSettings:
    """Knobs of the filtering loop that experiments may override."""

    kde_radius: float = 0.5
    kde_min_count: int = 16
    gibbs_rounds: int = 2
    start_jitter: float = 0.25
    step_cap: int = STEP_CAP


def _draw_pair(sampler, model, pot, prior, cfg, rng, settings):
    from .baselines import gibbs_sample, sequential_sample

    if sampler == "jm2d":
        x0, k0, diag = jm2d_sample(model, pot, prior, cfg, rng)
        return x0, k0, diag.feasible
    if sampler == "sequential":
        res = sequential_sample(model, pot, prior, cfg, rng)
        return res.x, res.k, res.feasible
    if sampler == "gibbs":
        res = gibbs_sample(model, pot, prior, cfg, settings.gibbs_rounds, rng)
        return res.x, res.k, res.feasible
    raise ValueError(f"unknown sampler: {sampler!r}")


class _Executor:
    """Steps the true system, tracking collisions, goal arrival and horizon."""

    def __init__(self, maze, state, step_cap):
        self.maze = maze
        self.state = state
        self.steps = 0
        self.collided = False
        self.reached = False
        self.step_cap = step_cap

    def done(self):
        return self.collided or self.reached or self.steps >= self.step_cap

    def run(self, action_seq):
        for a in action_seq:
            if self.done():
                return
            self.state = step_dynamics(self.state, a)
            self.steps += 1
            if _collides(self.state.pos, self.maze):
                self.collided = True
            elif np.linalg.norm(self.state.pos - self.maze.goal) <= self.maze.goal_radius:
                self.reached = True

    def run_backup(self, k, variant):
        k = _clamp_backup(k, variant)
        for t in range(TUBE_STEPS):
            if self.done() or (t >= ACCEL_STEPS
                               and np.linalg.norm(self.state.vel) <= 1e-9):
                break
            a = k if t < ACCEL_STEPS else -np.clip(self.state.vel / DT, -A_MAX, A_MAX)
            self.run([a])
        if not self.done():
            self.state = RobotState(self.state.pos, np.zeros(2))


def run_episode(maze: MazeSpec, w: float, sampler: str, cfg: JM2DConfig,
                variant: str, seed, demos: DemoWindows,
                settings: EpisodeSettings | None = None) -> EpisodeMetrics:
    """One receding-horizon episode under the named sampler.

    Filtered samplers (jm2d, sequential, gibbs) execute only plan segments
    whose (plan, backup) pair was certified safe, falling back to the
    stored backup otherwise; "unfiltered" executes prior draws unchecked.
    """
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler: {sampler!r}")
    settings = settings or EpisodeSettings()
    rng = np.random.default_rng(seed)
    inflated = inflate_walls(maze, w)
    prior = backup_prior(variant)

    for _ in range(64):
        start = maze.start + rng.uniform(-settings.start_jitter,
                                         settings.start_jitter, size=2)
        state = RobotState(start, np.zeros(2))
        rest_tube = backup_reach_tube(state, np.zeros(2), variant)
        if check_safe(rest_tube, inflated) <= 0.0:
            break
    else:
        raise MazeConfigError("could not draw a feasible start state")

    ex = _Executor(inflated, state, settings.step_cap)
    stored_backup = np.zeros(2)
    replans = 0
    interventions = 0
    while not ex.done():
        model = local_kde(demos, ex.state, radius=settings.kde_radius,
                          min_count=settings.kde_min_count)
        replans += 1
        if sampler == "unfiltered":
            x0 = reverse_chain(model, cfg.schedule_x, cfg.steps,
                               rng.standard_normal(model.dim), cfg.sigma, rng)
            ex.run(x0[: 2 * COMMIT_STEPS].reshape(COMMIT_STEPS, 2))
            continue
        pot = maze_potential(inflated, ex.state, variant)
        x0, k0, feasible = _draw_pair(sampler, model, pot, prior, cfg, rng, settings)
        if feasible:
            ex.run(x0[: 2 * COMMIT_STEPS].reshape(COMMIT_STEPS, 2))
            stored_backup = k0
        else:
            interventions += 1
            ex.run_backup(stored_backup, variant)
            stored_backup = np.zeros(2)  # rest is certified by the executed tube
    return EpisodeMetrics(
        safe_success=ex.reached and not ex.collided,
        collided=ex.collided,
        task_horizon=ex.steps,
        intervention_rate=interventions / replans if replans else 0.0,
        replans=replans,
        interventions=interventions,
    )
