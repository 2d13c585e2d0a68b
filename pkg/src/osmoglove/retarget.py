"""Kinematic retargeting of wrist and fingertip trajectories to joint commands.

The robot is a kinematic tree of revolute joints plus fixed frames, loaded
from a JSON chain file.  Inverse kinematics is damped least squares on the
stacked weighted task residual; a safety filter rejects candidates that move
the wrist too fast or put collision spheres into the environment, repeating
the previous command instead.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ConfigError, InitializationError, LimitViolationError

log = logging.getLogger(__name__)

FINGERTIP_FRAMES = ("thumb_tip", "index_tip", "middle_tip", "ring_tip", "little_tip")
WRIST_FRAME = "wrist"
N_JOINTS = 13


def rpy_matrix(rpy) -> np.ndarray:
    return Rotation.from_euler("xyz", rpy).as_matrix()


def axis_rotation(axis, angle) -> np.ndarray:
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def _transform(R=None, t=None):
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if t is not None:
        T[:3, 3] = t
    return T


def mdh_transform(a, d, alpha, theta=0.0) -> np.ndarray:
    """Modified (Craig) DH: RotX(alpha) TransX(a) RotZ(theta) TransZ(d)."""
    return _transform(axis_rotation((1, 0, 0), alpha)) @ _transform(t=(a, 0, 0)) @ _transform(
        axis_rotation((0, 0, 1), theta), (0, 0, d))


# ---------------------------------------------------------------------------
# chain model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    """A revolute joint (``axis`` set) or a fixed frame (``axis`` None)."""

    name: str
    parent: str | None
    origin: np.ndarray
    axis: np.ndarray | None = None
    limits: tuple = (-np.inf, np.inf)


@dataclass
class KinematicChain:
    nodes: list
    end_effectors: tuple = (WRIST_FRAME,) + FINGERTIP_FRAMES
    collision_spheres: dict = field(default_factory=dict)  # link -> [(center, radius)]

    def __post_init__(self):
        seen = set()
        for n in self.nodes:
            if n.parent is not None and n.parent not in seen:
                raise ConfigError(f"node {n.name!r} listed before its parent {n.parent!r}")
            if n.name in seen:
                raise ConfigError(f"duplicate node {n.name!r}")
            if n.axis is not None and not n.limits[0] < n.limits[1]:
                raise ConfigError(f"joint {n.name!r} needs lo < hi")
            seen.add(n.name)
        self._index = {n.name: i for i, n in enumerate(self.nodes)}
        self.joint_nodes = [i for i, n in enumerate(self.nodes) if n.axis is not None]
        self.joint_names = [self.nodes[i].name for i in self.joint_nodes]
        self.lower = np.array([self.nodes[i].limits[0] for i in self.joint_nodes])
        self.upper = np.array([self.nodes[i].limits[1] for i in self.joint_nodes])
        self._qslot = {ni: j for j, ni in enumerate(self.joint_nodes)}
        self._parent = [self._index[n.parent] if n.parent is not None else -1 for n in self.nodes]
        # ancestors[node] = boolean mask over joints that move that node
        self._ancestors = np.zeros((len(self.nodes), self.n_joints), dtype=bool)
        for i in range(len(self.nodes)):
            p = self._parent[i]
            if p >= 0:
                self._ancestors[i] = self._ancestors[p]
            if i in self._qslot:
                self._ancestors[i, self._qslot[i]] = True
        for ee in self.end_effectors:
            if ee not in self._index:
                raise ConfigError(f"end effector {ee!r} is not a chain node")
        for link in self.collision_spheres:
            if link not in self._index:
                raise ConfigError(f"collision spheres attached to unknown link {link!r}")

    @property
    def n_joints(self) -> int:
        return len(self.joint_nodes)

    def node_index(self, name: str) -> int:
        return self._index[name]

    def joints_moving(self, name: str) -> np.ndarray:
        return self._ancestors[self._index[name]]

    def within_limits(self, q, tol: float = 1e-12) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def clamp(self, q) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def home(self) -> np.ndarray:
        return self.clamp(np.zeros(self.n_joints))


def chain_from_dict(cfg: dict) -> KinematicChain:
    nodes = []
    try:
        for jc in cfg["joints"]:
            offset = float(jc.get("theta_offset", 0.0))
            if "dh" in jc:
                dh = jc["dh"]
                origin = mdh_transform(dh.get("a", 0.0), dh.get("d", 0.0), dh.get("alpha", 0.0), offset)
                axis = np.array([0.0, 0.0, 1.0])
            else:
                o = jc.get("origin", {})
                origin = _transform(rpy_matrix(o.get("rpy", [0, 0, 0])), o.get("xyz", [0, 0, 0]))
                axis = np.asarray(jc.get("axis", [0, 0, 1]), dtype=float)
                axis = axis / np.linalg.norm(axis)
                origin = origin @ _transform(axis_rotation(axis, offset))
            lo, hi = jc["limits"]
            # limits are given for the physical angle; q is measured from theta_offset
            nodes.append(Node(jc["name"], jc.get("parent"), origin, axis, (lo - offset, hi - offset)))
        for fc in cfg.get("frames", []):
            origin = _transform(rpy_matrix(fc.get("rpy", [0, 0, 0])), fc.get("xyz", [0, 0, 0]))
            nodes.append(Node(fc["name"], fc["parent"], origin))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad chain config: {exc}") from None
    nodes = _topo_sort(nodes)
    spheres = {link: [(np.asarray(s["center"], dtype=float), float(s["radius"])) for s in lst]
               for link, lst in cfg.get("collision_spheres", {}).items()}
    ees = tuple(cfg.get("end_effectors", (WRIST_FRAME,) + FINGERTIP_FRAMES))
    return KinematicChain(nodes, ees, spheres)


def _topo_sort(nodes):
    """Order parents before children, keeping config order among joints."""
    done, out, pending = set(), [], list(nodes)
    while pending:
        progressed = False
        for n in list(pending):
            if n.parent is None or n.parent in done:
                out.append(n)
                done.add(n.name)
                pending.remove(n)
                progressed = True
        if not progressed:
            raise ConfigError(f"unresolvable parents: {[n.name for n in pending]}")
    return out


def default_chain_config() -> dict:
    return json.loads(resources.files("osmoglove.data").joinpath("default_chain.json").read_text())


def load_chain(path: str | Path | None = None) -> KinematicChain:
    if path is None:
        return chain_from_dict(default_chain_config())
    try:
        return chain_from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read chain {path}: {exc}") from None


# ---------------------------------------------------------------------------
# forward kinematics and Jacobians
# ---------------------------------------------------------------------------

def _node_frames(chain: KinematicChain, q) -> np.ndarray:
    """Node transforms for q of shape (n,) or batched (..., n)."""
    q = np.asarray(q, dtype=float)
    batch = q.shape[:-1]
    frames = np.empty(batch + (len(chain.nodes), 4, 4))
    for i, n in enumerate(chain.nodes):
        p = chain._parent[i]
        T = np.broadcast_to(n.origin, batch + (4, 4)) if p < 0 else frames[..., p, :, :] @ n.origin
        if n.axis is not None:
            J = np.zeros(batch + (4, 4))
            J[..., 3, 3] = 1.0
            R = axis_rotation(n.axis, q[..., chain._qslot[i]])
            J[..., :3, :3] = np.moveaxis(R, (0, 1), (-2, -1)) if batch else R
            T = T @ J
        frames[..., i, :, :] = T
    return frames


@dataclass
class FkResult:
    chain: KinematicChain
    node_frames: np.ndarray

    def __getitem__(self, name: str) -> np.ndarray:
        return self.node_frames[self.chain.node_index(name)]

    @property
    def frames(self) -> dict:
        return {ee: self[ee] for ee in self.chain.end_effectors}


def forward_kinematics(chain: KinematicChain, q, check_limits: bool = True) -> FkResult:
    """World transforms of every chain node; ``result[name]`` is a 4x4."""
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.n_joints,):
        raise ValueError(f"expected {chain.n_joints} joint values, got shape {q.shape}")
    if check_limits and not chain.within_limits(q):
        bad = [chain.joint_names[i] for i in np.flatnonzero((q < chain.lower - 1e-12) | (q > chain.upper + 1e-12))]
        raise LimitViolationError(f"joints outside limits: {bad}")
    return FkResult(chain, _node_frames(chain, q))


def _joint_axes_world(chain, frames):
    idx = chain.joint_nodes
    axes = np.einsum("jab,jb->ja", frames[idx, :3, :3], np.array([chain.nodes[i].axis for i in idx]))
    return axes, frames[idx, :3, 3]


def point_jacobian(chain, frames, name) -> np.ndarray:
    """3 x n linear-velocity Jacobian of a node origin."""
    axes, origins = _joint_axes_world(chain, frames)
    p = frames[chain.node_index(name), :3, 3]
    J = np.cross(axes, p - origins).T
    J[:, ~chain.joints_moving(name)] = 0.0
    return J


def rotation_jacobian(chain, frames, name) -> np.ndarray:
    axes, _ = _joint_axes_world(chain, frames)
    J = axes.T.copy()
    J[:, ~chain.joints_moving(name)] = 0.0
    return J


def rotation_log(R) -> np.ndarray:
    """Axis-angle vector of a rotation matrix."""
    return Rotation.from_matrix(R).as_rotvec()


# ---------------------------------------------------------------------------
# inverse kinematics
# ---------------------------------------------------------------------------

@dataclass
class IkTargets:
    """Wrist pose and fingertip positions in the robot frame.

    ``weights`` = (wrist position, wrist orientation, thumb, index, middle,
    ring, little).  Zero-weight tasks are dropped from the problem.
    """

    wrist: np.ndarray | None = None
    fingertips: np.ndarray | None = None
    weights: np.ndarray = field(default_factory=lambda: np.ones(7))

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (7,) or np.any(self.weights < 0):
            raise ValueError("weights must be 7 non-negative values")
        if self.wrist is None:
            self.weights[:2] = 0
        if self.fingertips is None:
            self.weights[2:] = 0
        else:
            self.fingertips = np.asarray(self.fingertips, dtype=float).reshape(5, 3)
        if not np.any(self.weights > 0):
            raise ValueError("at least one target needs a positive weight")


@dataclass
class IkParams:
    damping: float = 1e-2
    step_scale: float = 1.0
    tol: float = 1e-4
    max_iter: int = 200
    max_step: float = 0.5  # rad, per joint per iteration
    min_step: float = 1e-10  # stop once the update is this small (noise-limited targets)
    max_halvings: int = 10  # backtracking steps before declaring a stall


@dataclass
class IkResult:
    q: np.ndarray
    residual: float
    iterations: int
    converged: bool


def task_residual(chain: KinematicChain, frames, targets: IkTargets, with_jacobian: bool = True):
    """Stacked weighted residual (target - current) and its Jacobian."""
    w = targets.weights
    es, Js = [], []
    if w[0] > 0:
        es.append(w[0] * (targets.wrist[:3, 3] - frames[chain.node_index(WRIST_FRAME), :3, 3]))
        if with_jacobian:
            Js.append(w[0] * point_jacobian(chain, frames, WRIST_FRAME))
    if w[1] > 0:
        Rc = frames[chain.node_index(WRIST_FRAME), :3, :3]
        es.append(w[1] * rotation_log(targets.wrist[:3, :3] @ Rc.T))
        if with_jacobian:
            Js.append(w[1] * rotation_jacobian(chain, frames, WRIST_FRAME))
    for i, name in enumerate(FINGERTIP_FRAMES):
        if w[2 + i] > 0:
            es.append(w[2 + i] * (targets.fingertips[i] - frames[chain.node_index(name), :3, 3]))
            if with_jacobian:
                Js.append(w[2 + i] * point_jacobian(chain, frames, name))
    e = np.concatenate(es)
    return (e, np.vstack(Js)) if with_jacobian else e


def dls_step(J, e, damping: float) -> np.ndarray:
    """Damped least-squares joint update minimising |e - J dq|^2 + damping^2 |dq|^2."""
    n = J.shape[1]
    return np.linalg.solve(J.T @ J + damping**2 * np.eye(n), J.T @ e)


def solve_ik(chain: KinematicChain, targets: IkTargets, q_init, params: IkParams | None = None) -> IkResult:
    """Damped least squares with per-step clamping to the joint limits.

    A step that would increase the residual is halved until it does not
    (at most ``params.max_halvings`` times), so iterates improve
    monotonically.  ``residual`` is the norm of the stacked weighted task
    error (metres and radians mixed).
    """
    params = params or IkParams()
    q = np.asarray(q_init, dtype=float).copy()
    if not chain.within_limits(q):
        raise LimitViolationError("q_init outside joint limits")
    e, J = task_residual(chain, _node_frames(chain, q), targets)
    r = float(np.linalg.norm(e))
    it = 0
    while r >= params.tol and it < params.max_iter:
        it += 1
        dq = params.step_scale * dls_step(J, e, params.damping)
        # joints pinned at a limit and pushed outward are frozen, the rest re-solved
        pinned = ((q <= chain.lower) & (dq < 0)) | ((q >= chain.upper) & (dq > 0))
        if pinned.any() and not pinned.all():
            free = ~pinned
            dq = np.zeros_like(q)
            dq[free] = params.step_scale * dls_step(J[:, free], e, params.damping)
        big = np.max(np.abs(dq))
        if big < params.min_step:
            break
        if big > params.max_step:
            dq *= params.max_step / big
        for _ in range(params.max_halvings + 1):
            q_new = chain.clamp(q + dq)
            frames = _node_frames(chain, q_new)
            e_new = task_residual(chain, frames, targets, with_jacobian=False)
            r_new = float(np.linalg.norm(e_new))
            if r_new < r:
                break
            dq *= 0.5
        else:
            break  # no descent along this direction: stalled
        q, r = q_new, r_new
        e, J = task_residual(chain, frames, targets)
    return IkResult(q, r, it, r < params.tol)


def targets_from_fk(chain: KinematicChain, q, weights=None) -> IkTargets:
    fk = forward_kinematics(chain, q, check_limits=False)
    tips = np.array([fk[n][:3, 3] for n in FINGERTIP_FRAMES])
    return IkTargets(fk[WRIST_FRAME].copy(), tips, np.ones(7) if weights is None else weights)


# ---------------------------------------------------------------------------
# safety
# ---------------------------------------------------------------------------

@dataclass
class Environment:
    """Planes (half-spaces below ``normal``) and axis-aligned boxes."""

    planes: list = field(default_factory=list)  # [(name, point, normal)]
    boxes: list = field(default_factory=list)  # [(name, center, half_extents)]

    @classmethod
    def from_dict(cls, cfg: dict) -> "Environment":
        planes = []
        for p in cfg.get("planes", []):
            n = np.asarray(p["normal"], dtype=float)
            planes.append((p["name"], np.asarray(p.get("point", [0, 0, 0]), dtype=float), n / np.linalg.norm(n)))
        boxes = [(b["name"], np.asarray(b["center"], dtype=float), np.asarray(b["half_extents"], dtype=float))
                 for b in cfg.get("boxes", [])]
        return cls(planes, boxes)


def default_environment_config() -> dict:
    return json.loads(resources.files("osmoglove.data").joinpath("default_environment.json").read_text())


def load_environment(path: str | Path | None = None) -> Environment:
    if path is None:
        return Environment.from_dict(default_environment_config())
    try:
        return Environment.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read environment {path}: {exc}") from None


@dataclass
class SafetyConfig:
    max_wrist_speed: float = 1.0
    collision_margin: float = 0.0
    exempt_pairs: list = field(default_factory=lambda: [(n, "ground") for n in FINGERTIP_FRAMES + (WRIST_FRAME,)])

    def __post_init__(self):
        if not self.max_wrist_speed > 0:
            raise ValueError("max_wrist_speed must be positive")
        if self.collision_margin < 0:
            raise ValueError("collision_margin must be >= 0")
        self.exempt_pairs = [tuple(p) for p in self.exempt_pairs]


def collisions(chain: KinematicChain, frames, env: Environment, margin: float = 0.0, exempt=()) -> list:
    """(link, body) pairs whose spheres come within ``margin`` of a body."""
    exempt = set(exempt)
    hits = []
    for link, spheres in chain.collision_spheres.items():
        T = frames[chain.node_index(link)]
        for center, radius in spheres:
            c = T[:3, :3] @ center + T[:3, 3]
            for name, point, normal in env.planes:
                if (link, name) not in exempt and (c - point) @ normal - radius < margin:
                    hits.append((link, name))
            for name, bc, half in env.boxes:
                if (link, name) in exempt:
                    continue
                d = np.linalg.norm(np.maximum(np.abs(c - bc) - half, 0.0))
                if d - radius < margin:
                    hits.append((link, name))
    return sorted(set(hits))


@dataclass
class SafetyVerdict:
    ok: bool
    wrist_speed: float
    collisions: list


def check_safety(q_prev, q_cand, chain, env, cfg: SafetyConfig, dt: float) -> SafetyVerdict:
    if not dt > 0:
        raise ValueError("dt must be positive")
    f_prev = _node_frames(chain, np.asarray(q_prev, dtype=float))
    f_cand = _node_frames(chain, np.asarray(q_cand, dtype=float))
    w = chain.node_index(WRIST_FRAME)
    speed = float(np.linalg.norm(f_cand[w, :3, 3] - f_prev[w, :3, 3]) / dt)
    hits = collisions(chain, f_cand, env, cfg.collision_margin, cfg.exempt_pairs)
    return SafetyVerdict(speed <= cfg.max_wrist_speed and not hits, speed, hits)


def safety_filter(q_prev, q_cand, chain, env, cfg: SafetyConfig, dt: float) -> np.ndarray:
    """``q_cand`` if it is safe, otherwise exactly ``q_prev``."""
    if np.array_equal(q_prev, q_cand):
        return np.asarray(q_cand, dtype=float).copy()
    if check_safety(q_prev, q_cand, chain, env, cfg, dt).ok:
        return np.asarray(q_cand, dtype=float).copy()
    return np.asarray(q_prev, dtype=float).copy()


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class RetargetConfig:
    ik: IkParams = field(default_factory=IkParams)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    weights: np.ndarray = field(default_factory=lambda: np.ones(7))
    wrist_offset: np.ndarray = field(default_factory=lambda: np.eye(4))  # human wrist -> robot wrist frame
    init_max_iter: int = 1000


@dataclass
class RetargetResult:
    q: np.ndarray  # (M, n_joints)
    residuals: np.ndarray  # (M,)
    skipped: list  # frame indices where the previous command was repeated


def retarget_trajectory(wrist_poses, fingertips, timestamps, chain: KinematicChain, env: Environment,
                        cfg: RetargetConfig | None = None, q_home=None, label: str = "") -> RetargetResult:
    """Joint commands for every input frame, one output per input.

    ``wrist_poses`` (M, 4, 4) and ``fingertips`` (M, 5, 3) are robot-frame
    targets; ``timestamps`` are microseconds.  Each frame is solved warm
    from the previous output and passed through :func:`safety_filter`.
    """
    cfg = cfg or RetargetConfig()
    wrist_poses = np.asarray(wrist_poses, dtype=float)
    fingertips = np.asarray(fingertips, dtype=float)
    timestamps = np.asarray(timestamps, dtype=np.int64)
    M = len(timestamps)
    if M == 0:
        raise ValueError("empty trajectory")
    q_home = chain.home() if q_home is None else np.asarray(q_home, dtype=float)

    def targets(k):
        return IkTargets(wrist_poses[k] @ cfg.wrist_offset, fingertips[k], cfg.weights.copy())

    init = replace(cfg.ik, max_iter=cfg.init_max_iter)
    first = solve_ik(chain, targets(0), q_home, init)
    if first.residual >= 10 * cfg.ik.tol:
        raise InitializationError(f"{label or 'trajectory'}: frame 0 unreachable from home "
                                  f"(residual {first.residual:.3g})")

    out = np.empty((M, chain.n_joints))
    res = np.empty(M)
    out[0], res[0] = first.q, first.residual
    skipped = []
    for k in range(1, M):
        sol = solve_ik(chain, targets(k), out[k - 1], cfg.ik)
        dt = (timestamps[k] - timestamps[k - 1]) * 1e-6
        verdict = check_safety(out[k - 1], sol.q, chain, env, cfg.safety, dt)
        if verdict.ok or np.array_equal(sol.q, out[k - 1]):
            out[k], res[k] = sol.q, sol.residual
        else:
            out[k], res[k] = out[k - 1], sol.residual
            skipped.append(k)
            log.warning("%sframe %d unsafe (wrist speed %.3f m/s, collisions %s); repeating previous pose",
                        f"{label}: " if label else "", k, verdict.wrist_speed, verdict.collisions)
    return RetargetResult(out, res, skipped)


def retarget_hand_trajectory(traj, chain, env, cfg=None, q_home=None, label: str = "") -> RetargetResult:
    """Convenience wrapper taking a robot-frame :class:`~osmoglove.handpose.HandTrajectory`."""
    if traj.frame_id != "robot":
        raise ValueError("hand trajectory must be expressed in the robot frame")
    return retarget_trajectory(traj.wrist, traj.fingertips, traj.timestamps, chain, env, cfg, q_home, label)
