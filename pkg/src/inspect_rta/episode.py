"""Multi-agent episode orchestration.

One control step spans ten one-second assurance substeps with the desired
control held constant.  Within a substep every live agent is filtered and
integrated against a snapshot of the other agents taken at the substep
start (simultaneous-update semantics), then the sun advances and the
inspection sphere updates from the post-substep states.  Agents that reach
a terminal condition are removed while the others continue.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels
from .constants import (
    COLLISION_RADIUS,
    DEFAULT_CONSTANTS,
    DEPUTY_RADIUS,
    E_MIN,
    ORBIT_PERIOD_CHECK,
    PhysicalConstants,
    R_MAX,
    SUCCESS_WEIGHT,
    TIME_LIMIT,
)
from .constraints import pack_constraint_params, psm_trig_grid, row_names
from .controllers import Controller, ControllerSpec, make_controller
from .dynamics import (
    ControlInput,
    DeputyState,
    SunState,
    pack_state,
    quat_to_rot,
    random_unit_quaternion,
)
from .errors import InitializationError, IntegrationFaultError
from .inspection import InspectionSphere, inspect_step_arrays
from .observations import ObservationConfig, encode

TWO_PI = 2.0 * np.pi

STATUS_RUNNING = "running"
STATUS_SUCCESS = "success"
STATUS_CRASH_AFTER_SUCCESS = "crash-after-success"
STATUS_CHIEF_COLLISION = "chief-collision"
STATUS_DEPUTY_COLLISION = "deputy-collision"
STATUS_MAX_DISTANCE = "max-distance"
STATUS_POWER = "power-depleted"
STATUS_TIMEOUT = "timeout"

FAILURE_STATUSES = {
    STATUS_CRASH_AFTER_SUCCESS,
    STATUS_CHIEF_COLLISION,
    STATUS_DEPUTY_COLLISION,
    STATUS_MAX_DISTANCE,
    STATUS_POWER,
    STATUS_TIMEOUT,
}


@dataclass
class EpisodeConfig:
    n_agents: int = 3
    seed: int = 0
    obs_mode: str = "baseline"
    rta_enabled: bool = True
    time_limit: float = TIME_LIMIT
    control_dt: float = 10.0
    rta_dt: float = 1.0
    success_threshold: float = SUCCESS_WEIGHT
    slack_weight: float = 1e12
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    record: bool = True

    def __post_init__(self):
        if not 1 <= self.n_agents <= 5:
            raise ValueError("n_agents must be between 1 and 5")

    def to_jsonable(self) -> dict:
        d = asdict(self)
        return d


@dataclass
class RewardBreakdown:
    r_points: float = 0.0
    r_dv: float = 0.0
    r_tau: float = 0.0
    r_orient: float = 0.0
    r_crash: float = 0.0

    @property
    def total(self) -> float:
        return self.r_points + self.r_dv + self.r_tau + self.r_orient + self.r_crash

    def to_jsonable(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


@dataclass
class EpisodeMetrics:
    success: dict[int, bool]
    total_reward: dict[int, float]
    delta_v_total: float
    mean_torque: dict[int, float]
    episode_length_s: float
    termination: dict[int, str]
    inspected_weight: float


@dataclass
class AgentRuntime:
    agent_id: int
    state: DeputyState
    live: bool = True
    status: str = STATUS_RUNNING
    credited_weight: float = 0.0     # weight inspected by this agent
    total_reward: float = 0.0
    delta_v: float = 0.0
    torque_sum: float = 0.0          # sum over steps of mean |tau|_1
    steps: int = 0


class EpisodeRecord:
    """Replayable per-step log; identical config and seed reproduce it."""

    def __init__(self, header: dict):
        self.header = header
        self.steps: list[dict] = []
        self.metrics: dict | None = None

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "header", **self.header})]
        for entry in self.steps:
            lines.append(json.dumps({"type": "step", **entry}))
        if self.metrics is not None:
            lines.append(json.dumps({"type": "metrics", **self.metrics}))
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()


class World:
    """Mutable episode state plus cached kernel inputs."""

    def __init__(
        self,
        cfg: EpisodeConfig,
        agents: list[AgentRuntime],
        sphere: InspectionSphere,
        sun: SunState,
        constants: PhysicalConstants = DEFAULT_CONSTANTS,
    ):
        self.cfg = cfg
        self.agents = agents
        self.sphere = sphere
        self.sun = sun
        self.constants = constants
        self.t = 0.0
        self.step_count = 0
        self.success_reached = False
        self.h_chief_min = np.inf
        self.h_deputy_min = np.inf
        self.fault_count = 0
        self.obs_cfg = ObservationConfig(mode=cfg.obs_mode, cluster_seed=cfg.seed)
        self.record: EpisodeRecord | None = None
        self._cp = constants.pack()
        self._pp = pack_constraint_params(constants)
        self._cos_nt, self._sin_nt, self._t_grid = psm_trig_grid(constants)
        self._orbit_trig = None
        if cfg.record:
            self.record = EpisodeRecord(
                header={
                    "config": cfg.to_jsonable(),
                    "constants": asdict(constants),
                    "initial_states": [a.state.to_array().tolist() for a in agents],
                    "sun_theta": sun.theta,
                    "priority": sphere.priority.tolist(),
                }
            )

    def live_agents(self) -> list[AgentRuntime]:
        return [a for a in self.agents if a.live]

    def orbit_trig(self):
        if self._orbit_trig is None:
            t_grid = np.arange(ORBIT_PERIOD_CHECK + 1, dtype=float)
            self._orbit_trig = (
                np.cos(self.constants.n * t_grid),
                np.sin(self.constants.n * t_grid),
                t_grid,
            )
        return self._orbit_trig

    def drift_min_distance(self, state: DeputyState) -> float:
        """Minimum free-drift distance over one orbit from this state."""
        cos_nt, sin_nt, t_grid = self.orbit_trig()
        trans6 = np.concatenate([state.trans.p, state.trans.v])
        dists = _kernels.drift_positions(
            trans6, self.constants.n, cos_nt, sin_nt, t_grid
        )
        return float(dists.min())


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _spherical_to_cartesian(r: float, azimuth: float, elevation: float) -> np.ndarray:
    return np.array(
        [
            r * np.cos(azimuth) * np.cos(elevation),
            r * np.sin(azimuth) * np.cos(elevation),
            r * np.sin(elevation),
        ]
    )


def initialize(
    cfg: EpisodeConfig, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> tuple[list[DeputyState], InspectionSphere, SunState]:
    """Sample a safe initial world state, deterministic in the seed.

    Draw order is fixed: sun angle, priority direction, then per agent the
    position (resampled until clear of already-placed agents), battery
    energy, node temperature, and attitude quaternion (resampled while the
    attitude constraints or their first high-order stages are violated at
    zero rate).
    """
    rng = np.random.default_rng(cfg.seed)
    sun = SunState(theta=rng.uniform(0.0, TWO_PI))
    pri_az = rng.uniform(0.0, TWO_PI)
    pri_el = rng.uniform(-np.pi / 2.0, np.pi / 2.0)
    priority = _spherical_to_cartesian(1.0, pri_az, pri_el)
    sphere = InspectionSphere.create(priority=priority)

    cp = constants.pack()
    pp = pack_constraint_params(constants)
    cos_nt, sin_nt, t_grid = psm_trig_grid(constants)
    no_others = np.zeros((0, 6))

    positions: list[np.ndarray] = []
    states: list[DeputyState] = []
    for _ in range(cfg.n_agents):
        for attempt in range(1001):
            if attempt == 1000:
                raise InitializationError("position resampling budget exhausted")
            r = rng.uniform(50.0, 100.0)
            az = rng.uniform(0.0, TWO_PI)
            el = rng.uniform(-np.pi / 2.0, np.pi / 2.0)
            pos = _spherical_to_cartesian(r, az, el)
            if all(
                np.linalg.norm(pos - q) >= 2.0 * DEPUTY_RADIUS for q in positions
            ):
                break
        positions.append(pos)
        energy = rng.uniform(5000.0, 7000.0)
        temperature = rng.uniform(3.0, 7.0)
        for attempt in range(1001):
            if attempt == 1000:
                raise InitializationError("attitude resampling budget exhausted")
            quat = random_unit_quaternion(rng)
            x = np.empty(16)
            x[0:3] = pos
            x[3:6] = 0.0
            x[6:10] = quat
            x[10:13] = 0.0
            x[13] = energy
            x[14] = temperature
            x[15] = sun.theta
            h_raw, psi, _, _, _, degen = _kernels.constraint_rows(
                x, no_others, cp, pp, cos_nt, sin_nt, t_grid
            )
            # rows (k=0): 7 ez, 8 temp, 9 batt
            attitude_ok = True
            for idx in (7, 8, 9):
                if degen[idx] or h_raw[idx] < 0.0 or psi[idx] < 0.0:
                    attitude_ok = False
            if attitude_ok:
                break
        states.append(DeputyState.from_array(x[0:15]))
    return states, sphere, sun


def make_world(
    cfg: EpisodeConfig, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> World:
    states, sphere, sun = initialize(cfg, constants)
    agents = [AgentRuntime(agent_id=i, state=s) for i, s in enumerate(states)]
    return World(cfg, agents, sphere, sun, constants)


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------

def orient_reward(state: DeputyState) -> float:
    """Bonus for pointing the boresight at the chief, peaked at alignment."""
    p = state.trans.p
    r = float(np.linalg.norm(p))
    if r < 1e-9:
        return 0.0
    boresight = quat_to_rot(state.att.q) @ np.array([1.0, 0.0, 0.0])
    d = float(boresight @ (-p / r))
    if abs(d - 1.0) > 1.0:
        return 0.0
    return 0.0005 * float(np.exp(-abs(d - 1.0) / 0.15))


def reward_step(
    delta_weight: float,
    u: ControlInput,
    state: DeputyState,
    credited_weight: float = 0.0,
    dt: float = 10.0,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> RewardBreakdown:
    """Reward for one control step under a constant control.

    The crash penalty fires only once the agent's own credited weight has
    crossed the success threshold and its free-drift trajectory over one
    orbit would enter the collision sphere.
    """
    if delta_weight < 0:
        raise ValueError("delta_weight must be non-negative")
    force_l1 = float(np.sum(np.abs(u.force_body)))
    torque_l1 = float(np.sum(np.abs(u.torque)))
    r_crash = 0.0
    if credited_weight >= SUCCESS_WEIGHT:
        t_grid = np.arange(ORBIT_PERIOD_CHECK + 1, dtype=float)
        trans6 = np.concatenate([state.trans.p, state.trans.v])
        dists = _kernels.drift_positions(
            trans6,
            constants.n,
            np.cos(constants.n * t_grid),
            np.sin(constants.n * t_grid),
            t_grid,
        )
        if float(dists.min()) < COLLISION_RADIUS:
            r_crash = -1.0
    return RewardBreakdown(
        r_points=1.0 * delta_weight,
        r_dv=-0.1 * force_l1 / constants.m * dt,
        r_tau=-0.1 * torque_l1,
        r_orient=orient_reward(state),
        r_crash=r_crash,
    )


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------

def step_all(world: World, u_des: dict[int, ControlInput]) -> World:
    """Advance every live agent one control step (ten filtered substeps)."""
    cfg = world.cfg
    live = world.live_agents()
    if not live:
        return world
    for agent in live:
        if agent.agent_id not in u_des:
            raise KeyError(f"no desired control for live agent {agent.agent_id}")
    n_substeps = int(round(cfg.control_dt / cfg.rta_dt))
    # kernel states for live agents
    xs = {a.agent_id: pack_state(a.state, world.sun) for a in live}
    u_arr = {a.agent_id: u_des[a.agent_id].to_array() for a in live}
    acc = {
        a.agent_id: {
            "dv": 0.0,
            "tau_l1": 0.0,
            "u_act": [],
            "h_min": None,
            "intervened": False,
            "fault": False,
            "delta_weight": 0.0,
        }
        for a in live
    }
    stepping = {a.agent_id: a for a in live}

    for _ in range(n_substeps):
        ids = sorted(stepping.keys())
        if not ids:
            break
        snapshot = {i: xs[i].copy() for i in ids}
        for i in ids:
            agent = stepping[i]
            other_ids = [j for j in ids if j != i]
            others = np.zeros((len(other_ids), 6))
            for col, j in enumerate(other_ids):
                others[col] = snapshot[j][0:6]
            x = xs[i]
            x[15] = world.sun.theta
            if cfg.rta_enabled:
                u_act, h_raw, slack, status, intervened = _kernels.filter_control(
                    x,
                    others,
                    u_arr[i],
                    world._cp,
                    world._pp,
                    world._cos_nt,
                    world._sin_nt,
                    world._t_grid,
                    cfg.slack_weight,
                )
                if status == _kernels.FILTER_FAULT:
                    acc[i]["fault"] = True
                    world.fault_count += 1
                if intervened:
                    acc[i]["intervened"] = True
            else:
                u_act = u_arr[i]
                h_raw, _, _, _, _, _ = _kernels.constraint_rows(
                    x,
                    others,
                    world._cp,
                    world._pp,
                    world._cos_nt,
                    world._sin_nt,
                    world._t_grid,
                )
            n_others = len(other_ids)
            world.h_chief_min = min(world.h_chief_min, float(h_raw[0]))
            if n_others:
                world.h_deputy_min = min(
                    world.h_deputy_min, float(h_raw[1 : 1 + n_others].min())
                )
            hmin = acc[i]["h_min"]
            acc[i]["h_min"] = (
                h_raw.copy() if hmin is None or hmin.size != h_raw.size
                else np.minimum(hmin, h_raw)
            )
            x_new, ok = _kernels.rk4_step(x, u_act, cfg.rta_dt, world._cp)
            if not ok:
                raise IntegrationFaultError(
                    f"non-finite state for agent {i}", state=x_new
                )
            xs[i] = x_new
            acc[i]["dv"] += (
                float(np.sum(np.abs(u_act[0:3]))) / world.constants.m * cfg.rta_dt
            )
            acc[i]["tau_l1"] += float(np.sum(np.abs(u_act[3:6])))
            acc[i]["u_act"].append(u_act.copy())
        world.sun = SunState(theta=(world.sun.theta - world.constants.n * cfg.rta_dt) % TWO_PI)
        # inspection at the post-substep states
        ids_now = sorted(stepping.keys())
        positions = np.stack([xs[i][0:3] for i in ids_now])
        rotations = np.stack([quat_to_rot(xs[i][6:10]) for i in ids_now])
        credits = inspect_step_arrays(
            world.sphere, positions, rotations, world.sun.theta
        )
        for i, newly in zip(ids_now, credits):
            if newly.size:
                gained = float(world.sphere.weights[newly].sum())
                acc[i]["delta_weight"] += gained
                stepping[i].credited_weight += gained
        # per-substep physical termination checks (only reachable with the
        # filter off or under slack exhaustion)
        for i in list(stepping.keys()):
            status = _physical_status(xs[i], [xs[j] for j in stepping if j != i])
            if status is not None:
                agent = stepping.pop(i)
                agent.state = DeputyState.from_array(xs[i][0:15])
                agent.live = False
                agent.status = status

    world.t += cfg.control_dt
    world.step_count += 1

    # commit states, rewards, record entries
    for a in live:
        i = a.agent_id
        a.state = DeputyState.from_array(xs[i][0:15])
        n_sub = len(acc[i]["u_act"])
        if n_sub == 0:
            continue
        breakdown = RewardBreakdown(
            r_points=1.0 * acc[i]["delta_weight"],
            r_dv=-0.1 * acc[i]["dv"],
            r_tau=-0.1 * acc[i]["tau_l1"] / n_sub,
            r_orient=orient_reward(a.state),
            r_crash=0.0,
        )
        if a.credited_weight >= cfg.success_threshold:
            if world.drift_min_distance(a.state) < COLLISION_RADIUS:
                breakdown.r_crash = -1.0
        a.total_reward += breakdown.total
        a.delta_v += acc[i]["dv"]
        a.torque_sum += acc[i]["tau_l1"] / n_sub
        a.steps += 1
        if world.record is not None:
            live_now = [b for b in world.agents if b.live]
            others_states = [
                b.state for b in live_now if b.agent_id != i
            ]
            obs = encode(
                a.state, others_states, world.sun, world.sphere, world.obs_cfg
            )
            names = row_names(acc[i]["h_min"].size - 13)
            world.record.steps.append(
                {
                    "k": world.step_count,
                    "t": world.t,
                    "agent": i,
                    "state": a.state.to_array().tolist(),
                    "u_des": u_arr[i].tolist(),
                    "u_act": [u.tolist() for u in acc[i]["u_act"]],
                    "h_min": dict(
                        zip(names, [float(v) for v in acc[i]["h_min"]])
                    ),
                    "reward": breakdown.to_jsonable(),
                    "obs": obs.tolist(),
                    "intervened": bool(acc[i]["intervened"]),
                    "status": a.status,
                }
            )

    # success adjudication at the step boundary
    if (
        not world.success_reached
        and world.sphere.total_inspected_weight >= cfg.success_threshold - 1e-12
    ):
        world.success_reached = True
        for a in world.live_agents():
            if world.drift_min_distance(a.state) < COLLISION_RADIUS:
                a.status = STATUS_CRASH_AFTER_SUCCESS
            else:
                a.status = STATUS_SUCCESS
            a.live = False
    return world


def _physical_status(x: np.ndarray, other_xs: list[np.ndarray]) -> str | None:
    r = float(np.linalg.norm(x[0:3]))
    if r < COLLISION_RADIUS:
        return STATUS_CHIEF_COLLISION
    for ox in other_xs:
        if float(np.linalg.norm(x[0:3] - ox[0:3])) < 2.0 * DEPUTY_RADIUS:
            return STATUS_DEPUTY_COLLISION
    if r > R_MAX:
        return STATUS_MAX_DISTANCE
    if x[13] <= 0.0:
        return STATUS_POWER
    return None


def adjudicate(world: World) -> dict[int, str]:
    """Current per-agent termination statuses.

    Success requires the cumulative inspected weight to have crossed the
    threshold and the agent's one-orbit free drift to stay clear of the
    collision sphere; a drifting collision converts it to a failure.
    """
    statuses = {}
    for a in world.agents:
        if not a.live:
            statuses[a.agent_id] = a.status
            continue
        if world.sphere.total_inspected_weight >= world.cfg.success_threshold - 1e-12:
            if world.drift_min_distance(a.state) < COLLISION_RADIUS:
                statuses[a.agent_id] = STATUS_CRASH_AFTER_SUCCESS
            else:
                statuses[a.agent_id] = STATUS_SUCCESS
            continue
        phys = _physical_status(
            pack_state(a.state, world.sun),
            [
                pack_state(b.state, world.sun)
                for b in world.agents
                if b.live and b.agent_id != a.agent_id
            ],
        )
        if phys is not None:
            statuses[a.agent_id] = phys
        elif world.t > world.cfg.time_limit:
            statuses[a.agent_id] = STATUS_TIMEOUT
        else:
            statuses[a.agent_id] = STATUS_RUNNING
    return statuses


# ---------------------------------------------------------------------------
# Episode loop
# ---------------------------------------------------------------------------

def run_episode(
    cfg: EpisodeConfig,
    controller: Controller | None = None,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> tuple[EpisodeMetrics, EpisodeRecord | None, World]:
    """Initialize and run one episode to termination."""
    world = make_world(cfg, constants)
    if controller is None:
        controller = make_controller(cfg.controller, constants)
    controller.reset(cfg.seed)
    while True:
        live = world.live_agents()
        if not live:
            break
        if world.t + cfg.control_dt > cfg.time_limit + 1e-9:
            for a in live:
                a.live = False
                a.status = STATUS_TIMEOUT
            break
        u_des = {}
        for a in live:
            others = [
                b.state for b in world.agents if b.live and b.agent_id != a.agent_id
            ]
            u_des[a.agent_id] = controller.action(
                a.state, others, world.sun, world.sphere, world.step_count
            )
        step_all(world, u_des)
    metrics = finalize_metrics(world)
    if world.record is not None:
        world.record.metrics = {
            "success": {str(k): v for k, v in metrics.success.items()},
            "total_reward": {str(k): v for k, v in metrics.total_reward.items()},
            "delta_v_total": metrics.delta_v_total,
            "mean_torque": {str(k): v for k, v in metrics.mean_torque.items()},
            "episode_length_s": metrics.episode_length_s,
            "termination": {str(k): v for k, v in metrics.termination.items()},
            "inspected_weight": metrics.inspected_weight,
        }
    return metrics, world.record, world


def finalize_metrics(world: World) -> EpisodeMetrics:
    success = {}
    total_reward = {}
    mean_torque = {}
    termination = {}
    delta_v_total = 0.0
    for a in world.agents:
        success[a.agent_id] = a.status == STATUS_SUCCESS
        total_reward[a.agent_id] = a.total_reward
        mean_torque[a.agent_id] = a.torque_sum / a.steps if a.steps else 0.0
        termination[a.agent_id] = a.status
        delta_v_total += a.delta_v
    return EpisodeMetrics(
        success=success,
        total_reward=total_reward,
        delta_v_total=delta_v_total,
        mean_torque=mean_torque,
        episode_length_s=world.t,
        termination=termination,
        inspected_weight=world.sphere.total_inspected_weight,
    )
