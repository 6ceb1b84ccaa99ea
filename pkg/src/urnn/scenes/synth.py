"""Synthetic interacting scenes.

Goal-directed agents follow waypoints with a social-force style steering:
relaxation towards the preferred velocity plus exponential repulsion from
other agents. Scenarios place neighbors around a primary whose path turns
inside the prediction horizon so that the scene is not Kalman-predictable;
only scenes that categorize as Type III are kept.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from urnn.exceptions import GenerationError
from urnn.scenes.categorize import CategoryThresholds, categorize
from urnn.scenes.data import DEFAULT_FRAMERATE, Scene, SceneKind, rotation_matrix, scene_from_arrays

SCENARIOS = ("crossing", "head_on", "leader_follower", "group")


@dataclass(frozen=True)
class SynthParams:
    obs_len: int = 9
    pred_len: int = 12
    framerate: float = DEFAULT_FRAMERATE
    substeps: int = 4
    speed_mean: float = 1.34
    speed_std: float = 0.26
    speed_range: Tuple[float, float] = (0.5, 2.0)
    repulsion_strength: float = 2.0
    repulsion_range: float = 0.3
    agent_diameter: float = 0.5
    relaxation: float = 0.5
    max_speed_factor: float = 1.3
    waypoint_radius: float = 0.5
    turn_range: Tuple[float, float] = (35.0, 90.0)
    follow_gap: float = 1.5
    group_gap: float = 0.6
    extra_agents: Tuple[int, int] = (0, 2)
    scenarios: Tuple[str, ...] = SCENARIOS
    max_retries: int = 50
    thresholds: CategoryThresholds = field(default_factory=CategoryThresholds)

    def __post_init__(self):
        unknown = set(self.scenarios) - set(SCENARIOS)
        if unknown or not self.scenarios:
            raise ValueError(f"Unknown scenarios {sorted(unknown)}, expected a subset of {SCENARIOS}")
        if self.obs_len < 2 or self.pred_len < 1:
            raise ValueError(f"Invalid horizons {self.obs_len = } {self.pred_len = }")
        if self.substeps < 1 or self.max_retries < 1:
            raise ValueError(f"substeps and max_retries must be >= 1")

    @property
    def n_frames(self) -> int:
        return self.obs_len + self.pred_len

    @property
    def frame_dt(self) -> float:
        return 1.0 / self.framerate


@dataclass
class Agent:
    position: np.ndarray
    speed: float
    waypoints: List[np.ndarray]
    leader: Optional[int] = None
    group: Optional[int] = None
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def target(self, agents: Sequence["Agent"]) -> np.ndarray:
        if self.leader is not None:
            return agents[self.leader].position
        return self.waypoints[0]


class SceneGenerator:
    """Scenario layouts and the crowd simulation behind :func:`synth_scenes`."""

    def __init__(self, params: SynthParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng

    def preferred_speed(self) -> float:
        low, high = self.params.speed_range
        return float(np.clip(self.rng.normal(self.params.speed_mean, self.params.speed_std), low, high))

    def primary_route(self, speed: float) -> List[np.ndarray]:
        """Straight along +x through the observation, then a turn early in the prediction horizon."""
        p = self.params
        step = speed * p.frame_dt
        corner = np.array([step * self.rng.uniform(p.obs_len + 0.5, p.obs_len + 3.0), 0.0])
        turn = np.radians(self.rng.uniform(*p.turn_range)) * self.rng.choice([-1.0, 1.0])
        goal = corner + 30.0 * np.array([np.cos(turn), np.sin(turn)])
        return [corner, goal]

    def crossing(self, primary: Agent) -> List[Agent]:
        p = self.params
        speed = self.preferred_speed()
        # reach the primary's corner at about the same frame
        corner = primary.waypoints[0]
        arrival = np.linalg.norm(corner) / (primary.speed * p.frame_dt) + self.rng.uniform(-1.0, 1.0)
        side = self.rng.choice([-1.0, 1.0])
        start = corner + np.array([0.0, -side * speed * p.frame_dt * arrival])
        return [Agent(start, speed, [corner + np.array([0.0, side * 30.0])])]

    def head_on(self, primary: Agent) -> List[Agent]:
        p = self.params
        speed = self.preferred_speed()
        meet_frame = self.rng.uniform(p.obs_len + 1, p.obs_len + 5)
        meet = np.array([primary.speed * p.frame_dt * meet_frame, self.rng.uniform(-0.2, 0.2)])
        start = meet + np.array([speed * p.frame_dt * meet_frame, 0.0])
        return [Agent(start, speed, [meet + np.array([-30.0, 0.0])])]

    def leader_follower(self, primary: Agent) -> List[Agent]:
        leader = Agent(np.array([self.params.follow_gap, 0.0]), primary.speed,
                       [w + np.array([self.params.follow_gap, 0.0]) for w in primary.waypoints])
        primary.speed *= self.rng.uniform(1.0, 1.1)
        primary.leader = 1
        return [leader]

    def group(self, primary: Agent) -> List[Agent]:
        side = self.rng.choice([-1.0, 1.0])
        offset = np.array([0.0, side * self.params.group_gap])
        primary.group = 0
        return [Agent(primary.position + offset, primary.speed, [w + offset for w in primary.waypoints], group=0)]

    def bystanders(self, count: int) -> List[Agent]:
        agents = []
        for _ in range(count):
            start = self.rng.uniform([-4.0, -8.0], [16.0, 8.0])
            heading = self.rng.uniform(0, 2 * np.pi)
            goal = start + 30.0 * np.array([np.cos(heading), np.sin(heading)])
            agents.append(Agent(start, self.preferred_speed(), [goal]))
        return agents

    def layout(self, scenario: str) -> List[Agent]:
        speed = self.preferred_speed()
        primary = Agent(np.zeros(2), speed, self.primary_route(speed))
        builders: Dict[str, Callable[[Agent], List[Agent]]] = {
            "crossing": self.crossing, "head_on": self.head_on,
            "leader_follower": self.leader_follower, "group": self.group,
        }
        agents = [primary] + builders[scenario](primary)
        low, high = self.params.extra_agents
        return agents + self.bystanders(int(self.rng.integers(low, high + 1)))

    def desired_velocity(self, agent: Agent, agents: Sequence[Agent]) -> np.ndarray:
        offset = agent.target(agents) - agent.position
        distance = np.linalg.norm(offset)
        if distance < 1e-9:
            return np.zeros(2)
        speed = agent.speed
        if agent.leader is not None:
            speed *= float(np.clip((distance - self.params.follow_gap) / self.params.follow_gap + 1.0, 0.0, 1.0))
        return offset / distance * speed

    def simulate(self, agents: List[Agent]) -> np.ndarray:
        """Positions ``(agents, n_frames, 2)`` sampled once per frame."""
        p = self.params
        dt = p.frame_dt / p.substeps
        for agent in agents:
            agent.velocity = self.desired_velocity(agent, agents)
        out = np.empty((len(agents), p.n_frames, 2))
        out[:, 0] = [a.position for a in agents]
        for frame in range(1, p.n_frames):
            for _ in range(p.substeps):
                positions = np.array([a.position for a in agents])
                forces = []
                for i, agent in enumerate(agents):
                    force = (self.desired_velocity(agent, agents) - agent.velocity) / p.relaxation
                    for j, other in enumerate(agents):
                        if j == i or (agent.group is not None and agent.group == other.group):
                            continue
                        diff = positions[i] - positions[j]
                        distance = max(np.linalg.norm(diff), 1e-6)
                        force = force + p.repulsion_strength * np.exp(
                            (p.agent_diameter - distance) / p.repulsion_range) * diff / distance
                    forces.append(force)
                for agent, force in zip(agents, forces):
                    velocity = agent.velocity + dt * force
                    limit = p.max_speed_factor * agent.speed
                    norm = np.linalg.norm(velocity)
                    if norm > limit:
                        velocity *= limit / norm
                    agent.velocity = velocity
                    agent.position = agent.position + dt * velocity
                    if len(agent.waypoints) > 1 and np.linalg.norm(agent.waypoints[0] - agent.position) < p.waypoint_radius:
                        agent.waypoints.pop(0)
            out[:, frame] = [a.position for a in agents]
        return out

    def sample(self, scene_index: int) -> Scene:
        p = self.params
        scenario = str(self.rng.choice(list(p.scenarios)))
        positions = self.simulate(self.layout(scenario))
        theta = self.rng.uniform(0, 2 * np.pi)
        shift = self.rng.uniform(-10.0, 10.0, size=2)
        positions = positions @ rotation_matrix(theta).T + shift
        ids = [scene_index * 100 + j for j in range(len(positions))]
        return scene_from_arrays(scene_index, positions, 0, ids, start=scene_index * (p.n_frames + 5),
                                 framerate=p.framerate)


def synth_scenes(n: int, rng: Union[int, np.random.Generator, None] = None,
                 params: Optional[SynthParams] = None) -> List[Scene]:
    """Generate ``n`` tagged Type III scenes.

    Raises :class:`GenerationError` when ``params.max_retries`` consecutive
    candidates fail the Type III filter.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    params = params or SynthParams()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    generator = SceneGenerator(params, rng)
    scenes = []
    for index in range(n):
        for _ in range(params.max_retries):
            scene = generator.sample(index)
            scene_type = categorize(scene, params.thresholds, params.obs_len, params.pred_len)
            if scene_type.kind is SceneKind.INTERACTING:
                scene.tag = scene_type
                scenes.append(scene)
                break
        else:
            raise GenerationError(f"No Type III scene after {params.max_retries} attempts for scene {index}")
    return scenes
