"""Scene categorization into Types I to IV and Type III interaction subtypes.

The cascade runs on the primary pedestrian over ``obs_len + pred_len`` frames:
static, then Kalman-predictable, then the interaction predicates in fixed
priority (leader-follower, collision avoidance, group, others), else Type IV.
"""
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from urnn.baselines import KalmanNoise, predict_constant_velocity, predict_kalman
from urnn.scenes.data import InteractionSubtype, Scene, SceneKind, SceneType

MIN_SPEED = 1e-3


@dataclass(frozen=True)
class CategoryThresholds:
    static: float = 1.0
    kalman: float = 0.5
    collision_dist: float = 0.3
    leader_dist: float = 5.0
    leader_angle: float = 15.0
    speed_ratio: Tuple[float, float] = (0.8, 1.25)
    group_dist: float = 0.8
    group_angle: float = 15.0
    interaction_dist: float = 2.0
    interaction_angle: float = 60.0

    def __post_init__(self):
        for name in ("static", "kalman", "collision_dist", "leader_dist", "group_dist", "interaction_dist"):
            if getattr(self, name) <= 0:
                raise ValueError(f"Threshold '{name}' must be positive, got {getattr(self, name)}")
        low, high = self.speed_ratio
        if not 0 < low <= high:
            raise ValueError(f"Invalid speed ratio range {self.speed_ratio}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["speed_ratio"] = list(self.speed_ratio)
        return out


def angle_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Unsigned angle in degrees between row vectors; NaN where either is ~zero."""
    u, v = np.atleast_2d(u), np.atleast_2d(v)
    nu, nv = np.linalg.norm(u, axis=-1), np.linalg.norm(v, axis=-1)
    valid = (nu > MIN_SPEED) & (nv > MIN_SPEED)
    cos = np.einsum("ij,ij->i", u, v) / np.where(valid, nu * nv, 1.0)
    return np.where(valid, np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))), np.nan)


def _step_velocities(path: np.ndarray) -> np.ndarray:
    """Backward differences, frame 0 reuses frame 1."""
    v = np.empty_like(path)
    v[1:] = path[1:] - path[:-1]
    v[0] = v[1]
    return v


def is_leader_follower(primary: np.ndarray, neighbor: np.ndarray, obs_len: int,
                       thresholds: CategoryThresholds) -> bool:
    """Neighbor ahead of the primary, walking its way at a similar speed, on most prediction frames."""
    horizon = range(obs_len, len(primary))
    pv, nv = _step_velocities(primary), _step_velocities(neighbor)
    low, high = thresholds.speed_ratio
    hits = 0
    for t in horizon:
        if not (np.all(np.isfinite(neighbor[t])) and np.all(np.isfinite(nv[t]))):
            continue
        offset = neighbor[t] - primary[t]
        if np.linalg.norm(offset) >= thresholds.leader_dist:
            continue
        bearing = angle_between(pv[t], offset)[0]
        heading = angle_between(pv[t], nv[t])[0]
        primary_speed = np.linalg.norm(pv[t])
        if np.isnan(bearing) or bearing >= thresholds.leader_angle or primary_speed <= MIN_SPEED:
            continue
        if np.isnan(heading) or heading >= thresholds.leader_angle:
            continue
        if low <= np.linalg.norm(nv[t]) / primary_speed <= high:
            hits += 1
    return hits > len(horizon) / 2


def is_collision_avoidance(primary: np.ndarray, neighbor: np.ndarray, obs_len: int,
                           thresholds: CategoryThresholds) -> bool:
    """Constant-velocity extrapolations from the last observation come within ``collision_dist``."""
    last = neighbor[obs_len - 2:obs_len]
    if not np.all(np.isfinite(last)):
        return False
    pred_len = len(primary) - obs_len
    ours = predict_constant_velocity(primary[:obs_len], pred_len)
    theirs = predict_constant_velocity(last, pred_len)
    return bool(np.min(np.linalg.norm(ours - theirs, axis=1)) < thresholds.collision_dist)


def is_group(primary: np.ndarray, neighbor: np.ndarray, obs_len: int,
             thresholds: CategoryThresholds) -> bool:
    """Mean distance and mean heading difference over the co-observed window stay small."""
    seen = np.all(np.isfinite(neighbor), axis=1)
    if seen.sum() < 2:
        return False
    distance = np.linalg.norm(neighbor[seen] - primary[seen], axis=1).mean()
    if distance >= thresholds.group_dist:
        return False
    both = seen[1:] & seen[:-1]
    angles = angle_between(np.diff(primary, axis=0)[both], np.diff(neighbor, axis=0)[both])
    angles = angles[np.isfinite(angles)]
    return bool(len(angles)) and float(angles.mean()) < thresholds.group_angle


def is_other_interaction(primary: np.ndarray, neighbor: np.ndarray, obs_len: int,
                         thresholds: CategoryThresholds) -> bool:
    """A neighbor within ``interaction_dist`` inside the primary's frontal sector on a prediction frame."""
    pv = _step_velocities(primary)
    for t in range(obs_len, len(primary)):
        if not np.all(np.isfinite(neighbor[t])):
            continue
        offset = neighbor[t] - primary[t]
        if np.linalg.norm(offset) >= thresholds.interaction_dist:
            continue
        bearing = angle_between(pv[t], offset)[0]
        if not np.isnan(bearing) and bearing < thresholds.interaction_angle:
            return True
    return False


PREDICATES = [
    (InteractionSubtype.LEADER_FOLLOWER, is_leader_follower),
    (InteractionSubtype.COLLISION_AVOIDANCE, is_collision_avoidance),
    (InteractionSubtype.GROUP, is_group),
    (InteractionSubtype.OTHERS, is_other_interaction),
]


def _window(scene: Scene, obs_len: int, pred_len: int) -> Tuple[np.ndarray, List[np.ndarray]]:
    scene.check_complete(obs_len, pred_len)
    length = obs_len + pred_len
    primary = scene.positions(scene.primary_id)[:length]
    neighbors = [scene.positions(pid)[:length] for pid in scene.pedestrian_ids[1:]]
    return primary, neighbors


def interaction_subtype(scene: Scene, thresholds: Optional[CategoryThresholds] = None,
                        obs_len: int = 9, pred_len: int = 12) -> Optional[InteractionSubtype]:
    """First interaction predicate, in priority order, that any neighbor satisfies."""
    thresholds = thresholds or CategoryThresholds()
    primary, neighbors = _window(scene, obs_len, pred_len)
    for subtype, predicate in PREDICATES:
        if any(predicate(primary, neighbor, obs_len, thresholds) for neighbor in neighbors):
            return subtype
    return None


def categorize(scene: Scene, thresholds: Optional[CategoryThresholds] = None,
               obs_len: int = 9, pred_len: int = 12,
               noise: Optional[KalmanNoise] = None) -> SceneType:
    thresholds = thresholds or CategoryThresholds()
    primary, _ = _window(scene, obs_len, pred_len)
    if np.linalg.norm(primary[-1] - primary[0]) < thresholds.static:
        return SceneType(SceneKind.STATIC)
    predicted = predict_kalman(primary[:obs_len], pred_len, noise)
    if np.linalg.norm(predicted[-1] - primary[-1]) < thresholds.kalman:
        return SceneType(SceneKind.LINEAR)
    subtype = interaction_subtype(scene, thresholds, obs_len, pred_len)
    if subtype is not None:
        return SceneType(SceneKind.INTERACTING, subtype)
    return SceneType(SceneKind.OTHER)


def type_histogram(types: Iterable[SceneType]) -> Dict[str, int]:
    """Scene counts per Type bucket and per Type III subtype bucket."""
    counts = {"I": 0, "II": 0, "III": 0, "IV": 0,
              "III/LF": 0, "III/CA": 0, "III/Grp": 0, "III/Oth": 0}
    for scene_type in types:
        counts[scene_type.bucket] += 1
        if scene_type.sub_bucket:
            counts[scene_type.sub_bucket] += 1
    return counts
