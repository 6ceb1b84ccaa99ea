"""Learning-free predictors: constant velocity and a linear Kalman filter."""
from dataclasses import dataclass
from typing import Dict, List, Optional, TYPE_CHECKING

import numpy as np

from urnn.interfaces import PredictorInterface
if TYPE_CHECKING:
    from urnn.scenes.data import Scene


def _check_observations(obs_positions) -> np.ndarray:
    obs = np.asarray(obs_positions, dtype=float).reshape(-1, 2)
    if len(obs) < 2:
        raise ValueError(f"Need at least 2 observed positions, got {len(obs)}")
    if not np.all(np.isfinite(obs)):
        raise ValueError("Observed positions must be finite")
    return obs


def predict_constant_velocity(obs_positions, pred_len: int) -> np.ndarray:
    """``x_{T+k} = x_T + k * (x_T - x_{T-1})``."""
    obs = _check_observations(obs_positions)
    if pred_len < 1:
        raise ValueError(f"pred_len must be >= 1, got {pred_len}")
    last, velocity = obs[-1], obs[-1] - obs[-2]
    steps = np.arange(1, pred_len + 1, dtype=float)[:, None]
    return last + steps * velocity


@dataclass(frozen=True)
class KalmanNoise:
    """Noise scales in m². ``process`` scales a white-noise-acceleration model."""
    process: float = 1e-2
    observation: float = 1e-3

    def __post_init__(self):
        if self.process < 0 or self.observation <= 0:
            raise ValueError(f"Invalid Kalman noise {self.process = } {self.observation = }")


@dataclass
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[2:]


# one frame per step
TRANSITION = np.array([[1.0, 0.0, 1.0, 0.0],
                       [0.0, 1.0, 0.0, 1.0],
                       [0.0, 0.0, 1.0, 0.0],
                       [0.0, 0.0, 0.0, 1.0]])
OBSERVATION = np.array([[1.0, 0.0, 0.0, 0.0],
                        [0.0, 1.0, 0.0, 0.0]])


def process_covariance(noise: KalmanNoise) -> np.ndarray:
    block = np.array([[0.25, 0.5], [0.5, 1.0]]) * noise.process
    q = np.zeros((4, 4))
    for axis in (0, 1):
        idx = [axis, axis + 2]
        q[np.ix_(idx, idx)] = block
    return q


def kalman_predict(state: KalmanState, noise: KalmanNoise) -> KalmanState:
    mean = TRANSITION @ state.mean
    covariance = TRANSITION @ state.covariance @ TRANSITION.T + process_covariance(noise)
    return KalmanState(mean, 0.5 * (covariance + covariance.T))


def kalman_update(state: KalmanState, measurement: np.ndarray, noise: KalmanNoise) -> KalmanState:
    r = noise.observation * np.eye(2)
    innovation = measurement - OBSERVATION @ state.mean
    s = OBSERVATION @ state.covariance @ OBSERVATION.T + r
    gain = np.linalg.solve(s, OBSERVATION @ state.covariance).T
    mean = state.mean + gain @ innovation
    # Joseph form keeps the covariance positive semi-definite
    a = np.eye(4) - gain @ OBSERVATION
    covariance = a @ state.covariance @ a.T + gain @ r @ gain.T
    return KalmanState(mean, 0.5 * (covariance + covariance.T))


def kalman_filter(obs_positions, noise: Optional[KalmanNoise] = None,
                  history: Optional[List[KalmanState]] = None) -> KalmanState:
    """Filter an observation window; the state is seeded from the first two observations."""
    obs = _check_observations(obs_positions)
    noise = noise or KalmanNoise()
    r = noise.observation
    state = KalmanState(np.concatenate([obs[1], obs[1] - obs[0]]), np.diag([r, r, 2 * r, 2 * r]))
    if history is not None:
        history.append(state)
    for measurement in obs[2:]:
        state = kalman_update(kalman_predict(state, noise), measurement, noise)
        if history is not None:
            history.append(state)
    return state


def predict_kalman(obs_positions, pred_len: int, noise: Optional[KalmanNoise] = None,
                   history: Optional[List[KalmanState]] = None) -> np.ndarray:
    """Filter the observations, then roll the motion model forward without measurements.

    When ``history`` is given it receives every intermediate state, filtered
    and predicted.
    """
    if pred_len < 1:
        raise ValueError(f"pred_len must be >= 1, got {pred_len}")
    noise = noise or KalmanNoise()
    state = kalman_filter(obs_positions, noise, history)
    out = np.empty((pred_len, 2))
    for k in range(pred_len):
        state = kalman_predict(state, noise)
        if history is not None:
            history.append(state)
        out[k] = state.position
    return out


class ConstantVelocityPredictor(PredictorInterface):
    name = "Constant velocity"
    interaction = "-"

    def predict_scene(self, scene: "Scene", obs_len: int, pred_len: int) -> Dict[int, np.ndarray]:
        arrays = scene.arrays(obs_len, pred_len)
        return {pid: predict_constant_velocity(observed, pred_len)
                for pid, observed in zip(arrays.pedestrian_ids, arrays.observed)}


class KalmanPredictor(PredictorInterface):
    name = "Kalman filter"
    interaction = "-"

    def __init__(self, noise: Optional[KalmanNoise] = None):
        self.noise = noise or KalmanNoise()

    def predict_scene(self, scene: "Scene", obs_len: int, pred_len: int) -> Dict[int, np.ndarray]:
        arrays = scene.arrays(obs_len, pred_len)
        return {pid: predict_kalman(observed, pred_len, self.noise)
                for pid, observed in zip(arrays.pedestrian_ids, arrays.observed)}


BASELINES = {
    "cv": ConstantVelocityPredictor,
    "kalman": KalmanPredictor,
}


def get_baseline(token: str, noise: Optional[KalmanNoise] = None) -> PredictorInterface:
    key = token.strip().lower()
    if key not in BASELINES:
        raise ValueError(f"Unknown baseline '{token}', expected one of {sorted(BASELINES)}")
    if key == "kalman":
        return KalmanPredictor(noise)
    return BASELINES[key]()
