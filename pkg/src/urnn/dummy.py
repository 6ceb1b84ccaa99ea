from typing import Dict

import numpy as np

from urnn.interfaces import PredictorInterface
from urnn.scenes.data import Scene


class GroundTruthPredictor(PredictorInterface):
    """Returns the recorded future. Unobserved future frames hold the last known position."""
    name = "Ground truth"
    interaction = "-"

    def predict_scene(self, scene: Scene, obs_len: int, pred_len: int) -> Dict[int, np.ndarray]:
        arrays = scene.arrays(obs_len, pred_len)
        out = {}
        for pid, observed, future in zip(arrays.pedestrian_ids, arrays.observed, arrays.future):
            filled = future.copy()
            last = observed[-1]
            for t in range(pred_len):
                if np.isfinite(filled[t, 0]):
                    last = filled[t]
                else:
                    filled[t] = last
            out[pid] = filled
        return out


class FrozenPredictor(PredictorInterface):
    name = "Frozen"
    interaction = "-"

    def predict_scene(self, scene: Scene, obs_len: int, pred_len: int) -> Dict[int, np.ndarray]:
        arrays = scene.arrays(obs_len, pred_len)
        return {pid: np.repeat(observed[-1:], pred_len, axis=0)
                for pid, observed in zip(arrays.pedestrian_ids, arrays.observed)}
