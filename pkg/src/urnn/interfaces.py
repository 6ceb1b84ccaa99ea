from typing import Dict, Protocol, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from urnn.scenes.data import Scene


class PredictorInterface(Protocol):
    """Anything that forecasts every pedestrian of a scene.

    ``predict_scene`` returns ``{pedestrian_id: (pred_len, 2) positions}`` for
    every pedestrian present at the last observed frame; the primary must be
    among them.
    """
    name: str
    interaction: str

    def predict_scene(self, scene: "Scene", obs_len: int, pred_len: int) -> Dict[int, np.ndarray]:
        raise NotImplementedError


class LoggingServiceInterface(Protocol):

    def debug(self, message: str, **kwargs):
        raise NotImplementedError

    def info(self, message: str, **kwargs):
        raise NotImplementedError

    def warning(self, message: str, **kwargs):
        raise NotImplementedError

    def error(self, message: str, **kwargs):
        raise NotImplementedError
