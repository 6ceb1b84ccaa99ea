from typing import Callable, Optional, Sequence

import numpy as np

from urnn.autodiff import Tensor
from urnn.model import ModelConfig
from urnn.nn import GridSpec
from urnn.scenes import Scene, SceneType, scene_from_arrays, write_scenes
from urnn.scenes.data import InteractionSubtype, SceneKind

OBS_LEN = 4
PRED_LEN = 3


def numerical_gradient(fn: Callable[[], float], tensor: Tensor, eps: float = 1e-6,
                       indices: Optional[Sequence[tuple]] = None) -> np.ndarray:
    """Central differences of ``fn`` w.r.t. ``tensor.data``; only ``indices`` when given."""
    grad = np.zeros_like(tensor.data)
    indices = indices if indices is not None else list(np.ndindex(*tensor.shape))
    for index in indices:
        original = tensor.data[index]
        tensor.data[index] = original + eps
        plus = fn()
        tensor.data[index] = original - eps
        minus = fn()
        tensor.data[index] = original
        grad[index] = (plus - minus) / (2 * eps)
    return grad


def sample_indices(shape: Sequence[int], count: int, rng: np.random.Generator) -> list:
    flat = rng.choice(int(np.prod(shape)), size=min(count, int(np.prod(shape))), replace=False)
    return [np.unravel_index(int(i), tuple(shape)) for i in flat]


def tiny_config(**kwargs) -> ModelConfig:
    values = dict(e_dim=4, hidden_dim=5, pool_dim=6, grid=GridSpec(n_cells=4, cell_side=1.0),
                  obs_len=OBS_LEN, pred_len=PRED_LEN)
    values.update(kwargs)
    return ModelConfig(**values)


def walking_scene(scene_id: int = 0, peds: int = 3, frames: int = OBS_LEN + PRED_LEN, seed: int = 0,
                  spread: float = 1.0, tag: Optional[SceneType] = None) -> Scene:
    """Pedestrians walking with small random turns, a meter or so apart."""
    rng = np.random.default_rng(seed)
    starts = rng.uniform(-spread, spread, size=(peds, 1, 2))
    steps = 0.4 * np.array([1.0, 0.0]) + rng.normal(0.0, 0.1, size=(peds, frames - 1, 2))
    positions = np.concatenate([starts, starts + np.cumsum(steps, axis=1)], axis=1)
    scene = scene_from_arrays(scene_id, positions, start=scene_id * (frames + 2))
    scene.tag = tag
    return scene


def tagged_scenes(n: int, frames: int = OBS_LEN + PRED_LEN, seed: int = 0) -> list:
    tag = SceneType(SceneKind.INTERACTING, InteractionSubtype.OTHERS)
    return [walking_scene(i, peds=2 + i % 2, frames=frames, seed=seed + i, tag=tag) for i in range(n)]


def write_tagged_scenes(path, n: int, frames: int = OBS_LEN + PRED_LEN, seed: int = 0) -> list:
    scenes = tagged_scenes(n, frames, seed)
    write_scenes(scenes, path)
    return scenes


def turning_path(frames: int = 21, turn_at: int = 10, speed: float = 0.5) -> np.ndarray:
    """Straight along +x, then straight along +y from frame ``turn_at``."""
    path = np.zeros((frames, 2))
    for k in range(frames):
        if k <= turn_at:
            path[k] = (speed * k, 0.0)
        else:
            path[k] = (speed * turn_at, speed * (k - turn_at))
    return path
