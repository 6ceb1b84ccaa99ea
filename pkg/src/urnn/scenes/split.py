from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from urnn.scenes.categorize import CategoryThresholds, categorize
from urnn.scenes.data import Scene


def _stratum(scene: Scene, thresholds: Optional[CategoryThresholds], obs_len: int, pred_len: int) -> str:
    scene_type = scene.tag or categorize(scene, thresholds, obs_len, pred_len)
    return scene_type.sub_bucket or scene_type.bucket


def split(scenes: Sequence[Scene], ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0,
          thresholds: Optional[CategoryThresholds] = None, obs_len: int = 9,
          pred_len: int = 12) -> Tuple[List[Scene], List[Scene], List[Scene]]:
    """Seeded train/val/test split, stratified by scene type.

    Untagged scenes are categorized first. Each stratum is shuffled and cut at
    the rounded cumulative ratios, so every split keeps the global type mix.
    Input order is preserved inside each split.
    """
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != (3,) or np.any(ratios < 0) or ratios.sum() <= 0:
        raise ValueError(f"ratios must be 3 non-negative numbers with a positive sum, got {ratios.tolist()}")
    cumulative = np.cumsum(ratios) / ratios.sum()

    strata: Dict[str, List[int]] = {}
    for index, scene in enumerate(scenes):
        strata.setdefault(_stratum(scene, thresholds, obs_len, pred_len), []).append(index)

    rng = np.random.default_rng(seed)
    assignment = np.empty(len(scenes), dtype=int)
    for key in sorted(strata):
        members = np.asarray(strata[key])
        members = members[rng.permutation(len(members))]
        cuts = np.round(cumulative * len(members)).astype(int)
        for part, (lo, hi) in enumerate(zip(np.concatenate([[0], cuts[:-1]]), cuts)):
            assignment[members[lo:hi]] = part

    parts: Tuple[List[Scene], List[Scene], List[Scene]] = ([], [], [])
    for scene, part in zip(scenes, assignment):
        parts[part].append(scene)
    return parts
