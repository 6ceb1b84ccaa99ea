"""Displacement and collision metrics, aggregated per scene type."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from urnn.interfaces import LoggingServiceInterface, PredictorInterface
from urnn.scenes.categorize import CategoryThresholds, categorize
from urnn.scenes.data import Scene, SceneType

COLLISION_THRESHOLD = 0.1
SUBFRAME_STEPS = 4
BUCKETS = ("overall", "I", "II", "III", "IV", "III/LF", "III/CA", "III/Grp", "III/Oth")
TYPE_BUCKETS = ("I", "II", "III", "IV")


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=float).reshape(-1, 2)
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    if pred.shape != truth.shape or len(pred) == 0:
        raise ValueError(f"Trajectories must have equal non-zero lengths, got {pred.shape} and {truth.shape}")
    return pred, truth


def ade(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.linalg.norm(pred - truth, axis=1).mean())


def fde(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.linalg.norm(pred[-1] - truth[-1]))


def interpolate(trajectory: np.ndarray, subframe_steps: int) -> np.ndarray:
    """Insert ``subframe_steps`` evenly spaced points inside every segment.

    A segment touching a NaN frame interpolates to NaN.
    """
    trajectory = np.asarray(trajectory, dtype=float).reshape(-1, 2)
    if len(trajectory) < 2 or subframe_steps <= 0:
        return trajectory
    fractions = np.linspace(0.0, 1.0, subframe_steps + 2)[:-1]
    starts, ends = trajectory[:-1], trajectory[1:]
    points = starts[:, None, :] + fractions[None, :, None] * (ends - starts)[:, None, :]
    return np.concatenate([points.reshape(-1, 2), trajectory[-1:]])


def collisions(primary_pred, others: Iterable, threshold: float = COLLISION_THRESHOLD,
               subframe_steps: int = SUBFRAME_STEPS) -> bool:
    """Whether the primary comes strictly closer than ``threshold`` to any other trajectory.

    Trajectories are time aligned; NaN frames of the others are skipped.
    """
    primary = interpolate(primary_pred, subframe_steps)
    for other in others:
        other = np.asarray(other, dtype=float).reshape(-1, 2)
        if other.shape[0] != np.asarray(primary_pred).reshape(-1, 2).shape[0]:
            raise ValueError(f"Trajectories are not time aligned: {other.shape} vs {np.shape(primary_pred)}")
        distance = np.linalg.norm(primary - interpolate(other, subframe_steps), axis=1)
        if np.any(distance[np.isfinite(distance)] < threshold):
            return True
    return False


@dataclass
class SceneResult:
    scene_id: int
    scene_type: SceneType
    ade: float
    fde: float
    col_i: bool
    col_ii: bool

    @property
    def buckets(self) -> List[str]:
        out = ["overall", self.scene_type.bucket]
        if self.scene_type.sub_bucket:
            out.append(self.scene_type.sub_bucket)
        return out


@dataclass
class BucketMetrics:
    ade: float
    fde: float
    col_i: float
    col_ii: float
    count: int

    def as_row(self) -> dict:
        return {"ADE": self.ade, "FDE": self.fde, "Col-I": self.col_i, "Col-II": self.col_ii, "Scenes": self.count}


@dataclass
class MetricsReport:
    """Per-scene results and their bucket aggregates (Col-I/Col-II in percent)."""
    results: List[SceneResult] = field(default_factory=list)

    @property
    def buckets(self) -> Dict[str, BucketMetrics]:
        grouped: Dict[str, List[SceneResult]] = {}
        for result in self.results:
            for bucket in result.buckets:
                grouped.setdefault(bucket, []).append(result)
        out = {}
        for bucket in BUCKETS:
            members = grouped.get(bucket)
            if not members:
                continue
            out[bucket] = BucketMetrics(
                ade=float(np.mean([r.ade for r in members])),
                fde=float(np.mean([r.fde for r in members])),
                col_i=100.0 * float(np.mean([r.col_i for r in members])),
                col_ii=100.0 * float(np.mean([r.col_ii for r in members])),
                count=len(members),
            )
        return out

    def bucket(self, name: str) -> Optional[BucketMetrics]:
        return self.buckets.get(name)

    def restrict(self, types: Sequence[str]) -> "MetricsReport":
        """Keep scenes whose Type bucket is in ``types`` (e.g. ``["III"]``)."""
        wanted = set(types)
        unknown = wanted - set(TYPE_BUCKETS)
        if unknown:
            raise ValueError(f"Unknown scene types {sorted(unknown)}, expected a subset of {TYPE_BUCKETS}")
        return MetricsReport([r for r in self.results if r.scene_type.bucket in wanted])

    def to_frame(self) -> pd.DataFrame:
        rows = [{"Bucket": name, **metrics.as_row()} for name, metrics in self.buckets.items()]
        return pd.DataFrame(rows, columns=["Bucket", "ADE", "FDE", "Col-I", "Col-II", "Scenes"])

    def to_dict(self) -> dict:
        return {name: metrics.as_row() for name, metrics in self.buckets.items()}


def evaluate_scene(predictor: PredictorInterface, scene: Scene, obs_len: int = 9, pred_len: int = 12,
                   thresholds: Optional[CategoryThresholds] = None,
                   collision_threshold: float = COLLISION_THRESHOLD,
                   subframe_steps: int = SUBFRAME_STEPS) -> SceneResult:
    scene_type = scene.tag or categorize(scene, thresholds, obs_len, pred_len)
    arrays = scene.arrays(obs_len, pred_len)
    predictions = predictor.predict_scene(scene, obs_len, pred_len)
    if scene.primary_id not in predictions:
        raise ValueError(f"{predictor.name} returned no prediction for primary {scene.primary_id} "
                         f"of scene {scene.scene_id}")
    primary_pred = predictions[scene.primary_id]
    primary_truth = arrays.future[0]
    predicted_others = [predictions[pid] for pid in arrays.pedestrian_ids[1:] if pid in predictions]
    real_others = list(arrays.future[1:])
    return SceneResult(
        scene_id=scene.scene_id,
        scene_type=scene_type,
        ade=ade(primary_pred, primary_truth),
        fde=fde(primary_pred, primary_truth),
        col_i=collisions(primary_pred, predicted_others, collision_threshold, subframe_steps),
        col_ii=collisions(primary_pred, real_others, collision_threshold, subframe_steps),
    )


def evaluate(predictor: PredictorInterface, scenes: Sequence[Scene], obs_len: int = 9, pred_len: int = 12,
             thresholds: Optional[CategoryThresholds] = None,
             collision_threshold: float = COLLISION_THRESHOLD, subframe_steps: int = SUBFRAME_STEPS,
             jobs: int = 1, logging_service: Optional[LoggingServiceInterface] = None) -> MetricsReport:
    """Score ``predictor`` on every scene. Results keep the input scene order."""
    def _one(scene: Scene) -> SceneResult:
        return evaluate_scene(predictor, scene, obs_len, pred_len, thresholds, collision_threshold, subframe_steps)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one, scenes))
    else:
        results = [_one(scene) for scene in scenes]
    report = MetricsReport(results)
    if logging_service is not None:
        overall = report.bucket("overall")
        logging_service.info(f"{predictor.name}: {len(results)} scenes, "
                             f"ADE {overall.ade:.3f} FDE {overall.fde:.3f}" if overall else
                             f"{predictor.name}: no scenes")
    return report


def comparison_table(rows: Sequence[tuple], bucket: str = "overall") -> pd.DataFrame:
    """One line per ``(model, interaction, report)`` for a single bucket."""
    records = []
    for model, interaction, report in rows:
        metrics = report.bucket(bucket)
        if metrics is None:
            records.append({"Model": model, "Interaction": interaction, "ADE": np.nan, "FDE": np.nan,
                            "Col-I": np.nan, "Col-II": np.nan, "Scenes": 0})
        else:
            records.append({"Model": model, "Interaction": interaction, **metrics.as_row()})
    return pd.DataFrame(records, columns=["Model", "Interaction", "ADE", "FDE", "Col-I", "Col-II", "Scenes"])


def format_table(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, float_format=lambda v: f"{v:.2f}")
