"""Tracks, scenes and scene categories.

Coordinates are meters in the world frame. A scene covers a uniform frame
window ``[start, end]`` with step ``frame_step``; the primary pedestrian is
observed at every frame of the window while neighbors may be partial.
"""
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from urnn.exceptions import SceneCompletenessError, SceneFormatError

DEFAULT_FRAMERATE = 2.5


@dataclass
class Track:
    pedestrian_id: int
    frames: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if len(self.frames) != len(self.positions):
            raise SceneFormatError(f"Track of pedestrian {self.pedestrian_id} has "
                                   f"{len(self.frames)} frames for {len(self.positions)} positions")
        if np.any(np.diff(self.frames) <= 0):
            raise SceneFormatError(f"Frames of pedestrian {self.pedestrian_id} are not strictly increasing")
        if not np.all(np.isfinite(self.positions)):
            raise SceneFormatError(f"Track of pedestrian {self.pedestrian_id} has non-finite coordinates")

    def __len__(self):
        return len(self.frames)

    def window(self, start: int, end: int) -> "Track":
        keep = (self.frames >= start) & (self.frames <= end)
        return Track(self.pedestrian_id, self.frames[keep], self.positions[keep])


class SceneKind(Enum):
    STATIC = 1
    LINEAR = 2
    INTERACTING = 3
    OTHER = 4

    @property
    def roman(self) -> str:
        return {1: "I", 2: "II", 3: "III", 4: "IV"}[self.value]


class InteractionSubtype(Enum):
    LEADER_FOLLOWER = 1
    COLLISION_AVOIDANCE = 2
    GROUP = 3
    OTHERS = 4

    @property
    def short(self) -> str:
        return {1: "LF", 2: "CA", 3: "Grp", 4: "Oth"}[self.value]


@dataclass(frozen=True)
class SceneType:
    kind: SceneKind
    subtype: Optional[InteractionSubtype] = None

    def __post_init__(self):
        if (self.subtype is not None) != (self.kind is SceneKind.INTERACTING):
            raise ValueError(f"Subtype is required for Type III and only for it, got {self.kind} / {self.subtype}")

    @property
    def bucket(self) -> str:
        return self.kind.roman

    @property
    def sub_bucket(self) -> Optional[str]:
        return f"III/{self.subtype.short}" if self.subtype else None

    def to_tag(self) -> list:
        return [self.kind.value, [self.subtype.value] if self.subtype else []]

    @classmethod
    def from_tag(cls, tag) -> "SceneType":
        kind = SceneKind(int(tag[0]))
        subtypes = tag[1] if len(tag) > 1 else []
        if kind is SceneKind.INTERACTING:
            subtype = InteractionSubtype(int(subtypes[0])) if subtypes else InteractionSubtype.OTHERS
            return cls(kind, subtype)
        return cls(kind)


@dataclass
class SceneArrays:
    """Model-ready arrays. Row 0 is always the primary pedestrian."""
    pedestrian_ids: List[int]
    observed: np.ndarray
    future: np.ndarray

    @property
    def future_mask(self) -> np.ndarray:
        return np.isfinite(self.future)


@dataclass
class Scene:
    scene_id: int
    primary_id: int
    start: int
    end: int
    tracks: Dict[int, Track]
    frame_step: int = 1
    framerate: float = DEFAULT_FRAMERATE
    tag: Optional[SceneType] = None

    @property
    def frames(self) -> np.ndarray:
        return np.arange(self.start, self.end + 1, self.frame_step, dtype=np.int64)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def primary(self) -> Track:
        return self.tracks[self.primary_id]

    @property
    def pedestrian_ids(self) -> List[int]:
        return [self.primary_id] + sorted(p for p in self.tracks if p != self.primary_id)

    def positions(self, pedestrian_id: int) -> np.ndarray:
        """``(n_frames, 2)`` positions over the window, NaN where unobserved."""
        out = np.full((self.n_frames, 2), np.nan)
        track = self.tracks[pedestrian_id]
        index = (track.frames - self.start) // self.frame_step
        valid = (index >= 0) & (index < self.n_frames) & ((track.frames - self.start) % self.frame_step == 0)
        out[index[valid]] = track.positions[valid]
        return out

    def check_complete(self, obs_len: int, pred_len: int):
        if self.n_frames < obs_len + pred_len:
            raise SceneCompletenessError(f"Scene {self.scene_id} spans {self.n_frames} frames, "
                                         f"needs {obs_len + pred_len}")
        primary = self.positions(self.primary_id)[:obs_len + pred_len]
        if not np.all(np.isfinite(primary)):
            raise SceneCompletenessError(f"Primary pedestrian {self.primary_id} of scene {self.scene_id} "
                                         f"is not observed at every frame")

    def arrays(self, obs_len: int, pred_len: int) -> SceneArrays:
        """Observation and future arrays for every pedestrian present at the last observed frame.

        Missing observation frames are carried from the nearest earlier
        observation (the first observation for leading gaps); future frames stay
        NaN where unobserved.
        """
        self.check_complete(obs_len, pred_len)
        ids, observed, future = [], [], []
        for pedestrian_id in self.pedestrian_ids:
            positions = self.positions(pedestrian_id)
            obs = positions[:obs_len].copy()
            if not np.all(np.isfinite(obs[-1])):
                continue
            seen = np.isfinite(obs[:, 0])
            first = int(np.argmax(seen))
            obs[:first] = obs[first]
            for t in range(first + 1, obs_len):
                if not seen[t]:
                    obs[t] = obs[t - 1]
            ids.append(pedestrian_id)
            observed.append(obs)
            future.append(positions[obs_len:obs_len + pred_len])
        return SceneArrays(ids, np.array(observed), np.array(future))

    def all_positions(self) -> np.ndarray:
        return np.concatenate([t.positions for t in self.tracks.values()]) if self.tracks else np.zeros((0, 2))

    def centroid(self) -> np.ndarray:
        points = self.all_positions()
        return points.mean(axis=0) if len(points) else np.zeros(2)


def velocities(track: Union[Track, np.ndarray, Sequence[Sequence[float]]]) -> np.ndarray:
    """``v_t = x_{t+1} - x_t`` for consecutive samples."""
    positions = track.positions if isinstance(track, Track) else np.asarray(track, dtype=float).reshape(-1, 2)
    if len(positions) < 2:
        raise ValueError(f"Need at least 2 positions to compute velocities, got {len(positions)}")
    return positions[1:] - positions[:-1]


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotate_points(points: np.ndarray, theta: float, center: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    return (np.asarray(points, dtype=float) - center) @ rotation_matrix(theta).T + center


def rotate_scene(scene: Scene, theta: float, center: Optional[Sequence[float]] = None) -> Scene:
    """Rigidly rotate every coordinate of ``scene`` by ``theta`` radians about ``center``."""
    center = (0.0, 0.0) if center is None else center
    tracks = {pid: Track(pid, t.frames.copy(), rotate_points(t.positions, theta, center))
              for pid, t in scene.tracks.items()}
    return replace(scene, tracks=tracks)


def scene_from_arrays(scene_id: int, positions: np.ndarray, primary_index: int = 0,
                      pedestrian_ids: Optional[Sequence[int]] = None, start: int = 0,
                      frame_step: int = 1, framerate: float = DEFAULT_FRAMERATE) -> Scene:
    """Build a scene from a ``(pedestrians, frames, 2)`` array; NaN marks unobserved samples."""
    positions = np.asarray(positions, dtype=float)
    count, n_frames = positions.shape[:2]
    ids = list(pedestrian_ids) if pedestrian_ids is not None else list(range(count))
    frames = start + frame_step * np.arange(n_frames)
    tracks = {}
    for pid, path in zip(ids, positions):
        seen = np.all(np.isfinite(path), axis=1)
        if seen.any():
            tracks[pid] = Track(pid, frames[seen], path[seen])
    return Scene(scene_id, ids[primary_index], int(frames[0]), int(frames[-1]), tracks,
                 frame_step=frame_step, framerate=framerate)
