"""Scene file formats.

ndjson, one record per line::

    {"scene": {"id": 0, "p": 3, "s": 10, "e": 30, "fps": 2.5, "tag": [3, [1]]}}
    {"track": {"f": 10, "p": 3, "x": 1.25, "y": -0.5}}

Unknown keys are ignored. The csv fallback holds ``frame,ped_id,x,y`` rows;
scenes are cut from it with sliding windows, one per fully observed
pedestrian window.
"""
import json
import re
from bisect import bisect_left, bisect_right
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from urnn.exceptions import SceneFormatError
from urnn.scenes.data import DEFAULT_FRAMERATE, Scene, SceneType, Track

rgx_csv_line = re.compile(r"line (\d+)")


class _SampleIndex:
    """Samples grouped by frame, for fast window extraction."""

    def __init__(self, tracks: Dict[int, Track]):
        by_frame: Dict[int, List[Tuple[int, float, float]]] = {}
        for pid, track in tracks.items():
            for frame, (x, y) in zip(track.frames.tolist(), track.positions.tolist()):
                by_frame.setdefault(frame, []).append((pid, x, y))
        self.frames: List[int] = sorted(by_frame)
        self.by_frame = by_frame
        self.tracks = tracks

    def scene(self, scene_id: int, primary_id: int, start: int, end: int,
              framerate: float = DEFAULT_FRAMERATE, tag: Optional[SceneType] = None,
              line_number: Optional[int] = None, path: Optional[str] = None) -> Scene:
        if primary_id not in self.tracks:
            raise SceneFormatError(f"Scene {scene_id} references missing primary track {primary_id}",
                                   line_number, path)
        primary = self.tracks[primary_id].window(start, end)
        if len(primary) < 2 or primary.frames[0] != start or primary.frames[-1] != end:
            raise SceneFormatError(f"Scene {scene_id}: primary track {primary_id} does not span "
                                   f"frames {start}..{end}", line_number, path)
        steps = np.diff(primary.frames)
        frame_step = int(steps.min())
        if np.any(steps % frame_step):
            raise SceneFormatError(f"Scene {scene_id}: primary track {primary_id} has a non-uniform "
                                   f"frame step", line_number, path)

        samples: Dict[int, Tuple[List[int], List[Tuple[float, float]]]] = {}
        lo, hi = bisect_left(self.frames, start), bisect_right(self.frames, end)
        for frame in self.frames[lo:hi]:
            if (frame - start) % frame_step:
                continue
            for pid, x, y in self.by_frame[frame]:
                frames, points = samples.setdefault(pid, ([], []))
                frames.append(frame)
                points.append((x, y))
        tracks = {pid: Track(pid, frames, points) for pid, (frames, points) in samples.items()}
        return Scene(scene_id, primary_id, start, end, tracks, frame_step=frame_step,
                     framerate=framerate, tag=tag)


def _number(record: dict, key: str, kind, line_number: int, path: str):
    if key not in record:
        raise SceneFormatError(f"Missing key '{key}'", line_number, path)
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneFormatError(f"Key '{key}' must be numeric, got {value!r}", line_number, path)
    if kind is int and float(value) != int(value):
        raise SceneFormatError(f"Key '{key}' must be an integer, got {value!r}", line_number, path)
    return kind(value)


def _tracks_from_samples(samples: Dict[int, Tuple[List[int], List[Tuple[float, float]]]],
                         path: str) -> Dict[int, Track]:
    try:
        return {pid: Track(pid, frames, points) for pid, (frames, points) in samples.items()}
    except SceneFormatError as e:
        raise SceneFormatError(str(e), path=path)


def parse_ndjson(path: Union[str, Path]) -> List[Scene]:
    path = str(path)
    samples: Dict[int, Tuple[List[int], List[Tuple[float, float]]]] = {}
    scene_records: List[Tuple[int, dict]] = []
    with open(path) as fp:
        for line_number, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise SceneFormatError(f"Malformed JSON ({e.msg})", line_number, path)
            if not isinstance(record, dict):
                raise SceneFormatError("Expected a JSON object", line_number, path)
            if "track" in record:
                track = record["track"]
                if not isinstance(track, dict):
                    raise SceneFormatError("'track' must be an object", line_number, path)
                frame = _number(track, "f", int, line_number, path)
                pid = _number(track, "p", int, line_number, path)
                x = _number(track, "x", float, line_number, path)
                y = _number(track, "y", float, line_number, path)
                if not (np.isfinite(x) and np.isfinite(y)):
                    raise SceneFormatError(f"Non-finite coordinates for pedestrian {pid}", line_number, path)
                frames, points = samples.setdefault(pid, ([], []))
                if frames and frame <= frames[-1]:
                    raise SceneFormatError(f"Frames of pedestrian {pid} are not strictly increasing "
                                           f"({frames[-1]} then {frame})", line_number, path)
                frames.append(frame)
                points.append((x, y))
            elif "scene" in record:
                scene = record["scene"]
                if not isinstance(scene, dict):
                    raise SceneFormatError("'scene' must be an object", line_number, path)
                scene_records.append((line_number, scene))

    index = _SampleIndex(_tracks_from_samples(samples, path))
    scenes = []
    for line_number, record in scene_records:
        scene_id = _number(record, "id", int, line_number, path)
        primary = _number(record, "p", int, line_number, path)
        start = _number(record, "s", int, line_number, path)
        end = _number(record, "e", int, line_number, path)
        framerate = float(record.get("fps", DEFAULT_FRAMERATE))
        tag = None
        if record.get("tag") is not None:
            try:
                tag = SceneType.from_tag(record["tag"])
            except (ValueError, TypeError, IndexError):
                raise SceneFormatError(f"Invalid tag {record['tag']!r}", line_number, path)
        scenes.append(index.scene(scene_id, primary, start, end, framerate, tag, line_number, path))
    return scenes


def parse_csv(path: Union[str, Path], window: int = 21, stride: int = 5,
              framerate: float = DEFAULT_FRAMERATE) -> List[Scene]:
    path = str(path)
    with open(path) as fp:
        first = fp.readline()
    if not first.strip():
        return []
    has_header = not first.split(",")[0].strip().lstrip("-").replace(".", "", 1).isdigit()
    try:
        frame = pd.read_csv(path, header=0 if has_header else None, names=["frame", "ped_id", "x", "y"],
                            skip_blank_lines=True, dtype=str)
    except pd.errors.EmptyDataError:
        return []
    except pd.errors.ParserError as e:
        found = rgx_csv_line.search(str(e))
        raise SceneFormatError(f"Malformed row ({e})", int(found.group(1)) if found else None, path)

    offset = 2 if has_header else 1
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1) | ~np.isfinite(numeric[["x", "y"]].to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        row = int(np.argmax(bad.to_numpy()))
        raise SceneFormatError(f"Malformed row {frame.iloc[row].tolist()}", row + offset, path)

    samples: Dict[int, Tuple[List[int], List[Tuple[float, float]]]] = {}
    for row, (f, p, x, y) in enumerate(numeric.itertuples(index=False, name=None)):
        f, p = int(f), int(p)
        frames, points = samples.setdefault(p, ([], []))
        if frames and f <= frames[-1]:
            raise SceneFormatError(f"Frames of pedestrian {p} are not strictly increasing "
                                   f"({frames[-1]} then {f})", row + offset, path)
        frames.append(f)
        points.append((float(x), float(y)))

    tracks = _tracks_from_samples(samples, path)
    steps = [np.diff(t.frames) for t in tracks.values() if len(t) > 1]
    if not steps:
        return []
    frame_step = int(np.gcd.reduce(np.concatenate(steps)))
    index = _SampleIndex(tracks)

    scenes = []
    for pid in sorted(tracks):
        frames = tracks[pid].frames
        for i in range(0, len(frames) - window + 1, stride):
            if frames[i + window - 1] - frames[i] != (window - 1) * frame_step:
                continue
            scenes.append(index.scene(len(scenes), pid, int(frames[i]), int(frames[i + window - 1]),
                                      framerate, path=path))
    return scenes


def parse_scenes(path: Union[str, Path], format: Optional[str] = None, window: int = 21,
                 stride: int = 5) -> List[Scene]:
    """Read scenes from an ndjson file (default) or a ``frame,ped_id,x,y`` csv file."""
    fmt = format or ("csv" if str(path).lower().endswith(".csv") else "ndjson")
    if fmt == "ndjson":
        return parse_ndjson(path)
    if fmt == "csv":
        return parse_csv(path, window=window, stride=stride)
    raise ValueError(f"Unknown scene format '{fmt}'")


def scene_record(scene: Scene) -> dict:
    record = {"id": scene.scene_id, "p": scene.primary_id, "s": scene.start, "e": scene.end,
              "fps": scene.framerate}
    if scene.tag is not None:
        record["tag"] = scene.tag.to_tag()
    return {"scene": record}


def track_records(scenes: Iterable[Scene]) -> List[dict]:
    samples: Dict[Tuple[int, int], Tuple[float, float]] = {}
    for scene in scenes:
        for pid, track in scene.tracks.items():
            for frame, (x, y) in zip(track.frames.tolist(), track.positions.tolist()):
                samples[(frame, pid)] = (x, y)
    return [{"track": {"f": f, "p": p, "x": x, "y": y}} for (f, p), (x, y) in sorted(samples.items())]


def write_scenes(scenes: List[Scene], path: Union[str, Path], extra_tracks: Optional[List[dict]] = None):
    """Write scenes and the union of their track samples as ndjson."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    with path.open("w") as fp:
        for scene in scenes:
            fp.write(json.dumps(scene_record(scene)) + "\n")
        for record in track_records(scenes) + (extra_tracks or []):
            fp.write(json.dumps(record) + "\n")
