"""Reproducible runs on top of the library.

:class:`ExperimentRunner` is the façade the command line drives. Every command
that writes an artifact also writes a JSON manifest holding the resolved
configuration, the seed, the code version, content hashes of the inputs and
outputs, the wall-clock time and the resulting metrics.
"""
import json
import subprocess
import time
from dataclasses import replace
from datetime import datetime, timezone
from hashlib import sha256
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from urnn.autodiff import set_default_dtype
from urnn.baselines import ConstantVelocityPredictor, get_baseline
from urnn.config import RunConfig
from urnn.exceptions import UsageError
from urnn.interfaces import LoggingServiceInterface, PredictorInterface
from urnn.logs import get_default_logging_service
from urnn.metrics import BucketMetrics, MetricsReport, comparison_table, evaluate, format_table
from urnn.model import ForecastModel
from urnn.nn import CellKind, EncoderVariant, PoolingKind
from urnn.scenes import (CategoryThresholds, Scene, SynthParams, Track, categorize, parse_scenes, split,
                         synth_scenes, type_histogram, write_scenes)
from urnn.serialization import load, save
from urnn.training import History, train

NOISE_FLOOR_ADE = 0.01
DEFAULT_ENCODERS = (EncoderVariant.PLAIN, EncoderVariant.BI, EncoderVariant.U, EncoderVariant.REVERSED_U)


class NumpyEncoder(json.JSONEncoder):
    """ Special json encoder for numpy types """
    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        elif isinstance(obj, np.floating):
            return float(obj)
        elif isinstance(obj, np.bool_):
            return bool(obj)
        elif isinstance(obj, np.ndarray):
            return obj.tolist()
        return json.JSONEncoder.default(self, obj)


def get_content_hash(content: bytes) -> str:
    m = sha256(content)
    return m.hexdigest()


def get_file_hash(path: Union[str, Path]) -> str:
    return get_content_hash(Path(path).read_bytes())


def git_describe() -> Optional[str]:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


class ExperimentRunner:
    """Loads data, trains, evaluates and records manifests.

    Parameters
    ----------
    run_config : RunConfig, optional
        Fully resolved configuration. Built-in defaults when omitted.
    logging_service : LoggingServiceInterface, optional
        Structured logger. If not provided, :py:meth:`get_default_logging_service`
        is called to create a console logger.
    """

    def __init__(self, run_config: Optional[RunConfig] = None,
                 logging_service: Optional[LoggingServiceInterface] = None, **kwargs):
        self.run_config: RunConfig = run_config or RunConfig()
        self.logging_service: LoggingServiceInterface = logging_service or self.get_default_logging_service()
        self.fingerprints: Dict[str, str] = {}
        set_default_dtype(self.run_config.precision)

    def get_default_logging_service(self) -> LoggingServiceInterface:
        return get_default_logging_service("urnn")

    @property
    def obs_len(self) -> int:
        return self.run_config.model.obs_len

    @property
    def pred_len(self) -> int:
        return self.run_config.model.pred_len

    def load_scenes(self, path: Union[str, Path], format: Optional[str] = None) -> List[Scene]:
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"Data file {path} not found")
        scenes = parse_scenes(path, format=format, window=self.obs_len + self.pred_len)
        self.fingerprints[str(path)] = get_file_hash(path)
        if not scenes:
            self.logging_service.warning(f"No scene found in {path}")
        else:
            self.logging_service.info(f"Loaded {len(scenes)} scenes from {path}")
        return scenes

    def split_train_val(self, scenes: Sequence[Scene]) -> Tuple[List[Scene], List[Scene]]:
        ratio = self.run_config.val_ratio
        train_scenes, val_scenes, _ = split(scenes, (1 - ratio, ratio, 0.0), seed=self.run_config.seed,
                                            thresholds=self.run_config.thresholds,
                                            obs_len=self.obs_len, pred_len=self.pred_len)
        self.logging_service.debug(f"{len(train_scenes) = } {len(val_scenes) = }")
        return train_scenes, val_scenes

    def evaluate(self, predictor: PredictorInterface, scenes: Sequence[Scene]) -> MetricsReport:
        config = self.run_config
        return evaluate(predictor, scenes, self.obs_len, self.pred_len, config.thresholds,
                        config.collision_threshold, config.subframe_steps, config.jobs, self.logging_service)

    def manifest(self, command: str, started: float, metrics=None, **extra) -> dict:
        return {
            "command": command,
            "config": self.run_config.to_dict(),
            "seed": self.run_config.seed,
            "git": git_describe(),
            "datasets": dict(self.fingerprints),
            "wall_clock": {
                "started": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
                "seconds": time.time() - started,
            },
            "metrics": metrics,
            **extra,
        }

    def write_manifest(self, manifest: dict, path: Union[str, Path]) -> Path:
        path = Path(path)
        if not path.parent.exists():
            path.parent.mkdir(parents=True)
        with path.open("w") as fp:
            json.dump(manifest, fp, indent=2, cls=NumpyEncoder)
        self.logging_service.info(f"Manifest written to {path}")
        return path

    def train_model(self, train_scenes: Sequence[Scene], val_scenes: Sequence[Scene],
                    config=None, seed: Optional[int] = None) -> Tuple[ForecastModel, History]:
        run = self.run_config
        seed = run.seed if seed is None else seed
        model = ForecastModel.create(config or run.model, seed=seed)
        self.logging_service.info(f"Training {model.name} / {model.interaction}, "
                                  f"{model.parameter_count} parameters, {seed = }")
        return train(model, train_scenes, val_scenes, replace(run.schedule, seed=seed), self.logging_service)

    def train(self, data: Union[str, Path], out: Union[str, Path],
              val: Optional[Union[str, Path]] = None) -> Tuple[ForecastModel, History, MetricsReport]:
        """Train on ``data`` (split by ``val_ratio`` unless ``val`` is given) and write model and manifest to ``out``."""
        started = time.time()
        scenes = self.load_scenes(data)
        if val is not None:
            train_scenes, val_scenes = scenes, self.load_scenes(val)
        else:
            train_scenes, val_scenes = self.split_train_val(scenes)
        model, history = self.train_model(train_scenes, val_scenes)
        report = self.evaluate(model, val_scenes)

        out = Path(out)
        model_path = save(model, out / "model.urnn")
        manifest = self.manifest("train", started, metrics=report.to_dict(), history=history.to_dict(),
                                 parameter_count=model.parameter_count,
                                 model={"path": str(model_path), "sha256": get_file_hash(model_path)})
        self.write_manifest(manifest, out / "manifest.json")
        return model, history, report

    def eval(self, data: Union[str, Path], models: Sequence[Union[str, Path]] = (),
             baselines: Sequence[str] = (), types: Optional[Sequence[str]] = None,
             out: Optional[Union[str, Path]] = None, bucket: str = "overall") -> pd.DataFrame:
        """One table row per model file and baseline."""
        if not models and not baselines:
            raise UsageError("Nothing to evaluate, give at least one model or baseline")
        started = time.time()
        scenes = self.load_scenes(data)
        predictors: List[PredictorInterface] = []
        for path in models:
            if not Path(path).is_file():
                raise UsageError(f"Model file {path} not found")
            predictors.append(load(path))
            self.fingerprints[str(path)] = get_file_hash(path)
        predictors.extend(get_baseline(token, self.run_config.kalman) for token in baselines)

        rows = []
        for predictor in predictors:
            report = self.evaluate(predictor, scenes)
            if types:
                report = report.restrict(types)
            rows.append((predictor.name, predictor.interaction, report))
        table = comparison_table(rows, bucket)
        self.logging_service.debug("\n" + format_table(table))
        if out is not None:
            out = Path(out)
            if not out.parent.exists():
                out.parent.mkdir(parents=True)
            table.to_csv(out, index=False)
            metrics = {f"{name} / {interaction}": report.to_dict() for name, interaction, report in rows}
            self.write_manifest(self.manifest("eval", started, metrics=metrics, types=list(types or [])),
                                out.with_suffix(".manifest.json"))
        return table

    def predict(self, model_path: Union[str, Path], data: Union[str, Path], out: Union[str, Path]) -> Path:
        """Write observed tracks followed by predicted positions for every scene as ndjson."""
        started = time.time()
        if not Path(model_path).is_file():
            raise UsageError(f"Model file {model_path} not found")
        model = load(model_path)
        self.fingerprints[str(model_path)] = get_file_hash(model_path)
        scenes = self.load_scenes(data)
        forecasts = []
        for scene in scenes:
            predictions = model.predict_scene(scene, self.obs_len, self.pred_len)
            frames = scene.frames[:self.obs_len + self.pred_len]
            tracks = {}
            for pid in scene.pedestrian_ids:
                observed = scene.positions(pid)[:self.obs_len]
                path = np.concatenate([observed, predictions[pid]]) if pid in predictions else observed
                seen = np.all(np.isfinite(path), axis=1)
                if seen.any():
                    tracks[pid] = Track(pid, frames[:len(path)][seen], path[seen])
            forecasts.append(replace(scene, end=int(frames[-1]), tracks=tracks))
        out = Path(out)
        write_scenes(forecasts, out)
        self.write_manifest(self.manifest("predict", started, outputs={str(out): get_file_hash(out)}),
                            out.with_suffix(".manifest.json"))
        return out

    def synth(self, n: int, out: Union[str, Path], params: Optional[SynthParams] = None) -> List[Scene]:
        started = time.time()
        params = params or SynthParams(obs_len=self.obs_len, pred_len=self.pred_len,
                                       thresholds=self.run_config.thresholds)
        scenes = synth_scenes(n, self.run_config.seed, params)
        out = Path(out)
        write_scenes(scenes, out)
        self.logging_service.info(f"Generated {len(scenes)} scenes into {out}")
        histogram = type_histogram(s.tag for s in scenes)
        self.write_manifest(self.manifest("synth", started, metrics=histogram, n=n,
                                          outputs={str(out): get_file_hash(out)}),
                            out.with_suffix(".manifest.json"))
        return scenes

    def categorize(self, data: Union[str, Path], out: Optional[Union[str, Path]] = None) -> Dict[str, int]:
        """Tag every scene and return the type histogram; ``out`` receives an annotated copy."""
        started = time.time()
        scenes = self.load_scenes(data)
        thresholds: CategoryThresholds = self.run_config.thresholds
        for scene in scenes:
            scene.tag = categorize(scene, thresholds, self.obs_len, self.pred_len, self.run_config.kalman)
        histogram = type_histogram(s.tag for s in scenes)
        self.logging_service.info(f"{histogram = }")
        if out is not None:
            out = Path(out)
            write_scenes(scenes, out)
            self.write_manifest(self.manifest("categorize", started, metrics=histogram,
                                              outputs={str(out): get_file_hash(out)}),
                                out.with_suffix(".manifest.json"))
        return histogram

    def ablation(self, data: Union[str, Path], encoders: Sequence[EncoderVariant] = DEFAULT_ENCODERS,
                 cells: Sequence[CellKind] = (CellKind.GRU, CellKind.LSTM),
                 poolings: Optional[Sequence[PoolingKind]] = None, seeds: Sequence[int] = (0,),
                 out: Optional[Union[str, Path]] = None, bucket: str = "overall") -> pd.DataFrame:
        """Train every encoder x cell x pooling x seed combination and summarize over seeds.

        Rows hold the median and spread (max - min) of every metric. ``significant``
        compares the median ADE with the plain encoder of the same cell and
        pooling against the noise floor.
        """
        started = time.time()
        scenes = self.load_scenes(data)
        train_scenes, val_scenes = self.split_train_val(scenes)
        poolings = poolings or (self.run_config.model.pooling,)

        runs = []
        for encoder, cell, pooling in product(encoders, cells, poolings):
            config = replace(self.run_config.model, encoder=encoder, cell=cell, pooling=pooling)
            for seed in seeds:
                model, _ = self.train_model(train_scenes, val_scenes, config, seed)
                metrics = _require_bucket(self.evaluate(model, val_scenes), bucket)
                runs.append({"Model": model.name, "Interaction": model.interaction, "encoder": encoder.value,
                             "cell": cell.value, "pooling": pooling.value, "seed": seed,
                             "Params": model.parameter_count, "ADE": metrics.ade, "FDE": metrics.fde,
                             "Col-I": metrics.col_i, "Col-II": metrics.col_ii})
        self.logging_service.info(f"Ablation finished, {len(runs)} runs")
        table = summarize_runs(pd.DataFrame(runs))

        baseline = _require_bucket(self.evaluate(ConstantVelocityPredictor(), val_scenes), bucket)
        table = pd.concat([table, pd.DataFrame([{
            "Model": ConstantVelocityPredictor.name, "Interaction": "-", "Runs": 1, "Params": 0,
            "ADE": baseline.ade, "ADE spread": 0.0, "FDE": baseline.fde, "FDE spread": 0.0,
            "Col-I": baseline.col_i, "Col-I spread": 0.0, "Col-II": baseline.col_ii, "Col-II spread": 0.0,
            "significant": "-"}])], ignore_index=True)
        self.logging_service.debug("\n" + format_table(table))
        if out is not None:
            out = Path(out)
            if not out.parent.exists():
                out.parent.mkdir(parents=True)
            table.to_csv(out, index=False)
            manifest = self.manifest("ablation", started, metrics=table.to_dict(orient="records"),
                                     runs=runs, seeds=list(seeds))
            self.write_manifest(manifest, out.with_suffix(".manifest.json"))
        return table


def summarize_runs(runs: pd.DataFrame) -> pd.DataFrame:
    """Median and spread over seeds per (encoder, cell, pooling), with the significance flag."""
    keys = ["encoder", "cell", "pooling"]
    rows = []
    for (encoder, cell, pooling), group in runs.groupby(keys, sort=False):
        row = {"Model": group["Model"].iloc[0], "Interaction": group["Interaction"].iloc[0],
               "Runs": len(group), "Params": int(group["Params"].iloc[0])}
        for metric in ("ADE", "FDE", "Col-I", "Col-II"):
            row[metric] = float(group[metric].median())
            row[f"{metric} spread"] = float(group[metric].max() - group[metric].min())
        row["_key"] = (encoder, cell, pooling)
        rows.append(row)

    plain = {(r["_key"][1], r["_key"][2]): r["ADE"] for r in rows if r["_key"][0] == EncoderVariant.PLAIN.value}
    for row in rows:
        encoder, cell, pooling = row.pop("_key")
        reference = plain.get((cell, pooling))
        if encoder == EncoderVariant.PLAIN.value or reference is None:
            row["significant"] = "-"
        else:
            row["significant"] = "yes" if abs(row["ADE"] - reference) > NOISE_FLOOR_ADE else "no"
    columns = ["Model", "Interaction", "Runs", "Params", "ADE", "ADE spread", "FDE", "FDE spread",
               "Col-I", "Col-I spread", "Col-II", "Col-II spread", "significant"]
    return pd.DataFrame(rows, columns=columns)


def _require_bucket(report: MetricsReport, bucket: str) -> BucketMetrics:
    metrics = report.bucket(bucket)
    if metrics is None:
        raise UsageError(f"No validation scene falls in bucket '{bucket}'")
    return metrics
