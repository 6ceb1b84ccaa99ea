"""Run configuration: dataclass defaults < config file < command-line flags.

Config files are INI (``[urnn]`` section) or ``.env`` style and are read with
python-decouple, so environment variables of the same name take precedence
over the file. The default file comes from ``URNN_CONFIG``.
"""
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from decouple import Config, Csv, RepositoryEnv, RepositoryIni, config as env_config

from urnn.baselines import KalmanNoise
from urnn.exceptions import UsageError
from urnn.model import ModelConfig
from urnn.nn import GridSpec
from urnn.scenes.categorize import CategoryThresholds
from urnn.training import TrainSchedule

PRECISIONS = ("float64", "float32")


class UrnnRepositoryIni(RepositoryIni):
    SECTION = "urnn"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    thresholds: CategoryThresholds = field(default_factory=CategoryThresholds)
    kalman: KalmanNoise = field(default_factory=KalmanNoise)
    seed: int = 0
    jobs: int = 1
    deterministic: bool = False
    precision: str = "float64"
    collision_threshold: float = 0.1
    subframe_steps: int = 4
    val_ratio: float = 0.2

    def __post_init__(self):
        if self.precision not in PRECISIONS:
            raise UsageError(f"Unknown precision '{self.precision}', expected one of {PRECISIONS}")
        if self.deterministic:
            self.jobs = 1
        if self.jobs < 1:
            raise UsageError(f"jobs must be >= 1, got {self.jobs}")
        if not 0 < self.val_ratio < 1:
            raise UsageError(f"val_ratio must be in (0, 1), got {self.val_ratio}")
        # one seed and one jobs setting for the whole run
        self.schedule = replace(self.schedule, seed=self.seed, jobs=self.jobs)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "schedule": self.schedule.to_dict(),
            "thresholds": self.thresholds.to_dict(),
            "kalman": asdict(self.kalman),
            "seed": self.seed,
            "jobs": self.jobs,
            "deterministic": self.deterministic,
            "precision": self.precision,
            "collision_threshold": self.collision_threshold,
            "subframe_steps": self.subframe_steps,
            "val_ratio": self.val_ratio,
        }


def _cast_for(default: Any) -> Callable:
    if isinstance(default, bool):
        return bool
    if isinstance(default, tuple):
        return Csv(cast=float, post_process=tuple)
    if isinstance(default, (int, float, str)):
        return type(default)
    return str


# flat key -> (section, field name, default)
def _known_keys() -> Dict[str, Tuple[str, str, Any]]:
    keys: Dict[str, Tuple[str, str, Any]] = {}
    sections = [("model", ModelConfig()), ("grid", GridSpec()), ("schedule", TrainSchedule()),
                ("thresholds", CategoryThresholds()), ("kalman", KalmanNoise())]
    for section, instance in sections:
        for f in fields(instance):
            if f.name in ("grid", "channels") or (section == "schedule" and f.name in ("seed", "jobs")):
                continue
            default = getattr(instance, f.name)
            keys[f.name] = (section, f.name, default.value if hasattr(default, "value") else default)
    for f in fields(RunConfig):
        if f.name not in ("model", "schedule", "thresholds", "kalman"):
            keys[f.name] = ("run", f.name, f.default)
    return keys


KNOWN_KEYS = _known_keys()


def read_config_file(path: Optional[str] = None) -> Dict[str, Any]:
    """Values found in the config file (or ``URNN_CONFIG``), cast to their field types."""
    path = path or env_config("URNN_CONFIG", default="")
    if not path:
        return {}
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"Config file {path} not found")
    repository = UrnnRepositoryIni(str(path)) if path.suffix in (".ini", ".cfg") else RepositoryEnv(str(path))
    source = Config(repository)
    values = {}
    for key, (_, _, default) in KNOWN_KEYS.items():
        if key in os.environ or key in repository:
            values[key] = source(key, cast=_cast_for(default))
    return values


def build_run_config(values: Dict[str, Any]) -> RunConfig:
    unknown = set(values) - set(KNOWN_KEYS)
    if unknown:
        raise UsageError(f"Unknown configuration keys {sorted(unknown)}")
    groups: Dict[str, Dict[str, Any]] = {"model": {}, "grid": {}, "schedule": {}, "thresholds": {},
                                         "kalman": {}, "run": {}}
    for key, value in values.items():
        section, name, _ = KNOWN_KEYS[key]
        groups[section][name] = value
    try:
        model = ModelConfig(grid=GridSpec(**groups["grid"]), **groups["model"])
        return RunConfig(model=model, schedule=TrainSchedule(**groups["schedule"]),
                         thresholds=CategoryThresholds(**groups["thresholds"]),
                         kalman=KalmanNoise(**groups["kalman"]), **groups["run"])
    except (TypeError, ValueError) as e:
        if isinstance(e, UsageError):
            raise
        raise UsageError(f"Invalid configuration: {e}")


def resolve_run_config(config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults, then the config file, then ``overrides`` (``None`` values are ignored)."""
    values = read_config_file(config_path)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_run_config(values)
