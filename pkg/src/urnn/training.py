"""Training loop: seeded shuffling, rotation augmentation, Adam, plateau decay and early stopping."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from urnn.autodiff import Adam, clip_grad_norm, gradients, no_grad
from urnn.exceptions import NumericalError
from urnn.interfaces import LoggingServiceInterface
from urnn.logs import get_default_logging_service
from urnn.model import ForecastModel
from urnn.scenes.data import Scene, rotate_scene


@dataclass(frozen=True)
class TrainSchedule:
    max_epochs: int = 100
    lr: float = 1e-3
    plateau_patience: int = 5
    decay_factor: float = 0.5
    early_stop_patience: int = 15
    batch_size: int = 8
    augment: bool = True
    seed: int = 0
    clip_norm: float = 10.0
    jobs: int = 1

    def __post_init__(self):
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError(f"Patience values must be >= 1, got {self.plateau_patience = } "
                             f"{self.early_stop_patience = }")
        if not 0 < self.decay_factor < 1:
            raise ValueError(f"decay_factor must be in (0, 1), got {self.decay_factor}")
        if self.lr <= 0 or self.batch_size < 1 or self.jobs < 1 or self.clip_norm <= 0:
            raise ValueError(f"Invalid schedule {self.lr = } {self.batch_size = } {self.jobs = } {self.clip_norm = }")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    improved: bool


@dataclass
class History:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_loss: float = float("inf")
    stopped_early: bool = False

    def __len__(self):
        return len(self.epochs)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(e) for e in self.epochs],
                            columns=["epoch", "train_loss", "val_loss", "lr", "improved"])

    def to_dict(self) -> dict:
        return {"epochs": [asdict(e) for e in self.epochs], "best_epoch": self.best_epoch,
                "best_val_loss": self.best_val_loss if self.epochs else None,
                "stopped_early": self.stopped_early}


def _scene_key(scene: Scene) -> tuple:
    return scene.scene_id, scene.primary_id, scene.start, scene.end


def scene_gradients(model: ForecastModel, scene: Scene) -> Tuple[float, List[np.ndarray]]:
    """Loss of ``scene`` and its gradient for every parameter, without touching ``.grad``."""
    params = list(model.parameters().values())
    value = model.scene_loss(scene)
    if not np.isfinite(value.item()):
        raise NumericalError(f"Non-finite loss {value.item()} on scene {scene.scene_id}")
    return value.item(), gradients(value, params)


def validation_loss(model: ForecastModel, scenes: Sequence[Scene]) -> float:
    with no_grad():
        losses = [model.scene_loss(scene).item() for scene in scenes]
    value = float(np.mean(losses))
    if not np.isfinite(value):
        raise NumericalError(f"Non-finite validation loss {value}")
    return value


def augment(scene: Scene, theta: float) -> Scene:
    """Rotate the whole scene about its centroid."""
    return rotate_scene(scene, theta, scene.centroid())


def train(model: ForecastModel, train_scenes: Sequence[Scene], val_scenes: Sequence[Scene],
          schedule: Optional[TrainSchedule] = None,
          logging_service: Optional[LoggingServiceInterface] = None) -> Tuple[ForecastModel, History]:
    """Fit ``model`` in place and return it with its history.

    The parameters of the best validation epoch are restored at the end.
    Per-scene gradients are summed in the shuffled scene order whatever the
    number of jobs, so runs with the same seed are bit identical.
    """
    schedule = schedule or TrainSchedule()
    logging_service = logging_service or get_default_logging_service()
    if not train_scenes or not val_scenes:
        raise ValueError(f"Training needs non-empty splits, got {len(train_scenes)} train "
                         f"and {len(val_scenes)} validation scenes")
    overlap = {_scene_key(s) for s in train_scenes} & {_scene_key(s) for s in val_scenes}
    if overlap:
        raise ValueError(f"Train and validation splits share {len(overlap)} scenes")

    history = History()
    if schedule.max_epochs == 0:
        return model, history

    params = list(model.parameters().values())
    optimizer = Adam(params, lr=schedule.lr)
    best_state = model.state_dict()
    since_best = since_decay = 0
    pool = ThreadPoolExecutor(max_workers=schedule.jobs) if schedule.jobs > 1 else None
    try:
        for epoch in range(1, schedule.max_epochs + 1):
            rng = np.random.default_rng([schedule.seed, epoch])
            order = rng.permutation(len(train_scenes))
            angles = rng.uniform(0.0, 2 * np.pi, size=len(order)) if schedule.augment else None
            scenes = [train_scenes[i] if angles is None else augment(train_scenes[i], angles[k])
                      for k, i in enumerate(order)]

            losses = []
            for lo in range(0, len(scenes), schedule.batch_size):
                batch = scenes[lo:lo + schedule.batch_size]
                if pool is not None:
                    results = list(pool.map(lambda s: scene_gradients(model, s), batch))
                else:
                    results = [scene_gradients(model, s) for s in batch]
                totals = [np.zeros_like(p.data) for p in params]
                for value, grads in results:
                    losses.append(value)
                    for total, grad in zip(totals, grads):
                        total += grad
                for param, total in zip(params, totals):
                    param.grad = total / len(batch)
                factor = clip_grad_norm(params, schedule.clip_norm)
                if factor < 1.0:
                    logging_service.debug(f"{epoch = } clipped gradients, {factor = :.4f}")
                optimizer.step()
                optimizer.zero_grad()

            train_loss = float(np.mean(losses))
            val_loss = validation_loss(model, val_scenes)
            improved = val_loss < history.best_val_loss
            history.epochs.append(EpochRecord(epoch, train_loss, val_loss, optimizer.lr, improved))
            if improved:
                history.best_epoch, history.best_val_loss = epoch, val_loss
                best_state = model.state_dict()
                since_best = since_decay = 0
            else:
                since_best += 1
                since_decay += 1
                if since_decay >= schedule.plateau_patience:
                    optimizer.lr = optimizer.lr * schedule.decay_factor
                    since_decay = 0
                    logging_service.info(f"{epoch = } plateau, lr -> {optimizer.lr:.2e}")
            logging_service.info(
                f"epoch {epoch}/{schedule.max_epochs} train {train_loss:.5f} val {val_loss:.5f}"
                f"{' *' if improved else ''}")
            if since_best >= schedule.early_stop_patience:
                history.stopped_early = True
                logging_service.info(f"Early stop at {epoch = }, best epoch {history.best_epoch}")
                break
    finally:
        if pool is not None:
            pool.shutdown()

    model.load_state_dict(best_state)
    return model, history
