from urnn.model import ForecastModel, ModelConfig, LossMode
from urnn.training import TrainSchedule, train
from urnn.serialization import load, save
from urnn.baselines import ConstantVelocityPredictor, KalmanPredictor, KalmanNoise
from urnn.metrics import evaluate, MetricsReport
from urnn.config import RunConfig, resolve_run_config
from urnn.experiment import ExperimentRunner
