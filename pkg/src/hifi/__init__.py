"""HIFI anomaly detector for multivariate time series."""
from .dataio import (DataFormatError, DataValidationError, Normalizer, RawSeries, WindowBatch,
                     apply_normalizer, fit_normalizer, load_labels, load_series, make_windows,
                     split_train_val)
from .evaluation import (DetectionResult, ScoreSeries, best_f1_sweep, metrics_at_threshold,
                         point_adjust, score_dataset)
from .model import VARIANTS, ConfigError, ForwardTrace, HifiConfig, HifiModel, anomaly_score, loss
from .checkpoint import CheckpointError, load_checkpoint, model_from_checkpoint, save_checkpoint
from .train import TrainConfig, TrainLog, adam_step, evaluate_loss, train

__version__ = "0.1.0"
