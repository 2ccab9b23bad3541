"""Hyperparameter auto-tuning for RBF SVMs, gradient boosting and AdaBoost."""

__version__ = "0.1.0"

from .dataset import Dataset, DataError, encode, load_csv, make_synthetic  # noqa: E402
from .evaluation import CvResult, EvalScheme, evaluate  # noqa: E402
from .optimizers import OptConfig, SearchSpace, genetic_algorithm, grid_search, hooke_jeeves  # noqa: E402
from .tuner import SPACES, TuneRequest, TuneResult, benchmark, cv_verify, tune  # noqa: E402

__all__ = [
    "CvResult", "DataError", "Dataset", "EvalScheme", "OptConfig", "SPACES", "SearchSpace",
    "TuneRequest", "TuneResult", "benchmark", "cv_verify", "encode", "evaluate",
    "genetic_algorithm", "grid_search", "hooke_jeeves", "load_csv", "make_synthetic", "tune",
]
