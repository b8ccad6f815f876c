"""Mixed-geometry tensor factorization for knowledge-graph link prediction.

A frozen Euclidean Tucker scorer is combined with a hyperbolic tetrahedron
pooling scorer on the Lorentz hyperboloid.
"""

from .config import TrainConfig, default_train_config
from .data import TripleStore, Vocabulary, augment_inverse, build_filter_index, load_dataset
from .errors import MigtfError
from .evaluation import MetricsReport, evaluate_split, filtered_rank
from .models import MigTfModel, TptfModel, bce_loss
from .training import fit, gradient_check, train
from .tucker import TuckerModel

__version__ = "0.1.0"

__all__ = [
    "MetricsReport", "MigTfModel", "MigtfError", "TptfModel", "TrainConfig", "TripleStore",
    "TuckerModel", "Vocabulary", "augment_inverse", "bce_loss", "build_filter_index",
    "default_train_config", "evaluate_split", "filtered_rank", "fit", "gradient_check",
    "load_dataset", "train",
]
