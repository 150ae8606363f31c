"""DAG structure learning with neural-network likelihoods.

Learns a directed acyclic graph over d observed variables from i.i.d.
samples: simulate data on a random DAG, train per-node masked MLPs under a
differentiable acyclicity constraint with an augmented Lagrangian, threshold
and prune the result, and score it with SHD/SID-style metrics.
"""

from .graph import Dag, Pdag, dag_to_cpdag, is_acyclic, sample_er, sample_sf
from .metrics import MetricsReport, evaluate, shd, shd_c, sid
from .mlp import MlpStack
from .optim import AugLagState, TrainConfig, TrainResult, train
from .simul import Dataset, generate, split_and_standardize

__version__ = "0.1.0"

__all__ = [
    "Dag",
    "Pdag",
    "Dataset",
    "MlpStack",
    "TrainConfig",
    "TrainResult",
    "AugLagState",
    "MetricsReport",
    "is_acyclic",
    "sample_er",
    "sample_sf",
    "dag_to_cpdag",
    "generate",
    "split_and_standardize",
    "train",
    "evaluate",
    "shd",
    "shd_c",
    "sid",
    "__version__",
]
