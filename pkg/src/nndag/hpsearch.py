"""Random hyperparameter search scored on held-out likelihood.

Each trial trains, thresholds, prunes, then retrains with the recovered
masks fixed and scores the refit model on the held-out set without any
regularizing terms; the best-scoring trial wins.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import Dag
from .optim import TrainConfig, train
from .post import jacobian_threshold, prune, retrain_heldout_score
from .simul import Dataset

__all__ = ["SearchSpace", "sample_config", "run_search", "TrialRecord",
           "SearchResult", "NN_SEARCH_SPACE", "LINEAR_SEARCH_SPACE"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    """Sampling ranges for the searched hyperparameters.

    log-uniform entries are (lo, hi) exponents of 10; choice entries are
    finite sets drawn uniformly.
    """

    log_lr_first: tuple[float, float] = (-3.0, -2.0)
    log_lr_other: tuple[float, float] = (-4.0, -3.0)
    edge_threshold_choices: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    log_prune_cutoff_choices: tuple[int, ...] = (-5, -4, -3, -2, -1)
    hidden_units_choices: tuple[int, ...] = (4, 8, 16, 32)
    hidden_layers_choices: tuple[int, ...] = (1, 2, 3)
    h_tol_choices: tuple[float, ...] = (1e-6, 1e-8, 1e-10)
    pns_threshold_choices: tuple[float, ...] = (0.5, 0.75, 1.0, 2.0)

    def sample(self, rng: np.random.Generator, base: TrainConfig) -> TrainConfig:
        return replace(
            base,
            lr_first=10.0 ** rng.uniform(*self.log_lr_first),
            lr_other=10.0 ** rng.uniform(*self.log_lr_other),
            edge_threshold=float(rng.choice(self.edge_threshold_choices)),
            prune_cutoff=10.0 ** int(rng.choice(self.log_prune_cutoff_choices)),
            hidden_units=int(rng.choice(self.hidden_units_choices)),
            hidden_layers=int(rng.choice(self.hidden_layers_choices)),
            h_tol=float(rng.choice(self.h_tol_choices)),
            pns_threshold=float(rng.choice(self.pns_threshold_choices)),
        )


NN_SEARCH_SPACE = SearchSpace()

# linear baseline row: only the L1 coefficient, final threshold and tolerance
LINEAR_L1_CHOICES = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5)
LINEAR_THRESHOLD_CHOICES = (0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0)
LINEAR_SEARCH_SPACE = "linear"


def sample_config(space: SearchSpace, rng: np.random.Generator,
                  base: TrainConfig | None = None) -> TrainConfig:
    """One random draw from the search space; deterministic under seed."""
    return space.sample(rng, base if base is not None else TrainConfig())


@dataclass
class TrialRecord:
    trial: int
    config: TrainConfig
    score: float
    status: str
    wall_time: float
    dag: Dag | None = None

    def to_row(self) -> dict:
        return {
            "trial": self.trial,
            "config": json.dumps(self.config.to_dict()),
            "score": self.score,
            "status": self.status,
            "wall_time": self.wall_time,
        }


@dataclass
class SearchResult:
    best: TrialRecord
    trials: list[TrialRecord] = field(default_factory=list)


def _run_trial(dataset: Dataset, config: TrainConfig) -> tuple[Dag, float]:
    result = train(dataset, config)
    dag = jacobian_threshold(result.stack, dataset)
    dag, _ = prune(dag, dataset, cutoff=config.prune_cutoff)
    score = retrain_heldout_score(dag, dataset, config)
    return dag, score


def run_search(dataset: Dataset, space: SearchSpace, trials: int,
               base_config: TrainConfig | None = None, base_seed: int = 0,
               trial_runner=None) -> SearchResult:
    """Random search over ``trials`` draws; argmax of held-out score wins.

    Ties break toward the earlier trial.  Individual trial failures are
    recorded and skipped; per-trial seeds are base_seed + trial index.
    ``trial_runner`` may replace the default train/prune/score pipeline
    (used in tests).
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    base = base_config if base_config is not None else TrainConfig()
    runner = trial_runner if trial_runner is not None else _run_trial
    records: list[TrialRecord] = []
    for k in range(trials):
        rng = np.random.default_rng(base_seed + k)
        config = replace(sample_config(space, rng, base), seed=base_seed + k)
        t0 = time.monotonic()
        try:
            dag, score = runner(dataset, config)
            status = "ok"
        except Exception as exc:  # noqa: BLE001 - search must survive trials
            log.warning("trial %d failed: %s", k, exc)
            dag, score, status = None, -np.inf, f"failed: {exc}"
        records.append(TrialRecord(trial=k, config=config, score=score,
                                   status=status,
                                   wall_time=time.monotonic() - t0, dag=dag))
    ok = [r for r in records if r.status == "ok"]
    if not ok:
        raise RuntimeError("all hyperparameter search trials failed")
    best = max(ok, key=lambda r: (r.score, -r.trial))
    return SearchResult(best=best, trials=records)
