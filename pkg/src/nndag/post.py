"""Post-optimization processing.

Expected-Jacobian thresholding to a DAG, preliminary neighborhood selection
(PNS) with extremely randomized trees, additive-spline pruning, and the
retrain-then-score protocol used for model selection.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import replace

import numpy as np
from scipy import stats
from scipy.interpolate import BSpline
from sklearn.ensemble import ExtraTreesRegressor

from . import mlp
from .graph import Dag, is_acyclic
from .mlp import MlpStack
from .simul import Dataset

__all__ = ["jacobian_threshold", "jacobian_scores", "pns", "prune",
           "retrain_heldout_score", "threshold_to_dag"]

log = logging.getLogger(__name__)

PNS_TREES = 500
SPLINE_INTERIOR_KNOTS = 10
SPLINE_DEGREE = 3


def jacobian_scores(stack: MlpStack, dataset: Dataset) -> np.ndarray:
    """Expected absolute Jacobian of the conditional likelihoods.

    Entry (i, j) is the mean over training rows of |d p_j / d x_i|, a
    nonnegative edge-strength score for i -> j.
    """
    return mlp.density_jacobian(stack, dataset.x_train)


def threshold_to_dag(support: np.ndarray, scores: np.ndarray) -> Dag:
    """Delete support edges in ascending score order until acyclic.

    Ties break lexicographically on (i, j) for determinism.
    """
    adj = np.asarray(support, dtype=np.int8).copy()
    np.fill_diagonal(adj, 0)
    if is_acyclic(adj):
        return Dag(adj)
    edges = sorted(((scores[i, j], i, j) for i, j in zip(*np.nonzero(adj))))
    for _, i, j in edges:
        adj[i, j] = 0
        if is_acyclic(adj):
            break
    return Dag(adj)


def jacobian_threshold(stack: MlpStack, dataset: Dataset) -> Dag:
    """DAG obtained from the trained support by ascending-Jacobian deletion."""
    return threshold_to_dag(stack.support(), jacobian_scores(stack, dataset))


def pns(dataset: Dataset, threshold_factor: float = 0.75,
        n_trees: int = PNS_TREES, seed: int = 0) -> np.ndarray:
    """Candidate parent sets from extremely-randomized-trees importances.

    Returns a boolean (d, d) matrix kept[i, j]: i stays a candidate parent
    of j iff its importance exceeds threshold_factor * mean(importances).
    """
    if threshold_factor <= 0:
        raise ValueError("threshold_factor must be positive")
    x = dataset.x_train
    d = x.shape[1]
    kept = np.zeros((d, d), dtype=bool)
    for j in range(d):
        others = [i for i in range(d) if i != j]
        y = x[:, j]
        if np.var(y) == 0.0:
            warnings.warn(f"target column {j} is constant; keeping all candidates")
            kept[others, j] = True
            continue
        reg = ExtraTreesRegressor(n_estimators=n_trees, random_state=seed + j,
                                  n_jobs=-1)
        reg.fit(x[:, others], y)
        imp = reg.feature_importances_
        cutoff = threshold_factor * imp.mean()
        for k, i in enumerate(others):
            kept[i, j] = imp[k] > cutoff
    return kept


def _spline_basis(col: np.ndarray) -> np.ndarray:
    """Cubic B-spline design block with interior knots at quantiles."""
    lo, hi = col.min(), col.max()
    if hi <= lo:
        return col[:, None].copy()
    qs = np.linspace(0, 1, SPLINE_INTERIOR_KNOTS + 2)[1:-1]
    interior = np.unique(np.quantile(col, qs))
    t = np.r_[[lo] * (SPLINE_DEGREE + 1), interior, [hi] * (SPLINE_DEGREE + 1)]
    clipped = np.clip(col, lo, hi)
    design = BSpline.design_matrix(clipped, t, SPLINE_DEGREE).toarray()
    return design


def _lstsq_rss(design: np.ndarray, y: np.ndarray) -> tuple[float, int]:
    """Residual sum of squares and effective parameter count.

    Rank-deficient designs get a tiny ridge and a warning.
    """
    n, p = design.shape
    gram = design.T @ design
    rank = np.linalg.matrix_rank(design)
    if rank < p:
        warnings.warn("rank-deficient pruning design; ridge-stabilized fit")
        gram = gram + 1e-8 * np.eye(p)
    coef = np.linalg.solve(gram, design.T @ y)
    resid = y - design @ coef
    return float(resid @ resid), int(rank)


def prune(g: Dag, dataset: Dataset, cutoff: float = 1e-3) -> tuple[Dag, dict]:
    """Remove parents whose additive-spline contribution is insignificant.

    For each node an additive cubic B-spline regression on its parents is
    fitted; each parent is scored by an F-test of the full model against
    the model with that parent's basis block removed, and dropped when the
    p-value exceeds ``cutoff``.  Returns the pruned DAG and a report.
    """
    x = dataset.x_train
    n = x.shape[0]
    adj = g.adj.copy()
    report: dict = {"cutoff": cutoff, "nodes": {}}
    for j in range(g.d):
        parents = list(g.parents(j))
        if not parents:
            continue
        blocks = [_spline_basis(x[:, i]) for i in parents]
        widths = [b.shape[1] for b in blocks]
        full = np.hstack([np.ones((n, 1))] + blocks)
        rss_full, rank_full = _lstsq_rss(full, x[:, j])
        df_resid = max(n - rank_full, 1)
        node_report = []
        for k, i in enumerate(parents):
            reduced = np.hstack([np.ones((n, 1))] +
                                [b for t, b in enumerate(blocks) if t != k])
            rss_red, _ = _lstsq_rss(reduced, x[:, j])
            q = widths[k]
            num = max(rss_red - rss_full, 0.0) / q
            den = rss_full / df_resid
            if den == 0.0:
                pval = 0.0
            else:
                pval = float(stats.f.sf(num / den, q, df_resid))
            removed = pval > cutoff
            if removed:
                adj[i, j] = 0
            node_report.append({"parent": int(i), "p_value": pval,
                                "removed": bool(removed)})
        report["nodes"][int(j)] = node_report
    return Dag(adj), report


def retrain_heldout_score(g: Dag, dataset: Dataset, config) -> float:
    """Held-out log-likelihood of a model refit from scratch with masks
    frozen to ``g`` (no acyclicity constraint, no regularizers)."""
    from .optim import train  # circular at module level

    ml_config = replace(config, constrained=False, pns=False)
    init_mask = g.adj.T.astype(float)  # edge i -> j unmasks input i of net j
    result = train(dataset, ml_config, init_mask=init_mask)
    return result.heldout_objective
