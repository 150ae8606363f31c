"""Synthetic data generation on a ground-truth DAG.

Five generation schemes (gauss-anm, lin, add-func, pnl-gp, pnl-mult) plus
train/held-out splitting with per-column standardization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Dag, topological_order

__all__ = [
    "Dataset",
    "GenerationError",
    "SCHEMES",
    "generate",
    "gen_gauss_anm",
    "gen_lin",
    "gen_add_func",
    "gen_pnl_gp",
    "gen_pnl_mult",
    "split_and_standardize",
]

JITTER_START = 1e-8
JITTER_MAX = 1e-3


class GenerationError(RuntimeError):
    pass


@dataclass
class Dataset:
    """n x d sample matrix with a fixed train/held-out split.

    Standardization statistics, when present, were computed on the train
    rows only and applied to every row.
    """

    x: np.ndarray
    train_idx: np.ndarray
    heldout_idx: np.ndarray
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def x_train(self) -> np.ndarray:
        return self.x[self.train_idx]

    @property
    def x_heldout(self) -> np.ndarray:
        return self.x[self.heldout_idx]


def _rbf_kernel(p: np.ndarray) -> np.ndarray:
    # k(u, v) = exp(-||u - v||^2 / 2), the unit-bandwidth convention used
    # by every GP draw in this package.
    sq = np.sum(p**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (p @ p.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-0.5 * d2)


def gp_draw(parents: np.ndarray, rng: np.random.Generator, node: int = -1) -> np.ndarray:
    """One joint draw of a zero-mean unit-bandwidth RBF GP at the given rows.

    Exact finite-dimensional marginal via Cholesky with escalating diagonal
    jitter (1e-8 up to 1e-3).
    """
    n = parents.shape[0]
    k = _rbf_kernel(parents)
    jitter = JITTER_START
    while True:
        try:
            chol = np.linalg.cholesky(k + jitter * np.eye(n))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX:
                raise GenerationError(
                    f"GP kernel Cholesky failed for node {node} even at jitter {JITTER_MAX}"
                )
    return chol @ rng.standard_normal(n)


def _ancestral(g: Dag):
    order = topological_order(g.adj)
    assert order is not None
    return order


def gen_gauss_anm(g: Dag, n: int, rng: np.random.Generator, noise_factor: float = 1.0) -> np.ndarray:
    """X_j = f_j(parents) + N(0, sigma_j^2), f_j a joint GP draw.

    sigma_j^2 ~ U[0.4, 0.8]; roots are N(0, v_j) with v_j ~ U[1, 2].
    Returns the raw matrix; drawn hyperparameters land in ``generate``'s meta.
    """
    x, meta = _gen_gauss_anm(g, n, rng, noise_factor)
    return x


def _gen_gauss_anm(g, n, rng, noise_factor=1.0):
    x = np.zeros((n, g.d))
    meta = {"sigma2": {}, "root_var": {}, "f": {}, "noise": {}}
    for j in _ancestral(g):
        pa = g.parents(j)
        if len(pa) == 0:
            v = rng.uniform(1.0, 2.0)
            meta["root_var"][j] = v
            x[:, j] = np.sqrt(v) * rng.standard_normal(n)
        else:
            f = gp_draw(x[:, pa], rng, node=j)
            sigma2 = rng.uniform(0.4, 0.8)
            noise = np.sqrt(sigma2) * rng.standard_normal(n)
            meta["sigma2"][j] = sigma2
            meta["f"][j] = f
            meta["noise"][j] = noise
            x[:, j] = f + noise_factor * noise
    return x, meta


def _gen_lin(g, n, rng, noise_factor=1.0):
    x = np.zeros((n, g.d))
    meta = {"sigma2": {}, "weights": {}, "noise": {}}
    for j in _ancestral(g):
        pa = g.parents(j)
        if len(pa) == 0:
            x[:, j] = rng.uniform(-1.0, 1.0, size=n)
        else:
            w = rng.uniform(0.0, 1.0, size=len(pa))
            sigma2 = rng.uniform(1.0, 2.0)
            noise = 0.2 * np.sqrt(sigma2) * rng.standard_normal(n)
            meta["weights"][j] = w
            meta["sigma2"][j] = sigma2
            meta["noise"][j] = noise
            x[:, j] = x[:, pa] @ w + noise_factor * noise
    return x, meta


def gen_lin(g: Dag, n: int, rng: np.random.Generator, noise_factor: float = 1.0) -> np.ndarray:
    """X_j = w_j . parents + 0.2 * N(0, sigma_j^2); roots U[-1, 1]."""
    return _gen_lin(g, n, rng, noise_factor)[0]


def _gen_add_func(g, n, rng, noise_factor=1.0):
    x = np.zeros((n, g.d))
    meta = {"sigma2": {}, "f": {}, "noise": {}}
    for j in _ancestral(g):
        pa = g.parents(j)
        if len(pa) == 0:
            x[:, j] = rng.uniform(-1.0, 1.0, size=n)
        else:
            total = np.zeros(n)
            comps = []
            for i in pa:
                fi = gp_draw(x[:, [i]], rng, node=j)
                comps.append(fi)
                total += fi
            sigma2 = rng.uniform(1.0, 2.0)
            noise = 0.2 * np.sqrt(sigma2) * rng.standard_normal(n)
            meta["sigma2"][j] = sigma2
            meta["f"][j] = total
            meta["noise"][j] = noise
            x[:, j] = total + noise_factor * noise
    return x, meta


def gen_add_func(g: Dag, n: int, rng: np.random.Generator, noise_factor: float = 1.0) -> np.ndarray:
    """X_j = sum_i f_{j,i}(X_i) + 0.2 * N(0, sigma_j^2), per-parent scalar GPs."""
    return _gen_add_func(g, n, rng, noise_factor)[0]


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _gen_pnl_gp(g, n, rng, noise_factor=1.0):
    x = np.zeros((n, g.d))
    meta = {"laplace_scale": {}, "f": {}, "noise": {}}
    for j in _ancestral(g):
        pa = g.parents(j)
        if len(pa) == 0:
            x[:, j] = rng.uniform(-1.0, 1.0, size=n)
        else:
            f = gp_draw(x[:, pa], rng, node=j)
            scale = rng.uniform(0.0, 1.0)
            noise = rng.laplace(0.0, scale, size=n) if scale > 0 else np.zeros(n)
            meta["laplace_scale"][j] = scale
            meta["f"][j] = f
            meta["noise"][j] = noise
            x[:, j] = _sigmoid(f + noise_factor * noise)
    return x, meta


def gen_pnl_gp(g: Dag, n: int, rng: np.random.Generator, noise_factor: float = 1.0) -> np.ndarray:
    """X_j = sigmoid(f_j(parents) + Laplace(0, l_j)), l_j ~ U[0, 1]."""
    return _gen_pnl_gp(g, n, rng, noise_factor)[0]


def _gen_pnl_mult(g, n, rng, noise_factor=1.0):
    x = np.zeros((n, g.d))
    meta = {"sigma2": {}, "noise": {}, "clamp_count": 0}
    for j in _ancestral(g):
        pa = g.parents(j)
        if len(pa) == 0:
            x[:, j] = rng.uniform(0.0, 2.0, size=n)
        else:
            s = x[:, pa].sum(axis=1)
            clamped = s < 1e-6
            meta["clamp_count"] += int(clamped.sum())
            s = np.maximum(s, 1e-6)
            sigma2 = rng.uniform(0.0, 1.0)
            noise = np.abs(np.sqrt(sigma2) * rng.standard_normal(n))
            meta["sigma2"][j] = sigma2
            meta["noise"][j] = noise
            x[:, j] = np.exp(np.log(s) + noise_factor * noise)
    return x, meta


def gen_pnl_mult(g: Dag, n: int, rng: np.random.Generator, noise_factor: float = 1.0) -> np.ndarray:
    """X_j = exp(log(sum of parents) + |N(0, sigma_j^2)|); roots U[0, 2].

    Nonpositive parent sums are clamped at 1e-6 before the log; clamp counts
    are reported in the generation metadata.
    """
    return _gen_pnl_mult(g, n, rng, noise_factor)[0]


SCHEMES = {
    "gauss-anm": _gen_gauss_anm,
    "lin": _gen_lin,
    "add-func": _gen_add_func,
    "pnl-gp": _gen_pnl_gp,
    "pnl-mult": _gen_pnl_mult,
}


def generate(scheme: str, g: Dag, n: int, rng: np.random.Generator,
             noise_factor: float = 1.0) -> tuple[np.ndarray, dict]:
    """Dispatch to a generation scheme; returns (x, metadata)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    if n < 1:
        raise ValueError("need n >= 1")
    x, meta = SCHEMES[scheme](g, n, rng, noise_factor)
    meta["scheme"] = scheme
    return x, meta


def split_and_standardize(x: np.ndarray, train_fraction: float = 0.8,
                          standardize: bool = True,
                          rng: np.random.Generator | None = None,
                          meta: dict | None = None) -> Dataset:
    """Seeded shuffle-split, then optional per-column train-statistics scaling."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    rng = rng if rng is not None else np.random.default_rng(0)
    perm = rng.permutation(n)
    n_train = int(round(n * train_fraction))
    train_idx = np.sort(perm[:n_train])
    heldout_idx = np.sort(perm[n_train:])
    mean = std = None
    if standardize:
        mean = x[train_idx].mean(axis=0)
        std = x[train_idx].std(axis=0)
        zero = np.flatnonzero(std <= 1e-12 * np.maximum(1.0, np.abs(mean)))
        if zero.size:
            raise ValueError(f"cannot standardize constant column(s) {zero.tolist()}")
        x = (x - mean) / std
    return Dataset(x=x, train_idx=train_idx, heldout_idx=heldout_idx,
                   mean=mean, std=std, meta=dict(meta or {}))
