"""Augmented Lagrangian training loop with an RMSprop inner solver.

Each subproblem maximizes the minibatch log-likelihood minus
lam * h - (mu / 2) * h^2, early-stopped on a held-out set; the coefficients
follow lam <- lam + mu * h*, mu <- eta * mu when h* fails to shrink by gamma.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import mlp
from .constraint import h_and_grad, h_value, weighted_adjacency
from .mlp import GradBundle, MlpStack
from .simul import Dataset

__all__ = [
    "TrainConfig",
    "AugLagState",
    "RmspropState",
    "rmsprop_step",
    "subproblem_objective",
    "maybe_threshold",
    "train",
    "TrainResult",
]

log = logging.getLogger(__name__)

ETA = 10.0
GAMMA = 0.9
RMS_RHO = 0.9
RMS_DELTA = 1e-8


@dataclass
class TrainConfig:
    lr_first: float = 1e-2
    lr_other: float = 1e-4
    batch_size: int = 64
    hidden_layers: int = 2
    hidden_units: int = 10
    head: str = mlp.HEAD_MEAN
    edge_threshold: float = 1e-4  # online mask threshold on A entries
    eval_every: int = 1000
    patience: int = 2
    h_tol: float = 1e-8
    max_iters: int = 500_000
    train_fraction: float = 0.8
    standardize: bool = True
    seed: int = 0
    constrained: bool = True  # False: pure maximum-likelihood fit
    pns: bool | None = None  # None: auto (d >= 50)
    pns_threshold: float = 0.75
    prune_cutoff: float = 1e-3
    lambda0: float = 0.0
    mu0: float = 1e-3
    max_subproblems: int = 100

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AugLagState:
    lam: float = 0.0
    mu: float = 1e-3
    t: int = 0
    iter_total: int = 0
    h_hist: list = field(default_factory=list)

    def update(self, h_star: float) -> None:
        """Coefficient update after subproblem t, given its constraint value."""
        self.lam = self.lam + self.mu * h_star
        if self.h_hist and h_star > GAMMA * self.h_hist[-1]:
            self.mu *= ETA
        self.h_hist.append(h_star)
        self.t += 1


class RmspropState:
    def __init__(self, params: list[np.ndarray]):
        self.acc = [np.zeros_like(p) for p in params]


def rmsprop_step(params: list[np.ndarray], grads: list[np.ndarray],
                 state: RmspropState, lr: float,
                 rho: float = RMS_RHO, delta: float = RMS_DELTA) -> None:
    """In-place RMSprop descent step."""
    for p, g, a in zip(params, grads, state.acc):
        a *= rho
        a += (1.0 - rho) * g * g
        p -= lr * g / (np.sqrt(a) + delta)


def subproblem_objective(stack: MlpStack, batch: np.ndarray, lam: float, mu: float,
                         with_grads: bool = True):
    """Minibatch average log-likelihood minus lam*h - (mu/2)*h^2.

    Returns (objective, GradBundle of the objective or None).  The caller
    maximizes; descent code should negate the gradients.
    """
    if len(batch) == 0:
        raise ValueError("empty minibatch")
    nll_loss, nll_grads = mlp.nll_batch(stack, batch, with_grads=with_grads)
    if lam == 0.0 and mu == 0.0:
        obj = -nll_loss
        if not with_grads:
            return obj, None
        grads = nll_grads.scaled(-1.0)
        grads.value = obj
        return obj, grads
    if with_grads:
        h, h_grads = h_and_grad(stack)
    else:
        h = h_value(stack)
    obj = -nll_loss - lam * h - 0.5 * mu * h * h
    if not np.isfinite(obj):
        raise FloatingPointError("non-finite subproblem objective")
    if not with_grads:
        return obj, None
    grads = nll_grads.scaled(-1.0)
    coeff = lam + mu * h
    for gw, hw in zip(grads.weights, h_grads.weights):
        gw -= coeff * hw
    grads.value = obj
    return obj, grads


def maybe_threshold(stack: MlpStack, eps: float) -> list[tuple[int, int]]:
    """Permanently zero mask entries whose A entry fell strictly below eps.

    Returns the list of newly masked (i, j) positions.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    a = weighted_adjacency(stack)
    active = stack.mask.T > 0  # active[i, j] means input i of net j unmasked
    np.fill_diagonal(active, False)
    new = (a < eps) & active
    zeroed = [(int(i), int(j)) for i, j in zip(*np.nonzero(new))]
    if zeroed:
        stack.apply_mask_updates(new.T.astype(bool))
    return zeroed


@dataclass
class TrainResult:
    stack: MlpStack
    state: AugLagState
    trajectory: list[dict]
    converged: bool
    heldout_objective: float
    adjacency_log: list[tuple[int, np.ndarray]] = field(default_factory=list)


def _heldout_objective(stack: MlpStack, x_heldout: np.ndarray,
                       lam: float, mu: float) -> float:
    obj, _ = subproblem_objective(stack, x_heldout, lam, mu, with_grads=False)
    return obj


def _minibatches(x_train: np.ndarray, batch_size: int, rng: np.random.Generator):
    """Endless epochs of shuffled minibatches, sampled without replacement."""
    n = x_train.shape[0]
    while True:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            if len(idx) == 0:
                continue
            yield x_train[idx]


def train(dataset: Dataset, config: TrainConfig,
          init_mask: np.ndarray | None = None,
          log_adjacency: bool = False) -> TrainResult:
    """Run the full constrained training loop on a split dataset.

    ``init_mask`` (d, d), indexed [net j, input i], pre-restricts candidate
    parents (used by the preliminary neighborhood selection).  With
    ``config.constrained`` False, a single unconstrained maximum-likelihood
    subproblem is run with early stopping and no thresholding.
    """
    rng = np.random.default_rng(config.seed)
    d = dataset.d
    if config.constrained and init_mask is None:
        use_pns = config.pns if config.pns is not None else d >= 50
        if use_pns:
            from .post import pns  # lazy: post depends on this module too

            candidates = pns(dataset, config.pns_threshold)
            init_mask = candidates.T.astype(float)  # kept[i, j] -> mask[j, i]
    stack = MlpStack(d, config.hidden_layers, config.hidden_units,
                     head=config.head, rng=rng, init_mask=init_mask)
    state = AugLagState(lam=config.lambda0, mu=config.mu0)
    rms = RmspropState(stack.params())
    batches = _minibatches(dataset.x_train, config.batch_size, rng)
    x_heldout = dataset.x_heldout

    trajectory: list[dict] = []
    adjacency_log: list[tuple[int, np.ndarray]] = []
    converged = False
    budget_exhausted = False

    while state.t < config.max_subproblems:
        lr = config.lr_first if state.t == 0 else config.lr_other
        lam, mu = state.lam, state.mu
        best_obj = -np.inf
        best_params = stack.copy_params()
        bad_evals = 0
        while True:
            for _ in range(config.eval_every):
                batch = next(batches)
                obj, grads = subproblem_objective(stack, batch, lam, mu)
                neg = [-g for g in grads.params()]
                rmsprop_step(stack.params(), neg, rms, lr)
                state.iter_total += 1
                if state.iter_total >= config.max_iters:
                    budget_exhausted = True
                    break
            if config.constrained:
                maybe_threshold(stack, config.edge_threshold)
            h_now = h_value(stack) if config.constrained else 0.0
            held = _heldout_objective(stack, x_heldout, lam, mu)
            trajectory.append({
                "iteration": state.iter_total,
                "subproblem": state.t,
                "lambda": lam,
                "mu": mu,
                "h": h_now,
                "train_objective": obj,
                "heldout_objective": held,
                "edges": int(stack.support().sum()),
            })
            if log_adjacency:
                adjacency_log.append((state.iter_total, weighted_adjacency(stack)))
            if held > best_obj:
                best_obj = held
                best_params = stack.copy_params()
                bad_evals = 0
            else:
                bad_evals += 1
            if bad_evals >= config.patience or budget_exhausted:
                break
        stack.set_params(best_params)
        if not config.constrained:
            break
        h_star = h_value(stack)
        if h_star <= config.h_tol:
            converged = True
            state.h_hist.append(h_star)
            break
        if budget_exhausted:
            log.warning("iteration budget %d exhausted at h=%.3g; returning "
                        "best-so-far parameters", config.max_iters, h_star)
            break
        state.update(h_star)

    if not config.constrained:
        converged = True
    held_final = _heldout_objective(stack, x_heldout, 0.0, 0.0)
    return TrainResult(stack=stack, state=state, trajectory=trajectory,
                       converged=converged, heldout_objective=held_final,
                       adjacency_log=adjacency_log)
