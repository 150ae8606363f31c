"""Per-node masked MLPs with Gaussian heads and hand-rolled backprop.

One small fully connected network per variable maps the masked input vector
to the parameters of that variable's conditional Gaussian.  All d networks
are stored stacked along a leading node axis so forward and backward passes
vectorize over nodes and minibatch rows at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MlpStack",
    "GradBundle",
    "forward",
    "forward_batch",
    "connectivity",
    "nll",
    "nll_batch",
    "input_jacobian_nll",
    "save_stack",
    "load_stack",
]

LEAKY_SLOPE = 0.01
LOG_2PI = float(np.log(2.0 * np.pi))
VAR_FLOOR = 1e-12

HEAD_MEAN = "mean"
HEAD_MEAN_LOGVAR = "mean-logvar"


def _leaky(a):
    return np.where(a > 0, a, LEAKY_SLOPE * a)


def _leaky_grad(a):
    # Subgradient 0 taken at exactly 0, matching the absolute-value convention.
    g = np.where(a > 0, 1.0, LEAKY_SLOPE)
    return np.where(a == 0, 0.0, g)


@dataclass
class GradBundle:
    """Gradients shape-congruent with an MlpStack's trainable parameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    log_var: np.ndarray | None
    value: float = 0.0

    def params(self) -> list[np.ndarray]:
        out = list(self.weights) + list(self.biases)
        if self.log_var is not None:
            out.append(self.log_var)
        return out

    @staticmethod
    def zeros_like(stack: "MlpStack") -> "GradBundle":
        return GradBundle(
            weights=[np.zeros_like(w) for w in stack.weights],
            biases=[np.zeros_like(b) for b in stack.biases],
            log_var=np.zeros_like(stack.log_var) if stack.head == HEAD_MEAN else None,
        )

    def __iadd__(self, other: "GradBundle") -> "GradBundle":
        for a, b in zip(self.weights, other.weights):
            a += b
        for a, b in zip(self.biases, other.biases):
            a += b
        if self.log_var is not None and other.log_var is not None:
            self.log_var += other.log_var
        self.value += other.value
        return self

    def scaled(self, c: float) -> "GradBundle":
        return GradBundle(
            weights=[c * w for w in self.weights],
            biases=[c * b for b in self.biases],
            log_var=None if self.log_var is None else c * self.log_var,
            value=c * self.value,
        )


class MlpStack:
    """All parameters of the d per-node networks plus their input masks.

    weights[l] has shape (d, out_l, in_l) and biases[l] shape (d, out_l);
    mask has shape (d, d) where mask[j, i] gates input i of network j and
    mask[j, j] is always 0.  Mask entries only ever flip 1 -> 0.
    """

    def __init__(self, d: int, hidden_layers: int = 2, hidden_units: int = 10,
                 head: str = HEAD_MEAN, rng: np.random.Generator | None = None,
                 init_mask: np.ndarray | None = None):
        if head not in (HEAD_MEAN, HEAD_MEAN_LOGVAR):
            raise ValueError(f"unknown head {head!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.hidden_layers = hidden_layers
        self.hidden_units = hidden_units
        self.head = head
        self.m = 1 if head == HEAD_MEAN else 2
        sizes = [d] + [hidden_units] * hidden_layers + [self.m]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            # Glorot-uniform per network, zero biases.
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(d, fan_out, fan_in)))
            self.biases.append(np.zeros((d, fan_out)))
        self.log_var = np.zeros(d)  # used by the mean-only head
        if init_mask is None:
            mask = np.ones((d, d))
        else:
            mask = np.asarray(init_mask, dtype=float).copy()
        np.fill_diagonal(mask, 0.0)
        self.mask = mask
        self.var_clamp_count = 0

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[np.ndarray]:
        """Trainable arrays, in the order GradBundle.params uses."""
        out = list(self.weights) + list(self.biases)
        if self.head == HEAD_MEAN:
            out.append(self.log_var)
        return out

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def set_params(self, params: list[np.ndarray]) -> None:
        for dst, src in zip(self.params(), params):
            dst[...] = src

    def apply_mask_updates(self, zeroed: np.ndarray) -> None:
        """Permanently zero mask entries flagged True in ``zeroed`` (d, d)."""
        self.mask[zeroed] = 0.0

    def support(self) -> np.ndarray:
        """Current edge support: adj[i, j] = 1 iff input i of net j is unmasked."""
        adj = (self.mask.T > 0).astype(np.int8)
        np.fill_diagonal(adj, 0)
        return adj


def _forward_cached(stack: MlpStack, x: np.ndarray):
    """Forward pass for a batch, returning output and layer caches.

    x has shape (B, d); returns theta (d, B, m), pre-activations and
    post-activations per layer for backprop.
    """
    xm = stack.mask[:, None, :] * x[None, :, :]  # (d, B, d)
    acts = [xm]
    pres = []
    h = xm
    for l in range(stack.n_layers):
        a = np.einsum("joi,jbi->jbo", stack.weights[l], h, optimize=True)
        a += stack.biases[l][:, None, :]
        pres.append(a)
        h = _leaky(a) if l < stack.n_layers - 1 else a
        acts.append(h)
    return h, pres, acts


def forward_batch(stack: MlpStack, x: np.ndarray) -> np.ndarray:
    """theta for every node and row: shape (d, B, m)."""
    x = np.asarray(x, dtype=float)
    theta, _, _ = _forward_cached(stack, x)
    if not np.isfinite(theta).all():
        bad = np.flatnonzero(~np.isfinite(theta).all(axis=(1, 2)))
        raise FloatingPointError(f"non-finite network output for node(s) {bad.tolist()}")
    return theta


def forward(stack: MlpStack, j: int, x_row: np.ndarray) -> np.ndarray:
    """Distribution parameters theta_(j) for one input row."""
    x_row = np.asarray(x_row, dtype=float)
    if not np.isfinite(x_row).all():
        raise ValueError("non-finite input row")
    return forward_batch(stack, x_row[None, :])[j, 0]


def connectivity(stack: MlpStack, j: int) -> np.ndarray:
    """C_(j) = |W_last| ... |W_1| diag(mask_j); entry (k, i) sums all
    path products from input i to output k."""
    c = np.abs(stack.weights[0][j]) * stack.mask[j][None, :]
    for l in range(1, stack.n_layers):
        c = np.abs(stack.weights[l][j]) @ c
    return c


def _gauss_nll_terms(stack: MlpStack, theta: np.ndarray, x: np.ndarray):
    """Per-node, per-row negative log density and head intermediates.

    Returns (nll (d,B), mu (d,B), logvar_eff (d,B), clamped (d,B) bool).
    """
    mu = theta[..., 0]
    if stack.head == HEAD_MEAN:
        logvar = np.broadcast_to(stack.log_var[:, None], mu.shape)
    else:
        logvar = theta[..., 1]
    floor = np.log(VAR_FLOOR)
    clamped = logvar < floor
    logvar_eff = np.maximum(logvar, floor)
    resid = x.T - mu  # x.T is (d, B)
    nll = 0.5 * (resid**2 * np.exp(-logvar_eff) + logvar_eff + LOG_2PI)
    return nll, mu, logvar_eff, clamped


def _backward(stack: MlpStack, dtheta: np.ndarray, pres, acts,
              want_input_grad: bool = False):
    """Backpropagate dLoss/dtheta (d, B, m) through the stacked networks."""
    grads = GradBundle.zeros_like(stack)
    delta = dtheta
    for l in reversed(range(stack.n_layers)):
        if l < stack.n_layers - 1:
            delta = delta * _leaky_grad(pres[l])
        grads.weights[l][...] = np.einsum("jbo,jbi->joi", delta, acts[l], optimize=True)
        grads.biases[l][...] = delta.sum(axis=1)
        if l > 0 or want_input_grad:
            delta = np.einsum("joi,jbo->jbi", stack.weights[l], delta, optimize=True)
    if want_input_grad:
        return grads, delta * stack.mask[:, None, :]
    return grads, None


def nll_batch(stack: MlpStack, x: np.ndarray, with_grads: bool = True):
    """Mean over rows of the summed per-node Gaussian NLL, with gradients.

    Returns (loss, GradBundle or None).  The loss is
    (1/B) sum_b sum_j -log p_j(x_bj | masked inputs).
    """
    x = np.asarray(x, dtype=float)
    b = x.shape[0]
    theta, pres, acts = _forward_cached(stack, x)
    nll, mu, logvar_eff, clamped = _gauss_nll_terms(stack, theta, x)
    stack.var_clamp_count += int(clamped.sum())
    loss = float(nll.sum() / b)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite likelihood loss")
    if not with_grads:
        return loss, None
    inv_var = np.exp(-logvar_eff)
    resid = x.T - mu
    dmu = -resid * inv_var / b  # (d, B)
    dlogvar = 0.5 * (1.0 - resid**2 * inv_var) / b
    dlogvar = np.where(clamped, 0.0, dlogvar)
    dtheta = np.zeros_like(theta)
    dtheta[..., 0] = dmu
    if stack.head == HEAD_MEAN_LOGVAR:
        dtheta[..., 1] = dlogvar
    grads, _ = _backward(stack, dtheta, pres, acts)
    if stack.head == HEAD_MEAN:
        grads.log_var[...] = dlogvar.sum(axis=1)
    grads.value = loss
    return loss, grads


def nll(stack: MlpStack, j: int, x_row: np.ndarray, with_grads: bool = False):
    """Negative Gaussian log density of x_row[j] under network j.

    With ``with_grads`` the returned GradBundle covers the whole stack but
    only node j's slices are nonzero.
    """
    x_row = np.asarray(x_row, dtype=float)
    theta, pres, acts = _forward_cached(stack, x_row[None, :])
    nll_all, mu, logvar_eff, clamped = _gauss_nll_terms(stack, theta, x_row[None, :])
    stack.var_clamp_count += int(clamped[j].sum())
    value = float(nll_all[j, 0])
    if not with_grads:
        return value, None
    inv_var = np.exp(-logvar_eff)
    resid = x_row[None, :].T - mu
    dtheta = np.zeros_like(theta)
    dtheta[j, 0, 0] = (-resid * inv_var)[j, 0]
    if stack.head == HEAD_MEAN_LOGVAR:
        dl = 0.5 * (1.0 - resid[j, 0] ** 2 * inv_var[j, 0])
        dtheta[j, 0, 1] = 0.0 if clamped[j, 0] else dl
    grads, _ = _backward(stack, dtheta, pres, acts)
    if stack.head == HEAD_MEAN:
        if not clamped[j, 0]:
            grads.log_var[j] = 0.5 * (1.0 - resid[j, 0] ** 2 * inv_var[j, 0])
    grads.value = value
    return value, grads


def input_jacobian_nll(stack: MlpStack, x: np.ndarray) -> np.ndarray:
    """d(NLL_j)/d(input_i) per row: shape (d_nets=j, B, d_inputs=i).

    Only the network-input dependence is differentiated; the direct
    dependence of the density on its own argument x_j is not included
    (inputs to network j are masked at i = j anyway).
    """
    x = np.asarray(x, dtype=float)
    theta, pres, acts = _forward_cached(stack, x)
    nll_all, mu, logvar_eff, clamped = _gauss_nll_terms(stack, theta, x)
    inv_var = np.exp(-logvar_eff)
    resid = x.T - mu
    dtheta = np.zeros_like(theta)
    dtheta[..., 0] = -resid * inv_var
    if stack.head == HEAD_MEAN_LOGVAR:
        dtheta[..., 1] = np.where(clamped, 0.0, 0.5 * (1.0 - resid**2 * inv_var))
    _, dinput = _backward(stack, dtheta, pres, acts, want_input_grad=True)
    return dinput


def density_jacobian(stack: MlpStack, x: np.ndarray) -> np.ndarray:
    """|d p_j / d x_i| averaged over rows: nonnegative (d, d), entry (i, j).

    p_j is the conditional density value itself, so
    dp_j/dx = p_j * dlog p_j/dx = -p_j * dNLL_j/dx.
    """
    x = np.asarray(x, dtype=float)
    theta, _, _ = _forward_cached(stack, x)
    nll_all, _, _, _ = _gauss_nll_terms(stack, theta, x)
    dens = np.exp(-nll_all)  # (d, B)
    dinput = input_jacobian_nll(stack, x)  # (d, B, d)
    jac = np.abs(dens[:, :, None] * dinput)  # |dp_j/dx_i| at each row
    j_mat = jac.mean(axis=1).T  # (i, j)
    np.fill_diagonal(j_mat, 0.0)
    return j_mat


CHECKPOINT_VERSION = 1


def save_stack(stack: MlpStack, path) -> None:
    """Versioned npz checkpoint of weights, biases, masks and head config."""
    payload = {
        "version": np.array(CHECKPOINT_VERSION),
        "config": np.frombuffer(json.dumps({
            "d": stack.d,
            "hidden_layers": stack.hidden_layers,
            "hidden_units": stack.hidden_units,
            "head": stack.head,
        }).encode(), dtype=np.uint8),
        "mask": stack.mask,
        "log_var": stack.log_var,
    }
    for l, (w, b) in enumerate(zip(stack.weights, stack.biases)):
        payload[f"w{l}"] = w
        payload[f"b{l}"] = b
    np.savez(path, **payload)


def load_stack(path) -> MlpStack:
    with np.load(path) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        cfg = json.loads(bytes(z["config"]).decode())
        stack = MlpStack(cfg["d"], cfg["hidden_layers"], cfg["hidden_units"],
                         head=cfg["head"])
        stack.mask = z["mask"].copy()
        stack.log_var[...] = z["log_var"]
        for l in range(stack.n_layers):
            stack.weights[l][...] = z[f"w{l}"]
            stack.biases[l][...] = z[f"b{l}"]
    return stack
