"""Weighted adjacency matrix, matrix exponential and the acyclicity penalty.

h(stack) = trace(exp(A)) - d is zero exactly when the directed graph implied
by the support of the weighted adjacency matrix A is acyclic.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .mlp import GradBundle, MlpStack

__all__ = ["weighted_adjacency", "matrix_exp", "h_value", "h_and_grad"]


def weighted_adjacency(stack: MlpStack) -> np.ndarray:
    """A[i, j] = column sum over outputs of network j's connectivity at input i."""
    # C_j = |W_last| ... |W_1| diag(mask_j); stack all nodes at once.
    c = np.abs(stack.weights[0]) * stack.mask[:, None, :]  # (d, h, d)
    for l in range(1, stack.n_layers):
        c = np.einsum("joh,jhi->joi", np.abs(stack.weights[l]), c, optimize=True)
    a = c.sum(axis=1).T  # sum over outputs k; transpose to (input i, node j)
    np.fill_diagonal(a, 0.0)
    return a


def matrix_exp(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with Pade approximation."""
    a = np.asarray(a, dtype=float)
    if not np.isfinite(a).all():
        raise ValueError("matrix contains non-finite entries")
    e = scipy.linalg.expm(a)
    if not np.isfinite(e).all():
        norm = np.linalg.norm(a, 1)
        raise FloatingPointError(f"matrix exponential overflow, 1-norm {norm:g}")
    return e


def h_value(stack: MlpStack) -> float:
    a = weighted_adjacency(stack)
    return float(np.trace(matrix_exp(a)) - stack.d)


def h_and_grad(stack: MlpStack) -> tuple[float, GradBundle]:
    """Constraint value and its gradient with respect to every weight matrix.

    Uses grad_A trace(exp(A)) = exp(A)^T, chained through the column sums
    and the absolute-value weight products.  Biases and noise parameters do
    not enter the constraint, so their gradients are zero.
    """
    a = weighted_adjacency(stack)
    e = matrix_exp(a)
    h = float(np.trace(e) - stack.d)
    dh_da = e.T.copy()
    np.fill_diagonal(dh_da, 0.0)  # diagonal of A is structurally zero

    # Sensitivity per node j at (output k, input i) is dh/dA[i, j], constant
    # over k.
    s = np.broadcast_to(dh_da.T[:, None, :], (stack.d, stack.m, stack.d)).copy()

    # Partial products below each layer: below[l] = |W_{l-1}| ... |W_0| diag(mask)
    # with below[0] = diag(mask), kept per node.
    below: list[np.ndarray | None] = [None] * stack.n_layers
    for l in range(1, stack.n_layers):
        w_abs = np.abs(stack.weights[l - 1])
        if l == 1:
            below[l] = w_abs * stack.mask[:, None, :]
        else:
            below[l] = np.einsum("joh,jhi->joi", w_abs, below[l - 1], optimize=True)

    grads = GradBundle.zeros_like(stack)
    # above = (|W_{L-1}| ... |W_{l+1}|)^T s, folded in as we descend.
    above = s
    for l in reversed(range(stack.n_layers)):
        if l == 0:
            # below is diag(mask): dP_0[o, i] = above[o, i] * mask[i]
            dp = above * stack.mask[:, None, :]
        else:
            dp = np.einsum("jod,jhd->joh", above, below[l], optimize=True)
        grads.weights[l][...] = dp * np.sign(stack.weights[l])
        if l > 0:
            above = np.einsum("joh,jod->jhd", np.abs(stack.weights[l]), above,
                              optimize=True)
    grads.value = h
    return h, grads
