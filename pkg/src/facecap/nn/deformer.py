"""Supervised pre-initialization of the expression deformer.

The deformer maps an encoded canonical position to that point's expression
basis, turning the per-vertex basis table into a continuous field that can
be queried at remeshed vertex positions. Pretraining regresses the table
values at the canonical vertices with full-batch Adam.
"""

import numpy as np

from .adam import AdamState, adam_step
from .encoding import pos_encode
from .mlp import MlpError, init_mlp

DEFORMER_HIDDEN = (128, 128, 128, 128)
DEFORMER_BETA = 100.0


def make_deformer_net(enc, n_expr, seed=0):
    """The deformer architecture: 4 hidden layers of 128, softplus(100).

    The output head starts at zero so the first iterations see gradients at
    the scale of the (small) basis targets; a full-scale random head floods
    Adam's second-moment accumulators and stalls training for thousands of
    steps.
    """
    net = init_mlp([enc.out_dim, *DEFORMER_HIDDEN, 3 * n_expr],
                   hidden="softplus", output="linear", beta=DEFORMER_BETA,
                   seed=seed)
    net.weights[-1] = np.zeros_like(net.weights[-1])
    return net


def pretrain_deformer(model, net, enc, iters=5000, lr=2e-4):
    """Fit ``net`` to the model's expression basis at its canonical vertices.

    Full batch every iteration (all vertices), Adam with the given learning
    rate. Returns (net, loss history); the history is not required to be
    monotone, only the final loss matters to callers.
    """
    if net.in_dim != enc.out_dim:
        raise MlpError(
            f"network input width {net.in_dim} != encoding output {enc.out_dim}"
        )
    target_dim = 3 * model.n_expr
    if net.out_dim != target_dim:
        raise MlpError(
            f"network output width {net.out_dim} != 3*n_e = {target_dim}"
        )
    inputs = pos_encode(enc, model.canonical)
    targets = model.expr_basis.reshape(model.n_vertices, target_dim)
    state = AdamState(lr=lr)
    params = net.parameters()
    history = []
    for _ in range(iters):
        loss, grads = net.gradients(inputs, targets)
        adam_step(state, params, grads)
        history.append(loss)
    return net, history


def eval_deformer(net, enc, positions):
    """Query the deformer at arbitrary points; returns (n, 3, n_e) bases."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    out = net.forward(pos_encode(enc, positions))
    n_e = net.out_dim // 3
    return out.reshape(len(positions), 3, n_e)
