"""Dense MLP with analytic reverse-mode gradients, 64-bit throughout.

Supported hidden activations: relu and softplus(beta); output activations:
linear, softplus(beta), sigmoid. The softplus uses the numerically stable
branch (identity for beta*z > 20) and its forward pass caches exp values
that the backward pass reuses, which is what keeps full-batch training
affordable on one core.
"""

import json

import numpy as np

from ..container import decode_text, encode_text
from ..errors import ValidationError

HIDDEN_ACTIVATIONS = ("relu", "softplus")
OUTPUT_ACTIVATIONS = ("linear", "softplus", "sigmoid")


class MlpError(ValidationError):
    pass


def softplus(z, beta=100.0):
    """ln(1 + exp(beta*z)) / beta with the stable branch for beta*z > 20."""
    bz = beta * z
    e = np.exp(np.minimum(bz, 20.0))
    return np.where(bz > 20.0, z, np.log1p(e) / beta)


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _act_forward(name, z, beta):
    """Activation value plus a cache for the exact derivative."""
    if name == "linear":
        return z, None
    if name == "relu":
        return np.maximum(z, 0.0), z > 0.0
    if name == "softplus":
        bz = beta * z
        hi = bz > 20.0
        e = np.exp(np.minimum(bz, 20.0))
        val = np.where(hi, z, np.log1p(e) / beta)
        deriv = np.where(hi, 1.0, e / (1.0 + e))  # sigmoid(beta*z)
        return val, deriv
    if name == "sigmoid":
        s = sigmoid(z)
        return s, s * (1.0 - s)
    raise MlpError(f"unknown activation '{name}'")


def _act_derivative(name, cache):
    if name == "linear":
        return None  # identity
    if name == "relu":
        return cache.astype(np.float64)
    return cache  # softplus / sigmoid cached their derivative directly


class Mlp:
    """Affine + activation stack; weights[i] has shape (widths[i+1], widths[i])."""

    def __init__(self, weights, biases, hidden="relu", output="linear", beta=100.0):
        if hidden not in HIDDEN_ACTIVATIONS:
            raise MlpError(f"hidden activation must be one of {HIDDEN_ACTIVATIONS}")
        if output not in OUTPUT_ACTIVATIONS:
            raise MlpError(f"output activation must be one of {OUTPUT_ACTIVATIONS}")
        if (hidden == "softplus" or output == "softplus") and not beta > 0:
            raise MlpError("softplus sharpness beta must be positive")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(self.weights) != len(self.biases):
            raise MlpError("weight/bias layer counts differ")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise MlpError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise MlpError(
                    f"layer {i}: input width {w.shape[1]} != previous output "
                    f"{self.weights[i - 1].shape[0]}"
                )
        self.hidden = hidden
        self.output = output
        self.beta = float(beta)

    @property
    def widths(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    def parameters(self):
        """Flat parameter list (weights then biases, layer order)."""
        return self.weights + self.biases

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.in_dim:
            raise MlpError(f"input width {h.shape[1]}, network expects {self.in_dim}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            act = self.output if i == last else self.hidden
            h, _ = _act_forward(act, z, self.beta)
        return h[0] if single else h

    def _forward_cached(self, x):
        inputs = []   # layer inputs
        caches = []   # activation derivative caches
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w.T + b
            act = self.output if i == last else self.hidden
            h, cache = _act_forward(act, z, self.beta)
            caches.append((act, cache))
        return h, inputs, caches

    def gradients(self, x, targets):
        """Mean-squared-error loss and its exact gradients.

        Loss is the batch mean of the squared residual norm. Returns
        (loss, grads) with grads ordered like :meth:`parameters`.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        if len(x) == 0:
            raise MlpError("gradient evaluation needs a non-empty batch")
        if x.shape[1] != self.in_dim or targets.shape != (len(x), self.out_dim):
            raise MlpError(
                f"batch shapes {x.shape}/{targets.shape} do not match network "
                f"{self.in_dim}->{self.out_dim}"
            )
        y, inputs, caches = self._forward_cached(x)
        resid = y - targets
        batch = len(x)
        loss = float((resid * resid).sum() / batch)

        delta = 2.0 * resid / batch
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            act, cache = caches[i]
            deriv = _act_derivative(act, cache)
            if deriv is not None:
                delta = delta * deriv
            grad_w[i] = delta.T @ inputs[i]
            grad_b[i] = delta.sum(axis=0)
            if i:
                delta = delta @ self.weights[i]
        return loss, grad_w + grad_b


def init_mlp(widths, hidden="relu", output="linear", beta=100.0, seed=0):
    """Kaiming-uniform weights (fan-in scaling), zero biases, seeded."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, hidden=hidden, output=output, beta=beta)


def mlp_to_chunks(net, prefix=""):
    """FWB1 chunk dict: {prefix}w0, {prefix}b0, ... plus a {prefix}meta record."""
    chunks = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        chunks[f"{prefix}w{i}"] = w
        chunks[f"{prefix}b{i}"] = b
    meta = {
        "widths": net.widths,
        "hidden": net.hidden,
        "output": net.output,
        "beta": net.beta,
    }
    chunks[f"{prefix}meta"] = encode_text(json.dumps(meta, sort_keys=True))
    return chunks


def mlp_from_chunks(chunks, prefix=""):
    key = f"{prefix}meta"
    if key not in chunks:
        raise MlpError(f"missing MLP meta chunk '{key}'")
    meta = json.loads(decode_text(chunks[key]))
    layers = len(meta["widths"]) - 1
    weights = [chunks[f"{prefix}w{i}"] for i in range(layers)]
    biases = [chunks[f"{prefix}b{i}"] for i in range(layers)]
    return Mlp(weights, biases, hidden=meta["hidden"], output=meta["output"],
               beta=meta["beta"])
