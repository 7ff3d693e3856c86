"""Minimal dense neural network in plain numpy, float64 end to end.

All parameters of a network live in one flat vector ``theta``; the weight
matrices and bias vectors are reshaped views into it.  That keeps the
optimizer trivial (elementwise ops on one array) and makes copying or
checkpointing a single-array affair.  Hidden layers use ReLU, the output
layer is linear.

``backward`` returns the gradient of a scalar loss with respect to theta,
given the loss gradient with respect to the network outputs; it uses the
activations cached by the most recent ``forward``.
"""

from __future__ import annotations

import json

import numpy as np


class ShapeError(Exception):
    """Array shape does not match what the network expects."""


class StaleCache(Exception):
    """backward() called without a preceding forward()."""


class Network:
    def __init__(self, layer_sizes, rng=None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ShapeError(f"need at least two positive layer sizes, got {layer_sizes}")
        self.layer_sizes = sizes
        self.n_layers = len(sizes) - 1

        self._slices = []
        total = 0
        for i in range(self.n_layers):
            n_in, n_out = sizes[i], sizes[i + 1]
            self._slices.append((total, total + n_in * n_out, (n_in, n_out)))
            total += n_in * n_out
            self._slices.append((total, total + n_out, (n_out,)))
            total += n_out
        self.n_params = total
        self.theta = np.zeros(total, dtype=np.float64)
        self.weights, self.biases = self._views(self.theta)

        if rng is not None:
            if not isinstance(rng, np.random.Generator):
                rng = np.random.default_rng(rng)
            for i, w in enumerate(self.weights):
                limit = np.sqrt(6.0 / self.layer_sizes[i])
                w[...] = rng.uniform(-limit, limit, size=w.shape)

        self._inputs = None
        self._preacts = None

    def _views(self, flat):
        weights, biases = [], []
        for j in range(self.n_layers):
            a, b, shape = self._slices[2 * j]
            weights.append(flat[a:b].reshape(shape))
            a, b, shape = self._slices[2 * j + 1]
            biases.append(flat[a:b].reshape(shape))
        return weights, biases

    def forward(self, x) -> np.ndarray:
        """Run the network; accepts one sample (d,) or a batch (n, d)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.layer_sizes[0]:
            raise ShapeError(f"expected input width {self.layer_sizes[0]}, got shape {x.shape}")
        self._inputs = [h]
        self._preacts = []
        for j in range(self.n_layers):
            z = h @ self.weights[j] + self.biases[j]
            self._preacts.append(z)
            h = np.maximum(z, 0.0) if j < self.n_layers - 1 else z
            if j < self.n_layers - 1:
                self._inputs.append(h)
        return h[0] if single else h

    def backward(self, dout) -> np.ndarray:
        """Gradient of the loss w.r.t. theta, given dL/d(outputs).

        ``dout`` must have the shape of the most recent forward's output.
        Batch samples are summed, so fold any 1/n factors into ``dout``.
        """
        if self._inputs is None:
            raise StaleCache("forward() must run before backward()")
        dout = np.asarray(dout, dtype=np.float64)
        if dout.ndim == 1:
            dout = dout[None, :]
        if dout.shape != self._preacts[-1].shape:
            raise ShapeError(f"dout shape {dout.shape} does not match last forward "
                             f"output {self._preacts[-1].shape}")
        grad = np.zeros_like(self.theta)
        g_w, g_b = self._views(grad)
        delta = dout
        for j in range(self.n_layers - 1, -1, -1):
            g_w[j][...] = self._inputs[j].T @ delta
            g_b[j][...] = delta.sum(axis=0)
            if j > 0:
                delta = (delta @ self.weights[j].T) * (self._preacts[j - 1] > 0.0)
        return grad

    def copy(self) -> "Network":
        twin = Network(self.layer_sizes)
        twin.theta[...] = self.theta
        return twin

    def to_dict(self) -> dict:
        return {"layer_sizes": self.layer_sizes, "theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Network":
        net = cls(doc["layer_sizes"])
        theta = np.asarray(doc["theta"], dtype=np.float64)
        if theta.shape != net.theta.shape:
            raise ShapeError(f"checkpoint has {theta.shape[0]} parameters, "
                             f"layer sizes {doc['layer_sizes']} need {net.n_params}")
        net.theta[...] = theta
        return net


class Adam:
    """Adam with bias correction, operating in place on a flat vector."""

    def __init__(self, n_params: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n_params, dtype=np.float64)
        self.v = np.zeros(n_params, dtype=np.float64)

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        if theta.shape != self.m.shape or grad.shape != self.m.shape:
            raise ShapeError(f"optimizer built for {self.m.shape[0]} parameters, "
                             f"got theta {theta.shape}, grad {grad.shape}")
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * np.square(grad)
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def grad_check(net: Network, x, loss_fn, h: float = 1e-5) -> float:
    """Compare analytic and central-difference gradients; return max rel error.

    ``loss_fn(outputs) -> (scalar_loss, dloss_doutputs)`` must be a pure
    function of the network outputs.  The relative error for each parameter
    is |a - n| / max(|a|, |n|, 1e-6), so a sign-flipped gradient shows up
    as an error of about 2 and an all-zero pair as 0.  The 1e-6 floor sits
    well above the round-off noise of the difference quotient itself
    (about eps * |loss| / 2h), so directions whose true gradient is exactly
    zero do not read back as errors.
    """
    _, dout = loss_fn(net.forward(x))
    analytic = net.backward(dout)
    theta = net.theta
    numeric = np.zeros_like(analytic)
    for j in range(theta.shape[0]):
        saved = theta[j]
        theta[j] = saved + h
        lp, _ = loss_fn(net.forward(x))
        theta[j] = saved - h
        lm, _ = loss_fn(net.forward(x))
        theta[j] = saved
        numeric[j] = (lp - lm) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def save_checkpoint(path, payload: dict) -> None:
    """Write a checkpoint dict (already JSON-ready) to disk."""
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
