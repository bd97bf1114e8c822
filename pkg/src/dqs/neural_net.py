"""Small dense network with hand-written backprop, Adam and log-cosh loss.

All parameters live in one flat float64 buffer; per-layer weights and biases
are views into it.  That keeps an Adam step to a handful of vector operations,
which matters because the learner updates once per stored transition.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numba
import numpy as np

ACTIVATIONS = ("tanh", "relu", "sigmoid")
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    # sigmoid, overflow safe
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _act_grad(name: str, z, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        # subgradient at exactly zero is 0; a > 0 iff z > 0
        return (a > 0).astype(float)
    return a * (1.0 - a)


def logcosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


def logcosh_grad(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


class Mlp:
    """Feedforward net ``dims[0] -> ... -> dims[-1]``.

    ``forward`` accepts one input vector or a batch of row vectors.
    """

    def __init__(self, dims, activations, rng: np.random.Generator | None = None,
                 params: np.ndarray | None = None):
        dims = [int(d) for d in dims]
        activations = list(activations)
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.dims = dims
        self.activations = activations
        shapes = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        self._shapes = shapes
        size = sum(int(np.prod(s)) for s in shapes)
        if params is None:
            self.params = np.zeros(size)
        else:
            params = np.asarray(params, dtype=float)
            if params.shape != (size,):
                raise ValueError(f"expected {size} parameters, got {params.shape}")
            self.params = params.copy()
        self.weights, self.biases = self._views(self.params)
        if params is None and rng is not None:
            for W in self.weights:
                limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
                W[...] = rng.uniform(-limit, limit, W.shape)

    def _views(self, flat: np.ndarray):
        weights, biases, offset = [], [], 0
        for i, shape in enumerate(self._shapes):
            size = int(np.prod(shape))
            view = flat[offset:offset + size].reshape(shape)
            (weights if i % 2 == 0 else biases).append(view)
            offset += size
        return weights, biases

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    def copy(self) -> "Mlp":
        return Mlp(self.dims, self.activations, params=self.params)

    def load_params(self, other: "Mlp") -> None:
        self.params[...] = other.params

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input has dimension {x.shape[-1]}, expected {self.input_dim}")
        return x

    def _forward(self, x: np.ndarray):
        zs, acts = [], [x]
        a = x
        for W, b, name in zip(self.weights, self.biases, self.activations):
            z = a @ W + b
            a = _act(name, z)
            zs.append(z)
            acts.append(a)
        return zs, acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        out = self._forward(x)[1][-1]
        return out[..., 0] if self.dims[-1] == 1 else out

    def input_gradient(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Outputs and d(output)/d(input) for a batch of inputs (scalar head)."""
        x = np.atleast_2d(self._check(x))
        zs, acts = self._forward(x)
        delta = np.ones((x.shape[0], 1))
        for i in range(len(self.weights) - 1, -1, -1):
            delta = delta * _act_grad(self.activations[i], zs[i], acts[i + 1])
            delta = delta @ self.weights[i].T
        return acts[-1][:, 0], delta

    def backward(self, x: np.ndarray, target: float):
        """Gradients of log cosh(y - target) for a single input.

        Returns ``(flat parameter gradient, input gradient, loss)``; the flat
        gradient lines up with ``self.params``.
        """
        x = self._check(x)
        if x.ndim != 1:
            raise ValueError("backward takes a single input vector")
        zs, acts = self._forward(x)
        y = acts[-1][0]
        grad = np.empty_like(self.params)
        gW, gb = self._views(grad)
        delta = np.atleast_1d(logcosh_grad(y - target))
        for i in range(len(self.weights) - 1, -1, -1):
            delta = delta * _act_grad(self.activations[i], zs[i], acts[i + 1])
            gW[i][...] = np.outer(acts[i], delta)
            gb[i][...] = delta
            delta = self.weights[i] @ delta
        return grad, delta, float(logcosh(y - target))

    def action_ascent_terms(self, states: np.ndarray, split: int):
        """Bind the fixed input block ``states`` (columns ``:split``).

        Returns ``f(actions) -> (values, d values / d actions)`` for the
        remaining input columns, with the first-layer state term precomputed.
        Needs a scalar output head.
        """
        W0 = self.weights[0]
        base = states @ W0[:split] + self.biases[0]
        Ws = [W0[split:]] + self.weights[1:]
        WsT = [W.T.copy() for W in Ws]
        bs = [None] + self.biases[1:]
        names = self.activations

        def evaluate(actions: np.ndarray):
            hs = []
            h = actions
            for i, W in enumerate(Ws):
                z = h @ W + (base if i == 0 else bs[i])
                h = _act(names[i], z)
                hs.append(h)
            delta = _act_grad(names[-1], None, hs[-1])
            for i in range(len(Ws) - 1, 0, -1):
                delta = (delta @ WsT[i]) * _act_grad(names[i - 1], None, hs[i - 1])
            return hs[-1][:, 0], delta @ WsT[0]

        return evaluate

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "activations": self.activations,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        net = cls(d["dims"], d["activations"])
        for W, w in zip(net.weights, d["weights"]):
            W[...] = np.asarray(w, dtype=float)
        for b, v in zip(net.biases, d["biases"]):
            b[...] = np.asarray(v, dtype=float)
        return net


def q_network(input_dim: int, rng: np.random.Generator) -> Mlp:
    return Mlp([input_dim, 150, 40, 1], ["tanh", "relu", "sigmoid"], rng)


@dataclass
class Adam:
    size: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)

    def step(self, net: Mlp, grad: np.ndarray) -> None:
        """In-place bias-corrected Adam update of ``net.params``."""
        if grad.shape != net.params.shape or grad.shape != self.m.shape:
            raise ValueError("gradient shape does not match parameters")
        self.step_count += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.step_count)
        v_hat = self.v / (1 - self.beta2 ** self.step_count)
        net.params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def fit_sequence(self, net: Mlp, inputs: np.ndarray, targets: np.ndarray) -> float:
        """Run ``backward`` + ``step`` on each (input, target) row in order.

        Compiled equivalent of the Python loop; returns the summed loss.
        """
        if net.dims[-1] != 1:
            raise ValueError("fit_sequence needs a scalar output head")
        inputs = np.ascontiguousarray(inputs, dtype=float)
        targets = np.ascontiguousarray(targets, dtype=float)
        if inputs.ndim != 2 or inputs.shape[1] != net.input_dim or len(targets) != len(inputs):
            raise ValueError("inputs must be (rows, input_dim) with one target per row")
        codes = np.array([_ACT_CODES[a] for a in net.activations], dtype=np.int64)
        loss, self.step_count = _fit_sequence(
            net.params, np.array(net.dims, dtype=np.int64), codes, inputs, targets,
            self.m, self.v, self.step_count, self.lr, self.beta1, self.beta2, self.eps)
        return loss

    def to_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "step_count": self.step_count, "m": self.m.tolist(), "v": self.v.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Adam":
        m = np.asarray(d["m"], dtype=float)
        return cls(m.size, d["lr"], d["beta1"], d["beta2"], d["eps"], d["step_count"],
                   m, np.asarray(d["v"], dtype=float))


@numba.njit(cache=True, fastmath=True)
def _fit_sequence(params, dims, codes, inputs, targets, m, v, t, lr, b1, b2, eps):
    # Adam is fused into backprop: each weight is read for the delta
    # propagation before it is overwritten.
    L = len(dims) - 1
    width = dims.max()
    acts = np.zeros((L + 1, width))
    delta = np.zeros(width)
    nxt = np.zeros(width)
    offsets = np.zeros(L + 1, dtype=np.int64)
    for l in range(L):
        offsets[l + 1] = offsets[l] + dims[l] * dims[l + 1] + dims[l + 1]
    total = 0.0
    for row in range(inputs.shape[0]):
        for i in range(dims[0]):
            acts[0, i] = inputs[row, i]
        for l in range(L):
            fi, fo, w0 = dims[l], dims[l + 1], offsets[l]
            b0 = w0 + fi * fo
            for o in range(fo):
                nxt[o] = params[b0 + o]
            for i in range(fi):
                ai = acts[l, i]
                for o in range(fo):
                    nxt[o] += ai * params[w0 + i * fo + o]
            for o in range(fo):
                z = nxt[o]
                if codes[l] == 0:
                    z = np.tanh(z)
                elif codes[l] == 1:
                    z = z if z > 0.0 else 0.0
                else:
                    z = 0.5 * (1.0 + np.tanh(0.5 * z))
                acts[l + 1, o] = z
        err = acts[L, 0] - targets[row]
        ax = abs(err)
        total += ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)
        delta[0] = np.tanh(err)
        t += 1
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for l in range(L - 1, -1, -1):
            fi, fo, w0 = dims[l], dims[l + 1], offsets[l]
            b0 = w0 + fi * fo
            for o in range(fo):
                a = acts[l + 1, o]
                if codes[l] == 0:
                    d = 1.0 - a * a
                elif codes[l] == 1:
                    d = 1.0 if a > 0.0 else 0.0
                else:
                    d = a * (1.0 - a)
                delta[o] *= d
            for i in range(fi):
                s = 0.0
                ai = acts[l, i]
                base = w0 + i * fo
                for o in range(fo):
                    p = base + o
                    s += params[p] * delta[o]
                    g = ai * delta[o]
                    m[p] = b1 * m[p] + (1.0 - b1) * g
                    v[p] = b2 * v[p] + (1.0 - b2) * g * g
                    params[p] -= lr * (m[p] / c1) / (np.sqrt(v[p] / c2) + eps)
                nxt[i] = s
            for o in range(fo):
                p = b0 + o
                g = delta[o]
                m[p] = b1 * m[p] + (1.0 - b1) * g
                v[p] = b2 * v[p] + (1.0 - b2) * g * g
                params[p] -= lr * (m[p] / c1) / (np.sqrt(v[p] / c2) + eps)
            for i in range(fi):
                delta[i] = nxt[i]
    return total, t


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, net: Mlp, adam: Adam | None = None,
                    rng: np.random.Generator | None = None) -> None:
    doc = net.to_dict()
    doc["adam"] = adam.to_dict() if adam is not None else None
    doc["rng_state"] = rng.bit_generator.state if rng is not None else None
    atomic_write_text(path, json.dumps(doc))


def load_checkpoint(path):
    """Returns ``(net, adam or None, rng or None)``."""
    with open(path) as fh:
        doc = json.load(fh)
    net = Mlp.from_dict(doc)
    adam = Adam.from_dict(doc["adam"]) if doc.get("adam") else None
    rng = None
    if doc.get("rng_state"):
        rng = np.random.default_rng()
        rng.bit_generator.state = doc["rng_state"]
    return net, adam, rng
