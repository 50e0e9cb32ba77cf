"""Plain numpy multilayer perceptrons with manual backprop and Adam.

Weights are stored as ``(fan_out, fan_in)`` matrices so a layer computes
``x @ W.T + b`` on a batch of row vectors.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError

ACTIVATIONS = ("linear", "relu", "tanh")
MAGIC = b"LQRNN1"


@dataclass(frozen=True)
class NetworkSpec:
    input_size: int
    hidden_sizes: tuple = ()
    output_size: int = 1
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        sizes = (self.input_size, *self.hidden_sizes, self.output_size)
        if any(int(s) < 1 for s in sizes):
            raise ValidationError(f"layer sizes must be >= 1, got {sizes}")
        if self.hidden_activation != "relu":
            raise ValidationError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("linear", "tanh"):
            raise ValidationError(f"unsupported output activation {self.output_activation!r}")

    @property
    def layer_sizes(self):
        return (self.input_size, *self.hidden_sizes, self.output_size)


class Network:
    def __init__(self, spec, weights, biases):
        self.spec = spec
        self.weights = weights
        self.biases = biases
        sizes = spec.layer_sizes
        if len(weights) != len(sizes) - 1 or len(biases) != len(weights):
            raise ShapeError("layer count does not match spec")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ShapeError(f"layer {i} has shapes {w.shape}, {b.shape}")

    @classmethod
    def init(cls, spec, rng):
        """Uniform init in +-1/sqrt(fan_in) for weights and biases."""
        sizes = spec.layer_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-lim, lim, size=fan_out))
        return cls(spec, weights, biases)

    @classmethod
    def zeros(cls, spec):
        sizes = spec.layer_sizes
        return cls(spec,
                   [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(o) for o in sizes[1:]])

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return Network(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __call__(self, x):
        return forward(self, x)


def _as_batch(net, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.spec.input_size:
        raise ShapeError(f"expected input of width {net.spec.input_size}, got shape {x.shape}")
    return x, single


def _trace(net, x):
    acts = [x]
    last = len(net.weights) - 1
    h = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if i < last:
            np.maximum(h, 0.0, out=h)
        elif net.spec.output_activation == "tanh":
            h = np.tanh(h)
        acts.append(h)
    return acts


def forward(net, x):
    """Evaluate the network on one input vector or a batch of rows."""
    xb, single = _as_batch(net, x)
    out = _trace(net, xb)[-1]
    return out[0] if single else out


def gradient(net, x, output_grad):
    """Backpropagate ``output_grad`` through the network.

    Returns ``(grads, input_grad)`` where ``grads`` follows ``net.params``
    ordering and holds d(sum over batch of output_grad . net(x))/d(theta).
    ``input_grad`` has the same shape as ``x``.
    """
    xb, single = _as_batch(net, x)
    g = np.asarray(output_grad, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != (xb.shape[0], net.spec.output_size):
        raise ShapeError(f"output_grad shape {g.shape} does not match batch output "
                         f"({xb.shape[0]}, {net.spec.output_size})")
    acts = _trace(net, xb)
    out = acts[-1]
    if net.spec.output_activation == "tanh":
        delta = g * (1.0 - out * out)
    else:
        delta = g
    grads = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = delta.T @ acts[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = delta @ net.weights[i]
        if i > 0:
            delta = delta * (acts[i] > 0.0)
    return grads, (delta[0] if single else delta)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_network(cls, net, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls([np.zeros_like(p) for p in net.params],
                   [np.zeros_like(p) for p in net.params],
                   0, lr, beta1, beta2, eps)


def adam_step(net, grads, state):
    """Descend along ``grads`` with bias-corrected Adam; updates in place."""
    params = net.params
    if len(grads) != len(params):
        raise ShapeError("gradient list does not match parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    step_size = state.lr * np.sqrt(c2) / c1
    eps_hat = state.eps * np.sqrt(c2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step_size * m / (np.sqrt(v) + eps_hat)
    return net, state


def target_update(target, source, mode="copy", mix=1.0):
    """Refresh target parameters in place, by copy or moving average."""
    if target.spec.layer_sizes != source.spec.layer_sizes:
        raise ShapeError("target and source networks have different shapes")
    if mode == "copy":
        mix = 1.0
    elif mode != "moving_average":
        raise ValidationError(f"unknown target update mode {mode!r}")
    if not 0.0 <= mix <= 1.0:
        raise ValidationError(f"mix must lie in [0, 1], got {mix}")
    for t, s in zip(target.params, source.params):
        if mix == 1.0:
            t[...] = s
        elif mix > 0.0:
            t *= 1.0 - mix
            t += mix * s
    return target


# binary format: magic, uint32 input size, uint32 hidden count, uint32 per
# hidden size, uint32 output size, uint8 hidden act, uint8 output act, then
# float64 W (row-major, fan_out x fan_in) and b for each layer in order.

def dumps(net):
    spec = net.spec
    parts = [MAGIC,
             struct.pack("<II", spec.input_size, len(spec.hidden_sizes)),
             struct.pack(f"<{len(spec.hidden_sizes)}I", *spec.hidden_sizes),
             struct.pack("<I", spec.output_size),
             struct.pack("<BB", ACTIVATIONS.index(spec.hidden_activation),
                         ACTIVATIONS.index(spec.output_activation))]
    for w, b in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(data, offset=0):
    """Parse a network from ``data``; returns ``(net, end_offset)``."""
    if data[offset:offset + len(MAGIC)] != MAGIC:
        raise ValidationError("not a network file (bad magic)")
    pos = offset + len(MAGIC)
    n_in, n_hidden = struct.unpack_from("<II", data, pos)
    pos += 8
    hidden = struct.unpack_from(f"<{n_hidden}I", data, pos)
    pos += 4 * n_hidden
    (n_out,) = struct.unpack_from("<I", data, pos)
    pos += 4
    h_act, o_act = struct.unpack_from("<BB", data, pos)
    pos += 2
    spec = NetworkSpec(n_in, hidden, n_out, ACTIVATIONS[h_act], ACTIVATIONS[o_act])
    sizes = spec.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        count = fan_in * fan_out
        w = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(fan_out, fan_in)
        pos += 8 * count
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=pos)
        pos += 8 * fan_out
        weights.append(w.astype(float))
        biases.append(b.astype(float))
    return Network(spec, weights, biases), pos


def save(net, path):
    with open(path, "wb") as fh:
        fh.write(dumps(net))


def load(path):
    with open(path, "rb") as fh:
        net, _ = loads(fh.read())
    return net
