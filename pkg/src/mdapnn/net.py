"""Fully connected tanh networks with analytic input-derivative channels.

A network is a stack of affine layers with tanh activations and a
configurable output activation (identity, softplus, or exp(-X) for
fields that must stay positive). Parameters live on the reverse-mode
tape (autodiff.Tensor leaves), and all of them for a run are views into
one flat float64 vector so the optimizer sees a single array.

forward_jet propagates first and second input-coordinate derivatives
forward through the layers as extra channels, layer by layer:

    z = h W^T + b        channels map linearly: Az = A W^T, ...
    h = act(z)           A -> act'(z) Az
                         C -> act''(z) Bz^2 + act'(z) Cz

Each channel is built from tape primitives, so a single reverse sweep
gives exact parameter gradients of losses containing d_t, d_x, d_xx.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation, NumericalError

OUTPUT_ACTIVATIONS = ("identity", "softplus", "negexp")


@dataclass
class Jet:
    """Network output and its requested input-coordinate derivatives."""

    value: object
    d_t: object = None
    d_x: object = None
    d_xx: object = None


@dataclass
class MlpNetwork:
    layer_sizes: tuple
    input_labels: tuple
    output_activation: str
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def n_params(self):
        return sum(w.value.size for w in self.weights) + sum(b.value.size for b in self.biases)


def init_network(layer_sizes, input_labels, output_activation="identity", seed=0):
    """Glorot-uniform weights, zero biases, drawn layer by layer from one PCG64 stream."""
    layer_sizes = tuple(int(s) for s in layer_sizes)
    input_labels = tuple(input_labels)
    if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
        raise ContractViolation(f"layer_sizes must be >=2 positive entries, got {layer_sizes}")
    if len(input_labels) != layer_sizes[0]:
        raise ContractViolation(
            f"{len(input_labels)} input labels for input width {layer_sizes[0]}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ContractViolation(f"unknown output activation {output_activation!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        weights.append(ad.Tensor(w))
        biases.append(ad.Tensor(np.zeros(fan_out)))
    return MlpNetwork(layer_sizes, input_labels, output_activation, weights, biases)


def _check_inputs(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layer_sizes[0]:
        raise ContractViolation(
            f"inputs shape {x.shape} does not match input width {net.layer_sizes[0]}")
    if not np.all(np.isfinite(x)):
        raise ContractViolation("non-finite network inputs")
    return x


def forward(net, x):
    """Tape forward pass; returns a Tensor of shape (n, d_out)."""
    h = _check_inputs(net, x)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = ad.dotT(h, w) + b
        if i < last:
            h = ad.tanh(z)
        else:
            h = _apply_output(net.output_activation, z)
    return h


def _apply_output(kind, z):
    if kind == "identity":
        return z
    if kind == "softplus":
        return ad.softplus(z)
    return ad.negexp(z)


def forward_values(net, x):
    """Plain numpy forward pass for evaluation paths (no tape)."""
    h = _check_inputs(net, x)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.value.T + b.value
        if i < last:
            h = np.tanh(z)
        elif net.output_activation == "softplus":
            h = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
        elif net.output_activation == "negexp":
            h = np.exp(-z)
        else:
            h = z
    return h


def forward_jet(net, x, channels=("d_t", "d_x")):
    """Forward pass carrying derivative channels with respect to t and x.

    channels is any subset of {"d_t", "d_x", "d_xx"}; the coordinate must
    appear in net.input_labels. Returns a Jet of Tensors.
    """
    x = _check_inputs(net, x)
    channels = tuple(channels)
    unknown = set(channels) - {"d_t", "d_x", "d_xx"}
    if unknown:
        raise ContractViolation(f"unknown jet channels {sorted(unknown)}")
    need_a = "d_t" in channels
    need_c = "d_xx" in channels
    need_b = "d_x" in channels or need_c
    if need_a and "t" not in net.input_labels:
        raise ContractViolation(f"d_t requested but inputs are {net.input_labels}")
    if need_b and "x" not in net.input_labels:
        raise ContractViolation(f"d_x requested but inputs are {net.input_labels}")

    n, d = x.shape
    def seed(label):
        e = np.zeros((n, d))
        e[:, net.input_labels.index(label)] = 1.0
        return e

    h = x
    a = seed("t") if need_a else None
    b = seed("x") if need_b else None
    c = np.zeros((n, d)) if need_c else None

    last = len(net.weights) - 1
    for i, (w, bias) in enumerate(zip(net.weights, net.biases)):
        z = ad.dotT(h, w) + bias
        az = ad.dotT(a, w) if need_a else None
        bz = ad.dotT(b, w) if need_b else None
        cz = ad.dotT(c, w) if need_c else None
        if i < last:
            y = ad.tanh(z)
            s = 1.0 - y * y
            h = y
            if need_a:
                a = s * az
            if need_b:
                b = s * bz
            if need_c:
                c = s * cz + ad.scale(y * s * (bz * bz), -2.0)
        else:
            h, a, b, c = _output_jet(net.output_activation, z, az, bz, cz,
                                     need_a, need_b, need_c)
    return Jet(value=h, d_t=a if need_a else None,
               d_x=b if "d_x" in channels else None,
               d_xx=c if need_c else None)


def _output_jet(kind, z, az, bz, cz, need_a, need_b, need_c):
    if kind == "identity":
        return z, az, bz, cz
    if kind == "softplus":
        y = ad.softplus(z)
        sig = ad.sigmoid(z)
        a = sig * az if need_a else None
        b = sig * bz if need_b else None
        # softplus'' = sig (1 - sig)
        c = (sig * (1.0 - sig)) * (bz * bz) + sig * cz if need_c else None
        return y, a, b, c
    y = ad.negexp(z)
    a = ad.scale(y * az, -1.0) if need_a else None
    b = ad.scale(y * bz, -1.0) if need_b else None
    c = y * (bz * bz) + ad.scale(y * cz, -1.0) if need_c else None
    return y, a, b, c


class ParamVector:
    """All parameters of a run as one flat float64 vector.

    Network weight tensors are rebound to views into the flat buffer, so
    writing the buffer (optimizer step) updates every network in place.
    pack/unpack round-trip exactly.
    """

    def __init__(self, networks):
        self.networks = dict(networks)
        self.segments = []  # (net name, kind, layer index, shape, offset, size)
        total = 0
        for name, net in self.networks.items():
            for kind, tensors in (("w", net.weights), ("b", net.biases)):
                for li, t in enumerate(tensors):
                    size = t.value.size
                    self.segments.append((name, kind, li, t.value.shape, total, size))
                    total += size
        self.data = np.empty(total, dtype=np.float64)
        for name, kind, li, shape, off, size in self.segments:
            net = self.networks[name]
            t = net.weights[li] if kind == "w" else net.biases[li]
            self.data[off:off + size] = t.value.ravel()
            t.value = self.data[off:off + size].reshape(shape)

    @property
    def size(self):
        return self.data.size

    def _leaves(self):
        for name, kind, li, shape, off, size in self.segments:
            net = self.networks[name]
            yield (net.weights[li] if kind == "w" else net.biases[li]), off, size, shape

    def copy_theta(self):
        return self.data.copy()

    def set_theta(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.data.shape:
            raise ContractViolation(f"theta shape {theta.shape} != {self.data.shape}")
        self.data[:] = theta

    def zero_grad(self):
        for leaf, _, _, _ in self._leaves():
            leaf.grad = None

    def grad_vector(self):
        g = np.zeros_like(self.data)
        for leaf, off, size, shape in self._leaves():
            if leaf.grad is not None:
                g[off:off + size] = leaf.grad.ravel()
        return g

    def unpack(self, theta=None):
        theta = self.data if theta is None else np.asarray(theta, dtype=np.float64)
        return [theta[off:off + size].reshape(shape).copy()
                for _, _, _, shape, off, size in self.segments]

    def pack(self, arrays):
        if len(arrays) != len(self.segments):
            raise ContractViolation(f"{len(arrays)} arrays for {len(self.segments)} segments")
        return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def loss_gradient(params, loss_eval):
    """Evaluate loss_eval() on the tape and return (loss value, gradient vector).

    loss_eval must return a scalar Tensor built from the networks bound to
    `params`. Non-finite loss or gradient raises NumericalError.
    """
    params.zero_grad()
    loss = loss_eval()
    lv = float(np.asarray(loss.value).reshape(()))
    if not np.isfinite(lv):
        raise NumericalError(f"non-finite loss value {lv}")
    ad.backward(loss)
    g = params.grad_vector()
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise NumericalError(f"non-finite gradient entry at flat index {bad}")
    return lv, g


def save_checkpoint(path, params, state=None, meta=None):
    """Write theta (+ optimizer state and metadata) to an .npz file."""
    arrays = {"theta": params.copy_theta()}
    state = state or {}
    for key in ("m", "v"):
        if key in state:
            arrays[key] = np.asarray(state[key], dtype=np.float64)
    header = {
        "step": int(state.get("step", 0)),
        "layer_sizes": {n: list(net.layer_sizes) for n, net in params.networks.items()},
        "input_labels": {n: list(net.input_labels) for n, net in params.networks.items()},
        "output_activation": {n: net.output_activation for n, net in params.networks.items()},
        "meta": meta or {},
    }
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path, params=None):
    """Read a checkpoint; if `params` is given, restore theta into it after
    checking the architecture matches. Returns a dict with theta, optimizer
    state, step and metadata."""
    with np.load(path) as z:
        header = json.loads(bytes(z["header"].tobytes()).decode())
        out = {
            "theta": z["theta"],
            "m": z["m"] if "m" in z.files else None,
            "v": z["v"] if "v" in z.files else None,
            "step": header["step"],
            "meta": header["meta"],
            "header": header,
        }
    if params is not None:
        want = {n: list(net.layer_sizes) for n, net in params.networks.items()}
        if want != header["layer_sizes"]:
            raise ContractViolation(
                f"checkpoint architecture {header['layer_sizes']} != current {want}")
        params.set_theta(out["theta"])
    return out
