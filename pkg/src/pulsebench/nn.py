"""Small dense-network toolkit in float64 numpy.

Layers keep the activations they need from the last train-mode forward pass
and turn an upstream gradient into parameter gradients plus an input
gradient. A :class:`Network` is a plain stack of layers.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

WEIGHTS_FORMAT = "pulsebench-weights-v1"
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
BCE_CLAMP = 1e-7


class ShapeError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


class CorruptWeightsError(ValueError):
    pass


@dataclass
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    init_seed: int = 0
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dims must be positive")
        if self.kind != "dense" and self.in_dim != self.out_dim:
            raise ValueError(f"{self.kind} layer must preserve its width")


class Layer:
    """Base class. Subclasses fill ``params`` (trainable) and ``buffers``."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, train):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(
                f"backward called on {self.spec.kind} layer before a train-mode forward pass"
            )
        return self._cache


class Dense(Layer):
    def __init__(self, spec):
        super().__init__(spec)
        a = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        rng = np.random.default_rng(spec.init_seed)
        self.params["weight"] = rng.uniform(-a, a, size=(spec.out_dim, spec.in_dim))
        self.params["bias"] = np.zeros(spec.out_dim)

    def forward(self, x, train):
        if train:
            self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        x = self._need_cache()
        self.grads["weight"] = grad.T @ x
        self.grads["bias"] = grad.sum(axis=0)
        return grad @ self.params["weight"]


class BatchNorm(Layer):
    def __init__(self, spec):
        super().__init__(spec)
        n = spec.in_dim
        self.params["gamma"] = np.ones(n)
        self.params["beta"] = np.zeros(n)
        self.buffers["running_mean"] = np.zeros(n)
        self.buffers["running_var"] = np.ones(n)

    def forward(self, x, train):
        if not train:
            scale = self.params["gamma"] / np.sqrt(self.buffers["running_var"] + BN_EPS)
            return (x - self.buffers["running_mean"]) * scale + self.params["beta"]
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mu) * inv_std
        n = x.shape[0]
        unbiased = var * n / (n - 1) if n > 1 else var
        rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
        rm *= 1.0 - BN_MOMENTUM
        rm += BN_MOMENTUM * mu
        rv *= 1.0 - BN_MOMENTUM
        rv += BN_MOMENTUM * unbiased
        self._cache = (xhat, inv_std)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, grad):
        xhat, inv_std = self._need_cache()
        self.grads["gamma"] = (grad * xhat).sum(axis=0)
        self.grads["beta"] = grad.sum(axis=0)
        g = grad * self.params["gamma"]
        n = grad.shape[0]
        return inv_std / n * (n * g - g.sum(axis=0) - xhat * (g * xhat).sum(axis=0))


class ReLU(Layer):
    def forward(self, x, train):
        if train:
            self._cache = x > 0
        return np.maximum(x, 0.0)

    def backward(self, grad):
        return grad * self._need_cache()


class LeakyReLU(Layer):
    def forward(self, x, train):
        if train:
            self._cache = x > 0
        return np.where(x > 0, x, self.spec.slope * x)

    def backward(self, grad):
        pos = self._need_cache()
        return np.where(pos, grad, self.spec.slope * grad)


class Sigmoid(Layer):
    def forward(self, x, train):
        y = 0.5 * (1.0 + np.tanh(0.5 * x))
        if train:
            self._cache = y
        return y

    def backward(self, grad):
        y = self._need_cache()
        return grad * y * (1.0 - y)


class Tanh(Layer):
    def forward(self, x, train):
        y = np.tanh(x)
        if train:
            self._cache = y
        return y

    def backward(self, grad):
        y = self._need_cache()
        return grad * (1.0 - y * y)


LAYER_KINDS = {
    "dense": Dense,
    "batchnorm": BatchNorm,
    "relu": ReLU,
    "leaky_relu": LeakyReLU,
    "sigmoid": Sigmoid,
    "tanh": Tanh,
}


def build_layer(spec: LayerSpec) -> Layer:
    return LAYER_KINDS[spec.kind](spec)


class Network:
    """An ordered stack of layers with a shared seed."""

    def __init__(self, specs: list[LayerSpec], seed: int = 0, role: str = ""):
        if not specs:
            raise ValueError("network needs at least one layer")
        for i in range(1, len(specs)):
            if specs[i].in_dim != specs[i - 1].out_dim:
                raise ShapeError(
                    f"layer {i} expects width {specs[i].in_dim}, previous layer gives {specs[i - 1].out_dim}"
                )
        self.specs = list(specs)
        self.seed = seed
        self.role = role
        self.layers = [build_layer(s) for s in self.specs]
        self._trained_forward = False

    @classmethod
    def mlp(cls, widths, seed=0, hidden=("leaky_relu",), batchnorm=False,
            output=None, slope=0.01, role=""):
        """Dense stack over ``widths``; ``hidden`` layers follow every dense but the last."""
        seeds = np.random.SeedSequence(seed).generate_state(len(widths) - 1)
        specs = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            specs.append(LayerSpec("dense", a, b, int(seeds[i])))
            last = i == len(widths) - 2
            if last:
                if output:
                    specs.append(LayerSpec(output, b, b, slope=slope))
                continue
            if batchnorm:
                specs.append(LayerSpec("batchnorm", b, b))
            for kind in hidden:
                specs.append(LayerSpec(kind, b, b, slope=slope))
        return cls(specs, seed=seed, role=role)

    @property
    def in_dim(self):
        return self.specs[0].in_dim

    @property
    def out_dim(self):
        return self.specs[-1].out_dim

    def forward(self, x, mode="infer"):
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        train = mode == "train"
        for i, layer in enumerate(self.layers):
            if x.shape[1] != layer.spec.in_dim:
                raise ShapeError(
                    f"layer {i} ({layer.spec.kind}) expects width {layer.spec.in_dim}, got {x.shape[1]}"
                )
            x = layer.forward(x, train)
        self._trained_forward = train
        return x[0] if squeeze else x

    def backward(self, grad):
        """Back-propagate ``grad`` (d loss / d output); returns d loss / d input."""
        if not self._trained_forward:
            raise RuntimeError("backward requires a preceding forward(..., mode='train')")
        grad = np.asarray(grad, dtype=np.float64)
        squeeze = grad.ndim == 1
        if squeeze:
            grad = grad[None, :]
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad[0] if squeeze else grad

    def parameters(self):
        """(layer index, name, array) for every trainable array, in layer order."""
        return [(i, k, v) for i, l in enumerate(self.layers) for k, v in l.params.items()]

    def gradients(self):
        out = []
        for i, l in enumerate(self.layers):
            for k in l.params:
                if k not in l.grads:
                    raise RuntimeError("no gradient yet; call backward first")
                out.append(l.grads[k])
        return out

    def state_arrays(self):
        """All serialized arrays in file order: weights before biases, BN gamma/beta/mean/var."""
        out = []
        for l in self.layers:
            if l.spec.kind == "dense":
                out += [l.params["weight"], l.params["bias"]]
            elif l.spec.kind == "batchnorm":
                out += [l.params["gamma"], l.params["beta"],
                        l.buffers["running_mean"], l.buffers["running_var"]]
        return out

    def n_params(self, include_buffers=False):
        n = sum(v.size for _, _, v in self.parameters())
        if include_buffers:
            n += sum(b.size for l in self.layers for b in l.buffers.values())
        return n

    def copy(self):
        net = Network(self.specs, self.seed, self.role)
        for dst, src in zip(net.state_arrays(), self.state_arrays()):
            dst[...] = src
        return net


def mse_loss(pred, target):
    """Mean over rows of the squared error norm, with its gradient."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    k = pred.shape[0] if pred.ndim else 1
    diff = pred - target
    return float(np.sum(diff * diff) / k), 2.0 * diff / k


def bce_loss(score, label):
    """Binary cross-entropy averaged over items; label 1 = real, 0 = fake.

    Scores are clamped to [1e-7, 1 - 1e-7]. The returned gradient is taken
    w.r.t. the (unclamped) score and is zero where the clamp is active.
    """
    s = np.asarray(score, dtype=np.float64)
    y = np.broadcast_to(np.asarray(label, dtype=np.float64), s.shape)
    k = s.shape[0] if s.ndim else 1
    c = np.clip(s, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(y * np.log(c) + (1.0 - y) * np.log1p(-c))
    grad = -(y / c - (1.0 - y) / (1.0 - c)) / k
    grad = np.where((s < BCE_CLAMP) | (s > 1.0 - BCE_CLAMP), 0.0, grad)
    return float(loss.sum() / k), grad


@dataclass
class SGD:
    """SGD with classical momentum and L2 weight decay.

    v <- momentum * v - lr * (g + weight_decay * p);  p <- p + v
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")

    def step(self, params, grads):
        if not self.velocity:
            self.velocity = [np.zeros_like(p) for p in params]
        if len(grads) != len(params) or len(self.velocity) != len(params):
            raise ShapeError("parameter, gradient and velocity lists differ in length")
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite gradient in parameter array {i}")
        for p, g, v in zip(params, grads, self.velocity):
            if p.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            v *= self.momentum
            v -= self.learning_rate * (g + self.weight_decay * p)
            p += v

    def step_network(self, net: Network):
        self.step([p for _, _, p in net.parameters()], net.gradients())


def train_step(net, opt, x, target, loss=mse_loss):
    """One forward/backward/update on a batch; returns the batch loss."""
    out = net.forward(x, "train")
    value, g = loss(out, target)
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss {value}")
    net.backward(g)
    opt.step_network(net)
    return value


def minibatches(n, batch_size, rng, drop_singleton=True):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        idx = order[i:i + batch_size]
        # batchnorm statistics are undefined on one row
        if drop_singleton and len(idx) == 1 and n > 1:
            continue
        yield idx


# --------------------------------------------------------------------------
# gradient checking

def _flat_params(net):
    return [p for _, _, p in net.parameters()]


def numeric_gradient(f, array, index, eps=1e-6):
    old = array[index]
    array[index] = old + eps
    up = f()
    array[index] = old - eps
    down = f()
    array[index] = old
    return (up - down) / (2 * eps)


def relative_error(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(net, x, loss_fn, eps=1e-6, max_coords=24, seed=0, mode="train", stats=None):
    """Compare backprop against central differences.

    ``loss_fn(output) -> (value, grad)``. Up to ``max_coords`` entries of each
    parameter array (and of the input) are perturbed; larger arrays are
    sampled. Returns the worst relative error ||analytic - fd|| / max(||analytic||,
    ||fd||) over all arrays whose gradient is resolvable, i.e. larger than the
    finite-difference resolution 4 ulp(loss) / eps per coordinate. Arrays below
    that resolution (a dense bias feeding batch-norm has an exactly zero
    gradient) can only be checked absolutely: they contribute 0 if analytic
    and numeric values agree within the resolution and ``inf`` otherwise.

    In train mode, a coordinate whose +-eps step flips the sign of any
    (leaky) ReLU input straddles a kink, where no derivative exists; it is
    skipped. Pass a dict as ``stats`` to receive ``checked`` and ``skipped``
    coordinate counts.
    """
    rng = np.random.default_rng(seed)
    saved = [b.copy() for l in net.layers for b in l.buffers.values()]
    kinked = [l for l in net.layers if isinstance(l, (ReLU, LeakyReLU))]

    def restore():
        for dst, src in zip((b for l in net.layers for b in l.buffers.values()), saved):
            dst[...] = src

    def signs():
        return [l._cache.copy() for l in kinked if l._cache is not None]

    x = np.array(x, dtype=np.float64)
    out = net.forward(x, mode)
    base_signs = signs()
    _, g = loss_fn(out)
    gx = net.backward(g)
    analytic = [gr.copy() for gr in net.gradients()]
    restore()

    def f():
        v = loss_fn(net.forward(x, mode))[0]
        restore()
        return v, signs()

    def same(a, b):
        return all(np.array_equal(u, v) for u, v in zip(a, b))

    resolution = 4 * np.spacing(abs(f()[0])) / eps
    worst = 0.0
    checked = skipped = 0
    for arr, ga in zip(_flat_params(net) + [x], analytic + [gx]):
        flat = arr.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= max_coords else rng.choice(n, max_coords, replace=False)
        keep, fd = [], []
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            up, s_up = f()
            flat[i] = old - eps
            down, s_down = f()
            flat[i] = old
            if not (same(s_up, base_signs) and same(s_down, base_signs)):
                skipped += 1
                continue
            keep.append(i)
            fd.append((up - down) / (2 * eps))
        checked += len(keep)
        if not keep:
            continue
        a = ga.reshape(-1)[keep]
        fd = np.array(fd)
        floor = resolution * np.sqrt(len(keep))
        if max(np.linalg.norm(a), np.linalg.norm(fd)) <= floor:
            err = 0.0 if np.linalg.norm(a - fd) <= floor else np.inf
        else:
            err = relative_error(a, fd)
        worst = max(worst, err)
    if stats is not None:
        stats["checked"] = stats.get("checked", 0) + checked
        stats["skipped"] = stats.get("skipped", 0) + skipped
    return worst


def directional_check(net, x, loss_fn, eps=1e-6, seed=0, mode="train"):
    """Directional derivative along a random unit direction in parameter space."""
    rng = np.random.default_rng(seed)
    saved = [b.copy() for l in net.layers for b in l.buffers.values()]

    def restore():
        for dst, src in zip((b for l in net.layers for b in l.buffers.values()), saved):
            dst[...] = src

    params = _flat_params(net)
    out = net.forward(x, mode)
    net.backward(loss_fn(out)[1])
    grads = [g.copy() for g in net.gradients()]
    restore()
    dirs = [rng.standard_normal(p.shape) for p in params]
    norm = np.sqrt(sum(np.sum(d * d) for d in dirs))
    dirs = [d / norm for d in dirs]
    analytic = sum(np.sum(g * d) for g, d in zip(grads, dirs))

    def shifted(t):
        for p, d in zip(params, dirs):
            p += t * d
        v = loss_fn(net.forward(x, mode))[0]
        for p, d in zip(params, dirs):
            p -= t * d
        restore()
        return v

    fd = (shifted(eps) - shifted(-eps)) / (2 * eps)
    return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-12)


# --------------------------------------------------------------------------
# weights file: one JSON header line, then little-endian float64 blob

def save_params(net: Network, path, extra=None):
    arrays = net.state_arrays()
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    header = {
        "format": WEIGHTS_FORMAT,
        "role": net.role,
        "seed": net.seed,
        "layers": [asdict(s) for s in net.specs],
        "byte_count": len(blob),
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(blob)


def read_header(path):
    with open(path, "rb") as fh:
        line = fh.readline()
        rest = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptWeightsError(f"{path}: unreadable header ({exc})") from None
    if not isinstance(header, dict) or header.get("format") != WEIGHTS_FORMAT:
        raise CorruptWeightsError(f"{path}: not a {WEIGHTS_FORMAT} file")
    return header, rest


def load_params(path):
    """Load a network saved by :func:`save_params`. Returns (network, extra)."""
    header, blob = read_header(path)
    try:
        specs = [LayerSpec(**s) for s in header["layers"]]
        net = Network(specs, seed=header["seed"], role=header.get("role", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptWeightsError(f"{path}: bad layer specs ({exc})") from None
    arrays = net.state_arrays()
    expected = 8 * sum(a.size for a in arrays)
    declared = header.get("byte_count")
    if declared != expected:
        raise CorruptWeightsError(
            f"{path}: header declares {declared} bytes but layer specs need {expected} bytes"
        )
    if len(blob) != expected:
        raise CorruptWeightsError(
            f"{path}: truncated or oversized blob: expected {expected} bytes, found {len(blob)}"
        )
    values = np.frombuffer(blob, dtype="<f8")
    if not np.all(np.isfinite(values)):
        raise CorruptWeightsError(f"{path}: blob holds non-finite values")
    pos = 0
    for a in arrays:
        a[...] = values[pos:pos + a.size].reshape(a.shape)
        pos += a.size
    return net, header.get("extra", {})


def params_digest(net):
    """Stable hash of all serialized arrays."""
    import hashlib

    h = hashlib.sha256()
    for a in net.state_arrays():
        h.update(struct.pack("<q", a.size))
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()
