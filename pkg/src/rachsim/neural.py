"""Minimal neural layer stack: dense layers, an LSTM cell, losses and Adam.

Everything is float64 numpy with hand-written reverse-mode gradients, so the
whole stack is bitwise reproducible and cheap to verify against finite
differences.  Networks are built from RngStream-driven Xavier-uniform
initialization and serialize to the RACHNN1 checkpoint format.
"""
import math
import struct

import numpy as np

ACTIVATIONS = ("identity", "relu", "tanh")
CHECKPOINT_MAGIC = b"RACHNN1"


class NumericError(FloatingPointError):
    """A parameter went NaN/Inf during training."""


def _xavier(rng, rows, cols, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    w = np.empty((rows, cols))
    flat = w.reshape(-1)
    for k in range(flat.size):
        flat[k] = rng.uniform(-limit, limit)
    return w


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


class Dense:
    """Fully connected layer: activation(x @ W.T + b)."""

    kind = "dense"

    def __init__(self, in_dim, out_dim, activation="identity", rng=None, weights=None, bias=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        if weights is not None:
            self.W = np.array(weights, dtype=float).reshape(out_dim, in_dim)
        else:
            self.W = _xavier(rng, out_dim, in_dim, in_dim, out_dim)
        self.b = np.zeros(out_dim) if bias is None else np.array(bias, dtype=float).reshape(out_dim)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def forward(self, x):
        x, squeeze = _as_batch(x)
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got {x.shape[1]}")
        z = x @ self.W.T + self.b
        if self.activation == "relu":
            a = np.maximum(z, 0.0)
        elif self.activation == "tanh":
            a = np.tanh(z)
        else:
            a = z
        self._cache = (x, z, a)
        return a[0] if squeeze else a

    def backward(self, grad):
        x, z, a = self._cache
        grad, _ = _as_batch(grad)
        if self.activation == "relu":
            dz = grad * (z > 0.0)
        elif self.activation == "tanh":
            dz = grad * (1.0 - a * a)
        else:
            dz = grad
        self.dW += dz.T @ x
        self.db += dz.sum(axis=0)
        return dz @ self.W

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def zero_grad(self):
        self.dW[...] = 0.0
        self.db[...] = 0.0


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


class LSTMCell:
    """Standard LSTM cell; the four gates share one (4H, D+H) weight matrix
    with row blocks ordered input, forget, candidate, output."""

    kind = "lstm"

    def __init__(self, input_dim, hidden_dim, rng=None, weights=None, bias=None):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        width = input_dim + hidden_dim
        if weights is not None:
            self.W = np.array(weights, dtype=float).reshape(4 * hidden_dim, width)
        else:
            self.W = _xavier(rng, 4 * hidden_dim, width, width, hidden_dim)
        if bias is not None:
            self.b = np.array(bias, dtype=float).reshape(4 * hidden_dim)
        else:
            self.b = np.zeros(4 * hidden_dim)
            self.b[hidden_dim : 2 * hidden_dim] = 1.0  # forget-gate bias: remember by default
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def step(self, x, h, c):
        """One time step; returns (h', c', cache for backward_step)."""
        hd = self.hidden_dim
        xh = np.concatenate([x, h], axis=1)
        z = xh @ self.W.T + self.b
        gi = _sigmoid(z[:, :hd])
        gf = _sigmoid(z[:, hd : 2 * hd])
        gg = np.tanh(z[:, 2 * hd : 3 * hd])
        go = _sigmoid(z[:, 3 * hd :])
        c2 = gf * c + gi * gg
        tc = np.tanh(c2)
        h2 = go * tc
        cache = (xh, c, gi, gf, gg, go, tc)
        return h2, c2, cache

    def backward_step(self, cache, dh, dc):
        """Backward through one step given d(h'), d(c'); accumulates weight
        gradients and returns (dx, dh_prev, dc_prev)."""
        xh, c_prev, gi, gf, gg, go, tc = cache
        do = dh * tc
        dct = dc + dh * go * (1.0 - tc * tc)
        di = dct * gg
        df = dct * c_prev
        dg = dct * gi
        dc_prev = dct * gf
        dz = np.concatenate(
            [
                di * gi * (1.0 - gi),
                df * gf * (1.0 - gf),
                dg * (1.0 - gg * gg),
                do * go * (1.0 - go),
            ],
            axis=1,
        )
        self.dW += dz.T @ xh
        self.db += dz.sum(axis=0)
        dxh = dz @ self.W
        return dxh[:, : self.input_dim], dxh[:, self.input_dim :], dc_prev

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def zero_grad(self):
        self.dW[...] = 0.0
        self.db[...] = 0.0


class MLP:
    """A plain stack of dense layers."""

    def __init__(self, dims=None, hidden_activation="relu", out_activation="identity", rng=None, layers=None):
        if layers is not None:
            self.layers = list(layers)
        else:
            self.layers = []
            for i in range(len(dims) - 1):
                act = out_activation if i == len(dims) - 2 else hidden_activation
                self.layers.append(Dense(dims[i], dims[i + 1], act, rng=rng))

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads()]

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def checkpoint_layers(self):
        return list(self.layers)


class LSTMRegressor:
    """LSTM over a feature window followed by a dense head on the final
    hidden state; predicts one scalar per window."""

    def __init__(self, input_dim=None, hidden_dim=None, rng=None, cell=None, head=None):
        self.cell = cell if cell is not None else LSTMCell(input_dim, hidden_dim, rng=rng)
        self.head = head if head is not None else Dense(self.cell.hidden_dim, 1, "identity", rng=rng)
        self._caches = None
        self._batch = 0

    def forward(self, windows):
        w = np.asarray(windows, dtype=float)
        squeeze = w.ndim == 2
        if squeeze:
            w = w[None, :, :]
        batch, steps, width = w.shape
        if width != self.cell.input_dim:
            raise ValueError(f"expected feature width {self.cell.input_dim}, got {width}")
        h = np.zeros((batch, self.cell.hidden_dim))
        c = np.zeros_like(h)
        caches = []
        for t in range(steps):
            h, c, cache = self.cell.step(w[:, t, :], h, c)
            caches.append(cache)
        self._caches = caches
        self._batch = batch
        out = self.head.forward(h)[:, 0]
        return out[0] if squeeze else out

    def backward(self, dpred):
        dpred = np.atleast_1d(np.asarray(dpred, dtype=float))
        dh = self.head.backward(dpred[:, None])
        dc = np.zeros((self._batch, self.cell.hidden_dim))
        for cache in reversed(self._caches):
            _, dh, dc = self.cell.backward_step(cache, dh, dc)

    def params(self):
        return self.cell.params() + self.head.params()

    def grads(self):
        return self.cell.grads() + self.head.grads()

    def zero_grad(self):
        self.cell.zero_grad()
        self.head.zero_grad()

    def checkpoint_layers(self):
        return [self.cell, self.head]


def mse_loss(pred, target):
    """Mean squared error; returns (value, gradient w.r.t. pred)."""
    pred = np.atleast_1d(np.asarray(pred, dtype=float))
    target = np.asarray(target, dtype=float).reshape(pred.shape)
    err = pred - target
    return float(np.mean(err * err)), 2.0 * err / err.size


def huber_loss(pred, target, delta=1.0):
    """Huber loss (quadratic within delta, linear outside)."""
    pred = np.atleast_1d(np.asarray(pred, dtype=float))
    target = np.asarray(target, dtype=float).reshape(pred.shape)
    err = pred - target
    a = np.abs(err)
    quad = a <= delta
    value = np.where(quad, 0.5 * err * err, delta * (a - 0.5 * delta))
    grad = np.clip(err, -delta, delta) / err.size
    return float(np.mean(value)), grad


LOSSES = {"mse": mse_loss, "huber": huber_loss}


def network_gradients(net, loss, inputs, targets):
    """Gradients of the mean loss over a batch w.r.t. every parameter.

    Returns (loss value, list of gradient arrays aligned with net.params()).
    """
    loss_fn = LOSSES[loss] if isinstance(loss, str) else loss
    net.zero_grad()
    pred = net.forward(inputs)
    value, dpred = loss_fn(pred, targets)
    net.backward(dpred)
    return value, net.grads()


class Adam:
    """Adam with bias correction; asserts parameter finiteness every step."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        with np.errstate(invalid="ignore", over="ignore"):
            for p, g, m, v in zip(params, grads, self.m, self.v):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
                if not np.all(np.isfinite(p)):
                    raise NumericError("non-finite parameter after Adam update")


# --- RACHNN1 checkpoint format -------------------------------------------
#
# magic "RACHNN1" | u32 layer count | per layer: u8 kind (0 dense, 1 lstm)
#   dense: u8 activation code, u32 out_dim, u32 in_dim
#   lstm:  u32 hidden_dim, u32 input_dim
# then all parameters (per layer: W row-major, then bias) as little-endian
# IEEE binary64.

_ACT_CODE = {"identity": 0, "relu": 1, "tanh": 2}
_ACT_NAME = {v: k for k, v in _ACT_CODE.items()}


def save_network(net, path):
    layers = net.checkpoint_layers()
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(layers))]
    for layer in layers:
        if layer.kind == "dense":
            parts.append(struct.pack("<BBII", 0, _ACT_CODE[layer.activation], layer.out_dim, layer.in_dim))
        else:
            parts.append(struct.pack("<BII", 1, layer.hidden_dim, layer.input_dim))
    for layer in layers:
        for p in layer.params():
            parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_network(path):
    """Rebuild an MLP or LSTMRegressor from a RACHNN1 checkpoint."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a RACHNN1 checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    specs = []
    for _ in range(count):
        kind = blob[off]
        off += 1
        if kind == 0:
            act, out_dim, in_dim = struct.unpack_from("<BII", blob, off)
            off += 9
            specs.append(("dense", _ACT_NAME[act], out_dim, in_dim))
        elif kind == 1:
            hidden, input_dim = struct.unpack_from("<II", blob, off)
            off += 8
            specs.append(("lstm", hidden, input_dim))
        else:
            raise ValueError(f"{path}: unknown layer kind {kind}")

    def take(n):
        nonlocal off
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(float)
        off += 8 * n
        return arr

    layers = []
    for spec in specs:
        if spec[0] == "dense":
            _, act, out_dim, in_dim = spec
            w = take(out_dim * in_dim)
            b = take(out_dim)
            layers.append(Dense(in_dim, out_dim, act, weights=w, bias=b))
        else:
            _, hidden, input_dim = spec
            w = take(4 * hidden * (input_dim + hidden))
            b = take(4 * hidden)
            layers.append(LSTMCell(input_dim, hidden, weights=w, bias=b))
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    if specs[0][0] == "lstm":
        if len(layers) != 2:
            raise ValueError(f"{path}: expected lstm + head layout")
        return LSTMRegressor(cell=layers[0], head=layers[1])
    return MLP(layers=layers)
