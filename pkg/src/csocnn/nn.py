"""Minimal layer library for the compact 2D convolutional flow classifier.

Implements exactly the layer kinds the classifier needs (Input, Conv2D,
BatchNorm, MaxPool2D, Flatten, Dense) with forward and backward passes on
numpy arrays in channels-last (N, H, W, C) layout. Convolutions are stride-1;
pooling strides by its own kernel. The final Dense layer carries a softmax so
the network emits per-sample class probabilities directly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import LabelError, ShapeError, StateError
from .tensor import Tensor, as_array

LAYER_KINDS = ("Input", "Conv2D", "BatchNorm", "MaxPool2D", "Flatten", "Dense")
ACTIVATIONS = ("relu", "softmax", "none")
PADDINGS = ("valid", "same")

BN_EPSILON = 1e-3
# Running stats must converge within the few dozen updates a desk-scale
# run performs; 0.9 reaches ~99.8% in 60 steps where 0.99 sits at ~45%.
BN_MOMENTUM = 0.9
LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    kernel applies to Conv2D/MaxPool2D only; filters_or_units to Conv2D
    (filter count) and Dense (unit count). The activation runs after the
    layer's main operation.
    """

    kind: str
    kernel: tuple | None = None
    filters_or_units: int | None = None
    padding: str = "valid"
    activation: str = "none"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.padding not in PADDINGS:
            raise ShapeError(f"unknown padding {self.padding!r}")
        if self.kind in ("Conv2D", "MaxPool2D"):
            if self.kernel is None:
                raise ShapeError(f"{self.kind} requires a kernel")
            kh, kw = self.kernel
            if kh < 1 or kw < 1:
                raise ShapeError(f"kernel dimensions must be >= 1, got {self.kernel}")
        if self.kind in ("Conv2D", "Dense"):
            if self.filters_or_units is None or self.filters_or_units < 1:
                raise ShapeError(f"{self.kind} requires filters_or_units >= 1")


def input_layer():
    return LayerSpec("Input")


def conv2d(filters, kernel, padding="valid", activation="none"):
    return LayerSpec("Conv2D", kernel=tuple(kernel), filters_or_units=filters,
                     padding=padding, activation=activation)


def batch_norm(activation="none"):
    return LayerSpec("BatchNorm", activation=activation)


def max_pool2d(kernel, padding="same"):
    return LayerSpec("MaxPool2D", kernel=tuple(kernel), padding=padding)


def flatten():
    return LayerSpec("Flatten")


def dense(units, activation="none"):
    return LayerSpec("Dense", filters_or_units=units, activation=activation)


def default_architecture(num_classes=5):
    """The compact conv stack used for 75-dimensional flow features."""
    return [
        input_layer(),
        conv2d(64, (6, 1)),
        batch_norm(activation="relu"),
        max_pool2d((2, 1)),
        conv2d(64, (3, 1)),
        batch_norm(activation="relu"),
        max_pool2d((2, 1)),
        conv2d(64, (3, 1)),
        batch_norm(activation="relu"),
        max_pool2d((2, 1)),
        flatten(),
        dense(64, activation="relu"),
        dense(32, activation="relu"),
        dense(num_classes, activation="softmax"),
    ]


def infer_shapes(layers, input_shape):
    """Propagate the input shape through a layer sequence.

    Returns one output shape per layer. Conv2D is stride-1 (valid: out =
    in - kernel + 1; same: out = in); MaxPool2D strides by its kernel
    (same: out = ceil(in / kernel); valid: out = floor(in / kernel)).
    Raises ShapeError when a dimension would become non-positive or a layer
    is applied to an input of the wrong rank.
    """
    input_shape = tuple(int(s) for s in input_shape)
    if not layers or layers[0].kind != "Input":
        raise ShapeError("layer sequence must begin with Input")
    if any(s <= 0 for s in input_shape):
        raise ShapeError(f"non-positive input dimension in {input_shape}")

    shapes = []
    shape = input_shape
    for idx, spec in enumerate(layers):
        if spec.kind == "Input":
            if idx != 0:
                raise ShapeError("Input layer only allowed at position 0")
        elif spec.kind == "Conv2D":
            if len(shape) != 3:
                raise ShapeError(f"Conv2D needs rank-3 input, got {shape}")
            h, w, _ = shape
            kh, kw = spec.kernel
            if spec.padding == "valid":
                oh, ow = h - kh + 1, w - kw + 1
            else:
                oh, ow = h, w
            if oh <= 0 or ow <= 0:
                raise ShapeError(
                    f"Conv2D kernel {spec.kernel} does not fit input {shape}")
            shape = (oh, ow, spec.filters_or_units)
        elif spec.kind == "BatchNorm":
            if len(shape) != 3:
                raise ShapeError(f"BatchNorm needs rank-3 input, got {shape}")
        elif spec.kind == "MaxPool2D":
            if len(shape) != 3:
                raise ShapeError(f"MaxPool2D needs rank-3 input, got {shape}")
            h, w, c = shape
            kh, kw = spec.kernel
            if spec.padding == "same":
                oh, ow = math.ceil(h / kh), math.ceil(w / kw)
            else:
                oh, ow = h // kh, w // kw
            if oh <= 0 or ow <= 0:
                raise ShapeError(
                    f"MaxPool2D kernel {spec.kernel} does not fit input {shape}")
            shape = (oh, ow, c)
        elif spec.kind == "Flatten":
            shape = (int(np.prod(shape)),)
        elif spec.kind == "Dense":
            if len(shape) != 1:
                raise ShapeError(f"Dense needs rank-1 input, got {shape}")
            shape = (spec.filters_or_units,)
        shapes.append(shape)
    return shapes


def parameter_breakdown(layers, input_shape):
    """Per-layer (total, trainable, non_trainable) parameter counts."""
    shapes = infer_shapes(layers, input_shape)
    rows = []
    prev = tuple(input_shape)
    for spec, shape in zip(layers, shapes):
        if spec.kind == "Conv2D":
            kh, kw = spec.kernel
            in_ch = prev[-1]
            n = spec.filters_or_units * (kh * kw * in_ch + 1)
            rows.append((n, n, 0))
        elif spec.kind == "BatchNorm":
            c = prev[-1]
            rows.append((4 * c, 2 * c, 2 * c))
        elif spec.kind == "Dense":
            n = prev[0] * spec.filters_or_units + spec.filters_or_units
            rows.append((n, n, 0))
        else:
            rows.append((0, 0, 0))
        prev = shape
    return rows


def count_params(network):
    """Total, trainable, and non-trainable parameter counts of a network."""
    rows = parameter_breakdown(network.layers, network.input_shape)
    total = sum(r[0] for r in rows)
    trainable = sum(r[1] for r in rows)
    return total, trainable, total - trainable


class Network:
    """A layer sequence plus its parameter and running-stat tensors.

    Parameters are Glorot-uniform initialized from the seed; BatchNorm
    starts at scale 1 / shift 0 with zero running mean and unit running
    variance. Instances are value-like: clone() gives an independent copy
    safe to train on another thread.
    """

    def __init__(self, layers, input_shape, seed=0, dtype=np.float32):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.dtype = np.dtype(dtype)
        self.shapes = infer_shapes(self.layers, self.input_shape)
        self.mode = "train"
        self.params = {}
        self.bn_stats = {}
        self._forward_version = 0

        rng = np.random.default_rng(seed)
        prev = self.input_shape
        for i, spec in enumerate(self.layers):
            if spec.kind == "Conv2D":
                kh, kw = spec.kernel
                in_ch, f = prev[-1], spec.filters_or_units
                fan_in, fan_out = kh * kw * in_ch, kh * kw * f
                limit = math.sqrt(6.0 / (fan_in + fan_out))
                self.params[f"{i}.kernel"] = rng.uniform(
                    -limit, limit, (kh, kw, in_ch, f)).astype(self.dtype)
                self.params[f"{i}.bias"] = np.zeros(f, dtype=self.dtype)
            elif spec.kind == "BatchNorm":
                c = prev[-1]
                self.params[f"{i}.gamma"] = np.ones(c, dtype=self.dtype)
                self.params[f"{i}.beta"] = np.zeros(c, dtype=self.dtype)
                self.bn_stats[f"{i}.mean"] = np.zeros(c, dtype=self.dtype)
                self.bn_stats[f"{i}.var"] = np.ones(c, dtype=self.dtype)
            elif spec.kind == "Dense":
                n_in, n_out = prev[0], spec.filters_or_units
                limit = math.sqrt(6.0 / (n_in + n_out))
                self.params[f"{i}.weight"] = rng.uniform(
                    -limit, limit, (n_in, n_out)).astype(self.dtype)
                self.params[f"{i}.bias"] = np.zeros(n_out, dtype=self.dtype)
            prev = self.shapes[i]

    @property
    def num_classes(self):
        return self.shapes[-1][0]

    def clone(self):
        other = Network.__new__(Network)
        other.layers = list(self.layers)
        other.input_shape = self.input_shape
        other.dtype = self.dtype
        other.shapes = list(self.shapes)
        other.mode = self.mode
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.bn_stats = {k: v.copy() for k, v in self.bn_stats.items()}
        other._forward_version = 0
        return other

    def astype(self, dtype):
        """Copy of the network with all tensors cast (e.g. float64 for
        gradient checking)."""
        other = self.clone()
        other.dtype = np.dtype(dtype)
        other.params = {k: v.astype(dtype) for k, v in other.params.items()}
        other.bn_stats = {k: v.astype(dtype) for k, v in other.bn_stats.items()}
        return other


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0)
    if activation == "softmax":
        return _softmax(z)
    return z


def _conv_pad(x, kh, kw, padding):
    if padding == "valid":
        return x, (0, 0)
    ph, pw = kh - 1, kw - 1
    before_h, before_w = ph // 2, pw // 2
    x = np.pad(x, ((0, 0), (before_h, ph - before_h),
                   (before_w, pw - before_w), (0, 0)))
    return x, (before_h, before_w)


def _im2col(x, kh, kw):
    n, h, w, c = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    cols = np.empty((n, oh, ow, kh * kw * c), dtype=x.dtype)
    slot = 0
    for i in range(kh):
        for j in range(kw):
            cols[..., slot * c:(slot + 1) * c] = x[:, i:i + oh, j:j + ow, :]
            slot += 1
    return cols


def _col2im(dcols, x_shape, kh, kw):
    n, h, w, c = x_shape
    oh, ow = h - kh + 1, w - kw + 1
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    slot = 0
    for i in range(kh):
        for j in range(kw):
            dx[:, i:i + oh, j:j + ow, :] += dcols[..., slot * c:(slot + 1) * c]
            slot += 1
    return dx


def _pool_pad(x, kh, kw, padding):
    n, h, w, c = x.shape
    if padding == "same":
        oh, ow = math.ceil(h / kh), math.ceil(w / kw)
    else:
        oh, ow = h // kh, w // kw
        x = x[:, :oh * kh, :ow * kw, :]
        return x, oh, ow, (0, 0)
    total_h, total_w = oh * kh - h, ow * kw - w
    bh, bw = total_h // 2, total_w // 2
    if total_h or total_w:
        x = np.pad(x, ((0, 0), (bh, total_h - bh), (bw, total_w - bw), (0, 0)),
                   constant_values=-np.inf)
    return x, oh, ow, (bh, bw)


def forward(network, batch, mode=None):
    """Run a batch through the network.

    Returns (probabilities, cache). In train mode BatchNorm normalizes with
    batch statistics and updates its running stats; in inference mode it uses
    the stored running stats and the call has no side effects. The cache
    feeds backward() and is only produced meaningfully in train mode.
    """
    mode = mode or network.mode
    if mode not in ("train", "inference"):
        raise ValueError(f"mode must be 'train' or 'inference', got {mode!r}")
    x = as_array(batch)
    if x.shape[1:] != network.input_shape:
        raise ShapeError(
            f"batch shape {x.shape} does not end with {network.input_shape}")
    x = x.astype(network.dtype, copy=False)

    if mode == "train":
        network._forward_version += 1
    layer_caches = []
    for i, spec in enumerate(network.layers):
        cache = {"x": x}
        if spec.kind == "Input":
            z = x
        elif spec.kind == "Conv2D":
            kh, kw = spec.kernel
            xp, _ = _conv_pad(x, kh, kw, spec.padding)
            cols = _im2col(xp, kh, kw)
            kmat = network.params[f"{i}.kernel"].reshape(-1, spec.filters_or_units)
            z = cols @ kmat + network.params[f"{i}.bias"]
            cache.update(cols=cols, padded_shape=xp.shape)
        elif spec.kind == "BatchNorm":
            gamma, beta = network.params[f"{i}.gamma"], network.params[f"{i}.beta"]
            if mode == "train":
                mean = x.mean(axis=(0, 1, 2))
                var = x.var(axis=(0, 1, 2))
                network.bn_stats[f"{i}.mean"] = (
                    BN_MOMENTUM * network.bn_stats[f"{i}.mean"]
                    + (1 - BN_MOMENTUM) * mean).astype(network.dtype)
                network.bn_stats[f"{i}.var"] = (
                    BN_MOMENTUM * network.bn_stats[f"{i}.var"]
                    + (1 - BN_MOMENTUM) * var).astype(network.dtype)
            else:
                mean = network.bn_stats[f"{i}.mean"]
                var = network.bn_stats[f"{i}.var"]
            std = np.sqrt(var + BN_EPSILON)
            xhat = (x - mean) / std
            z = gamma * xhat + beta
            cache.update(xhat=xhat, std=std)
        elif spec.kind == "MaxPool2D":
            kh, kw = spec.kernel
            xp, oh, ow, offsets = _pool_pad(x, kh, kw, spec.padding)
            n, _, _, c = xp.shape
            windows = (xp.reshape(n, oh, kh, ow, kw, c)
                       .transpose(0, 1, 3, 2, 4, 5)
                       .reshape(n, oh, ow, kh * kw, c))
            argmax = windows.argmax(axis=3)
            z = np.take_along_axis(windows, argmax[:, :, :, None, :], axis=3)[:, :, :, 0, :]
            cache.update(argmax=argmax, padded_shape=xp.shape, offsets=offsets)
        elif spec.kind == "Flatten":
            z = x.reshape(x.shape[0], -1)
        elif spec.kind == "Dense":
            z = x @ network.params[f"{i}.weight"] + network.params[f"{i}.bias"]
        cache["z"] = z
        x = _activate(z, spec.activation)
        cache["a"] = x
        layer_caches.append(cache)

    probs = x
    full_cache = {
        "mode": mode,
        "version": network._forward_version if mode == "train" else None,
        "layers": layer_caches,
        "probs": probs,
    }
    return Tensor(probs, checked=False), full_cache


def loss_sparse_ce(probs, labels):
    """Mean sparse categorical cross-entropy over a batch of probability rows.

    Probabilities are clamped to [1e-12, 1] before the log so saturated rows
    cannot produce -inf.
    """
    p = as_array(probs)
    y = np.asarray(labels)
    k = p.shape[-1]
    if y.size and (y.min() < 0 or y.max() >= k):
        raise LabelError(f"labels must lie in [0, {k})")
    picked = np.clip(p[np.arange(len(y)), y], LOG_CLAMP, 1.0)
    return float(-np.mean(np.log(picked)))


def backward(network, cache, true_labels):
    """Gradients of the mean sparse cross-entropy loss for every trainable
    parameter, given the cache of a train-mode forward on the same batch."""
    if cache["mode"] != "train":
        raise StateError("backward requires a train-mode forward cache")
    if cache["version"] != network._forward_version:
        raise StateError("cache is stale: another forward ran since it was built")
    if network.layers[-1].activation != "softmax":
        raise StateError("backward requires a softmax on the final layer")

    y = np.asarray(true_labels)
    probs = cache["probs"]
    n, k = probs.shape
    if y.shape != (n,):
        raise LabelError(f"expected {n} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise LabelError(f"labels must lie in [0, {k})")

    # Softmax + cross-entropy collapse to (p - onehot)/n at the final logits.
    grad = probs.copy()
    grad[np.arange(n), y] -= 1.0
    grad /= n

    grads = {}
    for i in range(len(network.layers) - 1, -1, -1):
        spec = network.layers[i]
        lc = cache["layers"][i]
        if i == len(network.layers) - 1:
            dz = grad
        elif spec.activation == "relu":
            dz = grad * (lc["z"] > 0)
        elif spec.activation == "softmax":
            raise StateError("softmax is only supported on the final layer")
        else:
            dz = grad
        x = lc["x"]
        if spec.kind == "Input":
            grad = dz
        elif spec.kind == "Conv2D":
            kh, kw = spec.kernel
            f = spec.filters_or_units
            cols = lc["cols"]
            kmat = network.params[f"{i}.kernel"].reshape(-1, f)
            grads[f"{i}.bias"] = dz.sum(axis=(0, 1, 2))
            grads[f"{i}.kernel"] = (
                cols.reshape(-1, cols.shape[-1]).T @ dz.reshape(-1, f)
            ).reshape(network.params[f"{i}.kernel"].shape)
            dcols = dz @ kmat.T
            dxp = _col2im(dcols, lc["padded_shape"], kh, kw)
            if spec.padding == "same":
                bh, bw = (kh - 1) // 2, (kw - 1) // 2
                grad = dxp[:, bh:bh + x.shape[1], bw:bw + x.shape[2], :]
            else:
                grad = dxp
        elif spec.kind == "BatchNorm":
            xhat, std = lc["xhat"], lc["std"]
            gamma = network.params[f"{i}.gamma"]
            m = x.shape[0] * x.shape[1] * x.shape[2]
            grads[f"{i}.gamma"] = (dz * xhat).sum(axis=(0, 1, 2))
            grads[f"{i}.beta"] = dz.sum(axis=(0, 1, 2))
            dxhat = dz * gamma
            s1 = dxhat.sum(axis=(0, 1, 2))
            s2 = (dxhat * xhat).sum(axis=(0, 1, 2))
            grad = (dxhat - (s1 + xhat * s2) / m) / std
        elif spec.kind == "MaxPool2D":
            kh, kw = spec.kernel
            argmax = lc["argmax"]
            pn, ph, pw, c = lc["padded_shape"]
            oh, ow = dz.shape[1], dz.shape[2]
            dwin = np.zeros((pn, oh, ow, kh * kw, c), dtype=dz.dtype)
            np.put_along_axis(dwin, argmax[:, :, :, None, :],
                              dz[:, :, :, None, :], axis=3)
            dxp = (dwin.reshape(pn, oh, ow, kh, kw, c)
                   .transpose(0, 1, 3, 2, 4, 5)
                   .reshape(pn, ph, pw, c))
            if spec.padding == "same":
                bh, bw = lc["offsets"]
                grad = dxp[:, bh:bh + x.shape[1], bw:bw + x.shape[2], :]
            else:
                # valid pooling dropped any trailing remainder; those inputs
                # get zero gradient
                grad = np.zeros_like(x)
                grad[:, :ph, :pw, :] = dxp
        elif spec.kind == "Flatten":
            grad = dz.reshape(x.shape)
        elif spec.kind == "Dense":
            grads[f"{i}.weight"] = x.T @ dz
            grads[f"{i}.bias"] = dz.sum(axis=0)
            grad = dz @ network.params[f"{i}.weight"].T
    return grads
