"""Layer specifications.

A layer is a frozen description (hyperparameters only).  Parameters live in
the owning :class:`~carewatch.nn.model.Model` under ``"<index>.<name>"`` keys,
so a layer object can be shared between models.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeError
from . import ops


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(int(np.prod(shape)), -limit, limit).reshape(shape)


@dataclass(frozen=True)
class Conv:
    ndim: int
    in_channels: int
    out_channels: int
    kernel: tuple
    stride: tuple = None
    padding: tuple = None

    kind = "conv"

    def __post_init__(self):
        if self.ndim not in (1, 2, 3):
            raise ShapeError(f"conv ndim must be 1, 2 or 3, got {self.ndim}")
        object.__setattr__(self, "kernel", ops.as_tuple(self.kernel, self.ndim, "kernel"))
        object.__setattr__(self, "stride", ops.as_tuple(1 if self.stride is None else self.stride, self.ndim, "stride"))
        object.__setattr__(self, "padding", ops.as_tuple(0 if self.padding is None else self.padding, self.ndim, "padding"))
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise ShapeError("conv kernel/stride must be >= 1 and padding >= 0")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("conv channel counts must be >= 1")

    @property
    def name(self):
        return f"conv{self.ndim}d"

    def output_shape(self, shape):
        if len(shape) != self.ndim + 1:
            raise ShapeError(f"{self.name} expects rank {self.ndim + 1} input (C, spatial), got {shape}")
        if shape[0] != self.in_channels:
            raise ShapeError(f"{self.name}: channel axis has {shape[0]}, expected {self.in_channels}")
        return (self.out_channels,) + ops.spatial_output(shape[1:], self.kernel, self.stride, self.padding, self.name)

    def param_shapes(self, shape):
        return {"kernel": (self.out_channels, self.in_channels) + self.kernel, "bias": (self.out_channels,)}

    def init(self, rng, shape):
        k = int(np.prod(self.kernel))
        kshape = self.param_shapes(shape)["kernel"]
        return {"kernel": _glorot(rng, kshape, self.in_channels * k, self.out_channels * k),
                "bias": np.zeros(self.out_channels)}, {}

    def forward(self, x, params, buffers, train):
        y = ops._conv_lifted(x, params["kernel"], params["bias"], self.stride, self.padding, self.ndim)
        return y, x, None

    def backward(self, dy, cache, params):
        dx, dk, db = ops.conv_backward(cache, params["kernel"], dy, self.stride, self.padding)
        return dx, {"kernel": dk, "bias": db}


@dataclass(frozen=True)
class MaxPool:
    ndim: int
    window: tuple
    stride: tuple = None

    kind = "maxpool"

    def __post_init__(self):
        object.__setattr__(self, "window", ops.as_tuple(self.window, self.ndim, "window"))
        stride = self.window if self.stride is None else self.stride
        object.__setattr__(self, "stride", ops.as_tuple(stride, self.ndim, "stride"))
        if min(self.window) < 1 or min(self.stride) < 1:
            raise ShapeError("pool window/stride must be >= 1")

    @property
    def name(self):
        return f"maxpool{self.ndim}d"

    def output_shape(self, shape):
        if len(shape) != self.ndim + 1:
            raise ShapeError(f"{self.name} expects rank {self.ndim + 1} input (C, spatial), got {shape}")
        return (shape[0],) + ops.spatial_output(shape[1:], self.window, self.stride, (0,) * self.ndim, self.name)

    def param_shapes(self, shape):
        return {}

    def init(self, rng, shape):
        return {}, {}

    def forward(self, x, params, buffers, train):
        y, arg = ops.maxpool_forward(x, self.window, self.stride)
        return y, (arg, x.shape), None

    def backward(self, dy, cache, params):
        arg, shape = cache
        return ops.maxpool_backward(dy, arg, shape, self.ndim), {}


@dataclass(frozen=True)
class BatchNorm:
    channels: int
    epsilon: float = 1e-5
    momentum: float = 0.9

    kind = "batchnorm"
    name = "batchnorm"

    def __post_init__(self):
        if self.channels < 1:
            raise ShapeError("batchnorm channels must be >= 1")
        if not self.epsilon > 0:
            raise ShapeError("batchnorm epsilon must be > 0")

    def output_shape(self, shape):
        if shape[0] != self.channels:
            raise ShapeError(f"batchnorm: channel axis has {shape[0]}, expected {self.channels}")
        return tuple(shape)

    def param_shapes(self, shape):
        return {"gamma": (self.channels,), "beta": (self.channels,)}

    def init(self, rng, shape):
        return ({"gamma": np.ones(self.channels), "beta": np.zeros(self.channels)},
                {"running_mean": np.zeros(self.channels), "running_var": np.ones(self.channels)})

    def forward(self, x, params, buffers, train):
        mode = "train" if train else "infer"
        y, rm, rv = ops.batchnorm_forward(x, params["gamma"], params["beta"], self.epsilon, mode,
                                          buffers["running_mean"], buffers["running_var"], self.momentum)
        if not train:
            return y, None, None
        axes = (0,) + tuple(range(2, x.ndim))
        bshape = (1, self.channels) + (1,) * (x.ndim - 2)
        mean = x.mean(axis=axes).reshape(bshape)
        inv = 1.0 / np.sqrt(x.var(axis=axes).reshape(bshape) + self.epsilon)
        xhat = (x - mean) * inv
        return y, (xhat, inv, axes, bshape), {"running_mean": rm, "running_var": rv}

    def backward(self, dy, cache, params):
        xhat, inv, axes, bshape = cache
        m = dy.size // self.channels
        dgamma = (dy * xhat).sum(axis=axes)
        dbeta = dy.sum(axis=axes)
        dxhat = dy * params["gamma"].reshape(bshape)
        dx = inv / m * (m * dxhat - dxhat.sum(axis=axes).reshape(bshape)
                        - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape))
        return dx, {"gamma": dgamma, "beta": dbeta}


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"
    name = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def param_shapes(self, shape):
        return {}

    def init(self, rng, shape):
        return {}, {}

    def forward(self, x, params, buffers, train):
        return x.reshape(x.shape[0], -1), x.shape, None

    def backward(self, dy, cache, params):
        return dy.reshape(cache), {}


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int

    kind = "dense"
    name = "dense"

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1:
            raise ShapeError("dense widths must be >= 1")

    def output_shape(self, shape):
        if tuple(shape) != (self.in_features,):
            raise ShapeError(f"dense expects input ({self.in_features},), got {tuple(shape)}")
        return (self.out_features,)

    def param_shapes(self, shape):
        return {"weights": (self.in_features, self.out_features), "bias": (self.out_features,)}

    def init(self, rng, shape):
        w = _glorot(rng, (self.in_features, self.out_features), self.in_features, self.out_features)
        return {"weights": w, "bias": np.zeros(self.out_features)}, {}

    def forward(self, x, params, buffers, train):
        return x @ params["weights"] + params["bias"], x, None

    def backward(self, dy, cache, params):
        return dy @ params["weights"].T, {"weights": cache.T @ dy, "bias": dy.sum(axis=0)}


@dataclass(frozen=True)
class ReLU:
    kind = "relu"
    name = "relu"

    def output_shape(self, shape):
        return tuple(shape)

    def param_shapes(self, shape):
        return {}

    def init(self, rng, shape):
        return {}, {}

    def forward(self, x, params, buffers, train):
        mask = x > 0
        return np.where(mask, x, 0.0), mask, None

    def backward(self, dy, cache, params):
        return np.where(cache, dy, 0.0), {}


@dataclass(frozen=True)
class Softmax:
    kind = "softmax"
    name = "softmax"

    def output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"softmax expects a flat (classes,) input, got {tuple(shape)}")
        return tuple(shape)

    def param_shapes(self, shape):
        return {}

    def init(self, rng, shape):
        return {}, {}

    def forward(self, x, params, buffers, train):
        return ops.softmax(x), None, None


LAYER_TYPES = {
    "conv1d": lambda **kw: Conv(ndim=1, **kw),
    "conv2d": lambda **kw: Conv(ndim=2, **kw),
    "conv3d": lambda **kw: Conv(ndim=3, **kw),
    "maxpool1d": lambda **kw: MaxPool(ndim=1, **kw),
    "maxpool2d": lambda **kw: MaxPool(ndim=2, **kw),
    "maxpool3d": lambda **kw: MaxPool(ndim=3, **kw),
    "batchnorm": BatchNorm,
    "flatten": Flatten,
    "dense": Dense,
    "relu": ReLU,
    "softmax": Softmax,
}


def layer_to_dict(layer):
    d = asdict(layer)
    d.pop("ndim", None)
    return {"type": layer.name, **{k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}}


def layer_from_dict(d):
    d = dict(d)
    kind = d.pop("type")
    if kind not in LAYER_TYPES:
        raise ValueError(f"unknown layer type {kind!r}")
    return LAYER_TYPES[kind](**d)


def check_stack(input_shape, layers):
    """Propagate shapes through ``layers``; return the per-layer input shapes and final output shape.

    Raises :class:`ShapeError` naming the first offending layer before any
    arithmetic runs.
    """
    shape = tuple(int(s) for s in input_shape)
    if not 1 <= len(shape) <= 4 or min(shape) < 1:
        raise ShapeError(f"input shape {shape} must have 1-4 positive axes (batch axis excluded)")
    shapes = []
    for i, layer in enumerate(layers):
        shapes.append(shape)
        try:
            shape = layer.output_shape(shape)
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({layer.name}): {exc}") from None
    return shapes, shape


__all__ = ["Conv", "MaxPool", "BatchNorm", "Flatten", "Dense", "ReLU", "Softmax",
           "check_stack", "layer_to_dict", "layer_from_dict"]
