"""Network assembly, presets, and the forward/backward passes."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import (
    Conv2D,
    Dense,
    Flatten,
    GlobalMaxPool,
    ReLU,
    cross_entropy,
    sigmoid,
)

PAPER_CONV_WIDTHS = (1024, 512, 256, 128)
PAPER_FC_WIDTHS = (128, 32, 1)
PAPER_FCN_HIDDEN = (256, 256, 512, 512, 512, 256, 128, 64)
DESK_DIVISOR = 8
PRESETS = ("cnn2d", "cnn1d", "fcn")


@dataclass
class ModelSpec:
    """Architecture descriptor.

    ``kind="cnn"``: conv+ReLU blocks, global max pool, dense+ReLU blocks and a
    final single sigmoid unit. ``kind="fcn"``: flatten, dense+ReLU blocks and
    the sigmoid unit. ``fc_widths`` always ends with 1.
    """

    kind: str
    input_shape: tuple
    conv_widths: tuple = ()
    fc_widths: tuple = (1,)
    filter_shape: tuple = (2, 1)
    fc_bias: bool = False
    dtype: str = "float32"
    name: str = field(default="custom")

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.conv_widths = tuple(int(v) for v in self.conv_widths)
        self.fc_widths = tuple(int(v) for v in self.fc_widths)
        self.filter_shape = tuple(int(v) for v in self.filter_shape)
        if self.kind not in ("cnn", "fcn"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if len(self.input_shape) != 3 or self.input_shape[2] != 1 or min(self.input_shape) < 1:
            raise ValueError(f"input shape must be (N_K, d, 1), got {self.input_shape}")
        if not self.fc_widths or self.fc_widths[-1] != 1:
            raise ValueError("the last dense layer must have a single unit")
        if self.kind == "cnn" and not self.conv_widths:
            raise ValueError("a cnn needs at least one conv layer")
        if self.kind == "fcn" and self.conv_widths:
            raise ValueError("an fcn has no conv layers")
        if min(self.conv_widths + self.fc_widths) < 1:
            raise ValueError("layer widths must be positive")

    def to_dict(self):
        d = asdict(self)
        for k in ("input_shape", "conv_widths", "fc_widths", "filter_shape"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def build_preset(name, input_len, channels=None, scale="paper", dtype="float32", fc_bias=False):
    """Named architecture for trajectories of ``input_len`` steps.

    ``cnn2d`` reads (p, x) pairs, ``cnn1d`` one coordinate; ``fcn`` defaults
    to two channels. ``scale="desk"`` divides every hidden width by 8.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    if scale not in ("paper", "desk"):
        raise ValueError(f"unknown scale {scale!r}")
    if input_len < 1:
        raise ValueError("input length must be >= 1")
    div = DESK_DIVISOR if scale == "desk" else 1

    def shrink(widths):
        return tuple(max(1, w // div) for w in widths)

    if channels is None:
        channels = 1 if name == "cnn1d" else 2
    elif name == "cnn1d" and channels != 1:
        raise ValueError("cnn1d takes single-channel input")
    elif name == "cnn2d" and channels != 2:
        raise ValueError("cnn2d takes two-channel input")
    shape = (input_len, channels, 1)
    if name == "fcn":
        return ModelSpec("fcn", shape, (), shrink(PAPER_FCN_HIDDEN) + (1,), fc_bias=fc_bias,
                         dtype=dtype, name=f"fcn-{scale}")
    fc = shrink(PAPER_FC_WIDTHS[:-1]) + (1,)
    return ModelSpec("cnn", shape, shrink(PAPER_CONV_WIDTHS), fc, (2, 1), fc_bias, dtype,
                     name=f"{name}-{scale}")


class Model:
    """A layer stack built from a ModelSpec.

    ``forward`` returns probabilities of the chaotic class, shape (B,).
    """

    def __init__(self, spec: ModelSpec, seed=None):
        self.spec = spec
        dt = np.dtype(spec.dtype)
        self.dtype = dt
        layers = []
        if spec.kind == "cnn":
            cin = spec.input_shape[2]
            for width in spec.conv_widths:
                layers += [Conv2D(cin, width, spec.filter_shape, dt), ReLU()]
                cin = width
            layers.append(GlobalMaxPool())
            k = cin
        else:
            layers.append(Flatten())
            k = spec.input_shape[0] * spec.input_shape[1]
        for i, width in enumerate(spec.fc_widths):
            layers.append(Dense(k, width, spec.fc_bias, dt))
            if i < len(spec.fc_widths) - 1:
                layers.append(ReLU())
            k = width
        self.layers = layers
        if seed is not None:
            self.initialize(seed)

    def initialize(self, seed):
        """He-style uniform init, limit sqrt(6 / fan_in); biases start at zero."""
        rng = np.random.default_rng(seed)
        for layer in self.trainable_layers():
            w = layer.params["w"]
            limit = np.sqrt(6.0 / layer.fan_in)
            w[...] = rng.uniform(-limit, limit, size=w.shape).astype(self.dtype)
            if "b" in layer.params:
                layer.params["b"][...] = 0
        return self

    def trainable_layers(self):
        return [l for l in self.layers if l.params]

    def parameters(self):
        """Flat list of parameter arrays in layer order (w before b)."""
        return [layer.params[k] for layer in self.trainable_layers() for k in sorted(layer.params, key="wb".index)]

    def gradients(self):
        return [layer.grads[k] for layer in self.trainable_layers() for k in sorted(layer.params, key="wb".index)]

    def n_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    def check_input(self, x):
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim == 3:
            x = x[..., None]
        if x.shape[1:] != self.spec.input_shape:
            raise ValueError(f"model expects input of shape (B, {', '.join(map(str, self.spec.input_shape))}),"
                             f" got {x.shape}")
        return x.astype(self.dtype, copy=False)

    def logits(self, x):
        h = self.check_input(x)
        for layer in self.layers:
            h = layer.forward(h)
        return h[:, 0]

    def dead_fraction(self, x):
        """Share of inputs whose features entering the output unit are all zero.

        Such inputs give the output unit's bias alone and pass no gradient to
        any weight, so a network where they dominate has stopped learning.
        """
        *body, last = self.layers
        if not body or not isinstance(body[-1], ReLU):
            return 0.0
        h = self.check_input(x)
        for layer in body:
            h = layer.forward(h)
        return float(np.mean(~h.any(axis=1)))

    def forward(self, x):
        z = self.logits(x)
        a = sigmoid(z)
        tiny = np.finfo(self.dtype).eps / 2
        # keep the output strictly inside (0, 1) even when the sigmoid saturates
        self._a = np.clip(a, tiny, 1 - tiny).astype(self.dtype)
        return self._a

    def backward(self, y):
        """Gradients of the mean cross-entropy of the last forward batch.

        The loss gradient with respect to the output logit is (a - y) / B.
        """
        y = np.asarray(y, dtype=self.dtype).ravel()
        dz = ((self._a - y) / len(y))[:, None].astype(self.dtype)
        for layer in reversed(self.layers):
            dz = layer.backward(dz)
        return self.gradients()

    def loss(self, x, y):
        return float(np.mean(cross_entropy(self.forward(x), y)))

    def copy_parameters(self):
        return [p.copy() for p in self.parameters()]

    def set_parameters(self, values):
        for p, v in zip(self.parameters(), values):
            p[...] = v


def forward(model, x):
    return model.forward(x)


def backward(model, x, y):
    """Forward then backward; returns (loss, gradients in parameter order)."""
    a = model.forward(x)
    grads = model.backward(y)
    return float(np.mean(cross_entropy(a, y))), grads
