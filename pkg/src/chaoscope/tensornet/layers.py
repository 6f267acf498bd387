"""Layer primitives with hand-written backward passes.

Tensors are numpy arrays in batch-first NHWC layout: (batch, rows, cols,
channels). For trajectory input, rows run over time steps and cols over
map coordinates.
"""
import numpy as np
from scipy.special import expit

# loss clamp, keeps log() finite
EPS_CLAMP = 1e-7


def _patches(x, fr, fc):
    """Stack the fr x fc neighbourhood of every position; trailing zero padding.

    Output shape (B, H, W, fr*fc*C), ordered (p, q, channel) to match a
    weight tensor of shape (fr, fc, C_in, C_out).
    """
    B, H, W, C = x.shape
    if fr == 1 and fc == 1:
        return x
    xp = np.pad(x, ((0, 0), (0, fr - 1), (0, fc - 1), (0, 0)))
    cols = [xp[:, p:p + H, q:q + W, :] for p in range(fr) for q in range(fc)]
    return np.concatenate(cols, axis=-1)


def conv2d_forward(x, w, b):
    """Same-size 2D convolution, z[i,j,o] = sum_{p,q,c} w[p,q,c,o] x[i+p, j+q, c] + b[o].

    Positions past the trailing edge read zeros.
    """
    fr, fc, cin, cout = w.shape
    if x.ndim != 4 or x.shape[-1] != cin:
        raise ValueError(f"conv expects (B, H, W, {cin}) input, got {x.shape}")
    cols = _patches(x, fr, fc)
    k = fr * fc * cin
    return (cols.reshape(-1, k) @ w.reshape(k, cout) + b).reshape(x.shape[:3] + (cout,))


def conv2d_backward(dz, x, w):
    fr, fc, cin, cout = w.shape
    B, H, W, _ = x.shape
    cols = _patches(x, fr, fc)
    wmat = w.reshape(fr * fc * cin, cout)
    dw = (cols.reshape(-1, fr * fc * cin).T @ dz.reshape(-1, cout)).reshape(w.shape)
    db = dz.sum(axis=(0, 1, 2))
    dcols = dz.reshape(-1, cout) @ wmat.T
    if fr == 1 and fc == 1:
        return dcols.reshape(x.shape), dw, db
    dcols = dcols.reshape(B, H, W, fr, fc, cin)
    dxp = np.zeros((B, H + fr - 1, W + fc - 1, cin), dtype=dz.dtype)
    for p in range(fr):
        for q in range(fc):
            dxp[:, p:p + H, q:q + W, :] += dcols[:, :, :, p, q, :]
    return dxp[:, :H, :W, :], dw, db


def relu(t):
    return np.maximum(t, 0)


def global_max_pool(t):
    """Per-channel maximum over all spatial positions: (B, H, W, C) -> (B, C)."""
    if t.ndim == 3:
        return t.reshape(-1, t.shape[-1]).max(axis=0)
    return t.reshape(t.shape[0], -1, t.shape[-1]).max(axis=1)


def dense_forward(a, w, b=None):
    if a.shape[-1] != w.shape[0]:
        raise ValueError(f"dense layer expects {w.shape[0]} inputs, got {a.shape[-1]}")
    z = a @ w
    return z if b is None else z + b


def sigmoid(x):
    return expit(x)


def cross_entropy(pred, true_label):
    """Binary cross-entropy with the prediction clamped to [1e-7, 1 - 1e-7].

    Accepts scalars or arrays (elementwise).
    """
    a = np.clip(np.asarray(pred, dtype=np.float64), EPS_CLAMP, 1.0 - EPS_CLAMP)
    y = np.asarray(true_label, dtype=np.float64)
    loss = -(y * np.log(a) + (1.0 - y) * np.log1p(-a))
    return float(loss) if loss.ndim == 0 else loss


class Layer:
    """Base class. Subclasses cache what backward() needs during forward()."""

    params: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def describe(self):
        return {"type": type(self).__name__}


class Conv2D(Layer):
    def __init__(self, in_channels, out_channels, filter_shape=(2, 1), dtype=np.float32):
        super().__init__()
        fr, fc = filter_shape
        self.params = {
            "w": np.zeros((fr, fc, in_channels, out_channels), dtype=dtype),
            "b": np.zeros(out_channels, dtype=dtype),
        }

    @property
    def fan_in(self):
        fr, fc, cin, _ = self.params["w"].shape
        return fr * fc * cin

    def forward(self, x):
        self._x = x
        return conv2d_forward(x, self.params["w"], self.params["b"])

    def backward(self, dout):
        dx, dw, db = conv2d_backward(dout, self._x, self.params["w"])
        self.grads = {"w": dw, "b": db}
        return dx

    def describe(self):
        fr, fc, cin, cout = self.params["w"].shape
        return {"type": "Conv2D", "filter_shape": [fr, fc], "in": cin, "out": cout}


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self._mask, dout, 0).astype(dout.dtype, copy=False)


class GlobalMaxPool(Layer):
    """Gradient of the max goes to the first position attaining it."""

    def forward(self, x):
        B, H, W, C = x.shape
        self._shape = x.shape
        flat = x.reshape(B, H * W, C)
        self._idx = flat.argmax(axis=1)
        return np.take_along_axis(flat, self._idx[:, None, :], axis=1)[:, 0, :]

    def backward(self, dout):
        B, H, W, C = self._shape
        dflat = np.zeros((B, H * W, C), dtype=dout.dtype)
        np.put_along_axis(dflat, self._idx[:, None, :], dout[:, None, :], axis=1)
        return dflat.reshape(self._shape)


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    def __init__(self, in_size, out_size, bias=False, dtype=np.float32):
        super().__init__()
        self.params = {"w": np.zeros((in_size, out_size), dtype=dtype)}
        if bias:
            self.params["b"] = np.zeros(out_size, dtype=dtype)

    @property
    def fan_in(self):
        return self.params["w"].shape[0]

    def forward(self, x):
        self._x = x
        return dense_forward(x, self.params["w"], self.params.get("b"))

    def backward(self, dout):
        self.grads = {"w": self._x.T @ dout}
        if "b" in self.params:
            self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["w"].T

    def describe(self):
        k, n = self.params["w"].shape
        return {"type": "Dense", "in": k, "out": n, "bias": "b" in self.params}
