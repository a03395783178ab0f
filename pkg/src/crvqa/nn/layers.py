"""Layers with explicit forward/backward passes over NCHW numpy arrays.

Each module caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Parameter.grad`` during
``backward``, returning the gradient with respect to its input.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Parameter",
    "Module",
    "Sequential",
    "Conv2d",
    "BatchNorm2d",
    "ReLU",
    "Sigmoid",
    "GlobalAvgPool",
    "Linear",
    "ResidualBlock",
    "conv_output_size",
]


class Parameter:
    def __init__(self, data):
        self.data = np.asarray(data)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


class Module:
    training = True

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def named_buffers(self, prefix=""):
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{name}.{i}.")

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_parameters(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    @property
    def dtype(self):
        params = self.parameters()
        return params[0].data.dtype if params else np.dtype(np.float32)

    def to(self, dtype):
        """Cast parameters and buffers in place (float32 default, float64 for checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = p.grad.astype(dtype)
        for m in self.modules():
            for name in getattr(m, "_buffers", ()):
                setattr(m, name, getattr(m, name).astype(dtype))
        return self

    def state_dict(self):
        out = {name: p.data.copy() for name, p in self.named_parameters()}
        out.update({name: b.copy() for name, b in self.named_buffers()})
        return out

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"missing weights: {sorted(missing)[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=p.data.dtype)
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.copy()
        for m_prefix, m in self._buffer_owners():
            for name in m._buffers:
                setattr(m, name, np.asarray(state[m_prefix + name], dtype=self.dtype).copy())
        return self

    def _buffer_owners(self, prefix=""):
        if getattr(self, "_buffers", ()):
            yield prefix, self
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield from value._buffer_owners(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._buffer_owners(f"{prefix}{name}.{i}.")

    def __call__(self, *args):
        return self.forward(*args)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


def conv_output_size(n, k, stride, padding, dilation):
    return (n + 2 * padding - dilation * (k - 1) - 1) // stride + 1


class Conv2d(Module):
    """2-D cross-correlation with zero padding, stride and dilation (im2col)."""

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, padding=0,
                 dilation=1, bias=True, rng=None):
        if min(in_channels, out_channels, kernel_size, stride, dilation) < 1 or padding < 0:
            raise ValueError("invalid convolution dimensions")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.k, self.stride, self.padding, self.dilation = kernel_size, stride, padding, dilation
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, (out_channels, in_channels, kernel_size, kernel_size))
        self.weight = Parameter(w.astype(np.float32))
        self.bias = Parameter(np.zeros(out_channels, np.float32)) if bias else None

    def _cols(self, x):
        # columns laid out (C*k*k, N*Ho*Wo) so forward and backward are single 2-D products
        n, c, h, w = x.shape
        k, s, p, d = self.k, self.stride, self.padding, self.dilation
        ho = conv_output_size(h, k, s, p, d)
        wo = conv_output_size(w, k, s, p, d)
        if ho < 1 or wo < 1:
            raise ValueError(f"input {h}x{w} too small for kernel {k} dilation {d}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        xp = xp.transpose(1, 0, 2, 3)
        cols = np.empty((c, k, k, n, ho, wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                r0, c0 = i * d, j * d
                cols[:, i, j] = xp[:, :, r0:r0 + s * ho:s, c0:c0 + s * wo:s]
        return cols.reshape(c * k * k, n * ho * wo), (ho, wo)

    def forward(self, x):
        x = np.asarray(x, dtype=self.weight.data.dtype)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (N, {self.in_channels}, H, W) input, got {x.shape}")
        cols, (ho, wo) = self._cols(x)
        out = self.weight.data.reshape(self.out_channels, -1) @ cols
        if self.bias is not None:
            out += self.bias.data[:, None]
        self._cache = (x.shape, cols, ho, wo)
        out = out.reshape(self.out_channels, x.shape[0], ho, wo).transpose(1, 0, 2, 3)
        return np.ascontiguousarray(out)

    def backward(self, grad):
        shape, cols, ho, wo = self._cache
        n, c, h, w = shape
        k, s, p, d = self.k, self.stride, self.padding, self.dilation
        g = np.ascontiguousarray(grad.transpose(1, 0, 2, 3)).reshape(self.out_channels, -1)
        self.weight.grad += (g @ cols.T).reshape(self.weight.shape)
        if self.bias is not None:
            self.bias.grad += g.sum(axis=1)
        wmat = self.weight.data.reshape(self.out_channels, -1)
        dcols = (wmat.T @ g).reshape(c, k, k, n, ho, wo)
        dxp = np.zeros((c, n, h + 2 * p, w + 2 * p), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                r0, c0 = i * d, j * d
                dxp[:, :, r0:r0 + s * ho:s, c0:c0 + s * wo:s] += dcols[:, i, j]
        dx = dxp[:, :, p:p + h, p:p + w] if p else dxp
        return np.ascontiguousarray(dx.transpose(1, 0, 2, 3))


class BatchNorm2d(Module):
    """Per-channel batch normalization; running stats ``r = m * r + (1 - m) * batch``."""

    _buffers = ("running_mean", "running_var")

    def __init__(self, channels, momentum=0.9, eps=1e-5):
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.gamma = Parameter(np.ones(channels, np.float32))
        self.beta = Parameter(np.zeros(channels, np.float32))
        self.running_mean = np.zeros(channels, np.float32)
        self.running_var = np.ones(channels, np.float32)

    def forward(self, x):
        x = np.asarray(x, dtype=self.gamma.data.dtype)
        if x.size == 0:
            raise ValueError("batch norm on an empty batch")
        if self.training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            count = x.size // self.channels
            unbiased = var * count / max(count - 1, 1)
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1 - m) * mean).astype(x.dtype)
            self.running_var = (m * self.running_var + (1 - m) * unbiased).astype(x.dtype)
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
        self._cache = (xhat, inv, self.training)
        return self.gamma.data[None, :, None, None] * xhat + self.beta.data[None, :, None, None]

    def backward(self, grad):
        xhat, inv, training = self._cache
        self.gamma.grad += (grad * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += grad.sum(axis=(0, 2, 3))
        gx = grad * self.gamma.data[None, :, None, None]
        if not training:
            return gx * inv[None, :, None, None]
        count = grad.size // self.channels
        s1 = gx.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (gx * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        return (count * gx - s1 - xhat * s2) * inv[None, :, None, None] / count


class ReLU(Module):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        return grad * self._mask


class Sigmoid(Module):
    def forward(self, x):
        # split by sign so exp never overflows
        e = np.exp(-np.abs(x))
        self._out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
        return self._out

    def backward(self, grad):
        return grad * self._out * (1 - self._out)


class GlobalAvgPool(Module):
    def forward(self, x):
        if x.ndim != 4:
            raise ValueError("global average pool needs a rank-4 input")
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        n, c, h, w = self._shape
        return np.broadcast_to(grad[:, :, None, None] / (h * w), self._shape).copy()


class Linear(Module):
    def __init__(self, in_features, out_features, rng=None):
        if min(in_features, out_features) < 1:
            raise ValueError("invalid linear dimensions")
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = np.sqrt(6.0 / in_features)
        self.weight = Parameter(rng.uniform(-bound, bound, (out_features, in_features)).astype(np.float32))
        self.bias = Parameter(np.zeros(out_features, np.float32))

    def forward(self, x):
        x = np.asarray(x, dtype=self.weight.data.dtype)
        if x.ndim != 2 or x.shape[1] != self.weight.shape[1]:
            raise ValueError(f"expected (N, {self.weight.shape[1]}) input, got {x.shape}")
        self._x = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, grad):
        self.weight.grad += grad.T @ self._x
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.data


class ResidualBlock(Module):
    """conv-BN-ReLU-conv-BN with an identity skip; optional ReLU after the sum."""

    def __init__(self, channels, dilation=1, relu_after=False, rng=None):
        self.dilation = dilation
        self.body = Sequential(
            Conv2d(channels, channels, 3, 1, dilation, dilation, rng=rng),
            BatchNorm2d(channels),
            ReLU(),
            Conv2d(channels, channels, 3, 1, dilation, dilation, rng=rng),
            BatchNorm2d(channels),
        )
        self.post = ReLU() if relu_after else None

    def forward(self, x):
        y = x + self.body.forward(x)
        return self.post.forward(y) if self.post is not None else y

    def backward(self, grad):
        if self.post is not None:
            grad = self.post.backward(grad)
        return grad + self.body.backward(grad)
