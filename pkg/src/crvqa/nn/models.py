"""The quality-map generator and the two-branch dilated pooling regressor."""

from __future__ import annotations

import numpy as np

from .layers import (BatchNorm2d, Conv2d, GlobalAvgPool, Linear, Module, ReLU,
                     ResidualBlock, Sequential, Sigmoid)

__all__ = [
    "Generator",
    "PoolingNet",
    "build_generator",
    "build_pooling_net",
    "POOLING_DILATIONS",
    "PAPER_GENERATOR",
    "DESK_GENERATOR",
    "receptive_field",
]

PAPER_GENERATOR = {"depth": 10, "width": 64}
DESK_GENERATOR = {"depth": 4, "width": 16}
POOLING_DILATIONS = (1, 2, 4, 2)


class Generator(Module):
    """Luma patch ``(N, 1, H, W)`` to a quality map of the same size in (0, 1)."""

    def __init__(self, depth, width, rng):
        self.depth, self.width = depth, width
        self.head = Sequential(Conv2d(1, width, 3, 1, 1, rng=rng), BatchNorm2d(width), ReLU())
        self.blocks = [ResidualBlock(width, 1, rng=rng) for _ in range(depth)]
        self.tail = Conv2d(width, 1, 3, 1, 1, rng=rng)
        self.out = Sigmoid()

    def forward(self, x):
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        x = self.head.forward(x)
        for b in self.blocks:
            x = b.forward(x)
        return self.out.forward(self.tail.forward(x))

    def backward(self, grad):
        grad = self.tail.backward(self.out.backward(grad))
        for b in reversed(self.blocks):
            grad = b.backward(grad)
        return self.head.backward(grad)


class PoolingNet(Module):
    """Two-branch regressor over a source-map stack and a transcoded-map stack.

    Each branch is its own 3x3 conv + ReLU; the branch features are
    concatenated, passed through dilated residual blocks (ReLU after each
    sum), globally averaged and mapped to a scalar by two linear layers.
    """

    def __init__(self, in_src, in_trans, width, dilations, hidden, rng):
        self.in_src, self.in_trans, self.width = in_src, in_trans, width
        self.dilations = tuple(dilations)
        self.src = Sequential(Conv2d(in_src, width, 3, 1, 1, rng=rng), ReLU())
        self.trans = Sequential(Conv2d(in_trans, width, 3, 1, 1, rng=rng), ReLU())
        self.blocks = [ResidualBlock(2 * width, d, relu_after=True, rng=rng) for d in self.dilations]
        self.pool = GlobalAvgPool()
        self.fc1 = Linear(2 * width, hidden, rng=rng)
        self.act = ReLU()
        self.fc2 = Linear(hidden, 1, rng=rng)

    def features(self, src, trans):
        src = np.asarray(src, dtype=self.dtype)
        trans = np.asarray(trans, dtype=self.dtype)
        if src.shape[0] != trans.shape[0] or src.shape[2:] != trans.shape[2:]:
            raise ValueError(f"mismatched stack shapes {src.shape} and {trans.shape}")
        x = np.concatenate([self.src.forward(src), self.trans.forward(trans)], axis=1)
        for b in self.blocks:
            x = b.forward(x)
        return x

    def forward(self, src, trans):
        x = self.pool.forward(self.features(src, trans))
        return self.fc2.forward(self.act.forward(self.fc1.forward(x)))[:, 0]

    def backward_features(self, grad):
        for b in reversed(self.blocks):
            grad = b.backward(grad)
        w = self.width
        return self.src.backward(grad[:, :w]), self.trans.backward(grad[:, w:])

    def backward(self, grad):
        grad = np.asarray(grad).reshape(-1, 1)
        g = self.fc1.backward(self.act.backward(self.fc2.backward(grad)))
        return self.backward_features(self.pool.backward(g))


def build_generator(depth=4, width=16, seed=0):
    """Head conv+BN+ReLU, ``depth`` residual blocks, tail conv to one channel, sigmoid.

    ``build_generator(**PAPER_GENERATOR)`` gives the full-size network.
    """
    if depth < 1 or width < 1:
        raise ValueError("depth and width must be >= 1")
    return Generator(depth, width, np.random.default_rng(seed))


def build_pooling_net(in_src=1, in_trans=1, width=8, dilations=POOLING_DILATIONS, hidden=32, seed=0):
    if min(in_src, in_trans, width, hidden) < 1:
        raise ValueError("channel counts must be positive")
    return PoolingNet(in_src, in_trans, width, dilations, hidden, np.random.default_rng(seed))


def receptive_field(dilations=POOLING_DILATIONS, kernel=3):
    """Receptive field of the pooling trunk: branch conv plus two convs per block."""
    rf = kernel
    for d in dilations:
        rf += 2 * (kernel - 1) * d
    return rf
