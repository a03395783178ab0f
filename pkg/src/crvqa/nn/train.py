"""Training loops, inference and weight persistence for the two models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..maps import map_stack
from ..media import read_archive, sample_frames_uniform, to_float, write_archive
from .losses import loss_generator, loss_mse
from .models import Generator, build_generator, build_pooling_net
from .optim import Adam, TrainConfig

__all__ = [
    "TrainResult",
    "train_generator",
    "train_pooling",
    "downsample",
    "frame_maps",
    "predict_frame_scores",
    "predict_score",
    "save_weights",
    "load_weights",
]


@dataclass
class TrainResult:
    model: object
    losses: list
    initial_loss: float
    val_srocc: list = field(default_factory=list)
    best_epoch: int = -1


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _snapshot(model):
    return {k: v.copy() for k, v in model.named_buffers()}


def _restore(model, snap):
    for prefix, owner in model._buffer_owners():
        for name in owner._buffers:
            setattr(owner, name, snap[prefix + name].copy())


def train_generator(patches, labels, config=None, model=None, depth=4, width=16):
    """Fit the generator to (distorted patch, quality-map label) pairs.

    Returns a :class:`TrainResult` whose ``losses`` are per-epoch mean
    training losses and ``initial_loss`` is the mean loss of the untouched
    model over the same batches.
    """
    config = config or TrainConfig()
    x = to_float(patches)
    y = np.asarray(labels, dtype=np.float32)
    if x.ndim == 2:
        x, y = x[None], y[None]
    if len(x) == 0:
        raise ValueError("empty training set")
    if x.shape != y.shape:
        raise ValueError(f"patches {x.shape} and labels {y.shape} differ")
    x, y = x[:, None], y[:, None]
    model = model if model is not None else build_generator(depth, width, seed=config.seed)
    model.train()
    opt = Adam(model.parameters(), config.lr, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)

    snap = _snapshot(model)
    initial = float(np.mean([loss_generator(model.forward(x[b]), y[b], config.alpha)[0]
                             for b in _batches(len(x), config.batch_size, np.random.default_rng(config.seed))]))
    _restore(model, snap)

    losses = []
    for _ in range(config.epochs):
        total = 0.0
        for b in _batches(len(x), config.batch_size, rng):
            opt.zero_grad()
            value, grad = loss_generator(model.forward(x[b]), y[b], config.alpha)
            model.backward(grad)
            opt.step()
            total += value * len(b)
        losses.append(total / len(x))
    model.eval()
    return TrainResult(model, losses, initial)


def train_pooling(src_maps, trans_maps, scores, config=None, model=None, width=8,
                  val=None):
    """Fit the pooling network with MSE against per-sample score labels.

    ``src_maps`` and ``trans_maps`` are arrays ``(N, C, H, W)`` (or lists of
    ``(C, H, W)``).  The final bias starts at the mean label.  When ``val``
    is a ``(src, trans, scores, groups)`` tuple the weights from the epoch
    with the best validation SROCC (scores averaged per group) are kept.
    """
    from ..stats import srocc

    config = config or TrainConfig(lr=1e-4)
    src = np.asarray(src_maps, dtype=np.float32)
    trans = np.asarray(trans_maps, dtype=np.float32)
    s = np.asarray(scores, dtype=np.float32).reshape(-1)
    if len(s) == 0:
        raise ValueError("empty training set")
    if src.ndim == 3:
        src = src[:, None]
    if trans.ndim == 3:
        trans = trans[:, None]
    if not (len(src) == len(trans) == len(s)) or src.shape[2:] != trans.shape[2:]:
        raise ValueError(f"mismatched stack shapes {src.shape}, {trans.shape}, {s.shape}")
    if model is None:
        model = build_pooling_net(src.shape[1], trans.shape[1], width, seed=config.seed)
        model.fc2.bias.data[:] = s.mean()
    model.train()
    opt = Adam(model.parameters(), config.lr, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)

    snap = _snapshot(model)
    initial = float(np.mean([loss_mse(model.forward(src[b], trans[b]), s[b])[0]
                             for b in _batches(len(s), config.batch_size, np.random.default_rng(config.seed))]))
    _restore(model, snap)

    losses, val_curve = [], []
    best, best_epoch = None, -1
    for epoch in range(config.epochs):
        total = 0.0
        for b in _batches(len(s), config.batch_size, rng):
            opt.zero_grad()
            value, grad = loss_mse(model.forward(src[b], trans[b]), s[b])
            model.backward(grad)
            opt.step()
            total += value * len(b)
        losses.append(total / len(s))
        if val is not None:
            vs, vt, vy, groups = val
            model.eval()
            pred = _group_mean(model.forward(vs, vt), groups)
            truth = _group_mean(np.asarray(vy), groups)
            model.train()
            rho = srocc(pred, truth)
            val_curve.append(rho)
            if best is None or rho > val_curve[best_epoch]:
                best, best_epoch = model.state_dict(), epoch
    if best is not None:
        model.load_state_dict(best)
    model.eval()
    return TrainResult(model, losses, initial, val_curve, best_epoch)


def _group_mean(values, groups):
    values = np.asarray(values, dtype=np.float64)
    groups = np.asarray(groups)
    keys = list(dict.fromkeys(groups.tolist()))
    return np.array([values[groups == k].mean() for k in keys])


def downsample(maps, factor):
    """2x2-mean pooling applied ``log2(factor)`` times over the last two axes."""
    maps = np.asarray(maps, dtype=np.float32)
    if factor < 1 or factor & (factor - 1):
        raise ValueError("downsample factor must be a power of two")
    while factor > 1:
        h, w = maps.shape[-2] // 2 * 2, maps.shape[-1] // 2 * 2
        m = maps[..., :h, :w]
        maps = 0.25 * (m[..., 0::2, 0::2] + m[..., 1::2, 0::2] + m[..., 0::2, 1::2] + m[..., 1::2, 1::2])
        factor //= 2
    return maps


def frame_maps(generator, src_frame, trans_frame, prev_trans=None, kind="vif", factor=1,
               src_chroma=None, trans_chroma=None):
    """``(M_s, M_t)`` for one frame: generator map of the source, FR stack of the pair."""
    gm = generator.forward(to_float(src_frame)[None, None])[0]
    stack = map_stack(kind, src_frame, trans_frame, prev_trans, src_chroma, trans_chroma)
    tm = np.stack([m.values for m in stack])
    return downsample(gm, factor), downsample(tm, factor)


def predict_frame_scores(src_clip, trans_clip, generator, pooling_net, kind="vif", frame_count=10,
                         factor=1):
    if src_clip.luma.shape != trans_clip.luma.shape:
        raise ValueError(f"clip geometry mismatch: {src_clip.luma.shape} vs {trans_clip.luma.shape}")
    if generator is None or pooling_net is None:
        raise ValueError("both generator and pooling weights are required")
    generator.eval()
    pooling_net.eval()
    idx = sample_frames_uniform(src_clip.n_frames, min(frame_count, src_clip.n_frames))
    scores = []
    for i in idx:
        prev = trans_clip.luma[i - 1] if i > 0 else None
        ms, mt = frame_maps(generator, src_clip.luma[i], trans_clip.luma[i], prev, kind, factor)
        scores.append(float(pooling_net.forward(ms[None], mt[None])[0]))
    return np.array(scores)


def predict_score(src_clip, trans_clip, generator, pooling_net, kind="vif", frame_count=10, factor=1):
    """Mean over uniformly sampled frames of the pooling-net frame score."""
    return float(predict_frame_scores(src_clip, trans_clip, generator, pooling_net, kind,
                                      frame_count, factor).mean())


def save_weights(model):
    """Serialize a model (architecture hyperparameters plus weights) to archive bytes."""
    tensors = {f"w/{k}": v for k, v in model.state_dict().items()}
    if isinstance(model, Generator):
        arch = [0, model.depth, model.width]
    else:
        arch = [1, model.in_src, model.in_trans, model.width, model.fc1.weight.shape[0], *model.dilations]
    tensors["arch"] = np.array(arch, dtype=np.float32)
    return write_archive(tensors)


def load_weights(data):
    tensors = read_archive(data)
    if "arch" not in tensors:
        raise ValueError("archive holds no model architecture record")
    arch = [int(v) for v in tensors["arch"]]
    if arch[0] == 0:
        model = build_generator(arch[1], arch[2])
    else:
        model = build_pooling_net(arch[1], arch[2], arch[3], dilations=arch[5:], hidden=arch[4])
    model.load_state_dict({k[2:]: v for k, v in tensors.items() if k.startswith("w/")})
    return model.eval()
