"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import Module, ReLU

__all__ = ["GradCheckReport", "gradient_check"]


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: str
    errors: dict = field(default_factory=dict)
    skipped: int = 0

    def passed(self, tolerance):
        return self.max_rel_error < tolerance

    def __str__(self):
        lines = [f"max relative error {self.max_rel_error:.3e} (worst: {self.worst}, "
                 f"{self.skipped} entries skipped at ReLU kinks)"]
        for name, err in sorted(self.errors.items(), key=lambda kv: -kv[1]):
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def _rel(a, n, floor):
    # gradients that are identically zero (a conv bias feeding batch norm)
    # compare as absolute differences below ``floor``
    denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / denom)


def _resolution_floor(f0, dtype, eps, count, rtol):
    """Norm below which a central difference cannot resolve ``rtol`` relative error.

    Each difference carries round-off of about ``macheps * |f| / eps``; over
    ``count`` entries that is ``sqrt(count)`` times larger.
    """
    noise = np.finfo(dtype).eps * (abs(f0) + 1.0) / eps
    return noise * np.sqrt(max(count, 1)) / rtol


def _numeric(f, arr, eps, entries, masks=None):
    """Central differences at ``entries``; drops entries whose step flips a ReLU."""
    out = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    kept = []
    for i in entries:
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        mp = masks() if masks else None
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        if masks and any(not np.array_equal(a, b) for a, b in zip(mp, masks())):
            continue
        out.flat[i] = (fp - fm) / (2 * eps)
        kept.append(i)
    return out, np.asarray(kept, dtype=np.int64)


def _entries(size, max_entries, rng):
    if max_entries is None or size <= max_entries:
        return np.arange(size)
    return np.sort(rng.choice(size, max_entries, replace=False))


def gradient_check(target, inputs, dtype=np.float64, eps=None, seed=0, max_entries=None,
                   loss_target=None, rtol=None):
    """Compare analytic and central-difference gradients.

    ``target`` is either a :class:`Module` (checked through the scalar
    ``sum(output * R)`` for a fixed random ``R``, over every parameter and
    every input) or a loss function ``f(pred, loss_target) -> (value, grad)``
    (checked with respect to ``pred``).  ``dtype=np.float64`` is the
    verification mode; float32 checks use a larger step.  Errors are
    norm-wise relative errors per tensor; the report names the worst.
    Entries whose +/- step changes any ReLU mask sit on a kink where the
    central difference is meaningless; they are skipped and counted.

    Tensors whose gradient norm is below the finite-difference resolution
    for ``rtol`` (default 1e-6 in float64, 1e-3 in float32) are compared
    against that resolution instead of their own norm; this covers
    gradients that vanish by construction, such as a bias ahead of batch
    normalization.
    """
    rng = np.random.default_rng(seed)
    wide = np.dtype(dtype) == np.float64
    if eps is None:
        eps = 1e-4 if wide else 1e-2
    if rtol is None:
        rtol = 1e-6 if wide else 1e-3
    if not isinstance(inputs, (list, tuple)):
        inputs = [inputs]
    inputs = [np.array(x, dtype=dtype) for x in inputs]
    errors = {}
    skipped = 0

    if not isinstance(target, Module):
        pred = inputs[0]
        ref = np.asarray(loss_target, dtype=dtype)
        f0, grad = target(pred, ref)
        entries = _entries(pred.size, max_entries, rng)
        floor = _resolution_floor(f0, dtype, eps, len(entries), rtol)
        num, entries = _numeric(lambda: target(pred, ref)[0], pred, eps, entries)
        errors["input0"] = _rel(np.asarray(grad, np.float64).reshape(-1)[entries], num.reshape(-1)[entries], floor)
    else:
        model = copy.deepcopy(target).to(dtype)
        out = model.forward(*inputs)
        weights = rng.standard_normal(np.shape(out)).astype(dtype)

        relus = [m for m in model.modules() if isinstance(m, ReLU)]

        def f():
            return float(np.sum(np.asarray(model.forward(*inputs), np.float64) * weights))

        def masks():
            return [r._mask.copy() for r in relus]

        f0 = f()
        model.zero_grad()
        model.forward(*inputs)
        gin = model.backward(weights)
        if not isinstance(gin, tuple):
            gin = (gin,)
        for name, p in model.named_parameters():
            entries = _entries(p.size, max_entries, rng)
            num, kept = _numeric(f, p.data, eps, entries, masks)
            skipped += len(entries) - len(kept)
            entries = kept
            floor = _resolution_floor(f0, dtype, eps, len(entries), rtol)
            errors[name] = _rel(p.grad.reshape(-1)[entries].astype(np.float64), num.reshape(-1)[entries], floor)
        for k, (x, g) in enumerate(zip(inputs, gin)):
            entries = _entries(x.size, max_entries, rng)
            num, kept = _numeric(f, x, eps, entries, masks)
            skipped += len(entries) - len(kept)
            entries = kept
            floor = _resolution_floor(f0, dtype, eps, len(entries), rtol)
            errors[f"input{k}"] = _rel(np.asarray(g, np.float64).reshape(-1)[entries], num.reshape(-1)[entries], floor)

    worst = max(errors, key=errors.get)
    return GradCheckReport(errors[worst], worst, errors, skipped)
