"""Repeated split / train / test protocol over a corpus of (source, transcode, MOS).

A corpus manifest is a JSON list of entries::

    {"source": "src.y4m", "transcoded": ["a.y4m", "b.y4m"], "mos": [3.1, 2.4]}

with paths relative to the manifest.  Splits are drawn per source so that
every transcode of a source lands in the same partition.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .maps import map_stack
from .media import parse_y4m, sample_frames_uniform, to_float
from .nn import TrainConfig, downsample, train_pooling
from .stats import fit_logistic, plcc_rmse, srocc

__all__ = [
    "ExperimentConfig",
    "CorpusItem",
    "RunReport",
    "SETTINGS",
    "make_splits",
    "load_manifest",
    "prepare_items",
    "run_experiment",
    "emit_report",
    "report_from_json",
    "box_stats",
]

# full model, source maps replaced by source frames, transcoded maps replaced by frames
SETTINGS = ("full", "no_source_maps", "no_transcoded_maps")


@dataclass
class ExperimentConfig:
    manifest: str = ""
    ratios: tuple = (0.6, 0.2, 0.2)
    repeats: int = 20
    kind: str = "vif"
    frame_count: int = 10
    factor: int = 1
    seed: int = 0
    out_dir: str = ""
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 16
    width: int = 8
    settings: tuple = ("full",)

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        if len(self.ratios) != 3 or abs(sum(self.ratios) - 1.0) > 1e-9 or min(self.ratios) < 0:
            raise ValueError("split ratios must be three non-negative values summing to 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        self.settings = tuple(self.settings)
        unknown = set(self.settings) - set(SETTINGS)
        if unknown:
            raise ValueError(f"unknown settings {sorted(unknown)}")


def make_splits(source_ids, ratios=(0.6, 0.2, 0.2), seed=0):
    """Seeded source-level partition into (train, val, test) id lists.

    Validation and test sizes are ``floor(ratio * n)``; the remainder goes
    to training.
    """
    ids = list(dict.fromkeys(source_ids))
    n = len(ids)
    if n < 5:
        raise ValueError(f"need at least 5 sources to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(math.floor(ratios[1] * n + 1e-9))
    n_test = int(math.floor(ratios[2] * n + 1e-9))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError("a split would be empty")
    shuffled = [ids[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


@dataclass
class CorpusItem:
    """Per-frame network inputs for one (source, transcode) pair."""

    source_id: str
    video_id: str
    mos: float
    src_maps: np.ndarray    # (F, 1, h, w) generator output
    trans_maps: np.ndarray  # (F, C, h, w) FR stack
    src_frames: np.ndarray  # (F, 1, h, w)
    trans_frames: np.ndarray

    def inputs(self, setting):
        src = self.src_frames if setting == "no_source_maps" else self.src_maps
        trans = self.trans_frames if setting == "no_transcoded_maps" else self.trans_maps
        return src, trans


def load_manifest(path):
    """Return ``[(source_clip, [(transcoded_clip, mos), ...]), ...]``."""
    path = Path(path)
    entries = json.loads(path.read_text())
    out = []
    for e in entries:
        src_path = path.parent / e["source"]
        if len(e["transcoded"]) != len(e["mos"]):
            raise ValueError(f"{src_path}: transcoded and mos lists differ in length")
        src = parse_y4m(src_path.read_bytes(), clip_id=Path(e["source"]).stem)
        pairs = []
        for t, m in zip(e["transcoded"], e["mos"]):
            p = path.parent / t
            pairs.append((parse_y4m(p.read_bytes(), clip_id=Path(t).stem), float(m)))
        out.append((src, pairs))
    return out


def prepare_items(corpus, generator, kind="vif", frame_count=10, factor=1):
    """Compute generator maps, FR stacks and raw frames for every pair."""
    generator.eval()
    items = []
    for src, pairs in corpus:
        idx = sample_frames_uniform(src.n_frames, min(frame_count, src.n_frames))
        frames = to_float(src.luma[idx])[:, None]
        gmaps = generator.forward(frames)
        for clip, mos in pairs:
            if clip.luma.shape != src.luma.shape:
                raise ValueError(f"{clip.id}: geometry differs from source {src.id}")
            stacks = []
            for i in idx:
                prev = clip.luma[i - 1] if i > 0 else None
                stacks.append(np.stack([m.values for m in map_stack(kind, src.luma[i], clip.luma[i], prev)]))
            items.append(CorpusItem(
                source_id=src.id,
                video_id=clip.id,
                mos=mos,
                src_maps=downsample(gmaps, factor),
                trans_maps=downsample(np.stack(stacks), factor),
                src_frames=downsample(frames, factor),
                trans_frames=downsample(to_float(clip.luma[idx])[:, None], factor),
            ))
    return items


def _frames(items, setting):
    src, trans, y, groups = [], [], [], []
    for k, it in enumerate(items):
        s, t = it.inputs(setting)
        src.append(s)
        trans.append(t)
        y.extend([it.mos] * len(s))
        groups.extend([k] * len(s))
    return np.concatenate(src), np.concatenate(trans), np.array(y), np.array(groups)


def _video_scores(model, items, setting):
    out = []
    for it in items:
        s, t = it.inputs(setting)
        out.append(float(np.mean(model.forward(s, t))))
    return np.array(out)


@dataclass
class RunReport:
    rows: list = field(default_factory=list)  # dicts: setting, repeat, srocc, plcc, rmse, best_epoch
    config: dict = field(default_factory=dict)

    def aggregate(self):
        out = {}
        for setting in dict.fromkeys(r["setting"] for r in self.rows):
            rows = [r for r in self.rows if r["setting"] == setting]
            agg = {}
            for key in ("srocc", "plcc", "rmse"):
                v = np.array([r[key] for r in rows], dtype=np.float64)
                agg[key] = {"mean": float(v.mean()), "std": float(v.std())}
            out[setting] = agg
        return out

    def to_dict(self):
        return {"config": self.config, "rows": self.rows, "aggregate": self.aggregate()}


def _train_config(config, seed):
    return TrainConfig(lr=config.lr, epochs=config.epochs, batch_size=config.batch_size, seed=seed)


def run_experiment(config, items, indices=None):
    """Repeat: split by source, train per setting with best-validation selection, test.

    ``indices`` restricts the run to the given repeat numbers; a repeat
    depends only on its number and the config, so any single repeat can be
    reproduced in isolation.

    Test SROCC is computed on raw per-video predictions; PLCC and RMSE after
    the logistic mapping fitted on train+val predictions and applied frozen
    to the test set.  The split of a repeat is shared by every setting.
    """
    report = RunReport(config=json.loads(json.dumps(asdict(config))))
    sources = [it.source_id for it in items]
    reps = range(config.repeats) if indices is None else list(indices)
    for rep in reps:
        if not 0 <= rep < config.repeats:
            raise ValueError(f"repeat index {rep} outside [0, {config.repeats})")
        rep_seed = config.seed * 1000 + rep
        train_ids, val_ids, test_ids = make_splits(sources, config.ratios, rep_seed)
        part = {name: [it for it in items if it.source_id in set(ids)]
                for name, ids in (("train", train_ids), ("val", val_ids), ("test", test_ids))}
        for setting in config.settings:
            src, trans, y, _ = _frames(part["train"], setting)
            val = _frames(part["val"], setting)
            res = train_pooling(src, trans, y, _train_config(config, rep_seed), width=config.width, val=val)
            model = res.model
            fit_items = part["train"] + part["val"]
            fit_pred = _video_scores(model, fit_items, setting)
            test_pred = _video_scores(model, part["test"], setting)
            test_mos = np.array([it.mos for it in part["test"]])
            rho = srocc(test_pred, test_mos)
            try:
                params = fit_logistic(fit_pred, np.array([it.mos for it in fit_items]))
                plcc, rmse = plcc_rmse(test_pred, test_mos, params)
            except ValueError:
                plcc, rmse = plcc_rmse(test_pred, test_mos)
            report.rows.append({
                "setting": setting, "repeat": rep, "srocc": rho, "plcc": plcc, "rmse": rmse,
                "best_epoch": res.best_epoch, "test_sources": list(test_ids),
            })
    return report


def box_stats(values):
    """25/50/75 percentiles (linear interpolation) and the mean."""
    v = np.asarray(values, dtype=np.float64)
    q25, q50, q75 = np.percentile(v, [25, 50, 75])
    return {"q25": float(q25), "median": float(q50), "q75": float(q75), "mean": float(v.mean())}


def emit_report(report, fmt="json"):
    """Render a report as ``json`` (full), ``csv`` (per-repeat rows) or ``plotdata``."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting", "repeat", "srocc", "plcc", "rmse", "best_epoch"])
        for r in report.rows:
            w.writerow([r["setting"], r["repeat"], repr(r["srocc"]), repr(r["plcc"]), repr(r["rmse"]),
                        r["best_epoch"]])
        return buf.getvalue()
    if fmt == "plotdata":
        out = {}
        for setting in dict.fromkeys(r["setting"] for r in report.rows):
            rows = [r for r in report.rows if r["setting"] == setting]
            out[setting] = {k: box_stats([r[k] for r in rows]) for k in ("srocc", "plcc", "rmse")}
        return json.dumps(out, indent=2, sort_keys=True)
    raise ValueError(f"unknown report format {fmt!r}")


def report_from_json(text):
    d = json.loads(text)
    return RunReport(rows=d["rows"], config=d["config"])
