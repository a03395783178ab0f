"""Command-line entry point: ``crvqa <subcommand> ...``.

Global flags go before the subcommand.  ``--config FILE`` reads plain
``key = value`` lines whose keys are option names (``batch-size`` or
``batch_size``); explicit command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import distort, features, harness, maps, media, sampling, stats
from . import nn
from .synthetic import procedural_texture

__all__ = ["main", "build_parser", "read_config"]


def read_config(text):
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _load_clip(path, width=None, height=None, fps=30):
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(b"YUV4MPEG2"):
        return media.parse_y4m(data, clip_id=path.stem)
    if data.startswith(b"P5"):
        return media.VideoClip(media.read_pgm(data), fps=fps, id=path.stem)
    if not (width and height):
        raise SystemExit(f"{path}: raw I420 input needs --width and --height")
    return media.read_raw_i420(data, width, height, fps=fps, clip_id=path.stem)


def _dump(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _write_curve(path, losses, initial):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "loss"])
    w.writerow([0, repr(initial)])
    for i, v in enumerate(losses, 1):
        w.writerow([i, repr(float(v))])
    Path(path).write_text(buf.getvalue())


def _train_config(args, lr_default):
    return nn.TrainConfig(lr=args.lr if args.lr is not None else lr_default, epochs=args.epochs,
                          batch_size=args.batch_size, alpha=getattr(args, "alpha", 0.84), seed=args.seed)


# -- subcommands -------------------------------------------------------------

def cmd_features(args):
    clip = _load_clip(args.clip, args.width, args.height)
    _dump(features.feature_triple(clip, args.samples).as_dict(), args.out)


def cmd_sample(args):
    with open(args.features, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = ["si", "ti", "cpbd"]
    missing = [c for c in ["id", *cols] if rows and c not in rows[0]]
    if not rows or missing:
        raise SystemExit(f"{args.features}: need columns id, si, ti, cpbd")
    ids = [r["id"] for r in rows]
    feats = np.array([[float(r[c]) for c in cols] for r in rows])
    prob = sampling.SubsetProblem(feats, bins=args.bins, subset_size=args.n)
    if args.exact:
        sel = sampling.solve_exact(prob)
    else:
        sel = sampling.solve_local_search(prob, seed=args.seed, restarts=args.restarts)
    _dump({"selected": [ids[i] for i in sel.indices], "indices": list(sel.indices),
           "objective": sel.objective, "method": sel.method}, args.out)


def _pristine_images(args):
    src = Path(args.input) if args.input else None
    if src and src.is_dir():
        paths = sorted(p for p in src.iterdir() if p.suffix.lower() == ".pgm")
        if paths:
            return [(p.stem, media.to_float(media.read_pgm(p.read_bytes()))) for p in paths]
    if args.procedural:
        rng = np.random.default_rng(args.seed)
        return [(f"tex{k:05d}", procedural_texture(args.procedural, seed=int(rng.integers(2**31))))
                for k in range(args.count)]
    raise SystemExit("no PGM images found; pass --in DIR or --procedural SIZE")


def cmd_distort(args):
    images = _pristine_images(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.default_rng(args.seed).integers(0, 2**63, size=args.count)
    provenance, labels = [], {}
    for k in range(args.count):
        name, ref = images[k % len(images)]
        recipe = distort.random_recipe(int(seeds[k]))
        dist, prov = distort.synthesize(ref, recipe)
        stem = f"{k:05d}"
        (out / f"{stem}_ref.pgm").write_bytes(media.write_pgm(media.to_uint8(ref)))
        (out / f"{stem}_dist.pgm").write_bytes(media.write_pgm(media.to_uint8(dist)))
        labels[f"vif/{stem}"] = maps.vif_map(media.to_uint8(ref), media.to_uint8(dist)).values
        provenance.append({"index": k, "source": name, "recipe": recipe.as_dict(), **prov})
    (out / "labels.uvqa").write_bytes(media.write_archive(labels))
    (out / "provenance.json").write_text(json.dumps(provenance, indent=1))
    print(f"wrote {args.count} pairs to {out}")


def cmd_fr_maps(args):
    ref = _load_clip(args.ref, args.width, args.height)
    dist = _load_clip(args.dist, args.width, args.height)
    if ref.luma.shape != dist.luma.shape:
        raise SystemExit(f"geometry mismatch: {ref.luma.shape} vs {dist.luma.shape}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tensors, frames = {}, []
    for i in range(ref.n_frames):
        prev = dist.luma[i - 1] if i > 0 else None
        if args.metric == "motion":
            stack = [maps.motion_map(dist.luma[i], prev)]
        else:
            rc = (ref.chroma_u[i], ref.chroma_v[i]) if ref.has_chroma else None
            dc = (dist.chroma_u[i], dist.chroma_v[i]) if dist.has_chroma else None
            stack = maps.map_stack(args.metric, ref.luma[i], dist.luma[i], prev, rc, dc)
        entry = {"frame": i, "psnr": maps.psnr(ref.luma[i], dist.luma[i])}
        for m in stack:
            tensors[f"frame{i:05d}/{m.metric}"] = m.values
            entry[m.metric] = m.mean()
        frames.append(entry)
    (out / "maps.uvqa").write_bytes(media.write_archive(tensors))
    keys = [k for k in frames[0] if k != "frame"]
    summary = {"metric": args.metric, "frames": frames,
               "mean": {k: float(np.mean([f[k] for f in frames])) for k in keys}}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    _dump(summary["mean"])


def _patches(img, size):
    h, w = img.shape
    return [img[r:r + size, c:c + size] for r in range(0, h - size + 1, size)
            for c in range(0, w - size + 1, size)]


def cmd_train_generator(args):
    data = Path(args.data)
    labels = media.read_archive((data / "labels.uvqa").read_bytes())
    xs, ys = [], []
    for name in sorted(labels):
        stem = name.split("/", 1)[1]
        dist = media.to_float(media.read_pgm((data / f"{stem}_dist.pgm").read_bytes()))
        xs += _patches(dist, args.patch)
        ys += _patches(labels[name], args.patch)
    if not xs:
        raise SystemExit(f"{data}: no {args.patch}x{args.patch} patches found")
    depth, width = (10, 64) if args.paper_config else (args.depth, args.width)
    res = nn.train_generator(np.stack(xs), np.stack(ys), _train_config(args, 1e-3), depth=depth, width=width)
    Path(args.out).write_bytes(nn.save_weights(res.model))
    _write_curve(args.curve or str(Path(args.out).with_suffix(".loss.csv")), res.losses, res.initial_loss)
    _dump({"patches": len(xs), "initial_loss": res.initial_loss, "final_loss": res.losses[-1]})


def _generator(path):
    if not path:
        raise SystemExit("--generator weights are required")
    return nn.load_weights(Path(path).read_bytes())


def cmd_train_pooling(args):
    corpus = harness.load_manifest(args.manifest)
    items = harness.prepare_items(corpus, _generator(args.generator), args.kind, args.frames, args.factor)
    src, trans, y, _ = harness._frames(items, "full")
    res = nn.train_pooling(src, trans, y, _train_config(args, 1e-4), width=args.pool_width)
    Path(args.out).write_bytes(nn.save_weights(res.model))
    _write_curve(args.curve or str(Path(args.out).with_suffix(".loss.csv")), res.losses, res.initial_loss)
    _dump({"samples": len(y), "initial_loss": res.initial_loss, "final_loss": res.losses[-1]})


def cmd_predict(args):
    src = _load_clip(args.src, args.width, args.height)
    trans = _load_clip(args.trans, args.width, args.height)
    gen = _generator(args.generator)
    pool = nn.load_weights(Path(args.pooling).read_bytes())
    scores = nn.predict_frame_scores(src, trans, gen, pool, args.kind, args.frames, args.factor)
    _dump({"score": float(scores.mean()), "frame_scores": scores.tolist()}, args.out)


def cmd_screen(args):
    matrix = stats.read_scores_csv(Path(args.scores).read_text())
    res = stats.screen_subjects(matrix)
    kept = matrix.subset(res.retained)
    out = {
        "retained": res.retained,
        "rejected": res.rejected,
        "P": dict(zip(matrix.subjects, res.P.tolist())),
        "Q": dict(zip(matrix.subjects, res.Q.tolist())),
        "mos": dict(zip(matrix.presentations, stats.mos(kept).tolist())),
        "missing": [list(m) for m in matrix.missing],
    }
    if any(matrix.is_reference):
        out["dmos"] = dict(zip(matrix.presentations, stats.dmos(kept).tolist()))
    _dump(out, args.out)


def cmd_fit(args):
    with open(args.pairs, newline="") as fh:
        rows = list(csv.DictReader(fh))
    x = np.array([float(r[args.x_column]) for r in rows])
    y = np.array([float(r[args.y_column]) for r in rows])
    params = stats.fit_logistic(x, y)
    plcc_raw, rmse_raw = stats.plcc_rmse(x, y)
    plcc, rmse = stats.plcc_rmse(x, y, params)
    _dump({"beta": params.beta.tolist(), "residual": params.residual, "converged": params.converged,
           "iterations": params.iterations, "srocc": stats.srocc(x, y), "plcc_raw": plcc_raw,
           "rmse_raw": rmse_raw, "plcc": plcc, "rmse": rmse}, args.out)


def cmd_eval(args):
    ratios = tuple(float(v) for v in str(args.ratios).split(","))
    settings = tuple(s for s in str(args.settings).split(",") if s)
    config = harness.ExperimentConfig(
        manifest=str(args.manifest), ratios=ratios, repeats=args.repeats, kind=args.kind,
        frame_count=args.frames, factor=args.factor, seed=args.seed, out_dir=str(args.out),
        epochs=args.epochs, lr=args.lr if args.lr is not None else 1e-3, batch_size=args.batch_size,
        width=args.pool_width, settings=settings)
    corpus = harness.load_manifest(args.manifest)
    items = harness.prepare_items(corpus, _generator(args.generator), args.kind, args.frames, args.factor)
    only = [args.only_repeat] if args.only_repeat is not None else None
    report = harness.run_experiment(config, items, only)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(harness.emit_report(report, "json"))
    (out / "report.csv").write_text(harness.emit_report(report, "csv"))
    (out / "plotdata.json").write_text(harness.emit_report(report, "plotdata"))
    _dump(report.aggregate())


def cmd_report(args):
    report = harness.report_from_json(Path(args.input).read_text())
    text = harness.emit_report(report, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# -- parser ------------------------------------------------------------------

def _geometry(p):
    p.add_argument("--width", type=int, help="raw I420 width")
    p.add_argument("--height", type=int, help="raw I420 height")


def _training(p, epochs):
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=16)


def _pipeline(p):
    p.add_argument("--kind", default="vif", choices=["ssim", "vif", "mdsi", "vmaf_style"])
    p.add_argument("--frames", type=int, default=10, help="frames sampled per clip")
    p.add_argument("--factor", type=int, default=1, help="map downsampling factor (power of 2)")


def build_parser():
    parser = argparse.ArgumentParser(prog="crvqa", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", help="plain-text key=value defaults")
    parser.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="SI, TI and CPBD of a clip")
    p.add_argument("clip")
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--out")
    _geometry(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("sample", help="select a subset with near-uniform feature histograms")
    p.add_argument("--features", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("distort", help="synthesize distorted training pairs with VIF labels")
    p.add_argument("--in", dest="input")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--procedural", type=int, default=0, help="texture size when no PGM input is given")
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("fr-maps", help="per-frame full-reference quality maps")
    p.add_argument("--ref", required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--metric", default="vif", choices=["ssim", "vif", "mdsi", "vmaf_style", "motion"])
    p.add_argument("--out", required=True)
    _geometry(p)
    p.set_defaults(func=cmd_fr_maps)

    p = sub.add_parser("train-generator", help="fit the quality-map generator")
    p.add_argument("--data", required=True, help="output directory of `distort`")
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--paper-config", action="store_true")
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--alpha", type=float, default=0.84)
    _training(p, 30)
    p.set_defaults(func=cmd_train_generator)

    p = sub.add_parser("train-pooling", help="fit the pooling network on a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--generator", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.add_argument("--pool-width", type=int, default=8)
    _pipeline(p)
    _training(p, 20)
    p.set_defaults(func=cmd_train_pooling)

    p = sub.add_parser("predict", help="score a transcode against its source")
    p.add_argument("--src", required=True)
    p.add_argument("--trans", required=True)
    p.add_argument("--generator", required=True)
    p.add_argument("--pooling", required=True)
    p.add_argument("--out")
    _pipeline(p)
    _geometry(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("screen", help="subject screening, MOS and DMOS")
    p.add_argument("--scores", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("fit", help="logistic mapping and agreement statistics")
    p.add_argument("--pairs", required=True, help="CSV with objective and mos columns")
    p.add_argument("--x-column", default="objective")
    p.add_argument("--y-column", default="mos")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="repeated split / train / test protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--generator", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--ratios", default="0.6,0.2,0.2")
    p.add_argument("--settings", default="full", help="comma list of " + ",".join(harness.SETTINGS))
    p.add_argument("--only-repeat", type=int, default=None, help="run just this repeat index")
    p.add_argument("--pool-width", type=int, default=8)
    _pipeline(p)
    _training(p, 20)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="re-emit a saved report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", default="json", choices=["json", "csv", "plotdata"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(parser, args, argv):
    if not args.config:
        return
    values = read_config(Path(args.config).read_text())
    given = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, raw in values.items():
        if key in given or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float) or key == "lr":
            value = float(raw)
        else:
            value = raw
        setattr(args, key, value)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_config(parser, args, argv)
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"crvqa {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
