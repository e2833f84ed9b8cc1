"""Command-line pipeline: synth, features, train, infer, render, fuse, eval."""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import audio, driver, ensemble, fusion, metrics, persistence, synth, training
from .params import ParamSequence, read_params_csv, write_params_csv
from .render import render_sequence


def _color(text: str):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected r,g,b")
    return tuple(vals)


def _clip_dirs(root: Path) -> list[Path]:
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "params.csv").exists())
    if not dirs:
        raise FileNotFoundError(f"no clip directories with params.csv under {root}")
    return dirs


def cmd_synth(args) -> None:
    spec = synth.make_synth_spec(args.seed, args.clips, args.seconds, args.fps, args.sample_rate,
                                 args.size, args.size, args.nonlinearity)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"seed": spec.seed, "n_clips": spec.n_clips, "clip_seconds": spec.clip_seconds, "fps": spec.fps,
            "sample_rate": spec.sample_rate, "height": spec.height, "width": spec.width,
            "background_color": list(synth.BACKGROUND_COLOR), "background_tol": synth.BACKGROUND_TOL}
    (out / "dataset.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    np.save(out / "mapping_matrix.npy", spec.mapping_matrix)
    for i in range(spec.n_clips):
        clip = synth.gen_clip(spec, i, with_frames=not args.no_frames)
        d = out / f"clip_{i:04d}"
        d.mkdir(exist_ok=True)
        audio.write_wav(d / "audio.wav", clip.audio)
        persistence.write_features(d / "features.chft", clip.features.values)
        write_params_csv(d / "params.csv", clip.params)
        persistence.write_png(d / "reference.png", clip.reference_frame)
        if not args.no_frames:
            persistence.write_frame_dir(d / "frames", clip.frames, spec.fps, "../reference.png")


def cmd_features(args) -> None:
    clip = audio.load_audio(args.audio, args.sample_rate)
    feats = audio.extract_features(clip, args.fps)
    persistence.write_features(args.out, feats.values)


def _dataset_fps(root: Path) -> float:
    meta = root / "dataset.json"
    return float(json.loads(meta.read_text(encoding="utf-8"))["fps"]) if meta.exists() else 30.0


def _load_clip(d: Path, attitude_dim: int, fps: float) -> training.TrainClip:
    feats_path = d / "features.chft"
    if feats_path.exists():
        feats = persistence.read_features(feats_path)
    else:
        feats = audio.extract_features(audio.read_wav(d / "audio.wav"), fps).values
    params = read_params_csv(d / "params.csv").values
    att = None
    if attitude_dim:
        att = driver.one_hot(int((d / "attitude.txt").read_text().strip()), attitude_dim)
    n = min(len(feats), len(params))
    return training.TrainClip(feats[:n], params[:n], att)


def cmd_train(args) -> None:
    root = Path(args.data)
    fps = _dataset_fps(root)
    clips = [_load_clip(d, args.attitude_dim, fps) for d in _clip_dirs(root)]
    dcfg = driver.DriverConfig(input_dim=clips[0].features.shape[1], attitude_dim=args.attitude_dim,
                               hidden_dim=args.hidden, num_layers=args.layers, dropout_rate=args.dropout,
                               batchnorm=not args.no_batchnorm, residual=not args.no_residual)
    tcfg = training.TrainConfig(clip_length=args.clip_length, batch_size=args.batch_size, steps=args.steps,
                                lr_max=args.lr_max, lr_min=args.lr_min, weight_decay=args.weight_decay,
                                seed=args.seed, snapshot_every=args.snapshot_every)
    result = training.train(clips, dcfg, tcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    persistence.save_checkpoint(out / "final.chdr", result.weights)
    snaps = []
    for step, w in result.snapshots:
        p = out / f"snapshot_{step:06d}.chdr"
        persistence.save_checkpoint(p, w)
        snaps.append(p)
    if snaps:
        persistence.write_ensemble_manifest(out / "self_ensemble.json", snaps[-args.self_ensemble:], "self")
    training.write_history_csv(out / "loss.csv", result.history)


def cmd_infer(args) -> None:
    feats = persistence.read_features(args.features).astype(np.float64)
    reference = read_params_csv(args.reference_params).values[0]
    if args.ensemble:
        spec = persistence.load_ensemble(args.ensemble)
    else:
        spec = ensemble.EnsembleSpec([persistence.load_checkpoint(args.checkpoint)], "cross")
    dim = spec.members[0].config.attitude_dim
    att = driver.one_hot(args.attitude, dim) if args.attitude is not None else None
    if att is None and dim:
        raise ValueError("model expects --attitude")
    seq = ensemble.ensemble_predict(spec, feats, reference, att)
    write_params_csv(args.out, seq)


def cmd_render(args) -> None:
    seq = read_params_csv(args.params)
    ref = persistence.read_png(args.reference)
    frames = render_sequence(ref, seq)
    persistence.write_frame_dir(args.out, frames, args.fps, str(args.reference))


def cmd_fuse(args) -> None:
    paths = persistence.frame_paths(args.frames)
    frames = [persistence.read_png(p) for p in paths]
    ref = persistence.read_png(args.reference)
    if args.mask_dir:
        if not args.reference_mask:
            raise ValueError("--mask-dir needs --reference-mask")
        masks = persistence.read_mask_dir(args.mask_dir, [p.name for p in paths])
        fused = list(fusion.iter_fused_masks(frames, masks, ref, persistence.read_mask_png(args.reference_mask)))
    else:
        seg = fusion.ThresholdSegmenter(args.bg_color, args.tol)
        fused = list(fusion.iter_fused(frames, ref, seg))
    meta_path = Path(args.frames) / persistence.MANIFEST
    fps = json.loads(meta_path.read_text())["fps"] if meta_path.exists() else args.fps
    persistence.write_frame_dir(args.out, fused, fps, str(args.reference))


def cmd_eval(args) -> None:
    fa = fb = pa = pb = None
    if args.frames_a or args.frames_b:
        if not (args.frames_a and args.frames_b):
            raise ValueError("--frames-a and --frames-b go together")
        fa, _ = persistence.read_frame_dir(args.frames_a)
        fb, _ = persistence.read_frame_dir(args.frames_b)
    if args.params_a or args.params_b:
        if not (args.params_a and args.params_b):
            raise ValueError("--params-a and --params-b go together")
        pa, pb = read_params_csv(args.params_a), read_params_csv(args.params_b)
    if fa is None and pa is None:
        raise ValueError("nothing to evaluate")
    report = metrics.evaluate(fa, fb, pa, pb)
    sys.stdout.write(report.to_text())
    if args.csv:
        path = Path(args.csv)
        new = not path.exists()
        with open(path, "a", encoding="ascii", newline="\n") as fh:
            if new:
                fh.write(report.csv_header() + "\n")
            fh.write(report.csv_row(args.name) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None,
                        help="BLAS thread cap; 1 guarantees bit-identical reruns")

    ap = argparse.ArgumentParser(prog="convhead", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--clips", type=int, default=32)
    p.add_argument("--seconds", type=float, default=6.0)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--nonlinearity", choices=["tanh"], default=None)
    p.add_argument("--no-frames", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", parents=[common], help="WAV or raw f32 audio -> feature file")
    p.add_argument("--audio", required=True)
    p.add_argument("--sample-rate", type=int, default=None, help="required for raw f32 input")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", parents=[common], help="train a driver")
    p.add_argument("--data", required=True, help="directory of clip folders (features.chft + params.csv)")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--clip-length", type=int, default=90)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--lr-max", type=float, default=5e-3)
    p.add_argument("--lr-min", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=0.05)
    p.add_argument("--snapshot-every", type=int, default=500)
    p.add_argument("--self-ensemble", type=int, default=3)
    p.add_argument("--attitude-dim", type=int, default=0)
    p.add_argument("--no-batchnorm", action="store_true")
    p.add_argument("--no-residual", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="predict a parameter CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--ensemble", help="ensemble manifest (JSON)")
    p.add_argument("--features", required=True)
    p.add_argument("--reference-params", required=True, help="CSV whose first row is the reference")
    p.add_argument("--attitude", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("render", parents=[common], help="toy-render a parameter CSV")
    p.add_argument("--params", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fuse", parents=[common], help="foreground-background fusion")
    p.add_argument("--frames", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bg-color", type=_color, default=synth.BACKGROUND_COLOR)
    p.add_argument("--tol", type=float, default=synth.BACKGROUND_TOL)
    p.add_argument("--mask-dir", default=None, help="external segmenter output, masks named like the frames")
    p.add_argument("--reference-mask", default=None)
    p.add_argument("--fps", type=float, default=30.0)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", parents=[common], help="metrics report")
    p.add_argument("--frames-a")
    p.add_argument("--frames-b")
    p.add_argument("--params-a")
    p.add_argument("--params-b")
    p.add_argument("--csv", default=None, help="append a CSV row here")
    p.add_argument("--name", default="run")
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=args.threads)
    else:
        limiter = nullcontext()
    try:
        with limiter:
            args.func(args)
    except Exception as exc:  # one machine-parseable line per failure
        msg = str(exc).replace("\n", " ")
        print(f"convhead: error: {args.command}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
