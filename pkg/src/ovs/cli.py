"""Command line entry point: ``ovs expand|stabilize|eval|synth|ablate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ablate import SWEEP, expansion_quality, run_ablation, write_ablation
from .config import Config, load_config
from .core import sobel_edges
from .errors import OVSError, TooShort
from .expand import expand_sequence, normalize_mode
from .io import read_canvases, read_frame, read_sequence, write_canvases, write_json, write_sequence
from .metrics import cropping_ratio, distortion, eval_losses, stability
from .stabilizer import stabilize
from .synth import JitterSpec, default_suite, make_panorama, render_jitter_video, required_panorama_size

log = logging.getLogger("ovs")


class UsageError(Exception):
    pass


def _existing_dir(value):
    path = Path(value)
    if not path.is_dir():
        raise argparse.ArgumentTypeError(f"not a directory: {value}")
    return path


def _common(p):
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--seed", type=int, help="seed for RANSAC and synthesis")
    p.add_argument("--flow", help="flow estimator: baseline or files:<dir>")
    p.add_argument("--pad", type=int, help="canvas padding in pixels (default width/8)")


def build_parser():
    parser = argparse.ArgumentParser(prog="ovs", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ovs {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="grow out-of-boundary canvases")
    p.add_argument("--input", type=_existing_dir, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--mode", choices=["full", "coarse", "fine", "global",
                                      "coarse_only", "fine_only"])
    _common(p)

    p = sub.add_parser("stabilize", help="stabilize a frame sequence")
    p.add_argument("--input", type=_existing_dir, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--ovs", choices=["on", "off"], default="on")
    p.add_argument("--iterations", type=int)
    p.add_argument("--fill", choices=["none", "nearest"])
    p.add_argument("--window", type=int)
    p.add_argument("--mode", choices=["full", "coarse", "fine", "global",
                                      "coarse_only", "fine_only"])
    _common(p)

    p = sub.add_parser("eval", help="score a stabilized sequence")
    p.add_argument("--input", type=_existing_dir, required=True)
    p.add_argument("--output", type=_existing_dir, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--gt", type=_existing_dir, help="ground-truth canvases")
    p.add_argument("--expanded", type=_existing_dir, help="expanded canvases to score")
    _common(p)

    p = sub.add_parser("synth", help="render a synthetic jittery sequence")
    p.add_argument("--panorama", type=Path, help="source image (default: procedural)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--amplitude", type=float, default=60.0)
    p.add_argument("--period", type=float, default=30.0)
    p.add_argument("--jitter", type=float, default=8.0)
    p.add_argument("--rotation", type=float, default=0.5)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--emit-gt", action="store_true")
    _common(p)

    p = sub.add_parser("ablate", help="mode comparison and iteration sweep")
    p.add_argument("--input", type=_existing_dir, help="frames (default: synthetic suite)")
    p.add_argument("--gt", type=_existing_dir, help="ground-truth canvases for --input")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--scale", type=float, default=0.5,
                   help="synthetic suite scale when --input is absent")
    p.add_argument("--frames", type=int, default=30,
                   help="synthetic suite length when --input is absent")
    p.add_argument("--sweep", default=",".join(map(str, SWEEP)),
                   help="comma-separated iteration counts")
    _common(p)
    return parser


def effective_config(args) -> Config:
    config = load_config(args.config)
    overrides = {
        "run.seed": getattr(args, "seed", None),
        "flow.estimator": getattr(args, "flow", None),
        "canvas.pad": getattr(args, "pad", None),
        "expand.iterations": getattr(args, "iterations", None),
        "stabilizer.fill": getattr(args, "fill", None),
        "stabilizer.window": getattr(args, "window", None),
    }
    if getattr(args, "mode", None):
        overrides["expand.mode"] = normalize_mode(args.mode)
    return config.with_overrides(overrides)


def _frames(directory):
    frames = read_sequence(directory)
    if not frames:
        raise UsageError(f"no frames found in {directory}")
    return frames


def cmd_expand(args, config):
    frames = _frames(args.input)
    res = expand_sequence(frames, config=config)
    write_canvases(args.out, res.canvases)
    write_json(Path(args.out) / "report.json",
               {"config": config.as_dict(), "pad": res.canvases[0].pad, "stats": res.stats})


def cmd_stabilize(args, config):
    frames = _frames(args.input)
    sources = None
    if args.ovs == "on":
        sources = expand_sequence(frames, config=config).canvases
    res = stabilize(frames, sources, window=config.stabilizer.window,
                    fill=config.stabilizer.fill, rows=config.coarse.grid_rows,
                    cols=config.coarse.grid_cols, seed=config.run.seed)
    write_sequence(args.out, res.frames)
    r = res.rect
    write_json(Path(args.out) / "report.json", {
        "config": config.as_dict(), "ovs": args.ovs, "crop_scale": res.scale,
        "crop_rect": [r.x, r.y, r.width, r.height],
        "hole_pixels": res.rendered.hole_area(),
        "hole_pixels_per_frame": [int((~m).sum()) for m in res.rendered.masks],
    })


def cmd_eval(args, config):
    inputs = _frames(args.input)
    outputs = _frames(args.output)
    seed = config.run.seed
    crop = cropping_ratio(inputs, outputs, seed)
    dist = distortion(inputs, outputs, seed)
    report = {"config": config.as_dict(), "cropping": crop.value, "distortion": dist.value,
              "cropping_per_frame": crop.per_frame, "distortion_per_frame": dist.per_frame,
              "skipped_frames": crop.skipped}
    try:
        report["stability"] = stability(outputs, seed)
    except TooShort as exc:
        report["stability"] = None
        report["stability_reason"] = str(exc)
    if args.gt is not None:
        if args.expanded is None:
            raise UsageError("--gt needs --expanded canvases to score")
        pad = config.pad_for(inputs[0].shape[1])
        gt = read_canvases(args.gt, pad)
        exp = read_canvases(args.expanded, pad)
        if len(gt) != len(exp) or not gt:
            raise UsageError("ground truth and expanded canvases differ in count")
        report.update(expansion_quality(exp, gt))
        losses = [eval_losses(c.image, sobel_edges(c.image), c.mask, g.image,
                              sobel_edges(g.image), np.ones(c.shape, bool)).as_dict()
                  for c, g in zip(exp, gt)]
        for key in ("L_I", "L_G", "L_M", "L"):
            report[key] = float(np.mean([row[key] for row in losses]))
    args.report.parent.mkdir(parents=True, exist_ok=True)
    write_json(args.report, report)


def cmd_synth(args, config):
    spec = JitterSpec(args.frames, args.amplitude, args.period, args.jitter, args.rotation,
                      seed=JitterSpec().seed if args.seed is None else args.seed)
    size = (args.width, args.height)
    pad = config.pad_for(args.width)
    if args.panorama is not None:
        pano = read_frame(args.panorama)
    else:
        pw, ph = required_panorama_size(spec, size, pad)
        pano = make_panorama(pw, ph, seed=config.run.seed)
    video = render_jitter_video(pano, spec, size, pad)
    out = Path(args.out)
    write_sequence(out / "frames", video.frames)
    if args.emit_gt:
        write_canvases(out / "gt", video.gt)
    write_json(out / "trajectory.json", {
        "pad": pad, "frame_size": list(size), "spec": spec.__dict__,
        "trajectory": video.trajectory})


def cmd_ablate(args, config):
    try:
        sweep = [int(s) for s in args.sweep.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --sweep {args.sweep!r}") from None
    if not sweep or min(sweep) < 0:
        raise UsageError("--sweep needs non-negative iteration counts")
    gt = None
    if args.input is None:
        spec = JitterSpec(n_frames=args.frames,
                          seed=JitterSpec().seed if args.seed is None else args.seed)
        video = default_suite(scale=args.scale, spec=spec)
        frames, gt = video.frames, video.gt
        config = config.with_overrides({"canvas.pad": video.pad})
    else:
        frames = _frames(args.input)
        if args.gt is not None:
            gt = read_canvases(args.gt, config.pad_for(frames[0].shape[1]))
    report, stabilized = run_ablation(frames, config, gt, sweep)
    write_ablation(args.out, report, stabilized)


COMMANDS = {"expand": cmd_expand, "stabilize": cmd_stabilize, "eval": cmd_eval,
            "synth": cmd_synth, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = effective_config(args)
        COMMANDS[args.command](args, config)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ovs: error: usage: {exc}", file=sys.stderr)
        return 2
    except OVSError as exc:
        print(f"ovs: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"ovs: error: {type(exc).__name__.lower()}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
