"""Command-line entry point: synth, composite, eval, attn-demo, macs.

Exit codes are a stable contract: 0 success, 1 usage or validation
failure, 2 I/O failure, 3 numeric failure. Subcommands never mutate their
inputs; outputs are written atomically.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import jsonschema

from . import io as mio
from .attention import clip_loss, fit_direct_supervision, params_to_arrays
from .compositor import SynthSpec, replace_background, synth_clip
from .errors import MatteKitError, NumericError
from .grid import avg_pool
from .metrics import (METRIC_NAMES, REPORT_SCHEMA, NetworkConfig, count_macs,
                      evaluate_clip, layer_macs)
from .network import (ToyNetConfig, default_macs_config, encode_features,
                      forward_clip, init_weights)

_SPEC_KEYS = ("frames", "height", "width", "sprite", "radius", "softness",
              "velocity", "seed")


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


def _spec_to_manifest(spec: SynthSpec) -> dict:
    return {"frames": spec.frames, "height": spec.height, "width": spec.width,
            "sprite": spec.sprite, "radius": spec.radius, "softness": spec.softness,
            "velocity": list(spec.velocity), "seed": spec.seed}


def _manifest_to_spec(doc: dict) -> SynthSpec:
    extra = set(doc) - set(_SPEC_KEYS)
    if extra:
        raise CliUsageError(f"unknown manifest keys: {sorted(extra)}")
    missing = set(_SPEC_KEYS) - set(doc)
    if missing:
        raise CliUsageError(f"manifest missing keys: {sorted(missing)}")
    return SynthSpec(frames=doc["frames"], height=doc["height"], width=doc["width"],
                     sprite=doc["sprite"], radius=doc["radius"],
                     softness=doc["softness"], velocity=tuple(doc["velocity"]),
                     seed=doc["seed"])


def _require_fresh(out: Path, force: bool) -> None:
    if out.exists() and not force:
        raise CliUsageError(f"output {out} exists; pass --force to overwrite")


def cmd_synth(args) -> int:
    spec = SynthSpec(frames=args.frames, height=args.height, width=args.width,
                     sprite=args.sprite, radius=args.radius, softness=args.softness,
                     velocity=tuple(args.velocity), seed=args.seed)
    out = Path(args.out)
    _require_fresh(out, args.force)
    frames, gt_alpha, gt_fg, bg = synth_clip(spec)
    out.mkdir(parents=True, exist_ok=True)
    mio.write_clip(out / "frames", frames)
    mio.write_clip(out / "alpha", gt_alpha)
    mio.write_clip(out / "fg", gt_fg)
    mio.write_image_png(out / "bg.png", bg)
    mio.atomic_write_json(out / "manifest.json", _spec_to_manifest(spec))
    print(f"wrote {spec.frames} frames to {out}")
    return 0


def cmd_composite(args) -> int:
    clip_dir = Path(args.clip)
    out = Path(args.out)
    _require_fresh(out, args.force)
    gt_alpha = mio.read_clip(clip_dir / "alpha", "alpha")
    gt_fg = mio.read_clip(clip_dir / "fg", "foreground")
    new_bg = mio.read_image_png(Path(args.bg))
    frames = replace_background(gt_alpha, gt_fg, new_bg)
    out.mkdir(parents=True, exist_ok=True)
    mio.write_clip(out, frames)
    print(f"composited {len(frames)} frames to {out}")
    return 0


def cmd_eval(args) -> int:
    selected = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    pred = mio.read_clip(Path(args.pred), "alpha")
    gt = mio.read_clip(Path(args.gt), "alpha")
    report = evaluate_clip(pred, gt, selected)
    doc = report.to_json_dict()
    jsonschema.validate(doc, REPORT_SCHEMA)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mio.atomic_write_json(out / "report.json", doc)
    mio.atomic_write_text(out / "report.csv", report.to_csv_text())
    line = " ".join(f"{k}={v:.6g}" for k, v in report.aggregate.items())
    print(f"aggregate {line}" if line else "aggregate (no metrics selected)")
    return 0


def cmd_attn_demo(args) -> int:
    clip_dir = Path(args.clip)
    out = Path(args.out)
    frames = mio.read_clip(clip_dir / "frames", "image")
    gt_alpha = mio.read_clip(clip_dir / "alpha", "alpha")
    gt_fg = mio.read_clip(clip_dir / "fg", "foreground")

    d = args.feature_dim
    config = ToyNetConfig(widths=(d, d, d, d), key_dim=args.key_dim,
                          value_dim=args.value_dim, seed=args.seed)
    weights = init_weights(config)
    forward_clip(frames, config, weights)  # exercise the full pipeline once

    features = encode_features(frames, weights)
    scale = frames.height // features[0].height
    gt_a_lr = [avg_pool(f, scale) for f in gt_alpha.frames]
    gt_f_lr = [avg_pool(f, scale) for f in gt_fg.frames]

    try:
        fitted, trace = fit_direct_supervision(
            features, gt_a_lr, gt_f_lr, params=weights.attention,
            steps=args.steps, step_size=args.step_size, seed=args.seed)
    except NumericError as e:
        print(f"error: {e} (step {e.step})", file=sys.stderr)
        return 3

    final = clip_loss(features, gt_a_lr, gt_f_lr, fitted)
    out.mkdir(parents=True, exist_ok=True)
    mio.write_loss_trace_csv(out / "loss_trace.csv", trace)
    mio.save_named_arrays(out / "fitted_params.json", params_to_arrays(fitted))
    print(f"loss initial={trace[0]:.6g} final={final:.6g} "
          f"ratio={final / trace[0]:.6g}")
    return 0


def cmd_macs(args) -> int:
    if args.config is not None:
        with open(args.config) as fh:
            config = NetworkConfig.from_json_dict(json.load(fh))
    else:
        config = default_macs_config()
    rows = layer_macs(config, args.height, args.width)
    total = count_macs(config, args.height, args.width)
    print("layer in_ch out_ch kernel stride out_h out_w macs")
    for r in rows:
        print("{layer} {in_ch} {out_ch} {kernel} {stride} {out_h} {out_w} {macs}"
              .format(**r))
    print(f"total_macs {total}")
    print(f"total_gmacs {total / 1e9:.6f}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mattekit",
                     description="Desk-scale video-matting numerics toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic clip with ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--sprite", choices=("disk", "square"), default="disk")
    p.add_argument("--radius", type=float, default=18.0)
    p.add_argument("--softness", type=float, default=6.0,
                   help="width in pixels of the linear alpha ramp")
    p.add_argument("--velocity", type=float, nargs=2, default=(3.0, 2.0),
                   metavar=("DY", "DX"), help="sprite translation per frame")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("composite", help="re-composite a clip over a new background")
    p.add_argument("--clip", required=True, help="synth output directory (alpha/, fg/)")
    p.add_argument("--bg", required=True, help="new background PNG")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("eval", help="run the metric battery over two alpha dirs")
    p.add_argument("--pred", required=True, help="directory of predicted alpha PNGs")
    p.add_argument("--gt", required=True, help="directory of ground-truth alpha PNGs")
    p.add_argument("--out", default=".", help="directory for report.json/report.csv")
    p.add_argument("--metrics", default=",".join(METRIC_NAMES),
                   help="comma-separated subset of mad,mse,grad,conn,dtssd")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attn-demo",
                       help="forward pass + direct-supervision fit of the memory block")
    p.add_argument("--clip", required=True, help="synth output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--key-dim", type=int, default=8)
    p.add_argument("--value-dim", type=int, default=8)
    p.set_defaults(func=cmd_attn_demo)

    p = sub.add_parser("macs", help="count multiply-accumulates of a conv chain")
    p.add_argument("--config", default=None,
                   help="layer-chain JSON; omit for the toy encoder default")
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--width", type=int, default=512)
    p.set_defaults(func=cmd_macs)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (CliUsageError, MatteKitError, jsonschema.ValidationError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
