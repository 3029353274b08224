"""Single entry point: dataset / train / eval / infer / serve subcommands.

Exit codes: 0 success, 1 user or configuration error, 2 internal error.
A JSON file passed via --config supplies defaults for any flag (CLI flags
win); every flag also has a built-in documented default.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import losses as L
from . import metrics as M
from . import service as S
from . import training as T
from .core import (
    ConfigError,
    InputMode,
    InvalidImageError,
    InvalidParamsError,
    SequenceSample,
    blank_image,
    from_model_range,
    load_png,
    save_png,
    to_model_range,
)
from .model import DiscriminatorConfig, GeneratorConfig, generator_forward, load_checkpoint

USER_ERRORS = (ConfigError, InvalidImageError, InvalidParamsError, FileNotFoundError,
               NotADirectoryError, json.JSONDecodeError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # bad flags are a user error: exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="inkflow", description=__doc__)
    parser.add_argument("--config", default=None,
                        help="JSON file of flag defaults (default: none)")
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed (default 0)")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    def sub_parser(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        parser.subcommands[name] = p
        return p

    p = sub_parser("dataset", help="build a paired dataset from a frame directory")
    p.add_argument("frames_dir", help="directory of ordered PNG frames")
    p.add_argument("out_dir", help="output directory for manifest and samples")
    p.add_argument("--mode", choices=["line_art", "greyscale"], default="line_art",
                   help="conditioning input (default line_art)")
    p.add_argument("--sigma", type=float, default=1.0, help="Canny Gaussian sigma (default 1.0)")
    p.add_argument("--low", type=float, default=0.1,
                   help="Canny low threshold, relative (default 0.1)")
    p.add_argument("--high", type=float, default=0.2,
                   help="Canny high threshold, relative (default 0.2)")
    p.add_argument("--patch-size", type=int, default=4, help="hint patch size (default 4)")
    p.add_argument("--reveal-fraction", type=float, default=0.01,
                   help="fraction of hint cells revealed (default 0.01)")
    p.add_argument("--cut-threshold", type=float, default=ds.SCENE_CUT_THRESHOLD,
                   help="mean-abs-diff scene cut threshold (default 0.3)")
    p.add_argument("--no-save-samples", action="store_true",
                   help="write only the manifest and index (default: save sample PNGs)")

    p = sub_parser("train", help="train on a dataset manifest")
    p.add_argument("manifest", help="dataset manifest JSON")
    p.add_argument("out_dir", help="output directory for checkpoints and logs")
    p.add_argument("--mode", choices=["line_art", "greyscale"], default=None,
                   help="override the manifest input mode (default: manifest value)")
    p.add_argument("--batch-size", type=int, default=4, help="samples per step (default 4)")
    p.add_argument("--lr-g", type=float, default=2e-4, help="generator Adam lr (default 2e-4)")
    p.add_argument("--lr-d", type=float, default=2e-4, help="discriminator Adam lr (default 2e-4)")
    p.add_argument("--max-steps", type=int, default=1000, help="training steps (default 1000)")
    p.add_argument("--checkpoint-every", type=int, default=500,
                   help="checkpoint interval in steps (default 500)")
    p.add_argument("--lambda-adv", type=float, default=1.0, help="adversarial weight (default 1)")
    p.add_argument("--lambda-cont", type=float, default=1.0, help="content weight (default 1)")
    p.add_argument("--lambda-style", type=float, default=1000.0,
                   help="style weight (default 1000)")
    p.add_argument("--lambda-l1", type=float, default=10.0, help="l1 weight (default 10)")
    p.add_argument("--feature-extractor", choices=["vgg", "toy"], default="vgg",
                   help="content/style feature source (default vgg)")
    p.add_argument("--vgg-weights", default=None,
                   help="path to a VGG19 state-dict file (default: none)")
    p.add_argument("--gen-base-channels", type=int, default=64,
                   help="generator width (default 64)")
    p.add_argument("--gen-res-blocks", type=int, default=8,
                   help="generator residual blocks (default 8)")
    p.add_argument("--disc-base-channels", type=int, default=64,
                   help="discriminator width (default 64)")
    p.add_argument("--resume", default=None,
                   help="train_state.pt to resume from (default: fresh run)")

    p = sub_parser("eval", help="evaluate a checkpoint on a dataset manifest")
    p.add_argument("checkpoint", help="checkpoint.pt path")
    p.add_argument("manifest", help="dataset manifest JSON")
    p.add_argument("--report", default=None, help="write the JSON report here (default: stdout only)")
    p.add_argument("--oracle-identity", action="store_true",
                   help="score ground truth against itself (sanity oracle)")
    p.add_argument("--fid-features", choices=["toy", "inception"], default="toy",
                   help="FID feature extractor (default toy; absolute FIDs are not comparable)")
    p.add_argument("--inception-weights", default=None,
                   help="inception_v3 state-dict path (default: none)")

    p = sub_parser("infer", help="colorize an ordered directory of line-art frames")
    p.add_argument("checkpoint", help="checkpoint.pt path")
    p.add_argument("line_art_dir", help="directory of ordered line-art PNGs")
    p.add_argument("out_dir", help="output directory for colorized frames")
    p.add_argument("--hints", default=None,
                   help="JSON file: frame index -> [{x, y, rgb}] (default: no hints)")
    p.add_argument("--cuts", default="",
                   help="comma-separated frame indices that start new scenes (default: none)")
    p.add_argument("--patch-size", type=int, default=4, help="hint patch size (default 4)")

    p = sub_parser("serve", help="run the HTTP colorization service")
    p.add_argument("checkpoint", help="checkpoint.pt path")
    p.add_argument("--bind", default="127.0.0.1:8000", help="host:port (default 127.0.0.1:8000)")
    p.add_argument("--ttl", type=float, default=S.DEFAULT_TTL_SECONDS,
                   help="session idle TTL in seconds (default 1800)")
    p.add_argument("--patch-size", type=int, default=4, help="hint patch size (default 4)")
    p.add_argument("--static-dir", default=None,
                   help="serve a static UI bundle from this directory (default: none)")

    return parser


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
        if not isinstance(overrides, dict):
            raise ConfigError(f"--config must hold a JSON object, got {type(overrides).__name__}")
        # subparsers parse into their own namespace, so they need the
        # defaults too; explicit CLI flags still win
        parser.set_defaults(**overrides)
        for sub in parser.subcommands.values():
            sub.set_defaults(**{k: v for k, v in overrides.items()
                                if any(a.dest == k for a in sub._actions)})
        args = parser.parse_args(argv)
    return args


def _list_frames(frames_dir: Path) -> list[Path]:
    if not frames_dir.is_dir():
        raise NotADirectoryError(f"{frames_dir} is not a directory")
    frames = sorted(frames_dir.glob("*.png"))
    if not frames:
        raise InvalidParamsError(f"no PNG frames found in {frames_dir}")
    return frames


def cmd_dataset(args) -> int:
    frames_dir = Path(args.frames_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _list_frames(frames_dir)

    images = [to_model_range(load_png(p)) for p in paths]
    cuts = set(ds.detect_scene_cuts(images, args.cut_threshold)) if len(images) > 1 else set()
    scene = 0
    frames = []
    for i, p in enumerate(paths):
        if i in cuts:
            scene += 1
        frames.append((str(p.resolve()), scene))

    manifest = ds.DatasetManifest(
        frames=frames,
        input_mode=InputMode(args.mode),
        canny=ds.CannyParams(args.sigma, args.low, args.high),
        hints=ds.HintParams(args.patch_size, args.reveal_fraction, args.seed),
    )
    manifest.save(out_dir / "manifest.json")

    index = []
    n_samples = 0
    n_errors = 0
    samples_dir = out_dir / "samples"
    for item in ds.build_samples(manifest):
        if isinstance(item, ds.SampleError):
            n_errors += 1
            index.append({"error": item.error, "frame": item.frame_path,
                          "frame_index": item.frame_index})
            continue
        name = f"sample_{n_samples:05d}"
        entry = {"name": name, "frame_index": item.frame_index,
                 "is_sequence_start": item.is_sequence_start}
        if not args.no_save_samples:
            d = samples_dir / name
            d.mkdir(parents=True, exist_ok=True)
            for key in ("line_prev", "gt_prev", "line_curr", "gt_curr",
                        "hint_curr", "hint_prev"):
                save_png(d / f"{key}.png", from_model_range(getattr(item, key)))
        index.append(entry)
        n_samples += 1
    samples_dir.mkdir(parents=True, exist_ok=True)
    (samples_dir / "index.json").write_text(json.dumps(index, indent=2))

    print(f"frames: {len(paths)}  scenes: {scene + 1}  samples: {n_samples}  errors: {n_errors}")
    if n_samples == 0:
        raise InvalidParamsError("dataset produced no samples")
    return 0


def _train_config_from_args(args, manifest: ds.DatasetManifest) -> T.TrainConfig:
    mode = InputMode(args.mode) if args.mode else manifest.input_mode
    return T.TrainConfig(
        batch_size=args.batch_size,
        lr_g=args.lr_g,
        lr_d=args.lr_d,
        max_steps=args.max_steps,
        seed=args.seed,
        mode=mode,
        weights=L.LossWeights(args.lambda_adv, args.lambda_cont,
                              args.lambda_style, args.lambda_l1),
        checkpoint_every=args.checkpoint_every,
        gen=GeneratorConfig(base_channels=args.gen_base_channels,
                            n_residual_blocks=args.gen_res_blocks),
        disc=DiscriminatorConfig(base_channels=args.disc_base_channels),
    )


def cmd_train(args) -> int:
    manifest = ds.DatasetManifest.load(args.manifest)
    if args.mode:
        manifest.input_mode = InputMode(args.mode)
    cfg = _train_config_from_args(args, manifest)

    # Resolve the feature extractor before touching any data: a missing
    # pretrained file must fail fast, not mid-run.
    weights = cfg.effective_weights()
    fx = None
    if weights.lambda_cont > 0 or weights.lambda_style > 0:
        fx = L.load_feature_extractor(args.feature_extractor, args.vgg_weights, seed=args.seed)

    samples = list(ds.build_samples(manifest))
    state = T.train_loop(samples, cfg, args.out_dir, fx=fx, resume_from=args.resume)
    print(f"trained to step {state.step}; averages: "
          f"{json.dumps(state.rolling_averages(), sort_keys=True)}")
    return 0


def cmd_eval(args) -> int:
    manifest = ds.DatasetManifest.load(args.manifest)
    samples = [s for s in ds.build_samples(manifest) if isinstance(s, SequenceSample)]
    if args.fid_features == "inception":
        if not args.inception_weights:
            raise ConfigError("--fid-features inception requires --inception-weights")
        fid_fx = M.InceptionFidFeatures(args.inception_weights)
    else:
        fid_fx = M.ToyFidFeatures(seed=args.seed)
    checkpoint = None
    if not args.oracle_identity:
        checkpoint = Path(args.checkpoint)
        if not checkpoint.exists():
            raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    report = M.evaluate_sequence(checkpoint, samples, manifest.input_mode,
                                 fid_features=fid_fx, identity_oracle=args.oracle_identity)
    print(report.table())
    if args.report:
        Path(args.report).write_text(report.to_json())
    return 0


def _load_hints_file(path, n_frames: int, patch_size: int) -> dict[int, list[S.HintPlacement]]:
    data = json.loads(Path(path).read_text())
    out: dict[int, list[S.HintPlacement]] = {}
    for key, placements in data.items():
        idx = int(key)
        if not 0 <= idx < n_frames:
            raise InvalidParamsError(
                f"hints reference frame index {idx}, but only {n_frames} frames exist")
        out[idx] = [S.HintPlacement(**p) for p in placements]
    return out


def cmd_infer(args) -> int:
    checkpoint = Path(args.checkpoint)
    if not checkpoint.exists():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    generator, _, _ = load_checkpoint(checkpoint)
    paths = _list_frames(Path(args.line_art_dir))
    hints = _load_hints_file(args.hints, len(paths), args.patch_size) if args.hints else {}
    cuts = {int(c) for c in args.cuts.split(",") if c.strip()}

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prev = None
    for i, p in enumerate(paths):
        raw = load_png(p)
        line = to_model_range(raw if raw.shape[2] == 1 else raw[:, :, :1])
        h, w = line.shape[:2]
        if prev is None or i in cuts or prev.shape[:2] != (h, w):
            prev = blank_image(h, w)
        hint_map = S.rasterize_hints(hints.get(i, []), w, h, args.patch_size)
        frame = generator_forward(generator, line, hint_map, prev)
        save_png(out_dir / f"frame_{i:04d}.png", from_model_range(frame))
        prev = frame
    print(f"colorized {len(paths)} frames into {out_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    checkpoint = Path(args.checkpoint)
    if not checkpoint.exists():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    app = S.app_from_checkpoint(checkpoint, ttl_seconds=args.ttl,
                                patch_size=args.patch_size, static_dir=args.static_dir)
    host, _, port = args.bind.rpartition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    except SystemExit as exc:  # uvicorn exits 1 on bind failure
        return int(exc.code or 0)
    return 0


_COMMANDS = {
    "dataset": cmd_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "serve": cmd_serve,
}


def run(argv: list[str]) -> int:
    try:
        args = parse_args(argv)
        np.random.seed(args.seed % (2**32))
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal error
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
