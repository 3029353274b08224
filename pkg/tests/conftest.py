import numpy as np
import pytest
import torch

from inkflow import dataset as ds
from inkflow import losses as L
from inkflow import training as T
from inkflow.core import InputMode, save_png
from inkflow.model import DiscriminatorConfig, GeneratorConfig

# Documented toy overfit recipe: small nets, toy feature extractor,
# l1-heavy weights (the paper's style weight is calibrated to VGG features,
# not to the random toy extractor).
TOY_RECIPE = dict(
    batch_size=4,
    lr_g=1e-3,
    lr_d=5e-4,
    max_steps=200,
    seed=0,
    lambda_adv=1.0,
    lambda_cont=1.0,
    lambda_style=1.0,
    lambda_l1=200.0,
    gen_base_channels=24,
    gen_res_blocks=2,
    disc_base_channels=32,
    reveal_fraction=0.05,
)


def toy_scene_frames(n_frames: int = 10, size: int = 32) -> list[np.ndarray]:
    """Moving bright square over a two-region background, as uint8 frames."""
    frames = []
    for t in range(n_frames):
        img = np.zeros((size, size, 3), dtype=np.uint8)
        img[:, : size // 2] = (40, 60, 160)
        img[:, size // 2 :] = (230, 220, 130)
        x = 4 + t
        img[10:20, x : x + 10] = (220, 40, 40)
        img[24:30, 4:12] = (40, 180, 80)
        frames.append(img)
    return frames


def write_frames(dirpath, frames) -> list:
    dirpath.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, f in enumerate(frames):
        p = dirpath / f"frame_{i:03d}.png"
        save_png(p, f)
        paths.append(p)
    return paths


def toy_manifest(frame_paths, mode=InputMode.LINE_ART,
                 reveal_fraction=TOY_RECIPE["reveal_fraction"], seed=0) -> ds.DatasetManifest:
    return ds.DatasetManifest(
        frames=[(str(p), 0) for p in frame_paths],
        input_mode=mode,
        hints=ds.HintParams(4, reveal_fraction, seed),
    )


def toy_train_config(max_steps: int, mode=InputMode.LINE_ART, seed: int = 0,
                     checkpoint_every: int = 0, **overrides) -> T.TrainConfig:
    r = dict(TOY_RECIPE, **overrides)
    return T.TrainConfig(
        batch_size=r["batch_size"],
        lr_g=r["lr_g"],
        lr_d=r["lr_d"],
        max_steps=max_steps,
        seed=seed,
        mode=mode,
        weights=L.LossWeights(r["lambda_adv"], r["lambda_cont"],
                              r["lambda_style"], r["lambda_l1"]),
        checkpoint_every=checkpoint_every,
        gen=GeneratorConfig(base_channels=r["gen_base_channels"],
                            n_residual_blocks=r["gen_res_blocks"]),
        disc=DiscriminatorConfig(base_channels=r["disc_base_channels"]),
    )


@pytest.fixture(scope="session")
def toy_frames_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy_frames")
    write_frames(d, toy_scene_frames())
    return d


@pytest.fixture(scope="session")
def toy_samples(toy_frames_dir):
    manifest = toy_manifest(sorted(toy_frames_dir.glob("*.png")))
    return [s for s in ds.build_samples(manifest)]


def toy_train_cli_args(manifest_path, run_dir, max_steps: int = 200) -> list:
    r = TOY_RECIPE
    return [
        "train", str(manifest_path), str(run_dir),
        "--max-steps", str(max_steps),
        "--feature-extractor", "toy",
        "--batch-size", str(r["batch_size"]),
        "--lr-g", str(r["lr_g"]), "--lr-d", str(r["lr_d"]),
        "--lambda-adv", str(r["lambda_adv"]), "--lambda-cont", str(r["lambda_cont"]),
        "--lambda-style", str(r["lambda_style"]), "--lambda-l1", str(r["lambda_l1"]),
        "--gen-base-channels", str(r["gen_base_channels"]),
        "--gen-res-blocks", str(r["gen_res_blocks"]),
        "--disc-base-channels", str(r["disc_base_channels"]),
        "--checkpoint-every", "100",
    ]


@pytest.fixture(scope="session")
def overfit_run(toy_frames_dir, tmp_path_factory):
    """The documented toy overfit recipe, run once per session through the CLI."""
    from inkflow import cli

    data_dir = tmp_path_factory.mktemp("toy_data")
    run_dir = tmp_path_factory.mktemp("toy_run")
    rc = cli.run(["dataset", str(toy_frames_dir), str(data_dir),
                  "--reveal-fraction", str(TOY_RECIPE["reveal_fraction"]),
                  "--no-save-samples"])
    assert rc == 0
    rc = cli.run(toy_train_cli_args(data_dir / "manifest.json", run_dir))
    assert rc == 0
    return {"data_dir": data_dir, "run_dir": run_dir,
            "manifest": data_dir / "manifest.json",
            "checkpoint": run_dir / "checkpoint.pt",
            "loss_log": run_dir / "loss_log.jsonl"}


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)
