"""Adversarial training loop with recurrent previous-frame conditioning.

The previous frame fed to the generator is its own (gradient-isolated)
prediction for t-1, rebuilt from the t-1 inputs with a blank prior —
depth-1 truncation of the recurrence. Sequence starts use the blank
image. Each step updates the discriminator on real vs generated sequence
tuples, then the generator on the joint loss with fresh logits.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch

from . import losses as L
from .core import InputMode, InvalidParamsError, SequenceSample, blank_image
from .dataset import SampleError
from .losses import FeatureExtractor, LossWeights
from .model import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    generator_forward,
    hwc_to_batch,
    save_checkpoint,
)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    max_steps: int = 1000
    seed: int = 0
    mode: InputMode = InputMode.LINE_ART
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_every: int = 500
    gen: GeneratorConfig = field(default_factory=GeneratorConfig)
    disc: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise InvalidParamsError(f"batch_size must be >= 1, got {self.batch_size}")
        # lr == 0 is allowed: it freezes the nets, which diagnostics rely on.
        if self.lr_g < 0 or self.lr_d < 0:
            raise InvalidParamsError("learning rates must be nonnegative")

    def effective_weights(self) -> LossWeights:
        """Greyscale mode has no content loss."""
        if self.mode is InputMode.GREYSCALE and self.weights.lambda_cont != 0:
            return LossWeights(self.weights.lambda_adv, 0.0,
                               self.weights.lambda_style, self.weights.lambda_l1)
        return self.weights


class TrainState:
    """Everything a resumed run needs to continue bit-identically."""

    def __init__(self, cfg: TrainConfig, fx: FeatureExtractor | None):
        torch.manual_seed(cfg.seed)
        self.step = 0
        self.generator = Generator(cfg.gen)
        self.discriminator = Discriminator(cfg.disc)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=cfg.lr_g,
                                      betas=(cfg.adam_beta1, cfg.adam_beta2))
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=cfg.lr_d,
                                      betas=(cfg.adam_beta1, cfg.adam_beta2))
        self.fx = fx
        self.loss_sums: dict[str, float] = {}
        self.loss_count = 0

    def rolling_averages(self) -> dict[str, float]:
        if self.loss_count == 0:
            return {}
        return {k: v / self.loss_count for k, v in self.loss_sums.items()}

    def save(self, path) -> None:
        tmp = Path(str(path) + ".tmp")
        torch.save(
            {
                "step": self.step,
                "generator": self.generator.state_dict(),
                "discriminator": self.discriminator.state_dict(),
                "opt_g": self.opt_g.state_dict(),
                "opt_d": self.opt_d.state_dict(),
                "torch_rng": torch.get_rng_state(),
                "loss_sums": self.loss_sums,
                "loss_count": self.loss_count,
            },
            tmp,
        )
        os.replace(tmp, path)

    @classmethod
    def load(cls, path, cfg: TrainConfig, fx: FeatureExtractor | None) -> "TrainState":
        saved = torch.load(path, map_location="cpu", weights_only=True)
        state = cls(cfg, fx)
        state.step = int(saved["step"])
        state.generator.load_state_dict(saved["generator"])
        state.discriminator.load_state_dict(saved["discriminator"])
        state.opt_g.load_state_dict(saved["opt_g"])
        state.opt_d.load_state_dict(saved["opt_d"])
        torch.set_rng_state(saved["torch_rng"])
        state.loss_sums = dict(saved["loss_sums"])
        state.loss_count = int(saved["loss_count"])
        return state


def prev_frame_for(sample: SequenceSample, generator: Generator,
                   mode: InputMode) -> np.ndarray:
    """Previous-frame condition for one sample, as an (H, W, 3) image.

    Blank at sequence starts; otherwise the generator's own t-1 prediction
    from (line_prev, hint_prev, blank) — depth-1 truncation, with no
    gradient attached (the pass runs outside any autograd graph).
    """
    blank = blank_image(sample.height, sample.width)
    if sample.is_sequence_start:
        return blank
    return generator_forward(generator, sample.line_prev, sample.hint_prev, blank)


def _stack(batch: list[SequenceSample], attr: str) -> torch.Tensor:
    return torch.cat([hwc_to_batch(getattr(s, attr)) for s in batch], dim=0)


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def train_step(batch: list[SequenceSample], state: TrainState,
               cfg: TrainConfig) -> dict[str, float]:
    """One discriminator step then one generator step on a sample batch.

    Returns the loss breakdown for logging; on a non-finite loss the step
    is aborted, previous weights kept, and the record carries "skipped".
    """
    weights = cfg.effective_weights()
    line_prev = _stack(batch, "line_prev")
    gt_prev = _stack(batch, "gt_prev")
    line_curr = _stack(batch, "line_curr")
    gt_curr = _stack(batch, "gt_curr")
    hint_curr = _stack(batch, "hint_curr")
    prev = torch.cat(
        [hwc_to_batch(prev_frame_for(s, state.generator, cfg.mode)) for s in batch], dim=0)

    state.generator.train()
    state.discriminator.train()
    fake = state.generator(line_curr, hint_curr, prev)

    # Discriminator on real vs generated sequence tuples; generated frames detached.
    logits_real = state.discriminator(line_prev, gt_prev, line_curr, gt_curr)
    logits_fake = state.discriminator(line_prev, prev, line_curr, fake.detach())
    d_loss = L.adversarial_loss_d(logits_real, logits_fake)
    if not torch.isfinite(d_loss):
        return {"skipped": 1.0, "d_loss": float(d_loss)}

    d_snapshot = {k: v.detach().clone() for k, v in state.discriminator.state_dict().items()}
    opt_d_snapshot = copy.deepcopy(state.opt_d.state_dict())
    state.opt_d.zero_grad()
    d_loss.backward()
    state.opt_d.step()

    # Generator on the joint loss, with fresh logits from the updated discriminator.
    _set_requires_grad(state.discriminator, False)
    logits_fake_g = state.discriminator(line_prev, prev, line_curr, fake)
    g_total, breakdown = L.joint_generator_loss(
        fake, gt_curr, logits_fake_g, weights, state.fx, cfg.mode)
    if not torch.isfinite(g_total):
        _set_requires_grad(state.discriminator, True)
        state.discriminator.load_state_dict(d_snapshot)
        state.opt_d.load_state_dict(opt_d_snapshot)
        return {"skipped": 1.0, "g_total": float(g_total)}
    state.opt_g.zero_grad()
    g_total.backward()
    state.opt_g.step()
    _set_requires_grad(state.discriminator, True)

    record = {"d_loss": float(d_loss.detach()), "g_total": float(g_total.detach())}
    record.update({f"g_{k}": v for k, v in breakdown.items()})
    state.step += 1
    for k, v in record.items():
        state.loss_sums[k] = state.loss_sums.get(k, 0.0) + v
    state.loss_count += 1
    return record


@lru_cache(maxsize=8)
def _epoch_permutation(seed: int, epoch: int, n: int) -> tuple[int, ...]:
    return tuple(np.random.default_rng([seed, epoch]).permutation(n).tolist())


def batch_indices(seed: int, n_samples: int, batch_size: int, step: int) -> list[int]:
    """Sample indices for a step: concatenated reshuffled epochs, stateless.

    Pure in (seed, step), so an interrupted run resumes on exactly the data
    an uninterrupted run would have seen.
    """
    start = step * batch_size
    out = []
    for pos in range(start, start + batch_size):
        epoch, offset = divmod(pos, n_samples)
        out.append(_epoch_permutation(seed, epoch, n_samples)[offset])
    return out


def train_loop(
    samples: list[SequenceSample | SampleError],
    cfg: TrainConfig,
    out_dir,
    fx: FeatureExtractor | None = None,
    resume_from=None,
) -> TrainState:
    """Run train_step to max_steps, checkpointing and logging JSON lines."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = [s for s in samples if isinstance(s, SequenceSample)]
    errors = [s for s in samples if isinstance(s, SampleError)]
    if not data:
        raise InvalidParamsError("dataset produced no usable samples")

    if resume_from is not None:
        state = TrainState.load(resume_from, cfg, fx)
    else:
        state = TrainState(cfg, fx)

    log_path = out_dir / "loss_log.jsonl"
    log_mode = "a" if resume_from is not None else "w"
    attempts = 0
    max_attempts = cfg.max_steps * 10 + 100
    with open(log_path, log_mode) as log:
        if resume_from is None:
            for err in errors:
                log.write(json.dumps({"error": err.error, "frame": err.frame_path}) + "\n")
        while state.step < cfg.max_steps and attempts < max_attempts:
            attempts += 1
            idxs = batch_indices(cfg.seed, len(data), cfg.batch_size, state.step)
            record = train_step([data[i] for i in idxs], state, cfg)
            if "skipped" in record:
                log.write(json.dumps({"step": state.step, "skipped": True}) + "\n")
                continue
            log.write(json.dumps({"step": state.step, **record}) + "\n")
            if cfg.checkpoint_every > 0 and state.step % cfg.checkpoint_every == 0:
                _write_checkpoints(out_dir, state, cfg)
    _write_checkpoints(out_dir, state, cfg)
    return state


def _write_checkpoints(out_dir: Path, state: TrainState, cfg: TrainConfig) -> None:
    state.save(out_dir / "train_state.pt")
    tmp = out_dir / "checkpoint.pt.tmp"
    save_checkpoint(tmp, state.generator, state.discriminator,
                    metadata={"step": state.step, "mode": cfg.mode.value,
                              "seed": cfg.seed, "averages": state.rolling_averages()})
    os.replace(tmp, out_dir / "checkpoint.pt")
    tmp_sidecar = Path(str(tmp) + ".json")
    if tmp_sidecar.exists():
        os.replace(tmp_sidecar, out_dir / "checkpoint.pt.json")
