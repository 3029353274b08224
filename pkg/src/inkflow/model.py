"""Generator and discriminator networks.

Generator: 7x7 stem, 2 stride-2 downsampling convs, 8 residual blocks,
2 stride-2 transposed-conv upsampling stages, 7x7 output conv, tanh.
Reflection padding and instance normalization throughout (no norm on the
output conv). Conditioning is channel concatenation: 1ch line art + 3ch
hint map + 3ch previous generated frame = 7 input channels.

Discriminator: 70x70 patch classifier over 4-tensor sequence tuples
(line t-1, color t-1, line t, color t = 8 channels): three 4x4 stride-2
convs (64/128/256), two 4x4 stride-1 convs (512/1), LeakyReLU 0.2,
instance norm on the middle layers, spectral normalization on every
conv weight.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import InvalidImageError, validate_image, validate_model_size

INIT_STD = 0.02
SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class GeneratorConfig:
    base_channels: int = 64
    n_residual_blocks: int = 8
    n_down: int = 2
    in_channels: int = 7  # 1 line + 3 hint + 3 prev
    out_channels: int = 3


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 8  # 1 + 3 + 1 + 3
    n_layers: int = 3
    base_channels: int = 64
    use_spectral_norm: bool = True


def discriminator_layer_recipe(cfg: DiscriminatorConfig) -> list[tuple[int, int]]:
    """(kernel, stride) per conv: n_layers stride-2 stages then two stride-1."""
    return [(4, 2)] * cfg.n_layers + [(4, 1), (4, 1)]


def receptive_field(cfg: DiscriminatorConfig) -> int:
    """Input pixels seen by one output logit, via the standard recursion."""
    return receptive_field_of(discriminator_layer_recipe(cfg))


def receptive_field_of(layers: list[tuple[int, int]]) -> int:
    rf, jump = 1, 1
    for kernel, stride in layers:
        rf += (kernel - 1) * jump
        jump *= stride
    return rf


def patch_logits_shape(height: int, width: int, cfg: DiscriminatorConfig | None = None) -> tuple[int, int, int]:
    """Exact logits grid for the recipe with zero padding 1 on every conv."""
    cfg = cfg or DiscriminatorConfig()

    def out(size: int) -> int:
        for k, s in discriminator_layer_recipe(cfg):
            size = (size + 2 - k) // s + 1
        return size

    return (out(height), out(width), 1)


def init_conv(module: nn.Module) -> None:
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, INIT_STD)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def instance_normalize(features: np.ndarray, gain: np.ndarray | float = 1.0,
                       bias: np.ndarray | float = 0.0, eps: float = 1e-5) -> np.ndarray:
    """Per-channel spatial normalization of a rank-3 (H, W, C) array.

    Subtracts the spatial mean and divides by the spatial std (population
    variance, stabilized by eps), then applies the per-channel affine.
    """
    if features.ndim != 3:
        raise InvalidImageError(f"expected rank-3 (H, W, C), got shape {features.shape}")
    h, w, _ = features.shape
    if h * w < 2:
        raise InvalidImageError("instance normalization needs at least 2 spatial positions")
    x = features.astype(np.float64)
    mean = x.mean(axis=(0, 1), keepdims=True)
    var = x.var(axis=(0, 1), keepdims=True)
    normed = (x - mean) / np.sqrt(var + eps)
    return (np.asarray(gain) * normed + np.asarray(bias)).astype(features.dtype)


def spectral_normalize(weight: torch.Tensor, u: torch.Tensor,
                       update: bool = True) -> tuple[torch.Tensor, torch.Tensor]:
    """Divide a matrix-shaped weight by its estimated top singular value.

    One power-iteration step refines the left singular vector estimate u
    (when update=True); sigma is floored so a zero weight passes through
    unchanged. Returns (normalized weight, updated u).
    """
    w = weight.reshape(weight.size(0), -1)
    if update:
        with torch.no_grad():
            v = F.normalize(w.t().mv(u), dim=0, eps=SIGMA_FLOOR)
            u_next = w.mv(v)
            if float(u_next.norm()) > 0.0:  # zero weight leaves the estimate alone
                u = F.normalize(u_next, dim=0)
    with torch.no_grad():
        v = F.normalize(w.detach().t().mv(u), dim=0, eps=SIGMA_FLOOR)
    sigma = torch.dot(u, w.mv(v))
    return weight / sigma.clamp(min=SIGMA_FLOOR), u


class SNConv2d(nn.Module):
    """Conv2d whose weight is spectrally normalized at every forward pass.

    The power-iteration state advances only in training mode, so eval-mode
    forwards are pure functions of (weights, input).
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, enabled: bool = True):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.enabled = enabled
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        nn.init.normal_(self.weight, 0.0, INIT_STD)
        self.register_buffer("u", F.normalize(torch.randn(out_channels), dim=0))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.enabled:
            w, u = spectral_normalize(self.weight, self.u, update=self.training)
            if self.training:
                self.u.copy_(u)
        else:
            w = self.weight
        return F.conv2d(x, w, self.bias, stride=self.stride, padding=self.padding)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig | None = None):
        super().__init__()
        self.cfg = cfg or GeneratorConfig()
        c = self.cfg.base_channels

        self.stem = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(self.cfg.in_channels, c, 7),
            nn.InstanceNorm2d(c),
            nn.ReLU(inplace=True),
        )
        downs = []
        ch = c
        for _ in range(self.cfg.n_down):
            downs += [
                nn.ReflectionPad2d(1),
                nn.Conv2d(ch, ch * 2, 4, stride=2),
                nn.InstanceNorm2d(ch * 2),
                nn.ReLU(inplace=True),
            ]
            ch *= 2
        self.down = nn.Sequential(*downs)
        self.blocks = nn.Sequential(*[ResidualBlock(ch) for _ in range(self.cfg.n_residual_blocks)])
        ups = []
        for _ in range(self.cfg.n_down):
            ups += [
                nn.ConvTranspose2d(ch, ch // 2, 4, stride=2, padding=1),
                nn.InstanceNorm2d(ch // 2),
                nn.ReLU(inplace=True),
            ]
            ch //= 2
        self.up = nn.Sequential(*ups)
        self.head = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(ch, self.cfg.out_channels, 7),
            nn.Tanh(),
        )
        self.apply(init_conv)

    def forward(self, line: torch.Tensor, hint: torch.Tensor, prev: torch.Tensor) -> torch.Tensor:
        if line.shape[-2:] != hint.shape[-2:] or line.shape[-2:] != prev.shape[-2:]:
            raise InvalidImageError(
                f"input sizes disagree: {line.shape[-2:]}, {hint.shape[-2:]}, {prev.shape[-2:]}")
        if line.size(1) != 1 or hint.size(1) != 3 or prev.size(1) != 3:
            raise InvalidImageError(
                f"expected 1/3/3 channels, got {line.size(1)}/{hint.size(1)}/{prev.size(1)}")
        validate_model_size(line.size(-2), line.size(-1))
        x = torch.cat([line, hint, prev], dim=1)
        x = self.stem(x)
        x = self.down(x)
        x = self.blocks(x)
        x = self.up(x)
        return self.head(x)


class Discriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig | None = None):
        super().__init__()
        self.cfg = cfg or DiscriminatorConfig()
        sn = self.cfg.use_spectral_norm
        recipe = discriminator_layer_recipe(self.cfg)
        channels = [self.cfg.in_channels]
        ch = self.cfg.base_channels
        for _ in range(self.cfg.n_layers):
            channels.append(ch)
            ch *= 2
        channels += [ch, 1]

        layers: list[nn.Module] = []
        last = len(recipe) - 1
        for i, (k, s) in enumerate(recipe):
            layers.append(SNConv2d(channels[i], channels[i + 1], k, stride=s, padding=1, enabled=sn))
            if i != last:
                if i != 0:  # instance norm on middle layers only
                    layers.append(nn.InstanceNorm2d(channels[i + 1]))
                layers.append(nn.LeakyReLU(0.2, inplace=True))
        self.net = nn.Sequential(*layers)

    def forward(self, line_prev: torch.Tensor, color_prev: torch.Tensor,
                line_curr: torch.Tensor, color_curr: torch.Tensor) -> torch.Tensor:
        parts = (line_prev, color_prev, line_curr, color_curr)
        sizes = {p.shape[-2:] for p in parts}
        if len(sizes) != 1:
            raise InvalidImageError(f"sequence tuple sizes disagree: {sizes}")
        chans = tuple(p.size(1) for p in parts)
        if chans != (1, 3, 1, 3):
            raise InvalidImageError(f"expected channels (1, 3, 1, 3), got {chans}")
        return self.net(torch.cat(parts, dim=1))


def hwc_to_batch(img: np.ndarray) -> torch.Tensor:
    """(H, W, C) numpy image to a (1, C, H, W) float32 tensor."""
    validate_image(img)
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).float().unsqueeze(0)


def batch_to_hwc(t: torch.Tensor) -> np.ndarray:
    """(1, C, H, W) tensor back to a float32 (H, W, C) array."""
    return t.detach().squeeze(0).permute(1, 2, 0).cpu().numpy().astype(np.float32)


def generator_forward(gen: Generator, line: np.ndarray, hint: np.ndarray,
                      prev: np.ndarray) -> np.ndarray:
    """Single-image colorization pass; pure given the generator's weights."""
    validate_image(line, channels=1)
    validate_image(hint, channels=3)
    validate_image(prev, channels=3)
    dtype = next(gen.parameters()).dtype
    was_training = gen.training
    gen.eval()
    try:
        with torch.no_grad():
            out = gen(hwc_to_batch(line).to(dtype), hwc_to_batch(hint).to(dtype),
                      hwc_to_batch(prev).to(dtype))
    finally:
        gen.train(was_training)
    return batch_to_hwc(out)


def discriminator_forward(disc: Discriminator, line_prev: np.ndarray, color_prev: np.ndarray,
                          line_curr: np.ndarray, color_curr: np.ndarray) -> np.ndarray:
    """Single-tuple patch logits as an (h', w', 1) array."""
    dtype = next(disc.parameters()).dtype
    was_training = disc.training
    disc.eval()
    try:
        with torch.no_grad():
            out = disc(hwc_to_batch(line_prev).to(dtype), hwc_to_batch(color_prev).to(dtype),
                       hwc_to_batch(line_curr).to(dtype), hwc_to_batch(color_curr).to(dtype))
    finally:
        disc.train(was_training)
    return batch_to_hwc(out)


def save_checkpoint(path, generator: Generator, discriminator: Discriminator | None = None,
                    metadata: dict | None = None) -> None:
    """Write the parameter map plus a JSON sidecar with configs and metadata."""
    path = Path(path)
    payload = {
        "generator": generator.state_dict(),
        "gen_config": asdict(generator.cfg),
    }
    if discriminator is not None:
        payload["discriminator"] = discriminator.state_dict()
        payload["disc_config"] = asdict(discriminator.cfg)
    torch.save(payload, path)
    sidecar = {
        "gen_config": asdict(generator.cfg),
        "disc_config": asdict(discriminator.cfg) if discriminator is not None else None,
        "metadata": metadata or {},
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def load_checkpoint(path) -> tuple[Generator, Discriminator | None, dict]:
    """Rebuild networks from a checkpoint; returns (generator, discriminator, metadata)."""
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=True)
    gen = Generator(GeneratorConfig(**payload["gen_config"]))
    gen.load_state_dict(payload["generator"])
    disc = None
    if "discriminator" in payload:
        disc = Discriminator(DiscriminatorConfig(**payload["disc_config"]))
        disc.load_state_dict(payload["discriminator"])
    metadata = {}
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        metadata = json.loads(sidecar.read_text()).get("metadata", {})
    return gen, disc, metadata
