"""The four loss terms and the joint objective.

Adversarial loss treats the discriminator's patch logits with the stable
softplus forms; content loss is the per-layer-normalized L1 distance of
pretrained activations; style loss is the L1 distance of Gram matrices;
the joint objective is the weighted sum with defaults
(adv, cont, style, l1) = (1, 1, 1000, 10). Content is skipped entirely
in greyscale mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import ConfigError, InputMode, InvalidParamsError

FEATURE_LAYERS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1")

# Indices of the named activations inside torchvision's vgg19().features.
_VGG19_LAYER_INDEX = {
    "relu1_1": 1,
    "relu2_1": 6,
    "relu3_1": 11,
    "relu4_1": 20,
    "relu5_1": 29,
}

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class LossWeights:
    lambda_adv: float = 1.0
    lambda_cont: float = 1.0
    lambda_style: float = 1000.0
    lambda_l1: float = 10.0

    def __post_init__(self) -> None:
        for name in ("lambda_adv", "lambda_cont", "lambda_style", "lambda_l1"):
            if getattr(self, name) < 0:
                raise InvalidParamsError(f"{name} must be nonnegative, got {getattr(self, name)}")


class FeatureExtractor(nn.Module):
    """Frozen network exposing the five named activation layers.

    ``extract`` maps a model-range NCHW batch to {layer name: activations};
    implementations never receive gradient updates.
    """

    layer_names = FEATURE_LAYERS

    def extract(self, images: torch.Tensor) -> dict[str, torch.Tensor]:
        raise NotImplementedError


class VGGFeatureExtractor(FeatureExtractor):
    """VGG19 activations; weights are loaded from a local file, never downloaded."""

    def __init__(self, weights_path: str | Path):
        super().__init__()
        from torchvision.models import vgg19

        weights_path = Path(weights_path)
        if not weights_path.exists():
            raise ConfigError(
                f"pretrained feature weights not found at {weights_path}; "
                "content/style losses need a VGG19 state-dict file "
                "(pass --feature-extractor toy for a self-contained run)"
            )
        net = vgg19(weights=None)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
        last = max(_VGG19_LAYER_INDEX.values())
        self.features = net.features[: last + 1]
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        mean = torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1)
        self.register_buffer("mean", mean)
        self.register_buffer("std", std)

    def extract(self, images: torch.Tensor) -> dict[str, torch.Tensor]:
        # Model range [-1, 1] -> the network's expected input statistics.
        x = ((images + 1.0) * 0.5 - self.mean) / self.std
        out = {}
        wanted = {idx: name for name, idx in _VGG19_LAYER_INDEX.items()}
        for idx, layer in enumerate(self.features):
            x = layer(x)
            if idx in wanted:
                out[wanted[idx]] = x
        return out


class ToyFeatureExtractor(FeatureExtractor):
    """Small seeded random-weight stack with the same five named layers.

    Deterministic for a given seed, frozen, and differentiable with
    respect to its input, so the full loss stack is testable without
    pretrained weights.
    """

    def __init__(self, seed: int = 0, channels: int = 8):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        convs = []
        c_in = 3
        for _ in self.layer_names:
            conv = nn.Conv2d(c_in, channels, 3, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * 0.3)
                conv.bias.copy_(torch.randn(conv.bias.shape, generator=gen) * 0.1)
            convs.append(conv)
            c_in = channels
        self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def extract(self, images: torch.Tensor) -> dict[str, torch.Tensor]:
        out = {}
        x = images
        for name, conv in zip(self.layer_names, self.convs):
            x = F.relu(conv(x))
            out[name] = x
        return out


def load_feature_extractor(kind: str, weights_path: str | Path | None = None,
                           seed: int = 0) -> FeatureExtractor:
    if kind == "vgg":
        if weights_path is None:
            raise ConfigError("feature extractor 'vgg' requires a weights path")
        return VGGFeatureExtractor(weights_path)
    if kind == "toy":
        return ToyFeatureExtractor(seed=seed)
    raise ConfigError(f"unknown feature extractor {kind!r} (expected 'vgg' or 'toy')")


def adversarial_loss_d(logits_real: torch.Tensor, logits_fake: torch.Tensor) -> torch.Tensor:
    """-mean(log sigmoid(real)) - mean(log(1 - sigmoid(fake))), stable form."""
    if logits_real.shape != logits_fake.shape:
        raise InvalidParamsError(
            f"logit shapes disagree: {tuple(logits_real.shape)} vs {tuple(logits_fake.shape)}")
    return F.softplus(-logits_real).mean() + F.softplus(logits_fake).mean()


def adversarial_loss_g(logits_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator term: -mean(log sigmoid(fake))."""
    return F.softplus(-logits_fake).mean()


def _check_extractor(fx: FeatureExtractor, activations: dict[str, torch.Tensor]) -> None:
    missing = [name for name in FEATURE_LAYERS if name not in activations]
    if missing:
        raise ConfigError(f"feature extractor is missing declared layers: {missing}")


def content_loss(pred: torch.Tensor, gt: torch.Tensor, fx: FeatureExtractor) -> torch.Tensor:
    """Mean over layers of the per-element L1 distance between activations."""
    pred_acts = fx.extract(pred)
    gt_acts = fx.extract(gt)
    _check_extractor(fx, pred_acts)
    terms = []
    for name in FEATURE_LAYERS:
        diff = gt_acts[name] - pred_acts[name]
        terms.append(diff.abs().sum() / diff.numel())
    return torch.stack(terms).mean()


def gram_matrix(features: torch.Tensor) -> torch.Tensor:
    """(C, C) Gram matrix of a rank-3 (H, W, C) feature map, normalized by H*W*C."""
    if features.dim() != 3:
        raise InvalidParamsError(f"expected rank-3 (H, W, C), got shape {tuple(features.shape)}")
    h, w, c = features.shape
    flat = features.reshape(h * w, c)
    return flat.t().mm(flat) / (h * w * c)


def _gram_batch(features: torch.Tensor) -> torch.Tensor:
    # (N, C, H, W) -> (N, C, C), same normalization as gram_matrix.
    n, c, h, w = features.shape
    flat = features.reshape(n, c, h * w)
    return flat.bmm(flat.transpose(1, 2)) / (h * w * c)


def style_loss(pred: torch.Tensor, gt: torch.Tensor, fx: FeatureExtractor) -> torch.Tensor:
    """Mean over layers of the L1 distance between Gram matrices."""
    pred_acts = fx.extract(pred)
    gt_acts = fx.extract(gt)
    _check_extractor(fx, pred_acts)
    terms = []
    for name in FEATURE_LAYERS:
        g_pred = _gram_batch(pred_acts[name])
        g_gt = _gram_batch(gt_acts[name])
        terms.append((g_pred - g_gt).abs().sum(dim=(1, 2)).mean())
    return torch.stack(terms).mean()


def l1_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    if pred.shape != gt.shape:
        raise InvalidParamsError(f"shapes disagree: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    return (pred - gt).abs().mean()


def joint_generator_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    logits_fake: torch.Tensor,
    weights: LossWeights,
    fx: FeatureExtractor | None,
    mode: InputMode,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted sum of the four terms plus the unweighted per-term breakdown.

    Greyscale mode drops the content term entirely (it never appears in the
    breakdown). A feature extractor is only required while a feature-based
    term is active.
    """
    use_content = mode is not InputMode.GREYSCALE and weights.lambda_cont > 0
    use_style = weights.lambda_style > 0
    if (use_content or use_style) and fx is None:
        raise ConfigError("content/style losses are active but no feature extractor was provided")

    terms: dict[str, torch.Tensor] = {"adv": adversarial_loss_g(logits_fake)}
    if mode is not InputMode.GREYSCALE:
        terms["cont"] = (content_loss(pred, gt, fx) if use_content
                         else torch.zeros((), device=pred.device))
    terms["style"] = style_loss(pred, gt, fx) if use_style else torch.zeros((), device=pred.device)
    terms["l1"] = l1_loss(pred, gt)

    lambdas = {"adv": weights.lambda_adv, "cont": weights.lambda_cont,
               "style": weights.lambda_style, "l1": weights.lambda_l1}
    # Accumulate in float64 so the logged total recomposes from the logged
    # terms to well below 1e-5 even when a weighted term reaches O(1e3).
    total = sum(lambdas[k] * v.double() for k, v in terms.items())
    breakdown = {k: float(v.detach()) for k, v in terms.items()}
    return total, breakdown
