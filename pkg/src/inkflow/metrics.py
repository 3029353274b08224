"""Quantitative evaluation: SSIM, PSNR, and FID.

SSIM and PSNR operate on the 8-bit-equivalent scale (L = 255) after
converting out of model range. FID fits Gaussians to feature sets from a
pluggable extractor and computes the Fréchet distance with an
eigendecomposition-based matrix square root.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from scipy import ndimage

from .core import (
    ConfigError,
    InputMode,
    InvalidImageError,
    InvalidParamsError,
    SequenceSample,
    blank_image,
    from_model_range,
    validate_image,
)
from .model import Generator, generator_forward, load_checkpoint

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP_DB = 100.0
PIXEL_MAX = 255.0
FID_EPS = 1e-6


def _ssim_window() -> np.ndarray:
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over valid 11x11 Gaussian windows and channels."""
    validate_image(a)
    validate_image(b)
    if a.shape != b.shape:
        raise InvalidImageError(f"shapes disagree: {a.shape} vs {b.shape}")
    h, w, _ = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise InvalidImageError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    x8 = from_model_range(a).astype(np.float64)
    y8 = from_model_range(b).astype(np.float64)
    kernel = _ssim_window()
    r = SSIM_WINDOW // 2
    c1 = (SSIM_K1 * PIXEL_MAX) ** 2
    c2 = (SSIM_K2 * PIXEL_MAX) ** 2

    def filt(img: np.ndarray) -> np.ndarray:
        # Interior values equal 'valid' correlation regardless of boundary mode.
        return ndimage.correlate(img, kernel, mode="reflect")[r:-r, r:-r]

    vals = []
    for c in range(a.shape[2]):
        x, y = x8[:, :, c], y8[:, :, c]
        mx, my = filt(x), filt(y)
        vx = filt(x * x) - mx * mx
        vy = filt(y * y) - my * my
        cxy = filt(x * y) - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(255^2 / MSE) on the 8-bit scale, capped at 100 dB."""
    validate_image(a)
    validate_image(b)
    if a.shape != b.shape:
        raise InvalidImageError(f"shapes disagree: {a.shape} vs {b.shape}")
    x8 = from_model_range(a).astype(np.float64)
    y8 = from_model_range(b).astype(np.float64)
    mse = float(np.mean((x8 - y8) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(PIXEL_MAX**2 / mse))


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    # Symmetric PSD square root; negative eigenvalues from roundoff clip to 0.
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(set_a: np.ndarray, set_b: np.ndarray) -> float:
    """Fréchet distance between Gaussian fits of two (n, d) feature sets."""
    set_a = np.asarray(set_a, dtype=np.float64)
    set_b = np.asarray(set_b, dtype=np.float64)
    if set_a.ndim != 2 or set_b.ndim != 2:
        raise InvalidParamsError("feature sets must be rank-2 (n, d)")
    if set_a.shape[1] != set_b.shape[1]:
        raise InvalidParamsError(
            f"feature dimensions disagree: {set_a.shape[1]} vs {set_b.shape[1]}")
    if set_a.shape[0] < 2 or set_b.shape[0] < 2:
        raise InvalidParamsError("need at least 2 feature rows per set")

    mu_a, mu_b = set_a.mean(axis=0), set_b.mean(axis=0)
    d = set_a.shape[1]
    cov_a = np.cov(set_a, rowvar=False).reshape(d, d) + FID_EPS * np.eye(d)
    cov_b = np.cov(set_b, rowvar=False).reshape(d, d) + FID_EPS * np.eye(d)

    # Tr((Σa Σb)^1/2) via the symmetric form (Σa^1/2 Σb Σa^1/2)^1/2.
    root_a = _sqrtm_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = float(np.sqrt(np.clip(vals, 0.0, None)).sum())

    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)


class FidFeatureExtractor:
    """Maps a list of (H, W, 3) model-range images to an (n, d) feature matrix."""

    def features(self, images: list[np.ndarray]) -> np.ndarray:
        raise NotImplementedError


class ToyFidFeatures(FidFeatureExtractor):
    """Seeded random conv features with global average pooling; test stand-in."""

    def __init__(self, seed: int = 0, dim: int = 8):
        gen = torch.Generator().manual_seed(seed)
        self.conv1 = nn.Conv2d(3, dim, 5, stride=2, padding=2)
        self.conv2 = nn.Conv2d(dim, dim, 5, stride=2, padding=2)
        for conv in (self.conv1, self.conv2):
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * 0.2)
                conv.bias.zero_()
            conv.requires_grad_(False)

    def features(self, images: list[np.ndarray]) -> np.ndarray:
        out = []
        with torch.no_grad():
            for img in images:
                validate_image(img, channels=3)
                x = torch.from_numpy(img.transpose(2, 0, 1)).float().unsqueeze(0)
                x = torch.relu(self.conv1(x))
                x = torch.relu(self.conv2(x))
                out.append(x.mean(dim=(2, 3)).squeeze(0).numpy())
        return np.stack(out).astype(np.float64)


class InceptionFidFeatures(FidFeatureExtractor):
    """Standard pretrained inception pool features, loaded from a local file."""

    def __init__(self, weights_path: str | Path):
        from torchvision.models import inception_v3

        weights_path = Path(weights_path)
        if not weights_path.exists():
            raise ConfigError(f"inception weights not found at {weights_path}")
        net = inception_v3(weights=None, aux_logits=True, init_weights=False)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
        net.fc = nn.Identity()
        net.eval()
        for p in net.parameters():
            p.requires_grad_(False)
        self.net = net

    def features(self, images: list[np.ndarray]) -> np.ndarray:
        out = []
        with torch.no_grad():
            for img in images:
                validate_image(img, channels=3)
                x = torch.from_numpy(img.transpose(2, 0, 1)).float().unsqueeze(0)
                x = torch.nn.functional.interpolate(
                    x, size=(299, 299), mode="bilinear", align_corners=False)
                out.append(self.net(x).squeeze(0).numpy())
        return np.stack(out).astype(np.float64)


@dataclass
class MetricReport:
    per_frame: list[dict[str, float]] = field(default_factory=list)
    ssim_mean: float = 0.0
    psnr_mean: float = 0.0
    fid: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_frame": self.per_frame,
                "aggregate": {"ssim_mean": self.ssim_mean,
                              "psnr_mean": self.psnr_mean,
                              "fid": self.fid},
            },
            indent=2,
        )

    def table(self) -> str:
        return (
            "metric |    value\n"
            "-------+---------\n"
            f"FID    | {self.fid:8.4f}\n"
            f"SSIM   | {self.ssim_mean:8.4f}\n"
            f"PSNR   | {self.psnr_mean:8.2f}\n"
        )


def evaluate_sequence(
    checkpoint,
    samples: list[SequenceSample],
    mode: InputMode,
    fid_features: FidFeatureExtractor | None = None,
    identity_oracle: bool = False,
) -> MetricReport:
    """Sequential inference over samples, then per-frame SSIM/PSNR and corpus FID.

    The generated previous frame is carried across samples and reset to
    blank at every sequence start. ``identity_oracle`` scores the ground
    truth against itself instead of running the model.
    """
    if not samples:
        raise InvalidParamsError("no samples to evaluate")
    generator: Generator | None = None
    if not identity_oracle:
        if isinstance(checkpoint, Generator):
            generator = checkpoint
        else:
            generator, _, _ = load_checkpoint(checkpoint)
        generator.eval()
    fid_features = fid_features or ToyFidFeatures()

    generated: list[np.ndarray] = []
    truths: list[np.ndarray] = []
    report = MetricReport()
    prev: np.ndarray | None = None
    for sample in samples:
        if identity_oracle:
            frame = sample.gt_curr
        else:
            if sample.is_sequence_start or prev is None or prev.shape != sample.gt_curr.shape:
                prev = blank_image(sample.height, sample.width)
            frame = generator_forward(generator, sample.line_curr, sample.hint_curr, prev)
            prev = frame
        generated.append(frame)
        truths.append(sample.gt_curr)
        report.per_frame.append(
            {"ssim": ssim(frame, sample.gt_curr), "psnr": psnr(frame, sample.gt_curr)})

    report.ssim_mean = float(np.mean([f["ssim"] for f in report.per_frame]))
    report.psnr_mean = float(np.mean([f["psnr"] for f in report.per_frame]))
    report.fid = fid(fid_features.features(generated), fid_features.features(truths))
    return report
