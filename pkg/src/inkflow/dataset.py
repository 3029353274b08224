"""Paired training data: synthetic line art, hint maps, sequence samples.

Line art is synthesized from color frames with a classical Canny pipeline
(dark lines on white). Hint maps reveal a seeded random subset of
patch-averaged colors against a black background. Consecutive-frame
samples never straddle a scene cut.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy import ndimage

from .core import (
    InputMode,
    InvalidImageError,
    InvalidParamsError,
    SequenceSample,
    load_png,
    to_greyscale,
    to_model_range,
    validate_image,
)

SCENE_CUT_THRESHOLD = 0.3


@dataclass(frozen=True)
class CannyParams:
    """Thresholds are relative to the per-image maximum gradient magnitude."""

    gaussian_sigma: float = 1.0
    low_threshold: float = 0.1
    high_threshold: float = 0.2

    def __post_init__(self) -> None:
        if self.gaussian_sigma <= 0:
            raise InvalidParamsError(f"gaussian_sigma must be > 0, got {self.gaussian_sigma}")
        for name in ("low_threshold", "high_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidParamsError(f"{name} must lie in (0, 1), got {v}")
        if self.low_threshold >= self.high_threshold:
            raise InvalidParamsError(
                f"low_threshold must be < high_threshold, got {self.low_threshold} >= {self.high_threshold}"
            )


@dataclass(frozen=True)
class HintParams:
    patch_size: int = 4
    reveal_fraction: float = 0.01
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.patch_size < 1:
            raise InvalidParamsError(f"patch_size must be >= 1, got {self.patch_size}")
        if not 0.0 <= self.reveal_fraction <= 1.0:
            raise InvalidParamsError(f"reveal_fraction must lie in [0, 1], got {self.reveal_fraction}")


def _gaussian_kernel1d(sigma: float) -> np.ndarray:
    # Kernel radius ceil(3*sigma), normalized to sum 1.
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


def canny_edges(img: np.ndarray, params: CannyParams) -> np.ndarray:
    """Classical Canny on a greyscale image; returns a {0,1} uint8 (H, W) map.

    Gaussian smoothing, Sobel gradients, non-maximum suppression with the
    orientation quantized to 4 bins, double threshold relative to the
    maximum magnitude, and hysteresis keeping weak edges 8-connected to a
    strong edge.
    """
    validate_image(img, channels=1)
    grey = img[:, :, 0].astype(np.float64)

    k = _gaussian_kernel1d(params.gaussian_sigma)
    smoothed = ndimage.correlate1d(grey, k, axis=0, mode="reflect")
    smoothed = ndimage.correlate1d(smoothed, k, axis=1, mode="reflect")

    gx = ndimage.correlate(smoothed, _SOBEL_X, mode="reflect")
    gy = ndimage.correlate(smoothed, _SOBEL_Y, mode="reflect")
    mag = np.hypot(gx, gy)
    if mag.max() == 0.0:
        return np.zeros(grey.shape, dtype=np.uint8)

    nms = _non_maximum_suppression(mag, gx, gy)

    high = params.high_threshold * nms.max() if nms.max() > 0 else np.inf
    low = params.low_threshold * nms.max() if nms.max() > 0 else np.inf
    strong = nms >= high
    weak = nms >= low

    # Hysteresis: keep weak components that contain a strong pixel (8-connected).
    structure = np.ones((3, 3), dtype=bool)
    labels, n = ndimage.label(weak, structure=structure)
    if n == 0:
        return np.zeros(grey.shape, dtype=np.uint8)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels].astype(np.uint8)


def _non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels whose magnitude dominates both neighbors along the gradient.

    Orientation is quantized to 4 bins (0, 45, 90, 135 degrees). Ties on a
    symmetric ridge are broken by requiring strict dominance over the
    neighbor against the gradient direction only, so a clean step edge
    thins to a single-pixel line.
    """
    h, w = mag.shape
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # Bin 0: horizontal gradient; 1: 45 deg; 2: vertical; 3: 135 deg.
    bins = np.zeros((h, w), dtype=np.int8)
    bins[(angle >= 22.5) & (angle < 67.5)] = 1
    bins[(angle >= 67.5) & (angle < 112.5)] = 2
    bins[(angle >= 112.5) & (angle < 157.5)] = 3

    padded = np.pad(mag, 1, mode="constant")
    center = padded[1:-1, 1:-1]
    # (dy, dx) offsets of the "forward" neighbor per bin; backward is negated.
    offsets = {0: (0, 1), 1: (-1, 1), 2: (-1, 0), 3: (-1, -1)}
    out = np.zeros_like(mag)
    for b, (dy, dx) in offsets.items():
        fwd = padded[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
        bwd = padded[1 - dy : h + 1 - dy, 1 - dx : w + 1 - dx]
        sel = (bins == b) & (center >= fwd) & (center > bwd)
        out[sel] = mag[sel]
    return out


def synthesize_line_art(frame: np.ndarray, params: CannyParams) -> np.ndarray:
    """Mimic a line-art sheet: Canny edges as -1 lines on a +1 background."""
    validate_image(frame, channels=3)
    edges = canny_edges(to_greyscale(frame), params)
    line = np.where(edges > 0, -1.0, 1.0).astype(np.float32)
    return line[:, :, None]


def make_hint_map(gt: np.ndarray, params: HintParams) -> np.ndarray:
    """Reveal floor(reveal_fraction * n_cells) patch-mean colors on black.

    The grid is non-overlapping patch_size x patch_size cells; selection is
    uniform without replacement, deterministic for a given rng_seed.
    """
    validate_image(gt, channels=3)
    h, w, _ = gt.shape
    p = params.patch_size
    if h % p != 0 or w % p != 0:
        raise InvalidParamsError(f"patch_size {p} does not divide image size {h}x{w}")
    gh, gw = h // p, w // p
    n_cells = gh * gw
    n_reveal = int(np.floor(params.reveal_fraction * n_cells))

    hint = np.full((h, w, 3), -1.0, dtype=np.float32)
    if n_reveal == 0:
        return hint

    rng = np.random.default_rng(params.rng_seed)
    chosen = rng.choice(n_cells, size=n_reveal, replace=False)

    cells = gt.reshape(gh, p, gw, p, 3)
    means = cells.mean(axis=(1, 3), dtype=np.float64).astype(np.float32)
    for idx in chosen:
        cy, cx = divmod(int(idx), gw)
        hint[cy * p : (cy + 1) * p, cx * p : (cx + 1) * p, :] = means[cy, cx]
    return hint


def per_frame_seed(base_seed: int, frame_index: int) -> int:
    """Seed convention for hint maps: stable per (dataset seed, frame index)."""
    return (base_seed * 1_000_003 + frame_index) % (2**63)


def detect_scene_cuts(frames: list[np.ndarray], threshold: float = SCENE_CUT_THRESHOLD) -> list[int]:
    """Indices i where the mean |frame[i] - frame[i-1]| exceeds the threshold."""
    if len(frames) < 2:
        raise InvalidImageError(f"need at least 2 frames, got {len(frames)}")
    cuts = []
    for i in range(1, len(frames)):
        a, b = frames[i - 1], frames[i]
        if a.shape != b.shape:
            raise InvalidImageError(f"frame {i} shape {b.shape} != frame {i-1} shape {a.shape}")
        if float(np.mean(np.abs(a.astype(np.float64) - b))) > threshold:
            cuts.append(i)
    return cuts


@dataclass
class DatasetManifest:
    """Ordered (frame path, scene id) list plus the synthesis parameters."""

    frames: list[tuple[str, int]]
    input_mode: InputMode = InputMode.LINE_ART
    canny: CannyParams = field(default_factory=CannyParams)
    hints: HintParams = field(default_factory=HintParams)

    def to_json(self) -> str:
        return json.dumps(
            {
                "frames": [{"path": p, "scene": s} for p, s in self.frames],
                "mode": self.input_mode.value,
                "canny": {
                    "gaussian_sigma": self.canny.gaussian_sigma,
                    "low_threshold": self.canny.low_threshold,
                    "high_threshold": self.canny.high_threshold,
                },
                "hints": {
                    "patch_size": self.hints.patch_size,
                    "reveal_fraction": self.hints.reveal_fraction,
                    "rng_seed": self.hints.rng_seed,
                },
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        data = json.loads(text)
        return cls(
            frames=[(f["path"], int(f["scene"])) for f in data["frames"]],
            input_mode=InputMode(data["mode"]),
            canny=CannyParams(**data["canny"]),
            hints=HintParams(**data["hints"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class SampleError:
    """Per-item failure in the sample stream; the stream keeps going."""

    frame_path: str
    frame_index: int
    error: str


def _conditioning_image(gt: np.ndarray, manifest: DatasetManifest) -> np.ndarray:
    if manifest.input_mode is InputMode.GREYSCALE:
        return to_greyscale(gt)
    return synthesize_line_art(gt, manifest.canny)


def build_samples(
    manifest: DatasetManifest, root: Path | str | None = None
) -> Iterator[SequenceSample | SampleError]:
    """Yield a sample per within-scene consecutive frame pair, in manifest order.

    Unreadable frames surface as :class:`SampleError` items covering every
    pair they participate in.
    """
    base = Path(root) if root is not None else None

    def resolve(p: str) -> Path:
        path = Path(p)
        return base / path if base is not None and not path.is_absolute() else path

    hints = manifest.hints
    prev: tuple[np.ndarray, np.ndarray] | None = None  # (conditioning, gt) of frame t-1
    prev_scene = None
    chain_start = -1  # index of the first frame in the current unbroken chain
    for t, (path, scene) in enumerate(manifest.frames):
        if scene != prev_scene:
            prev = None
            prev_scene = scene
        try:
            gt = to_model_range(load_png(resolve(path)))
            validate_image(gt, channels=3)
            cond = _conditioning_image(gt, manifest)
        except Exception as exc:  # per-item error, stream continues
            yield SampleError(frame_path=str(path), frame_index=t, error=str(exc))
            prev = None
            continue
        if prev is None:
            chain_start = t
        else:
            line_prev, gt_prev = prev
            hint_curr = make_hint_map(
                gt, HintParams(hints.patch_size, hints.reveal_fraction,
                               per_frame_seed(hints.rng_seed, t)))
            hint_prev = make_hint_map(
                gt_prev, HintParams(hints.patch_size, hints.reveal_fraction,
                                    per_frame_seed(hints.rng_seed, t - 1)))
            yield SequenceSample(
                line_prev=line_prev,
                gt_prev=gt_prev,
                line_curr=cond,
                gt_curr=gt,
                hint_curr=hint_curr,
                hint_prev=hint_prev,
                is_sequence_start=(t - 1 == chain_start),
                frame_index=t,
            )
        prev = (cond, gt)
