"""Shared image conventions and value types.

All modules exchange images as float32 numpy arrays of shape (H, W, C)
with C in {1, 3} and values in the model range [-1, +1]. Line art and
greyscale frames are single-channel; color frames and hint maps are
three-channel. Black (-1) doubles as "no hint" in hint maps and as the
blank previous frame at sequence starts.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

INKT_MAGIC = b"INKT"

# ITU-R BT.601 luma weights.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class InvalidImageError(ValueError):
    """An array does not satisfy the image conventions."""


class InvalidParamsError(ValueError):
    """A parameter set violates its declared constraints."""


class ConfigError(RuntimeError):
    """A required external asset or setting is missing or inconsistent."""


class InputMode(enum.Enum):
    """Conditioning input handed to the generator's first channel."""

    LINE_ART = "line_art"
    GREYSCALE = "greyscale"


def validate_image(img: np.ndarray, channels: int | None = None) -> np.ndarray:
    """Check the (H, W, C) layout and channel count; returns the array."""
    if not isinstance(img, np.ndarray) or img.ndim != 3:
        raise InvalidImageError(f"expected rank-3 (H, W, C) array, got {getattr(img, 'shape', None)}")
    c = img.shape[2]
    if c not in (1, 3):
        raise InvalidImageError(f"expected 1 or 3 channels, got {c}")
    if channels is not None and c != channels:
        raise InvalidImageError(f"expected {channels} channels, got {c}")
    return img


def validate_model_size(height: int, width: int) -> None:
    """Sizes fed through the two stride-2 stages: >= 16 and divisible by 4."""
    if height < 16 or width < 16 or height % 4 != 0 or width % 4 != 0:
        raise InvalidImageError(
            f"model inputs need height/width >= 16 and divisible by 4, got {height}x{width}"
        )


def to_model_range(raw: np.ndarray) -> np.ndarray:
    """Map 8-bit pixel values 0..255 to the model range [-1, +1]."""
    validate_image(raw)
    return (raw.astype(np.float32) / 127.5) - 1.0


def from_model_range(img: np.ndarray) -> np.ndarray:
    """Map model-range values back to uint8, rounding and clamping.

    Exact inverse of :func:`to_model_range` on the 8-bit lattice.
    """
    validate_image(img)
    scaled = (img.astype(np.float32) + 1.0) * 127.5
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def to_greyscale(img: np.ndarray) -> np.ndarray:
    """BT.601 luminance of a 3-channel model-range image, shape (H, W, 1)."""
    validate_image(img, channels=3)
    r, g, b = LUMA_WEIGHTS
    grey = r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]
    return grey.astype(np.float32)[:, :, None]


def blank_image(height: int, width: int, channels: int = 3) -> np.ndarray:
    """All-black (-1) image; the previous frame at every sequence start."""
    return np.full((height, width, channels), -1.0, dtype=np.float32)


@dataclass(frozen=True)
class SequenceSample:
    """One training unit: a consecutive frame pair plus hint maps.

    ``hint_prev`` is the hint for frame t-1, regenerated with the same
    per-frame seed convention as ``hint_curr``; the trainer needs it to
    rebuild the previous generated frame. ``frame_index`` is the position
    of frame t in the source manifest.
    """

    line_prev: np.ndarray
    gt_prev: np.ndarray
    line_curr: np.ndarray
    gt_curr: np.ndarray
    hint_curr: np.ndarray
    hint_prev: np.ndarray
    is_sequence_start: bool
    frame_index: int = 0

    def __post_init__(self) -> None:
        validate_image(self.line_prev, channels=1)
        validate_image(self.gt_prev, channels=3)
        validate_image(self.line_curr, channels=1)
        validate_image(self.gt_curr, channels=3)
        validate_image(self.hint_curr, channels=3)
        validate_image(self.hint_prev, channels=3)
        shapes = {
            t.shape[:2]
            for t in (self.line_prev, self.gt_prev, self.line_curr,
                      self.gt_curr, self.hint_curr, self.hint_prev)
        }
        if len(shapes) != 1:
            raise InvalidImageError(f"sample tensors disagree on height/width: {shapes}")

    @property
    def height(self) -> int:
        return self.line_curr.shape[0]

    @property
    def width(self) -> int:
        return self.line_curr.shape[1]


def load_png(path) -> np.ndarray:
    """Load a PNG as a uint8 (H, W, C) array with 1 or 3 channels."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16"):
            im = im.convert("L")
            arr = np.asarray(im, dtype=np.uint8)[:, :, None]
        else:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    return arr


def save_png(path, raw: np.ndarray) -> None:
    """Save a uint8 (H, W, C) array as an 8-bit greyscale or RGB PNG."""
    validate_image(raw)
    if raw.dtype != np.uint8:
        raise InvalidImageError(f"save_png expects uint8 data, got {raw.dtype}")
    if raw.shape[2] == 1:
        Image.fromarray(raw[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(raw, mode="RGB").save(path)


def write_tensor(path, img: np.ndarray) -> None:
    """Serialize a model-range image: magic INKT, u32 h/w/c LE, float32 row-major."""
    validate_image(img)
    h, w, c = img.shape
    with open(path, "wb") as f:
        f.write(INKT_MAGIC)
        f.write(struct.pack("<III", h, w, c))
        f.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def read_tensor(path) -> np.ndarray:
    """Read an image serialized by :func:`write_tensor`."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != INKT_MAGIC:
            raise InvalidImageError(f"bad magic {magic!r}, expected {INKT_MAGIC!r}")
        h, w, c = struct.unpack("<III", f.read(12))
        data = np.frombuffer(f.read(h * w * c * 4), dtype="<f4")
    if data.size != h * w * c:
        raise InvalidImageError("truncated tensor file")
    return data.reshape(h, w, c).astype(np.float32)
