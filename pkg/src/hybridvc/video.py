"""Frame and video containers plus the color conversions the codec adapters rely on.

Pixels are kept as floating point arrays in [0, 1]; 8-bit sources map in via
``v / 255``. Restoration always runs on RGB data, so every color-space change
happens here or in the codec adapters, nowhere else.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

RGB = "RGB"
YCBCR444 = "YCbCr444"

_EPS = 1e-6  # representation slack for the [0, 1] value domain


@dataclass
class Frame:
    """Single image: H x W x C array in [0, 1] plus color metadata."""

    pixels: np.ndarray
    color_space: str = RGB
    bit_depth: int = 8

    def validate(self):
        p = self.pixels
        if p.ndim != 3:
            raise ValidationError(f"frame must be HxWxC, got shape {p.shape}")
        h, w, c = p.shape
        if h < 8 or w < 8:
            raise ValidationError(f"frame dimensions must be >= 8, got {h}x{w}")
        if c != 3:
            raise ValidationError(f"expected 3 channels, got {c}")
        if self.color_space not in (RGB, YCBCR444):
            raise ValidationError(f"unknown color space {self.color_space!r}")
        if not np.isfinite(p).all():
            raise ValidationError("frame contains non-finite values")
        if p.min() < -_EPS or p.max() > 1.0 + _EPS:
            raise ValidationError("frame values outside [0, 1]")
        return self

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def to_uint8(self):
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)

    @classmethod
    def from_uint8(cls, arr, color_space=RGB):
        return cls(arr.astype(np.float32) / 255.0, color_space=color_space, bit_depth=8)


@dataclass
class VideoSequence:
    """Ordered frames sharing dimensions and color metadata: T x H x W x C."""

    pixels: np.ndarray
    color_space: str = RGB
    bit_depth: int = 8
    fps: float = 30.0

    def validate(self):
        p = self.pixels
        if p.ndim != 4:
            raise ValidationError(f"video must be TxHxWxC, got shape {p.shape}")
        if p.shape[0] < 1:
            raise ValidationError("video must contain at least one frame")
        self.frame(0).validate()
        if not np.isfinite(p).all():
            raise ValidationError("video contains non-finite values")
        return self

    @property
    def frame_count(self):
        return self.pixels.shape[0]

    @property
    def height(self):
        return self.pixels.shape[1]

    @property
    def width(self):
        return self.pixels.shape[2]

    def frame(self, t) -> Frame:
        return Frame(self.pixels[t], color_space=self.color_space, bit_depth=self.bit_depth)

    @classmethod
    def from_frames(cls, frames, fps=30.0):
        if not frames:
            raise ValidationError("empty frame list")
        pix = np.stack([f.pixels for f in frames], axis=0)
        return cls(pix, color_space=frames[0].color_space, bit_depth=frames[0].bit_depth, fps=fps)


# BT.601 full-range conversion, float in/out.

def rgb_to_ycbcr(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = (b - y) / 1.772 + 0.5
    cr = (r - y) / 1.402 + 0.5
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc):
    y, cb, cr = ycc[..., 0], ycc[..., 1], ycc[..., 2]
    r = y + 1.402 * (cr - 0.5)
    b = y + 1.772 * (cb - 0.5)
    g = (y - 0.299 * r - 0.114 * b) / 0.587
    return np.stack([r, g, b], axis=-1)


def luma(rgb):
    """BT.601 luma channel of an RGB array (trailing channel axis)."""
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def to_rgb(video: VideoSequence) -> VideoSequence:
    if video.color_space == RGB:
        return video
    return VideoSequence(
        np.clip(ycbcr_to_rgb(video.pixels), 0.0, 1.0),
        color_space=RGB, bit_depth=video.bit_depth, fps=video.fps,
    )


def frame_to_rgb(frame: Frame) -> Frame:
    if frame.color_space == RGB:
        return frame
    return Frame(np.clip(ycbcr_to_rgb(frame.pixels), 0.0, 1.0), color_space=RGB, bit_depth=frame.bit_depth)


# Raw planar YCbCr 4:2:0 interchange with external tools (8-bit full range).

def video_to_yuv420(video: VideoSequence) -> bytes:
    """Serialize to raw 8-bit planar 4:2:0 (chroma by 2x2 box average)."""
    rgb = to_rgb(video)
    h, w = rgb.height, rgb.width
    if h % 2 or w % 2:
        raise ValidationError("4:2:0 interchange requires even dimensions")
    out = bytearray()
    for t in range(rgb.frame_count):
        ycc = rgb_to_ycbcr(rgb.pixels[t])
        y8 = np.clip(np.rint(ycc[..., 0] * 255.0), 0, 255).astype(np.uint8)
        out += y8.tobytes()
        for c in (1, 2):
            plane = ycc[..., c].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
            out += np.clip(np.rint(plane * 255.0), 0, 255).astype(np.uint8).tobytes()
    return bytes(out)


def yuv420_to_video(data: bytes, width, height, fps=30.0) -> VideoSequence:
    """Parse raw 8-bit planar 4:2:0; chroma upsampled by nearest neighbor."""
    if height % 2 or width % 2:
        raise ValidationError("4:2:0 interchange requires even dimensions")
    frame_bytes = width * height * 3 // 2
    if len(data) % frame_bytes:
        raise ValidationError("raw 4:2:0 byte count is not a whole number of frames")
    t_count = len(data) // frame_bytes
    frames = np.empty((t_count, height, width, 3), dtype=np.float32)
    buf = np.frombuffer(data, dtype=np.uint8)
    per = np.split(buf, t_count) if t_count else []
    for t, fb in enumerate(per):
        y = fb[: width * height].reshape(height, width).astype(np.float32) / 255.0
        cb = fb[width * height: width * height * 5 // 4].reshape(height // 2, width // 2)
        cr = fb[width * height * 5 // 4:].reshape(height // 2, width // 2)
        cb = np.repeat(np.repeat(cb, 2, axis=0), 2, axis=1).astype(np.float32) / 255.0
        cr = np.repeat(np.repeat(cr, 2, axis=0), 2, axis=1).astype(np.float32) / 255.0
        frames[t] = np.clip(ycbcr_to_rgb(np.stack([y, cb, cr], axis=-1)), 0.0, 1.0)
    return VideoSequence(frames, color_space=RGB, bit_depth=8, fps=fps)
