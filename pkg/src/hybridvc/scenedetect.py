"""Scene-cut detection and reference-frame selection.

A cut is declared between adjacent frames whose content score exceeds a
threshold. The score mirrors the classic content-detector recipe: frames are
downscaled to at most 128 px on the long side, converted to hue/saturation/
luma, and scored by the mean absolute inter-frame difference averaged over
the three channels on a 0-255 scale. Reference frames are the first frame
plus, under the ``scene_cut`` policy, the first frame of every new scene.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .video import VideoSequence, to_rgb

DEFAULT_THRESHOLD = 27.0
DEFAULT_MIN_SCENE_LEN = 15

POLICY_FIRST_ONLY = "first_only"
POLICY_SCENE_CUT = "scene_cut"


@dataclass
class CutList:
    """Indices of the first frame of each new scene (never 0)."""

    cut_indices: list
    threshold: float
    frame_count: int

    def validate(self):
        prev = 0
        for idx in self.cut_indices:
            if not 0 < idx < self.frame_count:
                raise ValidationError(f"cut index {idx} outside (0, {self.frame_count})")
            if idx <= prev:
                raise ValidationError("cut indices must be strictly increasing")
            prev = idx
        return self


def _downscale(pix):
    """Box-average the long side down to <= 128 px (integer factor)."""
    h, w = pix.shape[1:3]
    factor = max(1, int(np.ceil(max(h, w) / 128)))
    if factor == 1:
        return pix
    th, tw = h // factor * factor, w // factor * factor
    crop = pix[:, :th, :tw]
    return crop.reshape(pix.shape[0], th // factor, factor, tw // factor, factor, 3).mean(axis=(2, 4))


def _hsl_channels(pix):
    """Hue/saturation/luma planes of RGB frames, each on a 0-255 scale."""
    mx = pix.max(axis=-1)
    mn = pix.min(axis=-1)
    delta = mx - mn
    r, g, b = pix[..., 0], pix[..., 1], pix[..., 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        hue = np.where(
            delta <= 1e-12, 0.0,
            np.where(mx == r, ((g - b) / delta) % 6.0,
                     np.where(mx == g, (b - r) / delta + 2.0, (r - g) / delta + 4.0)),
        )
        sat = np.where(mx <= 1e-12, 0.0, delta / np.maximum(mx, 1e-12))
    return np.stack([hue * (255.0 / 6.0), sat * 255.0, mx * 255.0], axis=-1)


def content_scores(frames: VideoSequence) -> np.ndarray:
    """Score for each adjacent frame pair; entry t compares frames t-1 and t."""
    pix = to_rgb(frames).pixels.astype(np.float64)
    hsl = _hsl_channels(_downscale(pix))
    diffs = np.abs(hsl[1:] - hsl[:-1])
    return diffs.mean(axis=(1, 2, 3))


def detect_cuts(frames: VideoSequence, threshold=DEFAULT_THRESHOLD,
                min_scene_len=DEFAULT_MIN_SCENE_LEN) -> CutList:
    """Sequentially scan adjacent-frame scores; a cut opens a new scene at t."""
    if frames.frame_count < 2:
        raise ValidationError("scene detection needs at least 2 frames")
    if threshold <= 0:
        raise ValidationError("threshold must be positive")
    scores = content_scores(frames)
    cuts = []
    last_cut = 0
    for t, score in enumerate(scores, start=1):
        if score > threshold and t - last_cut >= min_scene_len:
            cuts.append(t)
            last_cut = t
    return CutList(cuts, threshold, frames.frame_count).validate()


def select_references(frame_count: int, cuts: CutList, policy=POLICY_SCENE_CUT):
    """Frame indices to transmit losslessly: always 0, plus post-cut frames."""
    if policy not in (POLICY_FIRST_ONLY, POLICY_SCENE_CUT):
        raise ValidationError(f"unknown reference policy {policy!r}")
    if policy == POLICY_FIRST_ONLY:
        return [0]
    cuts.validate()
    indices = [0] + [i for i in cuts.cut_indices if i < frame_count]
    return sorted(set(indices))
