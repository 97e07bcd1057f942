"""Rate and quality measurement: PSNR, MS-SSIM, bits per pixel, RD curves,
and the Bjontegaard delta bitrate.

BDBR fits log10(rate) as a function of distortion with a monotone piecewise
cubic (PCHIP) rather than the classic global cubic polynomial: steep curves
make the global fit oscillate, while PCHIP integrates stably and agrees with
it to fractions of a percent on well-behaved curves. Both curves are
integrated over their common distortion interval and the mean log-rate gap
is converted to a percentage.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, ScaleError, ValidationError
from .video import Frame, VideoSequence, luma

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MS_SSIM_MIN_SIDE = 176  # 11-tap window through a 5-level dyadic pyramid
_WINDOW = 11
_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03


def _as_pixels(x):
    """Normalize Frame/VideoSequence/ndarray input to (T, H, W, C) float64."""
    if isinstance(x, Frame):
        x = x.pixels
    elif isinstance(x, VideoSequence):
        x = x.pixels
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ValidationError(f"expected image or video pixels, got shape {arr.shape}")
    return arr


def psnr(a, b, mode="rgb") -> float:
    """Peak signal-to-noise ratio in dB on [0, 1] data.

    Per-frame PSNR averaged over frames; identical inputs return ``inf``.
    ``mode='y'`` measures the BT.601 luma channel only (the paper never says
    which the reported numbers use, so both are available).
    """
    pa, pb = _as_pixels(a), _as_pixels(b)
    if pa.shape != pb.shape:
        raise ValidationError(f"shape mismatch {pa.shape} vs {pb.shape}")
    if mode == "y":
        pa, pb = luma(pa)[..., None], luma(pb)[..., None]
    elif mode != "rgb":
        raise ValidationError(f"unknown psnr mode {mode!r}")
    total = 0.0
    for t in range(pa.shape[0]):
        mse = float(np.mean((pa[t] - pb[t]) ** 2))
        if mse == 0.0:
            return math.inf
        total += 10.0 * math.log10(1.0 / mse)
    return total / pa.shape[0]


def _gauss1d():
    g = np.exp(-((np.arange(_WINDOW) - (_WINDOW - 1) / 2.0) ** 2) / (2.0 * _SIGMA ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable 'valid' correlation of an (H, W) plane with the 1-D window."""
    h, w = img.shape
    out = np.zeros((h - _WINDOW + 1, w), dtype=img.dtype)
    for k in range(_WINDOW):
        out += g[k] * img[k:k + h - _WINDOW + 1, :]
    out2 = np.zeros((h - _WINDOW + 1, w - _WINDOW + 1), dtype=img.dtype)
    for k in range(_WINDOW):
        out2 += g[k] * out[:, k:k + w - _WINDOW + 1]
    return out2


def _ssim_plane(x, y, g):
    """Mean luminance term and mean contrast-structure term of one plane."""
    c1, c2 = _K1 ** 2, _K2 ** 2
    mx = _filter_valid(x, g)
    my = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    lmap = (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
    csmap = (2.0 * sxy + c2) / (sxx + syy + c2)
    return float(lmap.mean()), float(csmap.mean())


def _downsample2(img):
    h, w = img.shape
    return img[: h // 2 * 2, : w // 2 * 2].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def ms_ssim(a, b) -> float:
    """Five-scale structural similarity on [0, 1] data, averaged per frame.

    Standard scale weights, 11x11 Gaussian window (sigma 1.5), dyadic
    downsampling by 2x2 mean. The luminance term enters at the coarsest
    scale only. Frames smaller than 176 px on a side cannot feed the
    five-level pyramid and raise ScaleError.
    """
    pa, pb = _as_pixels(a), _as_pixels(b)
    if pa.shape != pb.shape:
        raise ValidationError(f"shape mismatch {pa.shape} vs {pb.shape}")
    if min(pa.shape[1], pa.shape[2]) < MS_SSIM_MIN_SIDE:
        raise ScaleError(
            f"ms_ssim needs >= {MS_SSIM_MIN_SIDE} px per side, got {pa.shape[1]}x{pa.shape[2]}")
    g = _gauss1d()
    weights = np.asarray(MS_SSIM_WEIGHTS)
    scores = []
    for t in range(pa.shape[0]):
        per_channel = []
        for c in range(pa.shape[3]):
            x = pa[t, :, :, c]
            y = pb[t, :, :, c]
            value = 1.0
            for level, w in enumerate(weights):
                lmean, csmean = _ssim_plane(x, y, g)
                if level == len(weights) - 1:
                    value *= math.copysign(abs(lmean * csmean) ** w, lmean * csmean)
                else:
                    value *= math.copysign(abs(csmean) ** w, csmean)
                    x = _downsample2(x)
                    y = _downsample2(y)
            per_channel.append(value)
        scores.append(sum(per_channel) / len(per_channel))
    return float(np.mean(scores))


def bpp(total_bits, width, height, frame_count) -> float:
    """Bits per pixel over the whole sequence."""
    if width < 1 or height < 1 or frame_count < 1:
        raise ValidationError("dimensions and frame count must be positive")
    if total_bits < 0:
        raise ValidationError("negative bit count")
    return float(total_bits) / (width * height * frame_count)


@dataclass
class RDPoint:
    rate: float  # bits per pixel
    distortion: float  # PSNR dB or MS-SSIM
    label: str = ""

    def validate(self):
        if not self.rate > 0:
            raise ValidationError(f"rate must be positive, got {self.rate}")
        if math.isnan(self.distortion):
            raise ValidationError("distortion is NaN")
        return self


@dataclass
class RDCurve:
    points: list
    metric_kind: str = "psnr"
    label: str = ""

    def validate(self):
        if len(self.points) < 4:
            raise ValidationError(f"RD curve needs >= 4 points, got {len(self.points)}")
        for p in self.points:
            p.validate()
        rates = [p.rate for p in self.points]
        if any(r2 <= r1 for r1, r2 in zip(rates, rates[1:])):
            raise ValidationError("rates must be strictly increasing")
        dist = [p.distortion for p in self.points]
        if any(d2 < d1 for d1, d2 in zip(dist, dist[1:])):
            warnings.warn(f"RD curve {self.label!r}: distortion decreases with rate")
        return self

    def rates(self):
        return np.array([p.rate for p in self.points])

    def distortions(self):
        return np.array([p.distortion for p in self.points])

    @classmethod
    def from_pairs(cls, pairs, metric_kind="psnr", label=""):
        pts = [RDPoint(r, d) for r, d in sorted(pairs)]
        return cls(pts, metric_kind=metric_kind, label=label).validate()


def bdbr(anchor: RDCurve, test: RDCurve) -> float:
    """Average rate difference (percent) of ``test`` against ``anchor`` at
    equal quality; negative values mean the test curve saves rate."""
    anchor.validate()
    test.validate()

    def log_rate_fit(curve):
        d = curve.distortions()
        r = np.log10(curve.rates())
        order = np.argsort(d)
        d, r = d[order], r[order]
        if np.any(np.diff(d) <= 0):
            raise ValidationError("distortion values must be distinct for BDBR fitting")
        return d, PchipInterpolator(d, r)

    da, fa = log_rate_fit(anchor)
    dt, ft = log_rate_fit(test)
    lo = max(da.min(), dt.min())
    hi = min(da.max(), dt.max())
    if hi <= lo:
        raise DomainError(
            f"distortion ranges do not overlap: [{da.min()}, {da.max()}] vs "
            f"[{dt.min()}, {dt.max()}]")
    mean_diff = (ft.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo)
    return float((10.0 ** mean_diff - 1.0) * 100.0)
