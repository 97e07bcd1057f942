import math
import warnings

import numpy as np
import pytest

from hybridvc.errors import DomainError, ScaleError, ValidationError
from hybridvc.metrics import RDCurve, RDPoint, bdbr, bpp, ms_ssim, psnr
from hybridvc.video import VideoSequence


# -- psnr ------------------------------------------------------------------------

def test_psnr_identical_is_infinite():
    a = np.random.default_rng(0).random((16, 16, 3))
    assert psnr(a, a) == math.inf


def test_psnr_uniform_offset_closed_form():
    a = np.full((32, 32, 3), 0.3)
    b = a + 10.0 / 255.0
    expected = 20.0 * math.log10(255.0 / 10.0)  # 28.1308 dB
    assert abs(psnr(a, b) - expected) < 1e-9
    assert abs(expected - 28.1308) < 1e-4


def test_psnr_zero_vs_one_is_zero_db():
    a = np.zeros((8, 8, 3))
    b = np.ones((8, 8, 3))
    assert abs(psnr(a, b)) < 1e-12


def test_psnr_video_averages_per_frame_db():
    rng = np.random.default_rng(1)
    x = rng.random((3, 16, 16, 3)).astype(np.float32)
    n1 = np.clip(x + rng.normal(0, 0.02, x.shape), 0, 1).astype(np.float32)
    per_frame = [psnr(x[t], n1[t]) for t in range(3)]
    assert abs(psnr(VideoSequence(x), VideoSequence(n1)) - np.mean(per_frame)) < 1e-9


def test_psnr_strictly_decreasing_in_noise_amplitude(natural_crop):
    rng = np.random.default_rng(2)
    noise = rng.normal(size=natural_crop.shape)
    values = []
    for amp in (0.005, 0.01, 0.02, 0.05, 0.1):
        values.append(psnr(natural_crop, np.clip(natural_crop + amp * noise, 0, 1)))
    assert all(a > b for a, b in zip(values, values[1:]))


def test_psnr_y_mode_differs_from_rgb(natural_crop):
    noisy = np.clip(natural_crop + 0.02 * np.random.default_rng(3).normal(
        size=natural_crop.shape), 0, 1)
    assert psnr(natural_crop, noisy, mode="y") != psnr(natural_crop, noisy)


def test_psnr_shape_mismatch():
    with pytest.raises(ValidationError):
        psnr(np.zeros((8, 8, 3)), np.zeros((8, 9, 3)))


# -- ms_ssim ----------------------------------------------------------------------

def _msssim_oracle(x, y):
    """Direct window-by-window evaluation of the five-scale formula."""
    window = 11
    g1 = np.exp(-((np.arange(window) - 5.0) ** 2) / (2.0 * 1.5 ** 2))
    g1 /= g1.sum()
    g2 = np.outer(g1, g1)
    weights = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
    c1, c2 = 0.01 ** 2, 0.03 ** 2

    total = 1.0
    for level, w in enumerate(weights):
        h, wd = x.shape
        lsum, cssum, count = 0.0, 0.0, 0
        for i in range(h - window + 1):
            for j in range(wd - window + 1):
                px = x[i:i + window, j:j + window]
                py = y[i:i + window, j:j + window]
                mx = float((g2 * px).sum())
                my = float((g2 * py).sum())
                sxx = float((g2 * px * px).sum()) - mx * mx
                syy = float((g2 * py * py).sum()) - my * my
                sxy = float((g2 * px * py).sum()) - mx * my
                lsum += (2 * mx * my + c1) / (mx * mx + my * my + c1)
                cssum += (2 * sxy + c2) / (sxx + syy + c2)
                count += 1
        lmean, csmean = lsum / count, cssum / count
        if level == len(weights) - 1:
            total *= math.copysign(abs(lmean * csmean) ** w, lmean * csmean)
        else:
            total *= math.copysign(abs(csmean) ** w, csmean)
            x = x[: h // 2 * 2, : wd // 2 * 2].reshape(h // 2, 2, wd // 2, 2).mean(axis=(1, 3))
            y = y[: h // 2 * 2, : wd // 2 * 2].reshape(h // 2, 2, wd // 2, 2).mean(axis=(1, 3))
    return total


def test_ms_ssim_identity_is_one(natural_crop):
    pad = np.pad(natural_crop, ((0, 0), (0, 0), (0, 0)))
    img = np.pad(pad, ((0, 0), (0, 0), (0, 0)))
    img = np.tile(natural_crop, (1, 1, 1))
    assert abs(ms_ssim(img, img) - 1.0) < 1e-9


def test_ms_ssim_symmetry(natural_crop):
    noisy = np.clip(natural_crop + 0.05 * np.random.default_rng(5).normal(
        size=natural_crop.shape), 0, 1)
    assert abs(ms_ssim(natural_crop, noisy) - ms_ssim(noisy, natural_crop)) < 1e-12


def test_ms_ssim_matches_scalar_loop_oracle(natural_crop):
    x = natural_crop[:176, :176, 0]
    y = np.clip(x + 0.08 * np.random.default_rng(6).normal(size=x.shape), 0, 1)
    mine = ms_ssim(x[..., None], y[..., None])
    oracle = _msssim_oracle(x, y)
    assert abs(mine - oracle) < 1e-6


def test_ms_ssim_too_small_raises_scale_error():
    with pytest.raises(ScaleError):
        ms_ssim(np.zeros((100, 100, 3)), np.zeros((100, 100, 3)))


def test_ms_ssim_detects_degradation(natural_crop):
    light = np.clip(natural_crop + 0.02 * np.random.default_rng(7).normal(
        size=natural_crop.shape), 0, 1)
    heavy = np.clip(natural_crop + 0.15 * np.random.default_rng(7).normal(
        size=natural_crop.shape), 0, 1)
    assert 1.0 > ms_ssim(natural_crop, light) > ms_ssim(natural_crop, heavy)


# -- bpp --------------------------------------------------------------------------

def test_bpp_single_reference_amortized_over_600_frames():
    w, h = 1920, 1080
    reference_bits = 5.30 * w * h  # measured side-info rate for one frame
    overhead = bpp(reference_bits, w, h, 600)
    assert abs(overhead - 0.00883) < 1e-5


def test_bpp_trivial_case():
    assert bpp(8, 1, 1, 1) == 8.0


def test_bpp_additivity():
    w, h, t = 64, 48, 10
    lossy, ref, framing = 10_000, 2_000, 400
    assert bpp(lossy + ref + framing, w, h, t) == pytest.approx(
        bpp(lossy, w, h, t) + bpp(ref, w, h, t) + bpp(framing, w, h, t))


def test_bpp_validation():
    with pytest.raises(ValidationError):
        bpp(100, 0, 10, 10)
    with pytest.raises(ValidationError):
        bpp(-1, 10, 10, 10)


# -- RD curves and BDBR -------------------------------------------------------------

def curve(rates, dists, label=""):
    return RDCurve([RDPoint(r, d) for r, d in zip(rates, dists)], label=label).validate()


def test_rd_curve_needs_four_points():
    with pytest.raises(ValidationError):
        curve([0.1, 0.2, 0.3], [30, 31, 32])


def test_rd_curve_rates_strictly_increasing():
    with pytest.raises(ValidationError):
        curve([0.1, 0.1, 0.3, 0.4], [30, 31, 32, 33])


def test_rd_curve_warns_on_nonmonotone_distortion():
    with pytest.warns(UserWarning):
        curve([0.1, 0.2, 0.3, 0.4], [30, 29, 32, 33])


def test_bdbr_identical_curves_zero():
    a = curve([0.1, 0.2, 0.4, 0.8], [30, 33, 36, 39])
    b = curve([0.1, 0.2, 0.4, 0.8], [30, 33, 36, 39])
    assert abs(bdbr(a, b)) < 1e-9


def test_bdbr_half_rate_is_minus_fifty():
    rates = [0.1, 0.2, 0.4, 0.8]
    dists = [30.0, 33.0, 36.0, 39.0]
    anchor = curve(rates, dists)
    test_c = curve([r / 2 for r in rates], dists)
    assert abs(bdbr(anchor, test_c) - (-50.0)) < 0.1
    assert abs(bdbr(test_c, anchor) - 100.0) < 0.2  # doubling is +100%


def test_bdbr_nonoverlapping_ranges():
    a = curve([0.1, 0.2, 0.4, 0.8], [30, 31, 32, 33])
    b = curve([0.1, 0.2, 0.4, 0.8], [40, 41, 42, 43])
    with pytest.raises(DomainError):
        bdbr(a, b)


def test_bdbr_requires_distinct_distortions():
    a = curve([0.1, 0.2, 0.4, 0.8], [30, 30, 32, 33])
    b = curve([0.1, 0.2, 0.4, 0.8], [30, 31, 32, 33])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValidationError):
            bdbr(a, b)
