"""Desk-scale training and evaluation corpus.

Clips are drifting integer-pixel crops of a static canvas (a camera pan), so
consecutive frames and the first-frame reference are related by small
translations the deformable alignment can exploit. Canvases mix procedural
textures with crops of the scikit-image sample photographs; train and
held-out sets draw from disjoint photographs.
"""

import numpy as np
from scipy.ndimage import gaussian_filter

from .video import VideoSequence

TRAIN_IMAGES = ("astronaut", "coffee", "chelsea", "immunohistochemistry", "moon", "page")
HELDOUT_IMAGES = ("rocket", "camera", "coins", "clock")


def natural_image(name) -> np.ndarray:
    """One scikit-image sample photograph as float RGB in [0, 1]."""
    import skimage.data

    img = getattr(skimage.data, name)()
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    if img.shape[2] == 4:
        img = img[:, :, :3]
    return img.astype(np.float32) / 255.0


def _gradient_background(rng, h, w):
    ys = np.linspace(0, 1, h)[:, None, None]
    xs = np.linspace(0, 1, w)[None, :, None]
    a = rng.uniform(0, 1, size=3)
    b = rng.uniform(0, 1, size=3)
    c = rng.uniform(0, 1, size=3)
    return a * ys + b * xs + c * (1 - ys) * (1 - xs)


def _noise_canvas(rng, h, w):
    sigma = rng.uniform(1.0, 4.0)
    img = gaussian_filter(rng.normal(size=(h, w, 3)), sigma=(sigma, sigma, 0))
    lo, hi = img.min(), img.max()
    return (img - lo) / max(hi - lo, 1e-9)


def _shapes_canvas(rng, h, w):
    img = _gradient_background(rng, h, w)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(rng.integers(6, 14)):
        color = rng.uniform(0, 1, size=3)
        if rng.random() < 0.5:
            cy, cx = rng.uniform(0, h), rng.uniform(0, w)
            r = rng.uniform(4, min(h, w) / 4)
            m = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        else:
            y0, x0 = rng.integers(0, h), rng.integers(0, w)
            hh, ww = rng.integers(4, h // 2), rng.integers(4, w // 2)
            m = (yy >= y0) & (yy < y0 + hh) & (xx >= x0) & (xx < x0 + ww)
        img[m] = color
    return img


def _grating_canvas(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w, 3))
    for _ in range(rng.integers(2, 5)):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.05, 0.4)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        img += rng.uniform(0.2, 1.0, size=3) * wave[..., None]
    lo, hi = img.min(), img.max()
    return (img - lo) / max(hi - lo, 1e-9)


_CANVAS_KINDS = (_noise_canvas, _shapes_canvas, _grating_canvas)


def panning_clip(canvas, rng, n_frames=8, height=64, width=64, max_step=2, fps=30.0):
    """Crop a drifting window out of ``canvas``; frame 0 starts centered."""
    ch, cw = canvas.shape[:2]
    if ch < height + 2 or cw < width + 2:
        raise ValueError("canvas too small for the requested crop")
    y = (ch - height) // 2
    x = (cw - width) // 2
    frames = np.empty((n_frames, height, width, 3), dtype=np.float32)
    for t in range(n_frames):
        frames[t] = canvas[y:y + height, x:x + width]
        y = int(np.clip(y + rng.integers(-max_step, max_step + 1), 0, ch - height))
        x = int(np.clip(x + rng.integers(-max_step, max_step + 1), 0, cw - width))
    return VideoSequence(np.clip(frames, 0.0, 1.0), fps=fps)


def synthetic_clip(rng, n_frames=8, height=64, width=64, margin=16, kind=None):
    make = _CANVAS_KINDS[rng.integers(len(_CANVAS_KINDS))] if kind is None else kind
    canvas = make(rng, height + 2 * margin, width + 2 * margin)
    return panning_clip(np.clip(canvas, 0.0, 1.0).astype(np.float32), rng,
                        n_frames=n_frames, height=height, width=width)


def natural_panning_clip(rng, image_name, n_frames=8, height=64, width=64):
    img = natural_image(image_name)
    ih, iw = img.shape[:2]
    margin = 16
    ph, pw = height + 2 * margin, width + 2 * margin
    y0 = int(rng.integers(0, max(ih - ph, 1)))
    x0 = int(rng.integers(0, max(iw - pw, 1)))
    canvas = img[y0:y0 + ph, x0:x0 + pw]
    return panning_clip(canvas, rng, n_frames=n_frames, height=height, width=width)


def desk_corpus(seed=0, n_synthetic=24, n_natural=12, n_frames=8, height=64, width=64,
                image_names=TRAIN_IMAGES):
    """Training clips: procedural textures plus natural-photo pans."""
    rng = np.random.default_rng(seed)
    clips = [synthetic_clip(rng, n_frames, height, width) for _ in range(n_synthetic)]
    for i in range(n_natural):
        name = image_names[int(rng.integers(len(image_names)))]
        clips.append(natural_panning_clip(rng, name, n_frames, height, width))
    return clips


def desk_heldout(seed=1, n_synthetic=6, n_natural=6, n_frames=8, height=64, width=64):
    """Held-out clips from the same families but disjoint photographs."""
    return desk_corpus(seed=seed, n_synthetic=n_synthetic, n_natural=n_natural,
                       n_frames=n_frames, height=height, width=width,
                       image_names=HELDOUT_IMAGES)
