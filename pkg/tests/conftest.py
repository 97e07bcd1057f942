import numpy as np
import pytest

from hybridvc.neural import tune_allocator
from hybridvc.synthetic import natural_image
from hybridvc.video import Frame, VideoSequence

tune_allocator()

NATURAL_NAMES = ("astronaut", "camera", "chelsea", "coffee", "coins",
                 "moon", "page", "rocket", "text", "clock")


@pytest.fixture(scope="session")
def natural_frames():
    """Ten natural photographs as Frames."""
    return [Frame(natural_image(n)) for n in NATURAL_NAMES]


@pytest.fixture(scope="session")
def natural_crop():
    """One 200x200 natural RGB crop in [0, 1]."""
    return natural_image("astronaut")[100:300, 150:350].astype(np.float64)


def make_video(arrs, fps=30.0) -> VideoSequence:
    return VideoSequence(np.stack(arrs).astype(np.float32), fps=fps)


@pytest.fixture()
def tiny_video():
    """Deterministic 6-frame 32x32 moving-gradient clip."""
    rng = np.random.default_rng(42)
    base = rng.random((40, 40, 3)).astype(np.float32)
    frames = [base[t: t + 32, t: t + 32] for t in range(6)]
    return make_video(frames)
