import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridvc.errors import ValidationError
from hybridvc.scenedetect import (
    CutList,
    POLICY_FIRST_ONLY,
    POLICY_SCENE_CUT,
    content_scores,
    detect_cuts,
    select_references,
)
from hybridvc.synthetic import natural_panning_clip
from hybridvc.video import VideoSequence


def solid_video(values, h=32, w=32):
    frames = [np.full((h, w, 3), v, dtype=np.float32) for v in values]
    return VideoSequence(np.stack(frames))


def concat_videos(a, b):
    return VideoSequence(np.concatenate([a.pixels, b.pixels], axis=0))


def test_black_to_white_cut_at_junction():
    video = solid_video([0.0] * 10 + [1.0] * 10)
    cuts = detect_cuts(video, threshold=27.0, min_scene_len=5)
    assert cuts.cut_indices == [10]


def test_constant_video_no_cuts():
    video = solid_video([0.4] * 20)
    assert detect_cuts(video, threshold=27.0, min_scene_len=5).cut_indices == []


def two_scene_fixture(size=192):
    """Two gently panning natural clips joined at frame 70."""
    from hybridvc.synthetic import natural_image, panning_clip

    rng = np.random.default_rng(0)
    a = panning_clip(natural_image("astronaut"), rng, n_frames=70,
                     height=size, width=size, max_step=1)
    b = panning_clip(natural_image("coffee"), rng, n_frames=80,
                     height=size, width=size, max_step=1)
    return concat_videos(a, b)


def test_concatenated_natural_clips_cut_near_junction():
    cuts = detect_cuts(two_scene_fixture(), threshold=27.0, min_scene_len=15)
    assert any(abs(c - 70) <= 1 for c in cuts.cut_indices), cuts.cut_indices
    assert len(cuts.cut_indices) == 1


def test_min_scene_len_suppresses_early_cut():
    video = solid_video([0.0] * 10 + [1.0] * 10)
    cuts = detect_cuts(video, threshold=27.0, min_scene_len=15)
    assert cuts.cut_indices == []  # junction at 10 is closer than min_scene_len


def test_threshold_monotonicity_on_fixture():
    video = two_scene_fixture(size=160)
    counts = [len(detect_cuts(video, threshold=t, min_scene_len=1).cut_indices)
              for t in (5.0, 15.0, 27.0, 60.0, 120.0)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_causality_tail_permutation():
    rng = np.random.default_rng(2)
    pix = rng.random((30, 16, 16, 3)).astype(np.float32)
    video = VideoSequence(pix.copy())
    t_split = 12
    shuffled = pix.copy()
    shuffled[t_split:] = shuffled[t_split:][::-1]
    cuts_a = detect_cuts(video, threshold=27.0, min_scene_len=1).cut_indices
    cuts_b = detect_cuts(VideoSequence(shuffled), threshold=27.0, min_scene_len=1).cut_indices
    assert [c for c in cuts_a if c < t_split] == [c for c in cuts_b if c < t_split]


def test_content_scores_shape_and_black_white_magnitude():
    video = solid_video([0.0, 0.0, 1.0])
    scores = content_scores(video)
    assert scores.shape == (2,)
    assert scores[0] < 1e-9
    assert scores[1] == pytest.approx(85.0, abs=0.5)  # only luma jumps, 255/3


def test_errors():
    with pytest.raises(ValidationError):
        detect_cuts(solid_video([0.1]), threshold=27.0)
    with pytest.raises(ValidationError):
        detect_cuts(solid_video([0.1, 0.2]), threshold=0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6),
       thresholds=st.lists(st.floats(1.0, 200.0), min_size=2, max_size=4))
def test_threshold_monotonicity_property(seed, thresholds):
    # with min_scene_len=1 the suppression window cannot interact, so raising
    # the threshold can only remove cuts
    rng = np.random.default_rng(seed)
    pix = (rng.random((12, 16, 16, 3)) ** rng.uniform(0.3, 3)).astype(np.float32)
    video = VideoSequence(pix)
    for lo, hi in zip(sorted(thresholds), sorted(thresholds)[1:]):
        cuts_lo = set(detect_cuts(video, threshold=lo, min_scene_len=1).cut_indices)
        cuts_hi = set(detect_cuts(video, threshold=hi, min_scene_len=1).cut_indices)
        assert cuts_hi <= cuts_lo


# -- reference selection -------------------------------------------------------------

def test_select_references_no_cuts():
    cuts = CutList([], 27.0, 300)
    assert select_references(300, cuts, POLICY_SCENE_CUT) == [0]


def test_select_references_scene_cut_policy():
    cuts = CutList([70], 27.0, 150)
    assert select_references(150, cuts, POLICY_SCENE_CUT) == [0, 70]


def test_select_references_first_only_policy():
    cuts = CutList([70], 27.0, 150)
    assert select_references(150, cuts, POLICY_FIRST_ONLY) == [0]


def test_select_references_sorted_and_contains_zero():
    cuts = CutList([40, 90, 120], 27.0, 200)
    refs = select_references(200, cuts, POLICY_SCENE_CUT)
    assert refs[0] == 0
    assert refs == sorted(refs)
    assert len(set(refs)) == len(refs)


def test_cutlist_validation():
    with pytest.raises(ValidationError):
        CutList([0], 27.0, 10).validate()  # 0 is never a cut
    with pytest.raises(ValidationError):
        CutList([5, 5], 27.0, 10).validate()
    with pytest.raises(ValidationError):
        CutList([12], 27.0, 10).validate()
