"""Scene-cut detection on a two-scene clip, and how detected cuts become
reference-frame indices."""

import numpy as np

from hybridvc.scenedetect import (
    POLICY_FIRST_ONLY,
    POLICY_SCENE_CUT,
    content_scores,
    detect_cuts,
    select_references,
)
from hybridvc.synthetic import natural_image, panning_clip
from hybridvc.video import VideoSequence

rng = np.random.default_rng(0)
scene_a = panning_clip(natural_image("astronaut"), rng, n_frames=70,
                       height=192, width=192, max_step=1)
scene_b = panning_clip(natural_image("coffee"), rng, n_frames=80,
                       height=192, width=192, max_step=1)
video = VideoSequence(np.concatenate([scene_a.pixels, scene_b.pixels]))

scores = content_scores(video)
print(f"adjacent-frame content scores: median {np.median(scores):.1f}, "
      f"max {scores.max():.1f} at transition {int(np.argmax(scores)) + 1}")

cuts = detect_cuts(video, threshold=27.0, min_scene_len=15)
print(f"cuts above threshold 27: {cuts.cut_indices}")

print("first-only policy ->", select_references(video.frame_count, cuts, POLICY_FIRST_ONLY))
print("scene-cut policy  ->", select_references(video.frame_count, cuts, POLICY_SCENE_CUT))
print("each selected frame is transmitted losslessly and guides restoration"
      " of every frame until the next reference.")
