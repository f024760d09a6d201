"""
Scoring a video frame by frame
==============================

Run an untrained network over a synthetic cycle video and look at the score
matrix. Untrained scores hover around 0.5; training pushes the two extreme
poses of the right class toward 1 and 0.
"""

import numpy as np

from posecount import ModelConfig, init_params, score_video
from posecount.synthetic import make_cycle_video, make_templates

rng = np.random.default_rng(1)
pose_up, pose_down = make_templates(1, rng)[0]
video = make_cycle_video("demo", pose_up, pose_down, cycles=4)
print(f"video: {len(video)} frames, 4 cycles")

params = init_params(ModelConfig(num_classes=3), seed=0)
matrix = score_video(video, params)
print(f"score matrix shape: {matrix.scores.shape}")
print("class-0 scores of the first cycle:")
print(np.round(matrix.scores[0, :19], 3))
