"""
Keypoint files and pose normalization
=====================================

Build a tiny pose sequence by hand, write it in the keypoint CSV format,
parse it back, and normalize a frame (hip midpoint to the origin, farthest
keypoint at distance 1).
"""

import numpy as np

from posecount import (
    PoseFrame,
    PoseSequence,
    normalize_pose,
    parse_keypoint_csv,
    write_keypoint_csv,
)

rng = np.random.default_rng(0)

frames = [PoseFrame(i, rng.uniform(0.2, 0.8, (33, 3)), valid=True) for i in range(3)]
frames.append(PoseFrame(3, np.full((33, 3), np.nan), valid=False))  # nobody in frame 3
sequence = PoseSequence("demo_video", frames)

text = write_keypoint_csv(sequence)
print("first two lines of the CSV:")
print("\n".join(text.splitlines()[:2])[:120], "...")

parsed = parse_keypoint_csv(text)
print(f"\nparsed back: {len(parsed)} frames, {parsed.valid_frames} with a person")

normalized = normalize_pose(parsed.frames[0])
hips = (normalized.keypoints[23] + normalized.keypoints[24]) / 2
radius = np.sqrt((normalized.keypoints ** 2).sum(axis=1)).max()
print(f"after normalization: hip midpoint {np.round(hips, 12)}, max radius {radius:.12f}")
