"""Pose engines.

An engine is anything with ``detect(frame_bgr) -> (33, 3) float array or
None``; rows are x, y (image-relative) and a relative depth. The default is
the 33-landmark BlazePose family as shipped in mediapipe. The CSV contract
is engine-agnostic, so another engine can substitute as long as it emits the
same landmark layout.
"""

from __future__ import annotations

import numpy as np

NUM_LANDMARKS = 33

# The downstream parser accepts slightly out-of-frame coordinates only
# within this window.
XY_MIN, XY_MAX = -0.5, 1.5

INSTALL_MESSAGE = (
    "the mediapipe pose engine is not installed; run\n"
    "    pip install mediapipe\n"
    "or pass another engine object to extract_keypoints()"
)


class EngineUnavailableError(RuntimeError):
    """The requested pose engine cannot be imported."""


class BlazePoseEngine:
    """33-landmark detector backed by mediapipe.

    mediapipe tracks the most prominent person only, which matches the
    single-subject assumption of the downstream pipeline.
    """

    def __init__(self, model_complexity: int = 1):
        try:
            import mediapipe as mp
        except ImportError:
            raise EngineUnavailableError(INSTALL_MESSAGE) from None
        self._pose = mp.solutions.pose.Pose(
            static_image_mode=False,
            model_complexity=model_complexity,
        )

    def detect(self, frame_bgr: np.ndarray):
        import cv2

        rgb = cv2.cvtColor(frame_bgr, cv2.COLOR_BGR2RGB)
        result = self._pose.process(rgb)
        if result.pose_landmarks is None:
            return None
        points = np.array(
            [(lm.x, lm.y, lm.z) for lm in result.pose_landmarks.landmark],
            dtype=np.float64,
        )
        if points.shape != (NUM_LANDMARKS, 3) or not np.all(np.isfinite(points)):
            return None
        # Landmarks may land slightly outside the frame; clamp into the
        # window the downstream parser accepts.
        points[:, :2] = np.clip(points[:, :2], XY_MIN, XY_MAX)
        return points

    def close(self):
        self._pose.close()
