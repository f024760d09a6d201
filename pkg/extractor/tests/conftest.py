import cv2
import numpy as np
import pytest


def write_clip(path, num_frames=60, size=64, blank=()):
    """A tiny MJPG clip: a bright blob orbits the frame; ``blank`` frames
    stay dark (no person)."""
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), 30, (size, size)
    )
    assert writer.isOpened()
    for i in range(num_frames):
        frame = np.zeros((size, size, 3), np.uint8)
        if i not in blank:
            angle = 2 * np.pi * i / num_frames
            cx = int(size / 2 + size / 4 * np.cos(angle))
            cy = int(size / 2 + size / 4 * np.sin(angle))
            cv2.circle(frame, (cx, cy), size // 8, (40, 200, 240), -1)
        writer.write(frame)
    writer.release()
    return path


class BlobEngine:
    """Deterministic test engine: 33 landmarks arranged around the
    brightest blob, None for dark frames."""

    def detect(self, frame_bgr):
        gray = frame_bgr.max(axis=2).astype(np.float64)
        if gray.max() < 10:
            return None
        ys, xs = np.nonzero(gray > gray.max() / 2)
        cx = xs.mean() / frame_bgr.shape[1]
        cy = ys.mean() / frame_bgr.shape[0]
        offsets = np.linspace(0.0, 2 * np.pi, 33, endpoint=False)
        points = np.empty((33, 3))
        points[:, 0] = cx + 0.05 * np.cos(offsets)
        points[:, 1] = cy + 0.05 * np.sin(offsets)
        points[:, 2] = 0.01 * np.sin(offsets)
        np.clip(points[:, :2], -0.5, 1.5, out=points[:, :2])
        return points


@pytest.fixture
def blob_engine():
    return BlobEngine()


@pytest.fixture
def sample_clip(tmp_path):
    return write_clip(tmp_path / "sample.avi")
