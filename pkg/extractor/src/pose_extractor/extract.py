"""Decode a video, run the pose engine per frame, and emit the canonical
keypoint CSV.

Format (shared contract with the counting pipeline): header
``frame,x0,y0,z0,...,x32,y32,z32``, one row per decoded frame with dense
indices from 0, empty coordinate cells when no person was found, UTF-8 with
LF line endings.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engines import NUM_LANDMARKS, XY_MAX, XY_MIN, BlazePoseEngine


class ExtractorError(RuntimeError):
    """A video cannot be read or a CSV violates the keypoint contract."""


@dataclass
class ExtractionReport:
    video_id: str
    total_frames: int
    valid_frames: int
    output_path: Path


def keypoint_header(num_landmarks: int = NUM_LANDMARKS) -> str:
    cols = ["frame"]
    for j in range(num_landmarks):
        cols += [f"x{j}", f"y{j}", f"z{j}"]
    return ",".join(cols)


def extract_keypoints(video_path, out_csv, engine=None) -> ExtractionReport:
    """Run the engine over every decoded frame and write the keypoint CSV.

    ``engine`` defaults to the mediapipe-backed detector; anything with a
    ``detect(frame_bgr) -> (33, 3) array or None`` method works.
    """
    import cv2

    video_path = Path(video_path)
    capture = cv2.VideoCapture(str(video_path))
    if not capture.isOpened():
        raise ExtractorError(f"cannot open video {video_path}")
    if engine is None:
        engine = BlazePoseEngine()

    empty_cells = "," * (3 * NUM_LANDMARKS - 1)
    lines = [keypoint_header()]
    total = valid = 0
    while True:
        ok, frame = capture.read()
        if not ok:
            break
        points = engine.detect(frame)
        if points is None:
            lines.append(f"{total},{empty_cells}")
        else:
            cells = ",".join(repr(float(v)) for v in np.asarray(points).reshape(-1))
            lines.append(f"{total},{cells}")
            valid += 1
        total += 1
    capture.release()
    if total == 0:
        raise ExtractorError(f"no decodable frames in {video_path}")

    out_csv = Path(out_csv)
    out_csv.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return ExtractionReport(
        video_id=video_path.stem,
        total_frames=total,
        valid_frames=valid,
        output_path=out_csv,
    )


def validate_keypoint_file(csv_path) -> list[str]:
    """Check a CSV against the keypoint contract; returns found problems
    (empty list means the file is valid)."""
    path = Path(csv_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        return [f"cannot read {path}: {exc}"]
    lines = [line.rstrip("\r") for line in text.split("\n") if line.strip("\r") != ""]
    rows = [line for line in lines if not line.startswith("#")]
    if not rows:
        return ["empty file"]

    problems = []
    if rows[0] != keypoint_header():
        problems.append(f"bad header: expected {1 + 3 * NUM_LANDMARKS} columns for {NUM_LANDMARKS} landmarks")
        return problems

    expected_cells = 1 + 3 * NUM_LANDMARKS
    previous = -1
    for number, row in enumerate(rows[1:], start=2):
        cells = row.split(",")
        if len(cells) != expected_cells:
            problems.append(f"row {number}: {len(cells)} columns, expected {expected_cells}")
            continue
        try:
            index = int(cells[0])
        except ValueError:
            problems.append(f"row {number}: bad frame index {cells[0]!r}")
            continue
        if index <= previous:
            problems.append(f"row {number}: frame index {index} not increasing")
        previous = index

        coords = cells[1:]
        empties = sum(1 for c in coords if c == "")
        if empties == len(coords):
            continue
        if empties:
            problems.append(f"row {number}: partially empty coordinates")
            continue
        try:
            values = np.array([float(c) for c in coords]).reshape(NUM_LANDMARKS, 3)
        except ValueError:
            problems.append(f"row {number}: non-numeric coordinate")
            continue
        if not np.all(np.isfinite(values)):
            problems.append(f"row {number}: non-finite coordinate")
            continue
        xy = values[:, :2]
        if xy.min() < XY_MIN or xy.max() > XY_MAX:
            problems.append(f"row {number}: x/y outside [{XY_MIN}, {XY_MAX}]")
    return problems
