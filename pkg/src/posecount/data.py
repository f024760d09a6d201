"""Pose data types, CSV file formats, and training-set assembly.

File formats (UTF-8, LF line endings):

* keypoint CSV -- header ``frame,x0,y0,z0,...,x{K-1},y{K-1},z{K-1}``, one row
  per video frame in order. Empty coordinate cells mark a frame where no
  person was found. An optional leading ``# video_id: <id>`` comment names
  the video; otherwise the filename stem does.
* annotation CSV -- header ``video_id,action_class,event_index,pose1_frame,pose2_frame``,
  one action event per row.
* count CSV -- header ``video_id,action_class,count``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DegeneratePoseError,
    ParseError,
    ValidationError,
)

logger = logging.getLogger(__name__)

DEFAULT_NUM_KEYPOINTS = 33

# Hip landmark indices in the 33-landmark full-body convention.
LEFT_HIP, RIGHT_HIP = 23, 24

# Default class registry: name -> dense id is positional.
DEFAULT_CLASSES = (
    "bench_press",
    "front_raise",
    "jumping_jack",
    "pommel_horse",
    "sit_up",
    "squat",
    "pull_up",
    "push_up",
)

_XY_RANGE = (-0.5, 1.5)
_DEGENERATE_RADIUS = 1e-6


@dataclass(frozen=True)
class Keypoint:
    """A single tracked body point: two image-relative coordinates plus a
    relative depth estimate."""

    x: float
    y: float
    z: float


@dataclass
class PoseFrame:
    """All keypoints of one video frame.

    ``keypoints`` is a float64 array of shape (K, 3) in x, y, z order.
    ``valid`` is False when the extractor found no person; the coordinate
    array then carries NaNs and must not be used.
    """

    frame_index: int
    keypoints: np.ndarray
    valid: bool = True

    def keypoint(self, j: int) -> Keypoint:
        x, y, z = self.keypoints[j]
        return Keypoint(float(x), float(y), float(z))

    @property
    def num_keypoints(self) -> int:
        return self.keypoints.shape[0]


@dataclass
class PoseSequence:
    """The pose track of one video: frames with strictly increasing indices."""

    video_id: str
    frames: list[PoseFrame]

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def valid_frames(self) -> int:
        return sum(1 for f in self.frames if f.valid)


@dataclass(frozen=True)
class SaliencyAnnotation:
    """One annotated action event: the frame indices where the two extreme
    poses of the cycle occur (the first always precedes the second)."""

    video_id: str
    action_class: str
    event_index: int
    pose1_frame: int
    pose2_frame: int


@dataclass
class LabeledPoseSample:
    """A normalized extreme-pose frame with its class and which of the two
    extremes (1 or 2) it shows."""

    pose: PoseFrame
    action_class: int
    salient_index: int


@dataclass(frozen=True)
class GroundTruthCount:
    video_id: str
    action_class: str
    count: int


# ---------------------------------------------------------------------------
# keypoint CSV
# ---------------------------------------------------------------------------

def keypoint_header(num_keypoints: int = DEFAULT_NUM_KEYPOINTS) -> str:
    cols = ["frame"]
    for j in range(num_keypoints):
        cols += [f"x{j}", f"y{j}", f"z{j}"]
    return ",".join(cols)


def _decode(content) -> str:
    if isinstance(content, bytes):
        return content.decode("utf-8")
    return content


def _split_lines(text: str) -> list[str]:
    return [line.rstrip("\r") for line in text.split("\n") if line.strip("\r") != ""]


def parse_keypoint_csv(content, video_id: str | None = None) -> PoseSequence:
    """Parse a keypoint CSV into a :class:`PoseSequence`.

    ``video_id`` falls back to a ``# video_id:`` header comment when not
    given. Rows whose coordinate cells are all empty become invalid frames;
    a row with only some cells empty is malformed.
    """
    lines = _split_lines(_decode(content))
    comment_id = None
    header_at = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            header_at = i
            break
        body = line.lstrip("#").strip()
        if body.startswith("video_id:"):
            comment_id = body.split(":", 1)[1].strip()
    else:
        header_at = len(lines)

    if header_at >= len(lines):
        raise ParseError("empty keypoint file")

    header = lines[header_at].split(",")
    if header[0] != "frame" or (len(header) - 1) % 3 != 0 or len(header) < 4:
        raise ParseError(f"bad keypoint header: {lines[header_at]!r}")
    num_keypoints = (len(header) - 1) // 3
    if header != keypoint_header(num_keypoints).split(","):
        raise ParseError(f"bad keypoint header: {lines[header_at]!r}")

    resolved_id = video_id if video_id is not None else comment_id
    if resolved_id is None:
        raise ParseError("no video id: pass one or add a '# video_id:' comment")

    frames: list[PoseFrame] = []
    previous_index = -1
    expected = 1 + 3 * num_keypoints
    for lineno, line in enumerate(lines[header_at + 1 :], start=header_at + 2):
        fields = line.split(",")
        if len(fields) != expected:
            raise ParseError(
                f"row {lineno}: expected {expected} columns, got {len(fields)}"
            )
        try:
            frame_index = int(fields[0])
        except ValueError:
            raise ParseError(f"row {lineno}: bad frame index {fields[0]!r}") from None
        if frame_index <= previous_index:
            raise ParseError(
                f"row {lineno}: frame index {frame_index} not strictly increasing"
            )
        previous_index = frame_index

        coords = fields[1:]
        empties = sum(1 for c in coords if c == "")
        if empties == len(coords):
            frames.append(
                PoseFrame(frame_index, np.full((num_keypoints, 3), np.nan), valid=False)
            )
            continue
        if empties > 0:
            raise ParseError(f"row {lineno}: {empties} empty cells in a non-empty row")
        try:
            values = np.array([float(c) for c in coords], dtype=np.float64)
        except ValueError:
            raise ParseError(f"row {lineno}: non-numeric coordinate") from None
        if not np.all(np.isfinite(values)):
            raise ParseError(f"row {lineno}: non-finite coordinate")
        points = values.reshape(num_keypoints, 3)
        xy = points[:, :2]
        if xy.min() < _XY_RANGE[0] or xy.max() > _XY_RANGE[1]:
            raise ValidationError(
                f"row {lineno}: x/y outside [{_XY_RANGE[0]}, {_XY_RANGE[1]}]"
            )
        frames.append(PoseFrame(frame_index, points, valid=True))

    if not frames:
        raise ParseError("keypoint file has a header but no frames")
    return PoseSequence(resolved_id, frames)


def write_keypoint_csv(sequence: PoseSequence) -> str:
    """Serialize exactly; floats use shortest round-trip formatting."""
    num_keypoints = sequence.frames[0].num_keypoints if sequence.frames else DEFAULT_NUM_KEYPOINTS
    lines = [f"# video_id: {sequence.video_id}", keypoint_header(num_keypoints)]
    for frame in sequence.frames:
        if frame.valid:
            cells = [repr(float(v)) for v in frame.keypoints.reshape(-1)]
        else:
            cells = [""] * (3 * num_keypoints)
        lines.append(",".join([str(frame.frame_index)] + cells))
    return "\n".join(lines) + "\n"


def load_keypoint_file(path) -> PoseSequence:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    # A header comment wins over the filename stem.
    explicit = any(
        line.lstrip("#").strip().startswith("video_id:")
        for line in text.split("\n")
        if line.startswith("#")
    )
    return parse_keypoint_csv(text, video_id=None if explicit else path.stem)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def normalize_pose(
    frame: PoseFrame, hip_indices: tuple[int, int] = (LEFT_HIP, RIGHT_HIP)
) -> PoseFrame:
    """Center the hip midpoint at the origin and scale uniformly so the
    farthest keypoint sits at distance 1.

    This removes camera placement and subject scale. Idempotent up to
    floating-point tolerance. Raises :class:`DegeneratePoseError` when all
    keypoints coincide.
    """
    if not frame.valid:
        raise ValidationError(f"frame {frame.frame_index}: cannot normalize an invalid frame")
    k = frame.num_keypoints
    left, right = hip_indices
    if not (0 <= left < k and 0 <= right < k):
        raise ConfigError(f"hip indices {hip_indices} out of range for {k} keypoints")
    if not np.all(np.isfinite(frame.keypoints)):
        raise ValidationError(f"frame {frame.frame_index}: non-finite keypoints")

    center = (frame.keypoints[left] + frame.keypoints[right]) / 2.0
    shifted = frame.keypoints - center
    radius = float(np.sqrt((shifted ** 2).sum(axis=1)).max())
    if radius < _DEGENERATE_RADIUS:
        raise DegeneratePoseError(
            f"frame {frame.frame_index}: all keypoints coincide (max radius {radius:.2e})"
        )
    return PoseFrame(frame.frame_index, shifted / radius, valid=True)


# ---------------------------------------------------------------------------
# annotation CSV
# ---------------------------------------------------------------------------

_ANNOTATION_HEADER = "video_id,action_class,event_index,pose1_frame,pose2_frame"


def parse_annotation_csv(content, class_names=DEFAULT_CLASSES) -> list[SaliencyAnnotation]:
    """Parse the per-event annotation file, validating class names against
    the registry and the extreme-pose ordering within each event."""
    lines = _split_lines(_decode(content))
    if not lines:
        raise ParseError("empty annotation file")
    if lines[0] != _ANNOTATION_HEADER:
        raise ParseError(f"bad annotation header: {lines[0]!r}")
    known = set(class_names)
    annotations = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 5:
            raise ParseError(f"row {lineno}: expected 5 columns, got {len(fields)}")
        video_id, action_class = fields[0], fields[1]
        try:
            event_index, pose1, pose2 = (int(fields[i]) for i in (2, 3, 4))
        except ValueError:
            raise ParseError(f"row {lineno}: non-integer field") from None
        if action_class not in known:
            raise ValidationError(
                f"row {lineno}: unknown class {action_class!r}; known: {', '.join(class_names)}"
            )
        if event_index < 0 or pose1 < 0 or pose2 < 0:
            raise ValidationError(f"row {lineno}: negative index")
        if pose1 >= pose2:
            raise ValidationError(
                f"row {lineno}: pose1_frame {pose1} must precede pose2_frame {pose2}"
            )
        annotations.append(SaliencyAnnotation(video_id, action_class, event_index, pose1, pose2))
    return annotations


def write_annotation_csv(annotations) -> str:
    lines = [_ANNOTATION_HEADER]
    for a in annotations:
        lines.append(f"{a.video_id},{a.action_class},{a.event_index},{a.pose1_frame},{a.pose2_frame}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# count CSV
# ---------------------------------------------------------------------------

_COUNT_HEADER = "video_id,action_class,count"


def parse_count_csv(content) -> list[GroundTruthCount]:
    lines = _split_lines(_decode(content))
    if not lines:
        return []
    if lines[0] != _COUNT_HEADER:
        raise ParseError(f"bad count header: {lines[0]!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 3:
            raise ParseError(f"row {lineno}: expected 3 columns, got {len(fields)}")
        try:
            count = int(fields[2])
        except ValueError:
            raise ParseError(f"row {lineno}: non-integer count {fields[2]!r}") from None
        if count < 0:
            raise ValidationError(f"row {lineno}: negative count {count}")
        records.append(GroundTruthCount(fields[0], fields[1], count))
    return records


def write_count_csv(records) -> str:
    lines = [_COUNT_HEADER]
    for r in records:
        lines.append(f"{r.video_id},{r.action_class},{r.count}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# training-set assembly
# ---------------------------------------------------------------------------

def build_training_set(
    annotations,
    sequences: dict[str, PoseSequence],
    class_names=DEFAULT_CLASSES,
    hip_indices: tuple[int, int] = (LEFT_HIP, RIGHT_HIP),
) -> list[LabeledPoseSample]:
    """Turn annotated events into normalized extreme-pose training samples.

    Each event yields two samples, one per extreme pose. Events pointing at
    frames where no person was found are skipped with a warning; missing
    videos or out-of-range frame indices are errors.
    """
    class_ids = {name: i for i, name in enumerate(class_names)}
    frame_by_index: dict[str, dict[int, PoseFrame]] = {}
    samples: list[LabeledPoseSample] = []
    skipped = 0
    for ann in annotations:
        seq = sequences.get(ann.video_id)
        if seq is None:
            raise DataError(f"annotation references missing video {ann.video_id!r}")
        if ann.video_id not in frame_by_index:
            frame_by_index[ann.video_id] = {f.frame_index: f for f in seq.frames}
        index = frame_by_index[ann.video_id]
        class_id = class_ids[ann.action_class]
        for salient_index, frame_no in ((1, ann.pose1_frame), (2, ann.pose2_frame)):
            frame = index.get(frame_no)
            if frame is None:
                raise DataError(
                    f"video {ann.video_id!r}: frame index {frame_no} out of range"
                )
            if not frame.valid:
                skipped += 1
                logger.warning(
                    "skipping %s event %d pose %d: no person in frame %d",
                    ann.video_id,
                    ann.event_index,
                    salient_index,
                    frame_no,
                )
                continue
            samples.append(
                LabeledPoseSample(
                    pose=normalize_pose(frame, hip_indices),
                    action_class=class_id,
                    salient_index=salient_index,
                )
            )
    if skipped:
        logger.warning("training set: skipped %d extreme poses on invalid frames", skipped)
    return samples
