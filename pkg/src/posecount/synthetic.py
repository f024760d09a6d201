"""Synthetic pose data: template extreme poses, noisy training samples, and
interpolated cycle videos with known repetition counts.

Coordinates mimic what a pose extractor emits: x, y in roughly [0, 1] with a
small relative depth, so files written from these sequences parse under the
standard ingestion path.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import (
    GroundTruthCount,
    LabeledPoseSample,
    PoseFrame,
    PoseSequence,
    SaliencyAnnotation,
    normalize_pose,
    write_annotation_csv,
    write_count_csv,
    write_keypoint_csv,
)


def make_templates(num_classes: int, rng, num_keypoints: int = 33) -> list:
    """Two distinct template poses per class, as (pose1, pose2) arrays."""
    templates = []
    for _ in range(num_classes):
        pair = []
        for _ in range(2):
            coords = np.empty((num_keypoints, 3))
            coords[:, 0] = rng.uniform(0.1, 0.9, num_keypoints)
            coords[:, 1] = rng.uniform(0.1, 0.9, num_keypoints)
            coords[:, 2] = rng.uniform(-0.2, 0.2, num_keypoints)
            pair.append(coords)
        templates.append(tuple(pair))
    return templates


def make_training_samples(
    templates, per_pose: int, noise: float, rng
) -> list[LabeledPoseSample]:
    """Noisy copies of each template, normalized, ``per_pose`` per extreme."""
    samples = []
    for class_id, (pose1, pose2) in enumerate(templates):
        for salient_index, template in ((1, pose1), (2, pose2)):
            for i in range(per_pose):
                coords = template + rng.normal(0.0, noise, size=template.shape)
                frame = PoseFrame(frame_index=i, keypoints=coords, valid=True)
                samples.append(
                    LabeledPoseSample(
                        pose=normalize_pose(frame),
                        action_class=class_id,
                        salient_index=salient_index,
                    )
                )
    return samples


def make_cycle_video(
    video_id: str,
    pose1: np.ndarray,
    pose2: np.ndarray,
    cycles: int,
    neutral_frames: int = 8,
) -> PoseSequence:
    """A video of ``cycles`` repetitions: extreme poses joined by linearly
    interpolated transition frames, ending on the second extreme."""
    frames = []

    def emit(coords):
        frames.append(PoseFrame(frame_index=len(frames), keypoints=coords.copy(), valid=True))

    def transition(a, b):
        for step in range(1, neutral_frames + 1):
            t = step / (neutral_frames + 1)
            emit((1.0 - t) * a + t * b)

    for cycle in range(cycles):
        if cycle > 0:
            transition(pose2, pose1)
        emit(pose1)
        transition(pose1, pose2)
        emit(pose2)
    return PoseSequence(video_id, frames)


def make_evaluation_videos(
    templates,
    class_names,
    num_videos: int,
    rng,
    min_cycles: int = 3,
    max_cycles: int = 10,
    neutral_frames: int = 8,
):
    """Round-robin test videos over the classes with random cycle counts;
    returns (sequences by id, ground-truth records)."""
    sequences = {}
    truths = []
    for i in range(num_videos):
        class_id = i % len(templates)
        cycles = int(rng.integers(min_cycles, max_cycles + 1))
        video_id = f"synthetic_{i:03d}"
        pose1, pose2 = templates[class_id]
        sequences[video_id] = make_cycle_video(video_id, pose1, pose2, cycles, neutral_frames)
        truths.append(GroundTruthCount(video_id, class_names[class_id], cycles))
    return sequences, truths


def write_training_fixture(
    directory,
    class_names,
    rng,
    per_pose: int = 10,
    noise: float = 0.02,
    num_keypoints: int = 33,
) -> dict:
    """Write a complete on-disk training fixture: one keypoint CSV per class
    (extreme poses alternating frame by frame) plus the annotation file.

    Returns the templates keyed by class name for building matching test
    videos.
    """
    directory = Path(directory)
    keypoint_dir = directory / "keypoints"
    keypoint_dir.mkdir(parents=True, exist_ok=True)
    templates = make_templates(len(class_names), rng, num_keypoints)

    annotations = []
    for class_id, name in enumerate(class_names):
        pose1, pose2 = templates[class_id]
        frames = []
        for event in range(per_pose):
            for template in (pose1, pose2):
                coords = template + rng.normal(0.0, noise, size=template.shape)
                frames.append(
                    PoseFrame(frame_index=len(frames), keypoints=coords, valid=True)
                )
            annotations.append(
                SaliencyAnnotation(
                    video_id=f"train_{name}",
                    action_class=name,
                    event_index=event,
                    pose1_frame=2 * event,
                    pose2_frame=2 * event + 1,
                )
            )
        sequence = PoseSequence(f"train_{name}", frames)
        (keypoint_dir / f"train_{name}.csv").write_text(
            write_keypoint_csv(sequence), encoding="utf-8"
        )
    (directory / "annotations.csv").write_text(
        write_annotation_csv(annotations), encoding="utf-8"
    )
    return {name: templates[i] for i, name in enumerate(class_names)}


def write_evaluation_fixture(directory, templates_by_name, class_names, rng, num_videos: int = 6):
    """Write test videos and their ground-truth counts; returns the counts."""
    directory = Path(directory)
    video_dir = directory / "videos"
    video_dir.mkdir(parents=True, exist_ok=True)
    templates = [templates_by_name[name] for name in class_names]
    sequences, truths = make_evaluation_videos(templates, class_names, num_videos, rng)
    for video_id, sequence in sequences.items():
        (video_dir / f"{video_id}.csv").write_text(write_keypoint_csv(sequence), encoding="utf-8")
    (directory / "counts.csv").write_text(write_count_csv(truths), encoding="utf-8")
    return truths
