import numpy as np
import pytest

from posecount import data
from posecount.errors import (
    ConfigError,
    DataError,
    DegeneratePoseError,
    ParseError,
    ValidationError,
)


def keypoint_csv(rows, num_keypoints=33, comment="# video_id: v1"):
    lines = [comment, data.keypoint_header(num_keypoints)] if comment else [data.keypoint_header(num_keypoints)]
    lines.extend(rows)
    return "\n".join(lines) + "\n"


def make_frame(rng=None, num_keypoints=33, frame_index=0):
    rng = rng or np.random.default_rng(0)
    coords = rng.uniform(0.0, 1.0, size=(num_keypoints, 3))
    return data.PoseFrame(frame_index, coords, valid=True)


class TestParseKeypointCsv:
    def test_single_zero_row(self):
        text = keypoint_csv(["0," + ",".join(["0.0"] * 99)])
        seq = data.parse_keypoint_csv(text)
        assert seq.video_id == "v1"
        assert len(seq) == 1
        assert seq.frames[0].valid
        assert np.array_equal(seq.frames[0].keypoints, np.zeros((33, 3)))

    def test_all_empty_coordinates_mark_invalid(self):
        text = keypoint_csv(["0," + "," * 98])
        seq = data.parse_keypoint_csv(text)
        assert not seq.frames[0].valid

    def test_wrong_column_count_names_row(self):
        text = keypoint_csv(["0," + ",".join(["0.0"] * 98)])
        with pytest.raises(ParseError, match="row 3"):
            data.parse_keypoint_csv(text)

    def test_empty_file(self):
        with pytest.raises(ParseError, match="empty"):
            data.parse_keypoint_csv("")

    def test_partially_empty_row_is_malformed(self):
        cells = ["0.0"] * 99
        cells[42] = ""
        with pytest.raises(ParseError, match="row 3"):
            data.parse_keypoint_csv(keypoint_csv(["0," + ",".join(cells)]))

    def test_non_numeric_field(self):
        cells = ["0.0"] * 99
        cells[7] = "abc"
        with pytest.raises(ParseError, match="row 3"):
            data.parse_keypoint_csv(keypoint_csv(["0," + ",".join(cells)]))

    def test_out_of_frame_coordinate_rejected(self):
        cells = ["0.0"] * 99
        cells[0] = "1.6"
        with pytest.raises(ValidationError):
            data.parse_keypoint_csv(keypoint_csv(["0," + ",".join(cells)]))

    def test_slightly_out_of_frame_accepted(self):
        cells = ["0.1"] * 99
        cells[0] = "-0.5"
        cells[3] = "1.5"
        seq = data.parse_keypoint_csv(keypoint_csv(["0," + ",".join(cells)]))
        assert seq.frames[0].valid

    def test_frame_indices_strictly_increasing(self):
        rows = ["0," + ",".join(["0.0"] * 99), "0," + ",".join(["0.1"] * 99)]
        with pytest.raises(ParseError, match="strictly increasing"):
            data.parse_keypoint_csv(keypoint_csv(rows))

    def test_video_id_from_argument_beats_comment(self):
        text = keypoint_csv(["0," + ",".join(["0.0"] * 99)])
        assert data.parse_keypoint_csv(text, video_id="other").video_id == "other"

    def test_missing_video_id(self):
        text = keypoint_csv(["0," + ",".join(["0.0"] * 99)], comment=None)
        with pytest.raises(ParseError, match="video id"):
            data.parse_keypoint_csv(text)

    def test_load_uses_filename_stem(self, tmp_path):
        path = tmp_path / "myvideo.csv"
        path.write_text(keypoint_csv(["0," + ",".join(["0.0"] * 99)], comment=None))
        assert data.load_keypoint_file(path).video_id == "myvideo"

    def test_accepts_raw_bytes(self):
        text = keypoint_csv(["0," + ",".join(["0.25"] * 99)])
        seq = data.parse_keypoint_csv(text.encode("utf-8"))
        assert seq.video_id == "v1"
        assert seq.frames[0].keypoints[0, 0] == 0.25


class TestRoundTrip:
    def test_keypoint_round_trip_bit_identical(self):
        rng = np.random.default_rng(3)
        frames = []
        for i in range(12):
            if i % 5 == 4:
                frames.append(data.PoseFrame(i, np.full((33, 3), np.nan), valid=False))
            else:
                coords = rng.uniform(-0.5, 1.5, size=(33, 3))
                coords[:, 2] = rng.normal(size=33)  # depth is unconstrained
                frames.append(data.PoseFrame(i, coords, valid=True))
        seq = data.PoseSequence("vid-7", frames)

        text = data.write_keypoint_csv(seq)
        parsed = data.parse_keypoint_csv(text)
        assert parsed.video_id == seq.video_id
        assert data.write_keypoint_csv(parsed) == text
        for a, b in zip(seq.frames, parsed.frames):
            assert a.frame_index == b.frame_index
            assert a.valid == b.valid
            if a.valid:
                assert np.array_equal(a.keypoints, b.keypoints)

    def test_annotation_round_trip(self):
        annotations = [
            data.SaliencyAnnotation("v1", "squat", 0, 10, 25),
            data.SaliencyAnnotation("v1", "squat", 1, 30, 44),
            data.SaliencyAnnotation("v2", "pull_up", 0, 3, 9),
        ]
        text = data.write_annotation_csv(annotations)
        assert data.parse_annotation_csv(text) == annotations
        assert data.write_annotation_csv(data.parse_annotation_csv(text)) == text


class TestNormalizePose:
    def test_pure_scaling_when_already_centered(self):
        coords = np.zeros((33, 3))
        coords[0] = (0.0, 2.0, 0.0)  # farthest point, radius 2
        coords[5] = (1.0, 0.0, 0.5)
        coords[23] = (0.3, -0.1, 0.0)
        coords[24] = (-0.3, 0.1, 0.0)  # hip midpoint already at origin
        frame = data.PoseFrame(0, coords, valid=True)
        result = data.normalize_pose(frame)
        assert np.allclose(result.keypoints, coords / 2.0, atol=1e-12)

    def test_degenerate_pose(self):
        frame = data.PoseFrame(0, np.ones((33, 3)), valid=True)
        with pytest.raises(DegeneratePoseError):
            data.normalize_pose(frame)

    def test_idempotent(self):
        frame = make_frame(np.random.default_rng(11))
        once = data.normalize_pose(frame)
        twice = data.normalize_pose(once)
        assert np.allclose(once.keypoints, twice.keypoints, atol=1e-9)

    def test_invariants_on_random_poses(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            result = data.normalize_pose(make_frame(rng))
            hips = (result.keypoints[23] + result.keypoints[24]) / 2
            assert np.abs(hips).max() < 1e-9
            radius = np.sqrt((result.keypoints ** 2).sum(axis=1)).max()
            assert abs(radius - 1.0) < 1e-9

    def test_invalid_frame_rejected(self):
        frame = data.PoseFrame(0, np.full((33, 3), np.nan), valid=False)
        with pytest.raises(ValidationError):
            data.normalize_pose(frame)

    def test_hip_indices_out_of_range(self):
        frame = data.PoseFrame(0, np.random.default_rng(0).uniform(size=(4, 3)), valid=True)
        with pytest.raises(ConfigError):
            data.normalize_pose(frame)


class TestParseAnnotationCsv:
    HEADER = "video_id,action_class,event_index,pose1_frame,pose2_frame"

    def test_direct_mapping(self):
        text = f"{self.HEADER}\nv1,squat,0,10,25\n"
        result = data.parse_annotation_csv(text)
        assert result == [data.SaliencyAnnotation("v1", "squat", 0, 10, 25)]

    def test_ordering_violation(self):
        text = f"{self.HEADER}\nv1,squat,0,25,10\n"
        with pytest.raises(ValidationError, match="precede"):
            data.parse_annotation_csv(text)

    def test_two_events_same_video(self):
        text = f"{self.HEADER}\nv1,squat,0,10,25\nv1,squat,1,30,50\n"
        assert len(data.parse_annotation_csv(text)) == 2

    def test_unknown_class_lists_known(self):
        text = f"{self.HEADER}\nv1,lunge,0,10,25\n"
        with pytest.raises(ValidationError, match="squat"):
            data.parse_annotation_csv(text)

    def test_equal_frames_rejected(self):
        text = f"{self.HEADER}\nv1,squat,0,10,10\n"
        with pytest.raises(ValidationError):
            data.parse_annotation_csv(text)


class TestParseCountCsv:
    def test_basic_record(self):
        records = data.parse_count_csv("video_id,action_class,count\nv1,squat,4\n")
        assert records == [data.GroundTruthCount("v1", "squat", 4)]

    def test_negative_count(self):
        with pytest.raises(ValidationError):
            data.parse_count_csv("video_id,action_class,count\nv1,squat,-1\n")

    def test_empty_file(self):
        assert data.parse_count_csv("") == []
        assert data.parse_count_csv("video_id,action_class,count\n") == []


class TestBuildTrainingSet:
    def make_sequence(self, video_id="v1", length=30, invalid=()):
        rng = np.random.default_rng(17)
        frames = []
        for i in range(length):
            if i in invalid:
                frames.append(data.PoseFrame(i, np.full((33, 3), np.nan), valid=False))
            else:
                frames.append(make_frame(rng, frame_index=i))
        return data.PoseSequence(video_id, frames)

    def test_one_annotation_two_samples(self):
        ann = [data.SaliencyAnnotation("v1", "squat", 0, 10, 25)]
        samples = data.build_training_set(ann, {"v1": self.make_sequence()})
        assert [s.salient_index for s in samples] == [1, 2]
        squat_id = data.DEFAULT_CLASSES.index("squat")
        assert all(s.action_class == squat_id for s in samples)
        for s in samples:
            radius = np.sqrt((s.pose.keypoints ** 2).sum(axis=1)).max()
            assert abs(radius - 1.0) < 1e-9

    def test_invalid_frame_skipped_with_warning(self, caplog):
        ann = [data.SaliencyAnnotation("v1", "squat", 0, 10, 25)]
        sequences = {"v1": self.make_sequence(invalid={25})}
        with caplog.at_level("WARNING"):
            samples = data.build_training_set(ann, sequences)
        assert len(samples) == 1
        assert samples[0].salient_index == 1
        assert any("no person" in r.message for r in caplog.records)

    def test_missing_video(self):
        ann = [data.SaliencyAnnotation("nope", "squat", 0, 10, 25)]
        with pytest.raises(DataError, match="nope"):
            data.build_training_set(ann, {"v1": self.make_sequence()})

    def test_frame_out_of_range(self):
        ann = [data.SaliencyAnnotation("v1", "squat", 0, 10, 99)]
        with pytest.raises(DataError, match="99"):
            data.build_training_set(ann, {"v1": self.make_sequence()})

    def test_sample_count_bound(self):
        # Equality with the 2-per-event bound when nothing is skipped; the
        # full-scale training set (2917 events) must hit 5834 exactly.
        sequence = self.make_sequence(length=40)
        annotations = [
            data.SaliencyAnnotation("v1", "squat", e, 2 * (e % 10), 2 * (e % 10) + 1)
            for e in range(2917)
        ]
        samples = data.build_training_set(annotations, {"v1": sequence})
        assert len(samples) == 2 * 2917 == 5834

    def test_skips_never_exceed_bound(self, caplog):
        sequence = self.make_sequence(length=8, invalid={3})
        annotations = [
            data.SaliencyAnnotation("v1", "squat", 0, 2, 3),
            data.SaliencyAnnotation("v1", "squat", 1, 4, 6),
        ]
        with caplog.at_level("WARNING"):
            samples = data.build_training_set(annotations, {"v1": sequence})
        assert len(samples) <= 2 * len(annotations)
        assert len(samples) == 3
