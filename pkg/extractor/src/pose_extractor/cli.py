"""Command-line interface: ``extract <video> -o <csv>`` and ``validate <csv>``."""

from __future__ import annotations

import argparse
import sys

from .engines import EngineUnavailableError
from .extract import ExtractorError, extract_keypoints, validate_keypoint_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pose-extractor", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    p_extract = commands.add_parser("extract", help="extract keypoints from one video")
    p_extract.add_argument("video", help="video file readable by OpenCV")
    p_extract.add_argument("-o", "--out", required=True, help="output keypoint CSV")

    p_validate = commands.add_parser("validate", help="check a keypoint CSV against the contract")
    p_validate.add_argument("csv", help="keypoint CSV to check")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "extract":
        try:
            report = extract_keypoints(args.video, args.out)
        except EngineUnavailableError as exc:
            print(f"pose-extractor: {exc}", file=sys.stderr)
            return 3
        except ExtractorError as exc:
            print(f"pose-extractor: {exc}", file=sys.stderr)
            return 2
        print(
            f"{report.video_id}: {report.valid_frames}/{report.total_frames} frames "
            f"with a detected person -> {report.output_path}"
        )
        return 0

    problems = validate_keypoint_file(args.csv)
    for problem in problems:
        print(f"pose-extractor: {problem}", file=sys.stderr)
    return 0 if not problems else 2


if __name__ == "__main__":
    sys.exit(main())
