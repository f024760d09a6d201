"""Video to keypoint-CSV adapter around an off-the-shelf pose engine."""

from .engines import BlazePoseEngine, EngineUnavailableError
from .extract import (
    NUM_LANDMARKS,
    ExtractionReport,
    ExtractorError,
    extract_keypoints,
    keypoint_header,
    validate_keypoint_file,
)

__version__ = "0.1.0"
