"""Threshold-trigger repetition counting over a per-class score series.

A repetition fires when the score first rises to the upper bound (the first
extreme pose) and later falls to the lower bound (the second extreme).
Scores inside the band never change state, so the neutral 0.5 emitted for
irrelevant poses and invalid frames can never trigger.

State transitions (default direction):
    idle  -> armed : score >= upper   (arm frame recorded)
    armed -> idle  : score <= lower   (count += 1, fire frame recorded)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .model import ScoreMatrix


class Phase(enum.Enum):
    IDLE = "idle"
    ARMED = "armed"


@dataclass(frozen=True)
class TriggerConfig:
    """Bounds for the two extreme poses plus an optional smoothing window.

    ``either_order`` also counts cycles that present the second extreme
    first (for videos that start mid-cycle); off by default.
    """

    upper: float = 0.8
    lower: float = 0.2
    smoothing_window: int = 1
    either_order: bool = False

    def __post_init__(self):
        # The band must straddle 0.5 so the sentinel emitted for frames
        # without a person can never arm or fire.
        if not 0.0 < self.lower < 0.5 < self.upper < 1.0:
            raise ConfigError(
                f"require 0 < lower < 0.5 < upper < 1, got lower={self.lower} upper={self.upper}"
            )
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ConfigError(f"smoothing_window must be odd and >= 1, got {self.smoothing_window}")


@dataclass
class TriggerState:
    """Scan state: current phase, repetitions so far, and one
    (arm_frame, fire_frame) pair per completed cycle."""

    phase: Phase = Phase.IDLE
    count: int = 0
    events: list = field(default_factory=list)
    _arm_frame: int | None = None
    _armed_high: bool = True

    def update(self, frame: int, score: float, config: TriggerConfig) -> None:
        high = score >= config.upper
        low = score <= config.lower
        if self.phase is Phase.IDLE:
            if high:
                self.phase, self._arm_frame, self._armed_high = Phase.ARMED, frame, True
            elif low and config.either_order:
                self.phase, self._arm_frame, self._armed_high = Phase.ARMED, frame, False
        else:
            fired = low if self._armed_high else high
            if fired:
                self.count += 1
                self.events.append((self._arm_frame, frame))
                self.phase, self._arm_frame = Phase.IDLE, None


@dataclass
class CountResult:
    video_id: str
    action_class: str
    count: int
    events: list


def smooth_scores(series, window: int) -> np.ndarray:
    """Centered moving average with truncated windows at the edges;
    ``window=1`` is the identity."""
    series = np.asarray(series, dtype=np.float64)
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"window must be odd and >= 1, got {window}")
    t = series.shape[0]
    if window == 1 or t == 0:
        return series.copy()
    if window > t:
        raise ConfigError(f"window {window} longer than series of length {t}")
    half = window // 2
    out = np.empty_like(series)
    for i in range(t):
        lo, hi = max(0, i - half), min(t, i + half + 1)
        out[i] = series[lo:hi].mean()
    return out


def count_repetitions(
    series,
    config: TriggerConfig = TriggerConfig(),
    video_id: str = "",
    action_class: str = "",
) -> CountResult:
    """Single left-to-right scan of one class's score series.

    An unfinished cycle at the end of the video (armed but never fired)
    does not count.
    """
    series = smooth_scores(series, config.smoothing_window)
    if series.size and not np.all(np.isfinite(series)):
        raise NumericError("count_repetitions: non-finite score")
    state = TriggerState()
    for frame, score in enumerate(series):
        state.update(frame, float(score), config)
    return CountResult(video_id, action_class, state.count, state.events)


def reference_count(series, config: TriggerConfig = TriggerConfig()) -> int:
    """Deliberately naive recount used as a differential-testing oracle.

    Symbolizes each frame as first-extreme / second-extreme / neutral, drops
    the neutrals, and greedily counts non-overlapping first...second pairs
    from the left. Must agree with :func:`count_repetitions` on every input.
    """
    series = smooth_scores(series, config.smoothing_window)
    symbols = []
    for score in series:
        if score >= config.upper:
            symbols.append("I")
        elif score <= config.lower:
            symbols.append("II")
    count = 0
    pending = None
    for sym in symbols:
        if pending is None:
            if sym == "I" or config.either_order:
                pending = sym
        elif sym != pending:
            count += 1
            pending = None
    return count


def select_class(scores: ScoreMatrix, config: TriggerConfig = TriggerConfig()) -> int:
    """When no class is supplied at inference, pick the class whose series
    yields the most repetitions (ties go to the lowest class id)."""
    counts = [
        count_repetitions(scores.scores[c], config).count for c in range(scores.scores.shape[0])
    ]
    return int(np.argmax(counts))
