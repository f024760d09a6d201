"""
The threshold-trigger counter
=============================

A repetition is one pass from the high extreme (score at or above the upper
bound) to the low extreme (at or below the lower bound). Scores inside the
band never change state, so noise around 0.5 cannot trigger, and an
unfinished cycle at the end does not count.
"""

import numpy as np

from posecount import TriggerConfig, count_repetitions, reference_count, smooth_scores

series = [0.5, 0.9, 0.5, 0.1, 0.5, 0.9, 0.1, 0.6, 0.95]
config = TriggerConfig(upper=0.8, lower=0.2)

result = count_repetitions(series, config, video_id="demo", action_class="squat")
print(f"series: {series}")
print(f"count {result.count}, events (arm, fire) = {result.events}")
print(f"naive recount agrees: {reference_count(series, config)}")

rng = np.random.default_rng(0)
noisy = np.clip(0.5 + 0.45 * np.sin(np.arange(90) / 4.5) + rng.normal(0, 0.35, 90), 0, 1)
for window in (1, 5):
    smoothed_count = count_repetitions(noisy, TriggerConfig(smoothing_window=window)).count
    print(f"very noisy sine (3 true cycles), smoothing window {window}: {smoothed_count} repetitions")
print("(smoothing suppresses spurious crossings of the bounds)")
print("smoothed head of the series:", np.round(smooth_scores(noisy, 5)[:6], 3))

# A video that opens mid-cycle shows the low extreme first; the default
# direction ignores it, the either_order flag counts the reversed pair.
opening_low = [0.1, 0.5, 0.9, 0.5]
print("\nmid-cycle start:", count_repetitions(opening_low, TriggerConfig()).count,
      "by default vs", count_repetitions(opening_low, TriggerConfig(either_order=True)).count,
      "with either_order")
