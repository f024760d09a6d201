"""End-to-end gradient verification: reverse-mode gradients of the combined
training loss versus central finite differences, over a spread of small
random network configurations.

Triplet mining is frozen at the base parameters before differencing (the
selection is discrete, so re-mining under perturbation would make the loss
discontinuous). Configurations that land a ReLU or hinge pre-activation near
its kink are resampled: finite differences straddle the kink there and
disagree with any one-sided convention. The kink window must dominate the
difference step times the pre-activation's parameter sensitivity, hence the
1e-4 window paired with a 1e-5 step; a much wider window would reject nearly
every draw at 33 keypoints, where one graph holds thousands of ReLUs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import model as mdl
from . import training
from .autodiff import Tape, value_of
from .data import LabeledPoseSample, PoseFrame
from .errors import GradientCheckError

_KINK_TOLERANCE = 1e-4
_FD_STEP = 1e-5


@dataclass
class CheckResult:
    description: str
    max_rel_error: float


def _random_batch(rng, config: mdl.ModelConfig, size: int = 3):
    """Samples covering two (class, extreme) identities so mining always
    finds anchors, positives and negatives."""
    samples = []
    for i in range(size):
        coords = rng.uniform(-1.0, 1.0, size=(config.num_keypoints, config.keypoint_dim))
        samples.append(
            LabeledPoseSample(
                pose=PoseFrame(frame_index=i, keypoints=coords, valid=True),
                action_class=i % 2,
                salient_index=1 if i % 2 == 0 else 2,
            )
        )
    return samples


def _near_kink(loss_node) -> bool:
    for node in Tape(loss_node).nodes:
        if node.op in ("relu", "clip"):
            pre = node.inputs[0].value
            if node.op == "relu" and np.any(np.abs(pre) < _KINK_TOLERANCE):
                return True
            if node.op == "clip" and np.any(np.abs(pre - node.value) > 0):
                # The clamp engaged: the loss is flat there, skip the config.
                return True
    return False


def check_config(
    config: mdl.ModelConfig,
    seed: int,
    triplet_weight: float,
    rel_step: float = _FD_STEP,
) -> float:
    """Max relative error between reverse-mode and finite-difference
    gradients of the batch loss for one configuration."""
    train_config = training.TrainConfig(
        triplet_weight=triplet_weight, batch_size=3, seed=seed
    )
    rng = np.random.default_rng(seed)

    for attempt in range(50):
        params = mdl.init_params(config, seed + 1000 * attempt)
        batch = _random_batch(rng, config)

        # Mine on the base parameters, then hold the selection fixed for
        # both differentiation routes.
        identities = [(s.action_class, s.salient_index) for s in batch]
        features = np.stack(
            [
                value_of(mdl.encode(mdl.embed_keypoints(s.pose, params), params).pooled)
                for s in batch
            ]
        )
        frozen = training.mine_triplets(features, identities)

        node_params = mdl.map_arrays(ad.leaf, params)
        loss_node, _, _ = training.batch_losses(batch, node_params, train_config, triplets=frozen)
        if _near_kink(loss_node):
            continue

        reverse = training.param_gradients(loss_node, node_params)

        flat_params = {name: arr for name, arr in mdl.named_arrays(params)}

        def loss_fn(_):
            # The oracle perturbs the arrays of `params` in place.
            return float(
                value_of(training.total_loss(batch, params, train_config, triplets=frozen))
            )

        numeric = ad.finite_difference_gradient(loss_fn, flat_params, rel_step=rel_step)

        worst = 0.0
        for name in flat_params:
            denom = np.maximum(np.abs(numeric[name]), 1e-6)
            worst = max(worst, float(np.max(np.abs(reverse[name] - numeric[name]) / denom)))
        return worst

    raise GradientCheckError(f"could not find a kink-free sample for {config} seed {seed}")


def run_gradient_checks(seed: int = 0, num_configs: int = 20) -> list[CheckResult]:
    """Check ``num_configs`` random small configurations; callers compare
    the returned per-config errors against their tolerance (1e-4 in the
    verification command)."""
    rng = np.random.default_rng(seed)
    results = []
    for i in range(num_configs):
        num_layers = int(rng.choice([1, 2]))
        embed_dim = int(rng.choice([8, 16]))
        # The full 33 keypoints cost far more per difference, so they take
        # a fixed minority of the slots.
        num_keypoints = 33 if i % 7 == 3 else 4
        num_heads = int(rng.choice([2, 4]))
        config = mdl.ModelConfig(
            num_keypoints=num_keypoints,
            embed_dim=embed_dim,
            num_layers=num_layers,
            num_heads=num_heads,
            head_dim=2,
            mlp_hidden=4,
            num_classes=2,
            mapping_hidden=2,
            embed_hidden=i % 2 == 0,
        )
        weight = float(rng.choice([0.01, 1.0]))
        config_seed = int(rng.integers(0, 2**31 - 1))
        error = check_config(config, config_seed, weight)
        results.append(
            CheckResult(
                description=(
                    f"layers={num_layers} embed={embed_dim} keypoints={num_keypoints} "
                    f"heads={num_heads} triplet_weight={weight} seed={config_seed}"
                ),
                max_rel_error=error,
            )
        )
    return results
