"""Losses, triplet mining, the Adam optimizer, and the training loop.

The combined objective is a per-class binary cross entropy (each sample's
own class is pushed to 1 or 0 depending on which extreme pose it shows, all
other classes to the neutral 0.5) plus a weighted cosine-distance triplet
term that separates the encoder features of the 2C (class, extreme) groups.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import model as mdl
from .autodiff import value_of
from .data import LabeledPoseSample
from .errors import ConfigError, DataError, NumericError, ShapeError

logger = logging.getLogger(__name__)

_PROB_CLAMP = 1e-12

# (anchor, positive, negative) index triples into the current batch.
TripletBatch = list[tuple[int, int, int]]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 1e-3
    triplet_weight: float = 0.01
    margin: float = 0.3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.triplet_weight < 0:
            raise ConfigError("triplet_weight must be >= 0")
        if not 0 < self.margin < 2:
            raise ConfigError("margin must lie in (0, 2)")
        if self.triplet_weight > 0 and self.batch_size < 3:
            raise ConfigError("batch_size must be >= 3 when the triplet loss is enabled")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")


@dataclass
class EpochStats:
    epoch: int
    bce: float
    triplet: float
    total: float


@dataclass
class OptimizerState:
    """Adam moments, keyed like the parameter tree."""

    step: int
    first_moment: dict
    second_moment: dict


# ---------------------------------------------------------------------------
# targets and losses
# ---------------------------------------------------------------------------

def make_targets(sample: LabeledPoseSample, num_classes: int) -> np.ndarray:
    """Per-class targets: the sample's own class is 1 (first extreme) or 0
    (second extreme); every other class sits at the neutral 0.5."""
    if not 0 <= sample.action_class < num_classes:
        raise DataError(
            f"class id {sample.action_class} out of range for {num_classes} classes"
        )
    if sample.salient_index not in (1, 2):
        raise DataError(f"salient_index must be 1 or 2, got {sample.salient_index}")
    targets = np.full(num_classes, 0.5)
    targets[sample.action_class] = 1.0 if sample.salient_index == 1 else 0.0
    return targets


def bce_loss(predictions, targets):
    """Mean binary cross entropy over all prediction entries, with the
    probabilities clamped away from 0 and 1 for numerical safety."""
    target_values = value_of(targets)
    if value_of(predictions).shape != target_values.shape:
        raise ShapeError(
            f"bce_loss: predictions {value_of(predictions).shape} vs targets {target_values.shape}"
        )
    p = ad.clip(predictions, _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    hit = ad.mul(ad.log(p), target_values)
    miss = ad.mul(ad.log(ad.sub(np.ones_like(target_values), p)), 1.0 - target_values)
    return ad.scale(ad.mean(ad.add(hit, miss)), -1.0)


def cosine_distance(u, v):
    """1 - cosine similarity of two vectors (0 identical, 2 opposite)."""
    return ad.sub(np.asarray(1.0), ad.dot(ad.l2_normalize(u), ad.l2_normalize(v)))


def _triplet_single(anchor, positive, negative, margin: float):
    gap = ad.sub(cosine_distance(anchor, positive), cosine_distance(anchor, negative))
    return ad.maximum0(ad.add(gap, np.asarray(margin)))


def _mean_scalars(terms):
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return ad.scale(total, 1.0 / len(terms))


def triplet_loss(anchor, positive, negative, margin: float):
    """Hinge on cosine distance: positives must sit closer to the anchor
    than negatives by at least the margin. 2-D inputs are a batch of
    triples (one per row) and the hinges are averaged."""
    av = value_of(anchor)
    if av.ndim == 1:
        return _triplet_single(anchor, positive, negative, margin)
    rows = [
        _triplet_single(value_of(anchor)[i], value_of(positive)[i], value_of(negative)[i], margin)
        for i in range(av.shape[0])
    ]
    return _mean_scalars(rows)


def mine_triplets(features: np.ndarray, identities) -> TripletBatch:
    """Hardest-positive / hardest-negative mining within a batch.

    For each anchor: the positive is the same-identity sample farthest in
    cosine distance, the negative the different-identity sample closest.
    Ties break toward the lowest batch index; anchors lacking a partner or a
    negative are skipped.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    identities = list(identities)
    if len(identities) != n:
        raise ShapeError(f"mine_triplets: {n} features but {len(identities)} identities")
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms < 1e-12):
        raise NumericError("mine_triplets: zero-norm feature")
    unit = features / norms[:, None]
    distances = 1.0 - unit @ unit.T

    triples: TripletBatch = []
    for i in range(n):
        same = [j for j in range(n) if j != i and identities[j] == identities[i]]
        diff = [j for j in range(n) if identities[j] != identities[i]]
        if not same or not diff:
            continue
        positive = same[int(np.argmax(distances[i, same]))]
        negative = diff[int(np.argmin(distances[i, diff]))]
        triples.append((i, positive, negative))
    return triples


def total_loss(
    samples,
    params: mdl.ModelParams,
    config: TrainConfig,
    triplets: TripletBatch | None = None,
):
    """Combined batch loss. When ``triplets`` is None they are mined from
    the current encoder features; passing an explicit (possibly empty) list
    freezes the selection, which keeps the loss differentiable for
    finite-difference checks."""
    loss, _, _ = batch_losses(samples, params, config, triplets)
    return loss


def batch_losses(
    samples,
    params: mdl.ModelParams,
    config: TrainConfig,
    triplets: TripletBatch | None = None,
):
    """Returns (total, bce, triplet) losses for one batch; the triplet term
    is a plain 0.0 when no valid triple exists or the weight is zero."""
    if not samples:
        raise DataError("batch_losses: empty batch")
    num_classes = params.config.num_classes
    pooled = []
    bce_terms = []
    for sample in samples:
        if not sample.pose.valid:
            raise DataError(f"frame {sample.pose.frame_index}: invalid pose in batch")
        # Always the primitive-by-primitive route: the finite-difference
        # oracle must evaluate exactly what the graph differentiates.
        encoded = mdl.encode(mdl.embed_keypoints(sample.pose, params), params)
        scores = mdl.pose_mapping(encoded, params)
        pooled.append(encoded.pooled)
        bce_terms.append(bce_loss(scores, make_targets(sample, num_classes)))
    bce = _mean_scalars(bce_terms)

    tri = np.asarray(0.0)
    if config.triplet_weight > 0:
        if triplets is None:
            identities = [(s.action_class, s.salient_index) for s in samples]
            features = np.stack([value_of(p) for p in pooled])
            triplets = mine_triplets(features, identities)
        if triplets:
            hinges = [
                _triplet_single(pooled[a], pooled[p], pooled[n], config.margin)
                for a, p, n in triplets
            ]
            tri = _mean_scalars(hinges)

    total = ad.add(bce, ad.scale(tri, config.triplet_weight))
    return total, bce, tri


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def init_optimizer_state(params: mdl.ModelParams) -> OptimizerState:
    zeros = {name: np.zeros_like(value_of(arr)) for name, arr in mdl.named_arrays(params)}
    return OptimizerState(
        step=0,
        first_moment=zeros,
        second_moment={name: np.zeros_like(arr) for name, arr in zeros.items()},
    )


def optimizer_step(
    params: mdl.ModelParams,
    grads: dict,
    state: OptimizerState,
    config: TrainConfig,
) -> tuple[mdl.ModelParams, OptimizerState]:
    """One Adam update with bias correction. Zero gradients leave the
    parameters untouched; non-finite gradients abort the run."""
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for {name}")

    step = state.step + 1
    correction1 = 1.0 - config.beta1 ** step
    correction2 = 1.0 - config.beta2 ** step
    new_m, new_v = {}, {}

    names = iter([name for name, _ in mdl.named_arrays(params)])

    def update(leaf):
        name = next(names)
        grad = grads[name]
        m = config.beta1 * state.first_moment[name] + (1.0 - config.beta1) * grad
        v = config.beta2 * state.second_moment[name] + (1.0 - config.beta2) * grad ** 2
        new_m[name] = m
        new_v[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        return value_of(leaf) - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)

    updated = mdl.map_arrays(update, params)
    return updated, OptimizerState(step=step, first_moment=new_m, second_moment=new_v)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def param_gradients(loss_node, node_params) -> dict:
    """Run backward and collect one gradient per named parameter (zeros for
    parameters the loss never touched)."""
    ad.backward(loss_node)
    return {name: ad.grad_or_zero(node) for name, node in mdl.named_arrays(node_params)}


def train(
    dataset: list[LabeledPoseSample],
    model_config: mdl.ModelConfig,
    train_config: TrainConfig,
    checkpoint_dir=None,
    class_names=None,
) -> tuple[mdl.ModelParams, list[EpochStats]]:
    """Train from scratch on extreme-pose samples.

    Each epoch reshuffles with the seeded generator, so a given
    (seed, data, config) triple reproduces parameters bit for bit. When
    ``checkpoint_dir`` is set, a checkpoint is written after every epoch
    (``epoch_<n>.json``) plus a ``final.json``.
    """
    if not dataset:
        raise DataError("train: empty dataset")
    if class_names is None:
        class_names = [f"class_{i}" for i in range(model_config.num_classes)]

    params = mdl.init_params(model_config, train_config.seed)
    state = init_optimizer_state(params)
    rng = np.random.default_rng(train_config.seed)
    history: list[EpochStats] = []

    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    n = len(dataset)
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n)
        bce_sum = tri_sum = total_sum = 0.0
        for start in range(0, n, train_config.batch_size):
            batch = [dataset[i] for i in order[start : start + train_config.batch_size]]
            node_params = mdl.map_arrays(ad.leaf, params)
            total, bce, tri = batch_losses(batch, node_params, train_config)
            grads = param_gradients(total, node_params)
            params, state = optimizer_step(params, grads, state, train_config)
            weight = len(batch)
            bce_sum += float(value_of(bce)) * weight
            tri_sum += float(value_of(tri)) * weight
            total_sum += float(value_of(total)) * weight
        stats = EpochStats(epoch, bce_sum / n, tri_sum / n, total_sum / n)
        if not np.isfinite(stats.total):
            raise NumericError(f"epoch {epoch}: loss diverged to {stats.total}")
        history.append(stats)
        logger.info(
            "epoch %d: bce=%.6f triplet=%.6f total=%.6f", epoch, stats.bce, stats.triplet, stats.total
        )
        if checkpoint_dir is not None:
            mdl.save_checkpoint(checkpoint_dir / f"epoch_{epoch}.json", params, class_names)

    if checkpoint_dir is not None:
        mdl.save_checkpoint(checkpoint_dir / "final.json", params, class_names)
    return params, history


def write_history_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,bce,triplet,total"]
    for h in history:
        lines.append(f"{h.epoch},{repr(h.bce)},{repr(h.triplet)},{repr(h.total)}")
    return "\n".join(lines) + "\n"
