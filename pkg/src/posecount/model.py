"""The pose classification network: keypoint embedding, a stack of pre-norm
self-attention encoder layers, and a mapping head producing per-class
sigmoid scores.

Forward operations are written against the primitives in
:mod:`posecount.autodiff`, so the same code serves fast numpy inference and
gradient-tracked training, depending on whether parameter leaves are arrays
or graph nodes.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import logging
import math
import weakref
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Node, value_of
from .data import (
    DEFAULT_CLASSES,
    LEFT_HIP,
    RIGHT_HIP,
    PoseFrame,
    PoseSequence,
    normalize_pose,
)
from .errors import ConfigError, DataError, DegeneratePoseError, NumericError, ValidationError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "posecount-checkpoint"
CHECKPOINT_VERSION = 1

# Score assigned to frames without a detected person: dead center of the
# neutral band, so it can never cross a trigger bound.
INVALID_FRAME_SCORE = 0.5


@dataclass(frozen=True)
class ModelConfig:
    """Network dimensions. ``head_dim`` and ``mlp_hidden`` default to
    ``embed_dim // num_heads`` and ``2 * embed_dim``."""

    num_keypoints: int = 33
    keypoint_dim: int = 3
    embed_dim: int = 64
    num_layers: int = 6
    num_heads: int = 4
    head_dim: int | None = None
    mlp_hidden: int | None = None
    num_classes: int = 8
    mapping_hidden: int = 128
    embed_hidden: bool = True

    def __post_init__(self):
        if self.head_dim is None:
            object.__setattr__(self, "head_dim", self.embed_dim // max(self.num_heads, 1))
        if self.mlp_hidden is None:
            object.__setattr__(self, "mlp_hidden", 2 * self.embed_dim)
        dims = (
            self.num_keypoints,
            self.keypoint_dim,
            self.embed_dim,
            self.num_heads,
            self.head_dim,
            self.mlp_hidden,
            self.num_classes,
            self.mapping_hidden,
        )
        if any(d < 1 for d in dims):
            raise ConfigError(f"all dimensions must be >= 1, got {self}")
        if self.num_layers < 0:
            raise ConfigError("num_layers must be >= 0")
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )


@dataclass
class EmbeddingParams:
    """Shared keypoint embedding; ``w2``/``b2`` are None when collapsed to a
    single affine layer."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray | None = None
    b2: np.ndarray | None = None


@dataclass
class AttentionParams:
    query: list  # one (embed_dim, head_dim) matrix per head
    key: list
    value: list
    out_w: np.ndarray
    out_b: np.ndarray


@dataclass
class EncoderLayerParams:
    ln1_scale: np.ndarray
    ln1_shift: np.ndarray
    attn: AttentionParams
    ln2_scale: np.ndarray
    ln2_shift: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray


@dataclass
class MappingParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


# eq=False keeps instances hashable by identity for the inference cache.
@dataclass(eq=False)
class ModelParams:
    config: ModelConfig
    embedding: EmbeddingParams
    layers: list
    mapping: MappingParams


@dataclass
class EncoderOutput:
    """Final encoder features: the (K, embed_dim) matrix and its row-major
    flattening, which the mapping head and the metric loss consume."""

    features: object
    pooled: object


@dataclass
class ScoreMatrix:
    """Per-class, per-frame sigmoid scores for one video: shape (C, T)."""

    video_id: str
    scores: np.ndarray


# ---------------------------------------------------------------------------
# parameter tree utilities
# ---------------------------------------------------------------------------

def _is_leaf(obj) -> bool:
    return isinstance(obj, (np.ndarray, Node))


def named_arrays(obj, prefix: str = "params"):
    """Yield (name, leaf) for every tensor in a parameter tree, in a fixed
    deterministic order."""
    if _is_leaf(obj):
        yield prefix, obj
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_arrays(item, f"{prefix}.{i}")
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, ModelConfig):
        for f in dataclasses.fields(obj):
            yield from named_arrays(getattr(obj, f.name), f"{prefix}.{f.name}")
    # config, None and other scalars are not parameters


def map_arrays(fn, obj):
    """Rebuild a parameter tree applying ``fn`` to every tensor leaf."""
    if _is_leaf(obj):
        return fn(obj)
    if isinstance(obj, list):
        return [map_arrays(fn, item) for item in obj]
    if isinstance(obj, tuple):
        return tuple(map_arrays(fn, item) for item in obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, ModelConfig):
        kwargs = {f.name: map_arrays(fn, getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        return type(obj)(**kwargs)
    return obj


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Uniform weights scaled by 1/sqrt(fan_in), zero biases, identity
    layer norms. Bit-reproducible for a given (config, seed)."""
    rng = np.random.default_rng(seed)

    def weight(fan_in: int, *shape: int) -> np.ndarray:
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    d_in, d_model = config.keypoint_dim, config.embed_dim
    if config.embed_hidden:
        embedding = EmbeddingParams(
            w1=weight(d_in, d_in, d_model),
            b1=np.zeros(d_model),
            w2=weight(d_model, d_model, d_model),
            b2=np.zeros(d_model),
        )
    else:
        embedding = EmbeddingParams(w1=weight(d_in, d_in, d_model), b1=np.zeros(d_model))

    layers = []
    for _ in range(config.num_layers):
        attn = AttentionParams(
            query=[weight(d_model, d_model, config.head_dim) for _ in range(config.num_heads)],
            key=[weight(d_model, d_model, config.head_dim) for _ in range(config.num_heads)],
            value=[weight(d_model, d_model, config.head_dim) for _ in range(config.num_heads)],
            out_w=weight(
                config.num_heads * config.head_dim,
                config.num_heads * config.head_dim,
                d_model,
            ),
            out_b=np.zeros(d_model),
        )
        layers.append(
            EncoderLayerParams(
                ln1_scale=np.ones(d_model),
                ln1_shift=np.zeros(d_model),
                attn=attn,
                ln2_scale=np.ones(d_model),
                ln2_shift=np.zeros(d_model),
                mlp_w1=weight(d_model, d_model, config.mlp_hidden),
                mlp_b1=np.zeros(config.mlp_hidden),
                mlp_w2=weight(config.mlp_hidden, config.mlp_hidden, d_model),
                mlp_b2=np.zeros(d_model),
            )
        )

    pooled_dim = config.num_keypoints * d_model
    mapping = MappingParams(
        w1=weight(pooled_dim, pooled_dim, config.mapping_hidden),
        b1=np.zeros(config.mapping_hidden),
        w2=weight(config.mapping_hidden, config.mapping_hidden, config.num_classes),
        b2=np.zeros(config.num_classes),
    )
    return ModelParams(config=config, embedding=embedding, layers=layers, mapping=mapping)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def embed_keypoints(pose, params: ModelParams):
    """Apply the shared embedding to every keypoint: (K, D) -> (K, embed_dim)."""
    if isinstance(pose, PoseFrame):
        coords = pose.keypoints
    else:
        coords = pose
    if not isinstance(coords, Node) and not np.all(np.isfinite(value_of(coords))):
        raise NumericError("embed_keypoints: non-finite input")
    e = params.embedding
    z = ad.add(ad.matmul(coords, e.w1), e.b1)
    if e.w2 is not None:
        z = ad.add(ad.matmul(ad.relu(z), e.w2), e.b2)
    return z


def encoder_layer(z, layer: EncoderLayerParams, attn_sink: list | None = None):
    """One pre-norm encoder layer: multi-head self-attention and an MLP,
    each applied to the normalized input and added back residually.

    ``attn_sink``, when given, collects each head's attention matrix.
    """
    normed = ad.layernorm(z, layer.ln1_scale, layer.ln1_shift)
    heads = []
    for wq, wk, wv in zip(layer.attn.query, layer.attn.key, layer.attn.value):
        q = ad.matmul(normed, wq)
        k = ad.matmul(normed, wk)
        v = ad.matmul(normed, wv)
        head_dim = value_of(wq).shape[1]
        weights = ad.softmax(ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(head_dim)))
        if attn_sink is not None:
            attn_sink.append(value_of(weights))
        heads.append(ad.matmul(weights, v))
    mixed = ad.concat_cols(heads)
    attended = ad.add(ad.add(ad.matmul(mixed, layer.attn.out_w), layer.attn.out_b), z)

    normed2 = ad.layernorm(attended, layer.ln2_scale, layer.ln2_shift)
    hidden = ad.relu(ad.add(ad.matmul(normed2, layer.mlp_w1), layer.mlp_b1))
    mlp_out = ad.add(ad.matmul(hidden, layer.mlp_w2), layer.mlp_b2)
    return ad.add(mlp_out, attended)


def encode(z0, params: ModelParams, attn_sink: list | None = None) -> EncoderOutput:
    """Run the full encoder stack; zero layers is the identity."""
    z = z0
    for layer in params.layers:
        z = encoder_layer(z, layer, attn_sink)
    return EncoderOutput(features=z, pooled=ad.flatten(z))


def pose_mapping(encoded: EncoderOutput, params: ModelParams):
    """Map flattened encoder features to per-class scores in (0, 1)."""
    m = params.mapping
    hidden = ad.relu(ad.add(ad.matmul(encoded.pooled, m.w1), m.b1))
    return ad.sigmoid(ad.add(ad.matmul(hidden, m.w2), m.b2))


# --- vectorized inference kernel -------------------------------------------
#
# The primitive-by-primitive path above is what training differentiates; for
# plain-array parameters the same arithmetic runs much faster with the heads
# batched into 3-D matmuls and the per-head projections fused into one
# matrix (cached per parameter object; parameters are immutable during
# inference). Both paths share the value helpers in the autodiff module, and
# a test pins their outputs together.

_inference_cache: "weakref.WeakKeyDictionary[ModelParams, dict]" = weakref.WeakKeyDictionary()

_LN_EPS = 1e-5


def _prepared(params: ModelParams) -> dict:
    """Derived inference tensors, cached per (immutable) params object.

    Inference runs in single precision (training and gradient checks stay in
    double); the per-head projections are fused into one matrix per layer
    and the mapping matrix is stored transposed for the contiguous
    matrix-vector product.
    """
    prep = _inference_cache.get(params)
    if prep is not None:
        return prep
    f32 = lambda a: np.asarray(a, dtype=np.float32)
    d = params.config.embed_dim
    e = params.embedding
    layers = []
    for layer in params.layers:
        attn = layer.attn
        scale = 1.0 / math.sqrt(attn.query[0].shape[1])
        # Pre-scaling the query projection folds the 1/sqrt(d_q) of the
        # attention logits into the weights.
        stacked = np.hstack([w * scale for w in attn.query] + attn.key + attn.value)
        # Rows leaving the layer norm are elementwise within max|gamma| +
        # max|beta| of zero mean/unit variance, so |q . k| is bounded by the
        # squared row norm bound times the largest projection pair norm.
        # Logits certified far from the exp overflow point need no
        # max-shift in the softmax.
        row_bound = math.sqrt(d) * (
            float(np.abs(layer.ln1_scale).max()) + float(np.abs(layer.ln1_shift).max())
        )
        proj_bound = max(
            float(np.linalg.svd(wq * scale, compute_uv=False)[0])
            * float(np.linalg.svd(wk, compute_uv=False)[0])
            for wq, wk in zip(attn.query, attn.key)
        )
        # The layer norm's elementwise affine commutes into the matmul that
        # consumes it: (xhat*g + b) @ W == xhat @ (g[:,None]*W) + b @ W, so
        # the kernel only ever normalizes and the affine costs nothing.
        layers.append(
            {
                "num_heads": len(attn.query),
                "head_dim": attn.query[0].shape[1],
                "shift_softmax": row_bound * row_bound * proj_bound >= 600.0,
                "qkv": f32(layer.ln1_scale[:, None] * stacked),
                "qkv_bias": _f32_or_none(layer.ln1_shift @ stacked),
                "out_w": f32(attn.out_w),
                "out_b": _f32_or_none(attn.out_b),
                "mlp_w1": f32(layer.ln2_scale[:, None] * layer.mlp_w1),
                "mlp_b1": _f32_or_none(layer.mlp_b1 + layer.ln2_shift @ layer.mlp_w1),
                "mlp_w2": f32(layer.mlp_w2),
                "mlp_b2": _f32_or_none(layer.mlp_b2),
            }
        )
    prep = {
        "mean_weight": np.full(d, 1.0 / d, dtype=np.float32),
        "embed_w1": f32(e.w1),
        "embed_b1": _f32_or_none(e.b1),
        "embed_w2": None if e.w2 is None else f32(e.w2),
        "embed_b2": None if e.w2 is None else _f32_or_none(e.b2),
        "layers": layers,
        "mapping_w1_t": np.ascontiguousarray(params.mapping.w1.T, dtype=np.float32),
        "mapping_b1": _f32_or_none(params.mapping.b1),
        "mapping_w2": f32(params.mapping.w2),
        "mapping_b2": f32(params.mapping.b2),
    }
    _inference_cache[params] = prep
    return prep


def _f32_or_none(bias):
    """Bias vectors that are identically zero are skipped in the kernel."""
    if bias is None or not np.any(bias):
        return None
    return np.asarray(bias, dtype=np.float32)


def _fast_layernorm(x, mean_weight):
    # Row means as matrix-vector products: much cheaper than axis
    # reductions at this size. The learned affine is folded into the matmul
    # that consumes the normalized rows, so only the normalization remains.
    centered = x - (x @ mean_weight)[:, None]
    var = (centered * centered) @ mean_weight
    var += _LN_EPS
    np.sqrt(var, out=var)
    centered /= var[:, None]
    return centered


def _fast_encoder_layer(z, prep, mean_weight, attn_sink):
    num_heads = prep["num_heads"]
    head_dim = prep["head_dim"]
    tokens = z.shape[0]
    split = num_heads * head_dim

    qkv_flat = _fast_layernorm(z, mean_weight) @ prep["qkv"]
    if prep["qkv_bias"] is not None:
        qkv_flat += prep["qkv_bias"]
    qkv = np.ascontiguousarray(
        qkv_flat.reshape(tokens, 3, num_heads, head_dim).transpose(1, 2, 0, 3)
    )
    q, k, v = qkv[0], qkv[1], qkv[2]
    # The softmax itself runs in double so every attention row is normalized
    # to machine precision; the rest of the kernel is single precision.
    logits = np.matmul(q, k.transpose(0, 2, 1)).astype(np.float64)
    if prep["shift_softmax"]:
        weights = ad.softmax_value(logits)
    else:
        weights = np.exp(logits, out=logits)
        weights /= weights.sum(axis=-1, keepdims=True)
    if attn_sink is not None:
        attn_sink.extend(weights[h] for h in range(num_heads))
    mixed = np.matmul(weights.astype(np.float32), v)
    mixed = mixed.transpose(1, 0, 2).reshape(tokens, split)
    attended = mixed @ prep["out_w"]
    if prep["out_b"] is not None:
        attended += prep["out_b"]
    attended += z

    hidden = _fast_layernorm(attended, mean_weight) @ prep["mlp_w1"]
    if prep["mlp_b1"] is not None:
        hidden += prep["mlp_b1"]
    np.maximum(hidden, 0.0, out=hidden)
    out = hidden @ prep["mlp_w2"]
    if prep["mlp_b2"] is not None:
        out += prep["mlp_b2"]
    out += attended
    return out


def _scalar_sigmoid(logits: np.ndarray) -> np.ndarray:
    # A handful of classes: a scalar loop beats vectorized masking.
    values = logits.tolist()
    out = np.empty(len(values))
    for i, value in enumerate(values):
        if value >= 0:
            out[i] = 1.0 / (1.0 + math.exp(-value))
        else:
            t = math.exp(value)
            out[i] = t / (1.0 + t)
    return out


def _fast_forward(coords: np.ndarray, params: ModelParams, attn_sink: list | None):
    prep = _prepared(params)
    mean_weight = prep["mean_weight"]
    z = coords.astype(np.float32) @ prep["embed_w1"]
    if prep["embed_b1"] is not None:
        z += prep["embed_b1"]
    if prep["embed_w2"] is not None:
        np.maximum(z, 0.0, out=z)
        z = z @ prep["embed_w2"]
        if prep["embed_b2"] is not None:
            z += prep["embed_b2"]
    for layer_prep in prep["layers"]:
        z = _fast_encoder_layer(z, layer_prep, mean_weight, attn_sink)
    pooled = z.reshape(-1)
    hidden = prep["mapping_w1_t"] @ pooled
    if prep["mapping_b1"] is not None:
        hidden += prep["mapping_b1"]
    np.maximum(hidden, 0.0, out=hidden)
    logits = (hidden @ prep["mapping_w2"] + prep["mapping_b2"]).astype(np.float64)
    scores = _scalar_sigmoid(logits)
    return EncoderOutput(features=z.astype(np.float64), pooled=pooled.astype(np.float64)), scores


def forward_frame(pose, params: ModelParams, attn_sink: list | None = None):
    """Embed, encode and score one frame; returns (EncoderOutput, scores)."""
    if isinstance(pose, PoseFrame) and not pose.valid:
        raise ValidationError(f"frame {pose.frame_index}: cannot score an invalid frame")
    coords = pose.keypoints if isinstance(pose, PoseFrame) else pose
    if isinstance(coords, np.ndarray) and isinstance(params.embedding.w1, np.ndarray):
        # One reduction instead of an elementwise isfinite: any NaN or
        # infinity poisons the sum.
        if not math.isfinite(coords.sum()):
            raise NumericError("forward_frame: non-finite input")
        return _fast_forward(coords, params, attn_sink)
    z0 = embed_keypoints(pose, params)
    encoded = encode(z0, params, attn_sink)
    return encoded, pose_mapping(encoded, params)


def score_video(
    sequence: PoseSequence,
    params: ModelParams,
    hip_indices: tuple[int, int] = (LEFT_HIP, RIGHT_HIP),
) -> ScoreMatrix:
    """Score every frame independently into a (C, T) matrix.

    Frames are normalized first (a no-op when already normalized). Frames
    without a person, and degenerate ones that cannot be normalized, get the
    neutral sentinel in every class.
    """
    num_classes = params.config.num_classes
    t = len(sequence.frames)
    scores = np.full((num_classes, t), INVALID_FRAME_SCORE)
    any_valid = False
    for col, frame in enumerate(sequence.frames):
        if not frame.valid:
            continue
        try:
            normalized = normalize_pose(frame, hip_indices)
        except DegeneratePoseError:
            logger.warning(
                "video %s frame %d: degenerate pose, scoring as neutral",
                sequence.video_id,
                frame.frame_index,
            )
            continue
        any_valid = True
        _, frame_scores = forward_frame(normalized, params)
        scores[:, col] = frame_scores
    if not any_valid:
        raise DataError(f"video {sequence.video_id!r}: no valid frames to score")
    return ScoreMatrix(sequence.video_id, scores)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "dtype": "<f8",
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _decode_array(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    arr = np.frombuffer(raw, dtype=entry["dtype"]).astype(np.float64)
    return arr.reshape(entry["shape"])


def save_checkpoint(path, params: ModelParams, class_names=DEFAULT_CLASSES) -> None:
    """Write a self-describing JSON checkpoint; loading restores the exact
    parameter bytes."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(params.config),
        "classes": list(class_names),
        "params": {name: _encode_array(value_of(arr)) for name, arr in named_arrays(params)},
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, list[str]]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    config = ModelConfig(**payload["config"])
    skeleton = init_params(config, seed=0)
    stored = payload["params"]
    expected = [name for name, _ in named_arrays(skeleton)]
    missing = [n for n in expected if n not in stored]
    extra = [n for n in stored if n not in expected]
    if missing or extra:
        raise DataError(f"{path}: parameter names mismatch (missing {missing}, extra {extra})")

    names = iter(expected)

    def restore(leaf):
        name = next(names)
        arr = _decode_array(stored[name])
        if arr.shape != leaf.shape:
            raise DataError(f"{path}: {name} has shape {arr.shape}, expected {leaf.shape}")
        return arr

    params = map_arrays(restore, skeleton)
    return params, list(payload["classes"])
