"""The two-stage point network: tree-guided feature learning followed by
hierarchical aggregation into a classification or segmentation head.

Feature learning runs three levels.  Each level pushes every point
through a dense shared MLP, max-pools the results over that level's
tree regions, derives a per-region recalibration gate from the pooled
descriptor (local cues), computes attention responses across all
regions of the level (global cues), and hands each point the
concatenation of its recalibrated feature and its region's broadcast
context vector.  Switching a cue off falls back to the plain building
block: no gate, and the raw pooled descriptor in place of the attention
response.

Aggregation then pools bottom-up along the tree.  Classification
tapers point rows down to a global signature followed by fully
connected layers; segmentation mirrors the encoder with a broadcast
decoder joined by same-scale skip connections, ending in per-point
logits.  Turning hierarchical aggregation off replaces the rounds with
a single MLP plus one global max.

Parameters live in a flat dict keyed by stable path strings such as
``learn.level1.mlp.0.w``; the shape plan below is the single source of
truth for which keys exist, and the forward pass touches exactly those.

All forwards accept several clouds stacked row-wise (each cloud's
points contiguous, in tree order); pooling and attention never cross
cloud boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArgumentError, ConfigError, DataError, SizeError
from .kdtree import KdTree, build
from .layers import DenseMlpBlock, NonLocalBlock, dense_mlp_forward, non_local
from .pointcloud import PointCloud

CLASSIFY_REGION_SIZES = (32, 64, 128)
SEGMENT_REGION_SIZES = (32, 128, 512)
LEVEL_MLP_WIDTHS = ((64, 64, 128, 128), (64, 64, 256, 256), (64, 64, 512, 512))
THETA_WIDTHS = (64, 128, 256)
H_WIDTHS = (128, 256, 512)
CLASSIFY_AGG_WIDTHS = (1024, 512, 256)
SEGMENT_AGG_WIDTHS = (1024, 512, 256, 256, 512, 1024)
FC_WIDTHS = (256, 256)
DEFAULT_DROPOUT = 0.5

LEVELS = 3


def _is_pow2(v: int) -> bool:
    return v >= 1 and (v & (v - 1)) == 0


def _scale_widths(widths, scale):
    return tuple(max(1, int(round(w * scale))) for w in widths)


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture description: tree depth, per-level receptive fields and
    MLP widths, attention embedding widths, aggregation widths, head
    selection, and the four structural switches."""

    task: str
    depth: int
    class_count: int
    in_features: int = 3
    level_region_sizes: tuple = CLASSIFY_REGION_SIZES
    level_mlp_widths: tuple = LEVEL_MLP_WIDTHS
    theta_widths: tuple = THETA_WIDTHS
    h_widths: tuple = H_WIDTHS
    agg_widths: tuple = CLASSIFY_AGG_WIDTHS
    fc_widths: tuple = FC_WIDTHS
    dropout: float = DEFAULT_DROPOUT
    local_cues: bool = True
    global_cues: bool = True
    dense_connections: bool = True
    hierarchical_aggregation: bool = True

    def __post_init__(self):
        if self.task not in ("classify", "segment"):
            raise ArgumentError(f"task must be 'classify' or 'segment', got {self.task!r}")
        if self.depth < 0:
            raise ArgumentError(f"depth must be >= 0, got {self.depth}")
        if self.class_count < 1:
            raise ArgumentError(f"class_count must be >= 1, got {self.class_count}")
        if self.in_features < 3:
            raise ArgumentError(f"in_features must be >= 3, got {self.in_features}")
        rs = self.level_region_sizes
        if len(rs) != LEVELS:
            raise ArgumentError(f"need {LEVELS} region sizes, got {rs}")
        for size in rs:
            if not _is_pow2(size):
                raise ArgumentError(f"region size {size} is not a power of two")
            if size > (1 << self.depth):
                raise ArgumentError(
                    f"region size {size} exceeds cloud size {1 << self.depth}"
                )
        if list(rs) != sorted(rs):
            raise ArgumentError(f"region sizes must be nondecreasing, got {rs}")
        if len(self.level_mlp_widths) != LEVELS:
            raise ArgumentError(f"need {LEVELS} level width lists")
        for widths in (*self.level_mlp_widths, self.theta_widths, self.h_widths,
                       self.agg_widths, self.fc_widths):
            if any(w < 1 for w in widths):
                raise ArgumentError(f"widths must be positive, got {widths}")
        want_agg = LEVELS if self.task == "classify" else 2 * LEVELS
        if len(self.agg_widths) != want_agg:
            raise ArgumentError(
                f"{self.task} expects {want_agg} aggregation widths, got {len(self.agg_widths)}"
            )
        if not (0.0 <= self.dropout < 1.0):
            raise ArgumentError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def n_points(self) -> int:
        return 1 << self.depth

    @classmethod
    def for_task(cls, task: str, depth: int, class_count: int, in_features: int = 3,
                 width_scale: float = 1.0, region_sizes=None, **overrides) -> "NetworkConfig":
        """Build a config with the standard widths, optionally scaled.

        When the default receptive fields do not fit a shallow tree they
        are halved until they do.
        """
        if region_sizes is None:
            region_sizes = CLASSIFY_REGION_SIZES if task == "classify" else SEGMENT_REGION_SIZES
            while max(region_sizes) > (1 << depth):
                region_sizes = tuple(max(1, r // 2) for r in region_sizes)
        agg = CLASSIFY_AGG_WIDTHS if task == "classify" else SEGMENT_AGG_WIDTHS
        kwargs = dict(
            task=task,
            depth=depth,
            class_count=class_count,
            in_features=in_features,
            level_region_sizes=tuple(region_sizes),
            level_mlp_widths=tuple(_scale_widths(w, width_scale) for w in LEVEL_MLP_WIDTHS),
            theta_widths=_scale_widths(THETA_WIDTHS, width_scale),
            h_widths=_scale_widths(H_WIDTHS, width_scale),
            agg_widths=_scale_widths(agg, width_scale),
            fc_widths=_scale_widths(FC_WIDTHS, width_scale),
        )
        kwargs.update(overrides)
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# parameter plan
# ---------------------------------------------------------------------------

def _level_flow(cfg: NetworkConfig):
    """Per level: (index, input width, mlp widths, output width, context width)."""
    width = cfg.in_features
    for lv in range(LEVELS):
        widths = cfg.level_mlp_widths[lv]
        y_w = widths[-1]
        ctx_w = cfg.h_widths[-1] if cfg.global_cues else y_w
        yield lv, width, widths, y_w, ctx_w
        width = y_w + ctx_w


def feature_width(cfg: NetworkConfig) -> int:
    """Width of the per-point features leaving the learning stage."""
    *_, (_, _, _, y_w, ctx_w) = _level_flow(cfg)
    return y_w + ctx_w


def parameter_shapes(cfg: NetworkConfig) -> dict:
    """Ordered map of parameter key to shape; the closed set the forward
    pass touches."""
    shapes: dict = {}

    def layer(prefix, fan_in, fan_out):
        shapes[prefix + ".w"] = (fan_in, fan_out)
        shapes[prefix + ".b"] = (fan_out,)

    def chain(prefix, fan_in, widths):
        for k, fan_out in enumerate(widths):
            layer(f"{prefix}.{k}", fan_in, fan_out)
            fan_in = fan_out

    for lv, in_w, widths, y_w, _ in _level_flow(cfg):
        for k, fan_out in enumerate(widths):
            if cfg.dense_connections:
                fan_in = in_w + sum(widths[:k])
            else:
                fan_in = in_w if k == 0 else widths[k - 1]
            layer(f"learn.level{lv + 1}.mlp.{k}", fan_in, fan_out)
        if cfg.global_cues:
            chain(f"learn.level{lv + 1}.theta", y_w, cfg.theta_widths)
            chain(f"learn.level{lv + 1}.h", y_w, cfg.h_widths)

    feat_w = feature_width(cfg)
    agg = cfg.agg_widths
    if cfg.task == "classify":
        if cfg.hierarchical_aggregation:
            cur = feat_w
            for k in range(LEVELS):
                layer(f"agg.round{k}", cur, agg[k])
                cur = agg[k]
        else:
            layer("agg.flat", feat_w, agg[0])
            cur = agg[0]
        for j, fan_out in enumerate(cfg.fc_widths):
            layer(f"head.fc{j}", cur, fan_out)
            cur = fan_out
        layer("head.out", cur, cfg.class_count)
    else:
        if cfg.hierarchical_aggregation:
            cur = feat_w
            for k in range(LEVELS):
                layer(f"agg.enc{k}", cur, agg[k])
                cur = agg[k]
            layer("agg.dec0", agg[2] + agg[2], agg[3])
            layer("agg.dec1", agg[3] + agg[1], agg[4])
            layer("agg.dec2", agg[4] + agg[0], agg[5])
            layer("head.out", agg[5], cfg.class_count)
        else:
            layer("agg.flat", feat_w, agg[0])
            layer("agg.mix", 2 * agg[0], agg[-1])
            layer("head.out", agg[-1], cfg.class_count)
    return shapes


def init_params(cfg: NetworkConfig, seed: int, dtype=np.float32) -> dict:
    """Glorot-uniform weights, zero biases, deterministic under seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for key, shape in parameter_shapes(cfg).items():
        if key.endswith(".b"):
            value = np.zeros(shape, dtype=dtype)
        else:
            bound = math.sqrt(6.0 / (shape[0] + shape[1]))
            value = rng.uniform(-bound, bound, size=shape).astype(dtype)
        params[key] = Tensor(value, requires_grad=True)
    return params


def parameter_count(cfg: NetworkConfig) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(cfg).values())


def zero_grads(params: dict) -> None:
    for p in params.values():
        p.grad = None


# ---------------------------------------------------------------------------
# config text form (used by checkpoints)
# ---------------------------------------------------------------------------

_LIST_FIELDS = {"level_region_sizes", "theta_widths", "h_widths", "agg_widths", "fc_widths"}
_NESTED_FIELDS = {"level_mlp_widths"}
_BOOL_FIELDS = {"local_cues", "global_cues", "dense_connections", "hierarchical_aggregation"}


def config_to_text(cfg: NetworkConfig) -> str:
    lines = []
    for f in fields(NetworkConfig):
        v = getattr(cfg, f.name)
        if f.name in _NESTED_FIELDS:
            text = ";".join(",".join(str(w) for w in group) for group in v)
        elif f.name in _LIST_FIELDS:
            text = ",".join(str(w) for w in v)
        elif f.name in _BOOL_FIELDS:
            text = "true" if v else "false"
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> NetworkConfig:
    values = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()

    known = {f.name: f for f in fields(NetworkConfig)}
    kwargs = {}
    for key, val in values.items():
        if key not in known:
            raise ConfigError(f"unknown network config key {key!r}")
        try:
            if key in _NESTED_FIELDS:
                kwargs[key] = tuple(
                    tuple(int(w) for w in group.split(",")) for group in val.split(";")
                )
            elif key in _LIST_FIELDS:
                kwargs[key] = tuple(int(w) for w in val.split(","))
            elif key in _BOOL_FIELDS:
                if val not in ("true", "false"):
                    raise ValueError(f"expected true/false, got {val!r}")
                kwargs[key] = val == "true"
            elif key == "dropout":
                kwargs[key] = float(val)
            elif key == "task":
                kwargs[key] = val
            else:
                kwargs[key] = int(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    missing = [name for name in ("task", "depth", "class_count") if name not in kwargs]
    if missing:
        raise ConfigError(f"missing network config key {missing[0]!r}")
    return NetworkConfig(**kwargs)


def config_mismatch(a: NetworkConfig, b: NetworkConfig):
    """Name of the first differing field, or None when equal."""
    for f in fields(NetworkConfig):
        if getattr(a, f.name) != getattr(b, f.name):
            return f.name
    return None


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def _mlp_layers(cfg, params, prefix, count):
    return [(params[f"{prefix}.{k}.w"], params[f"{prefix}.{k}.b"]) for k in range(count)]


def _dense_block(cfg, params, level) -> DenseMlpBlock:
    widths = cfg.level_mlp_widths[level]
    layers = _mlp_layers(cfg, params, f"learn.level{level + 1}.mlp", len(widths))
    return DenseMlpBlock(widths=widths, layers=layers, dense=cfg.dense_connections)


def _non_local_block(cfg, params, level) -> NonLocalBlock:
    theta = _mlp_layers(cfg, params, f"learn.level{level + 1}.theta", len(cfg.theta_widths))
    h = _mlp_layers(cfg, params, f"learn.level{level + 1}.h", len(cfg.h_widths))
    return NonLocalBlock(theta_widths=cfg.theta_widths, h_widths=cfg.h_widths,
                         theta_layers=theta, h_layers=h)


def _segment_ids(rows: int, run: int) -> np.ndarray:
    return np.arange(rows, dtype=np.int64) // run


def _feature_learning(cfg, params, x: Tensor, n_clouds: int, collect=None) -> Tensor:
    rows = x.shape[0]
    n_per_cloud = rows // n_clouds
    for lv in range(LEVELS):
        y = dense_mlp_forward(_dense_block(cfg, params, lv), x)
        region = cfg.level_region_sizes[lv]
        ids = _segment_ids(rows, region)
        n_regions = rows // region
        pooled = ad.segment_max(y, ids, n_regions)

        if cfg.local_cues:
            gate = ad.sigmoid(pooled)
            if collect is not None:
                collect.setdefault("gates", []).append(gate.value.copy())
            y = ad.mul(y, ad.broadcast_rows(gate, ids))

        if cfg.global_cues:
            got = {} if collect is not None else None
            context = non_local(pooled, _non_local_block(cfg, params, lv),
                                rows_per_group=n_per_cloud // region, collect=got)
            if collect is not None:
                collect.setdefault("attention", []).append(got["weights"])
        else:
            context = pooled

        x = ad.concat_cols([y, ad.broadcast_rows(context, ids)])
    return x


def _round_layer(params, prefix, x: Tensor) -> Tensor:
    return ad.relu(ad.affine(x, params[prefix + ".w"], params[prefix + ".b"]))


def _aggregate_classify(cfg, params, feats: Tensor, n_clouds: int,
                        training: bool, rng, collect=None) -> Tensor:
    rows = feats.shape[0]
    if cfg.hierarchical_aggregation:
        cur = feats
        scale = 1
        for k, region in enumerate(cfg.level_region_sizes):
            cur = _round_layer(params, f"agg.round{k}", cur)
            factor = region // scale
            cur = ad.segment_max(cur, _segment_ids(cur.shape[0], factor),
                                 cur.shape[0] // factor)
            scale = region
    else:
        cur = _round_layer(params, "agg.flat", feats)

    per_cloud = cur.shape[0] // n_clouds
    signature = ad.segment_max(cur, _segment_ids(cur.shape[0], per_cloud), n_clouds)
    if collect is not None:
        collect["signature"] = signature.value.copy()

    out = signature
    for j in range(len(cfg.fc_widths)):
        out = _round_layer(params, f"head.fc{j}", out)
        if training and cfg.dropout > 0.0:
            out = ad.dropout(out, cfg.dropout, True, int(rng.integers(2 ** 63)))
    return ad.affine(out, params["head.out.w"], params["head.out.b"])


def _aggregate_segment(cfg, params, feats: Tensor, n_clouds: int, collect=None) -> Tensor:
    region_sizes = cfg.level_region_sizes
    if cfg.hierarchical_aggregation:
        scales = (1,) + tuple(region_sizes)
        skips = []
        cur = feats
        for k, region in enumerate(region_sizes):
            cur = _round_layer(params, f"agg.enc{k}", cur)
            skips.append(cur)
            factor = region // scales[k]
            cur = ad.segment_max(cur, _segment_ids(cur.shape[0], factor),
                                 cur.shape[0] // factor)
        for k in range(LEVELS):
            factor = scales[LEVELS - k] // scales[LEVELS - 1 - k]
            up_rows = cur.shape[0] * factor
            up = ad.broadcast_rows(cur, _segment_ids(up_rows, factor))
            cur = _round_layer(params, f"agg.dec{k}",
                               ad.concat_cols([up, skips[LEVELS - 1 - k]]))
    else:
        h = _round_layer(params, "agg.flat", feats)
        per_cloud = h.shape[0] // n_clouds
        ids = _segment_ids(h.shape[0], per_cloud)
        pooled = ad.segment_max(h, ids, n_clouds)
        if collect is not None:
            collect["signature"] = pooled.value.copy()
        cur = _round_layer(params, "agg.mix",
                           ad.concat_cols([h, ad.broadcast_rows(pooled, ids)]))
    return ad.affine(cur, params["head.out.w"], params["head.out.b"])


def stack_clouds(cfg: NetworkConfig, clouds, trees) -> np.ndarray:
    """Row-stack cloud features in tree order, float32, ready for a forward."""
    want_n = cfg.n_points
    blocks = []
    for pc, tree in zip(clouds, trees):
        if pc.n != want_n:
            raise SizeError(f"cloud has {pc.n} points, config expects {want_n}")
        if pc.f != cfg.in_features:
            raise DataError(f"cloud has {pc.f} features, config expects {cfg.in_features}")
        blocks.append(pc.data[tree.order].astype(np.float32))
    return np.concatenate(blocks, axis=0)


def forward_stacked(cfg: NetworkConfig, params: dict, stacked: np.ndarray, n_clouds: int,
                    training: bool = False, rng=None, collect=None) -> Tensor:
    """Forward pre-stacked tree-ordered features (see :func:`stack_clouds`)."""
    if training and rng is None:
        raise ArgumentError("training forward needs a random generator for dropout")
    x = Tensor(stacked)
    feats = _feature_learning(cfg, params, x, n_clouds, collect=collect)
    if cfg.task == "classify":
        return _aggregate_classify(cfg, params, feats, n_clouds, training, rng, collect)
    return _aggregate_segment(cfg, params, feats, n_clouds, collect)


def forward_batch(cfg: NetworkConfig, params: dict, clouds, trees,
                  training: bool = False, rng=None, collect=None) -> Tensor:
    """Forward several clouds through learning and head stages.

    Returns logits as a tensor: (n_clouds, class_count) for
    classification, (n_clouds * n_points, class_count) in tree order for
    segmentation.
    """
    clouds = list(clouds)
    return forward_stacked(cfg, params, stack_clouds(cfg, clouds, trees), len(clouds),
                           training=training, rng=rng, collect=collect)


def feature_learning(cfg: NetworkConfig, params: dict, pc: PointCloud,
                     tree: KdTree) -> Tensor:
    """Per-point features for one cloud, rows aligned with the input order."""
    x = Tensor(stack_clouds(cfg, [pc], [tree]))
    feats = _feature_learning(cfg, params, x, 1)
    return Tensor(feats.value[tree.perm])


def aggregate_classify(cfg: NetworkConfig, params: dict, feats: Tensor,
                       n_clouds: int = 1, training: bool = False, rng=None) -> Tensor:
    return _aggregate_classify(cfg, params, feats, n_clouds, training, rng)


def aggregate_segment(cfg: NetworkConfig, params: dict, feats: Tensor,
                      n_clouds: int = 1) -> Tensor:
    return _aggregate_segment(cfg, params, feats, n_clouds)


def forward(cfg: NetworkConfig, params: dict, pc: PointCloud, tree: KdTree | None = None,
            return_diagnostics: bool = False):
    """Build the tree (unless given), run both stages, return logits.

    Classification yields a length-``class_count`` vector; segmentation
    yields per-point logits aligned with the input point order.  With
    ``return_diagnostics`` a dict of gate statistics and attention
    matrices is returned alongside.
    """
    if tree is None:
        tree = build(pc)
    collect: dict | None = {} if return_diagnostics else None
    logits = forward_batch(cfg, params, [pc], [tree], collect=collect)
    if cfg.task == "classify":
        out = logits.value[0].copy()
    else:
        out = logits.value[tree.perm]
    if not return_diagnostics:
        return out
    diag = {"attention": collect.get("attention", []),
            "signature": collect.get("signature")}
    gates = collect.get("gates", [])
    diag["gate_stats"] = [
        {"min": float(g.min()), "mean": float(g.mean()), "max": float(g.max())}
        for g in gates
    ]
    return out, diag
