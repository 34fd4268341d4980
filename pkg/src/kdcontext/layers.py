"""Contextual building blocks: dense shared-MLP stacks, per-region
feature recalibration, and non-local attention over region vectors.

All three are pure functions of their parameters and inputs, built
entirely from autodiff ops, so gradients flow through them without any
extra bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArgumentError


@dataclass
class DenseMlpBlock:
    """Shared pointwise MLP whose layer k consumes the concatenation of
    the raw input and every earlier layer output (dense connections).

    With ``dense=False`` it degrades to a plain feed-forward chain.
    ``layers`` holds one (weight, bias) tensor pair per entry of
    ``widths``.
    """

    widths: tuple
    layers: list
    dense: bool = True


@dataclass
class NonLocalBlock:
    """Attention over same-level region vectors.

    The pairwise similarity uses a single shared embedding MLP (the two
    embeddings coincide, which keeps the relation symmetric); ``h``
    transforms the values being mixed.
    """

    theta_widths: tuple
    h_widths: tuple
    theta_layers: list
    h_layers: list


def mlp_chain(layers, x: Tensor, final_relu: bool = False) -> Tensor:
    """Apply affine layers with relu between them; linear last layer unless
    ``final_relu``."""
    out = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        out = ad.affine(out, w, b)
        if i < last or final_relu:
            out = ad.relu(out)
    return out


def dense_mlp_forward(block: DenseMlpBlock, x: Tensor) -> Tensor:
    """Run a dense MLP block; returns the final layer's output."""
    outputs = [x]
    for w, b in block.layers:
        inp = ad.concat_cols(outputs) if block.dense else outputs[-1]
        outputs.append(ad.relu(ad.affine(inp, w, b)))
    return outputs[-1]


def local_recalibrate(points: Tensor, segment_ids=None, num_segments: int | None = None) -> Tensor:
    """Rescale every point feature by a sigmoid gate of its region's
    columnwise max.

    The pooled region descriptor g(Y) is the max over member rows; the
    gate sigmoid(g(Y)) lies strictly in (0, 1) and multiplies every
    member feature vector elementwise, independently per region.  With
    no ``segment_ids`` the whole input is one region.
    """
    n = points.shape[0]
    if segment_ids is None:
        segment_ids = np.zeros(n, dtype=np.int64)
        num_segments = 1
    pooled = ad.segment_max(points, segment_ids, num_segments)
    gate = ad.sigmoid(pooled)
    return ad.mul(points, ad.broadcast_rows(gate, segment_ids))


def non_local(regions: Tensor, block: NonLocalBlock,
              rows_per_group: int | None = None, collect: dict | None = None) -> Tensor:
    """Weighted sum over all region representations at one level.

    Each region's response mixes every region's transformed value, with
    weights softmax-normalized from the exponentiated pairwise dot
    products of a shared embedding.  ``rows_per_group`` lets several
    independent clouds share one call: attention never crosses group
    boundaries.  ``collect`` optionally receives the attention weights.
    """
    r = regions.shape[0]
    if r < 1:
        raise ArgumentError("non_local needs at least one region")
    group = rows_per_group if rows_per_group is not None else r
    embedded = mlp_chain(block.theta_layers, regions)
    logits = ad.gram(embedded, group)
    weights = ad.rowwise_softmax(logits)
    values = mlp_chain(block.h_layers, regions)
    if collect is not None:
        collect["weights"] = weights.value.copy()
    return ad.group_matmul(weights, values, group)
