"""Case table of every autodiff op, shared by the unit tests and the
acceptance gradient suite.

Each case builds fresh float64 inputs from a generator and returns a
zero-argument rebuild closure suitable for finite differencing.
Non-differentiable points are avoided by construction (relu inputs are
pushed away from zero; continuous draws never tie in segment_max).
"""

import numpy as np

from kdcontext import autodiff as ad
from kdcontext.autodiff import Tensor


def _t(rng, shape, avoid_zero=False):
    v = rng.normal(size=shape)
    if avoid_zero:
        v = v + 0.1 * np.sign(v) + (v == 0) * 0.1
    return Tensor(v, requires_grad=True)


def _case_affine(rng):
    x, w, b = _t(rng, (5, 4)), _t(rng, (4, 3)), _t(rng, (3,))
    return lambda: ad.affine(x, w, b), (x, w, b)


def _case_matmul(rng):
    a, b = _t(rng, (5, 4)), _t(rng, (4, 3))
    return lambda: ad.matmul(a, b), (a, b)


def _case_mul(rng):
    a, b = _t(rng, (4, 6)), _t(rng, (4, 6))
    return lambda: ad.mul(a, b), (a, b)


def _case_relu(rng):
    x = _t(rng, (5, 7), avoid_zero=True)
    return lambda: ad.relu(x), (x,)


def _case_sigmoid(rng):
    x = _t(rng, (5, 7))
    return lambda: ad.sigmoid(x), (x,)


def _case_segment_max_uniform(rng):
    x = _t(rng, (12, 5))
    ids = np.repeat(np.arange(4), 3)
    return lambda: ad.segment_max(x, ids, 4), (x,)


def _case_segment_max_ragged(rng):
    x = _t(rng, (11, 4))
    ids = np.array([0, 0, 1, 2, 2, 2, 2, 1, 0, 1, 2])
    return lambda: ad.segment_max(x, ids, 3), (x,)


def _case_concat_cols(rng):
    xs = (_t(rng, (6, 2)), _t(rng, (6, 3)), _t(rng, (6, 1)))
    return lambda: ad.concat_cols(xs), xs


def _case_broadcast_rows(rng):
    x = _t(rng, (4, 5))
    ids = rng.integers(0, 4, size=13)
    ids[:4] = np.arange(4)  # every region used at least once
    return lambda: ad.broadcast_rows(x, ids), (x,)


def _case_rowwise_softmax(rng):
    x = _t(rng, (6, 6))
    return lambda: ad.rowwise_softmax(x), (x,)


def _case_dropout(rng):
    x = _t(rng, (8, 5))
    seed = int(rng.integers(2 ** 31))
    return lambda: ad.dropout(x, 0.3, True, seed), (x,)


def _case_cross_entropy(rng):
    logits = _t(rng, (7, 4))
    labels = rng.integers(0, 4, size=7)
    return lambda: ad.cross_entropy(logits, labels), (logits,)


def _case_cross_entropy_weighted(rng):
    logits = _t(rng, (7, 4))
    labels = rng.integers(0, 4, size=7)
    weights = rng.uniform(0.5, 2.0, size=4)
    return lambda: ad.cross_entropy(logits, labels, class_weights=weights), (logits,)


def _case_gram(rng):
    x = _t(rng, (8, 3))
    return lambda: ad.gram(x, 4), (x,)


def _case_group_matmul(rng):
    a, b = _t(rng, (8, 4)), _t(rng, (8, 5))
    return lambda: ad.group_matmul(a, b, 4), (a, b)


OP_CASES = {
    "affine": _case_affine,
    "matmul": _case_matmul,
    "mul": _case_mul,
    "relu": _case_relu,
    "sigmoid": _case_sigmoid,
    "segment_max_uniform": _case_segment_max_uniform,
    "segment_max_ragged": _case_segment_max_ragged,
    "concat_cols": _case_concat_cols,
    "broadcast_rows": _case_broadcast_rows,
    "rowwise_softmax": _case_rowwise_softmax,
    "dropout": _case_dropout,
    "cross_entropy": _case_cross_entropy,
    "cross_entropy_weighted": _case_cross_entropy_weighted,
    "gram": _case_gram,
    "group_matmul": _case_group_matmul,
}
