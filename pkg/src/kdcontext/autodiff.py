"""Minimal reverse-mode tensor engine.

Tensors wrap dense numpy buffers; every operation returns a fresh tensor
that remembers its parents and a vector-Jacobian closure.  Calling
``backward`` on a scalar (or with an explicit seed gradient) visits the
reachable graph in reverse creation order exactly once, accumulating
gradients by summation, so a tensor feeding several consumers receives
the sum of their contributions.

The op set is exactly what the network needs: affine layers, relu and
sigmoid nonlinearities, segment max pooling with its broadcast inverse,
column concatenation, row-wise softmax, dropout, matrix products
(including per-group batched forms used for attention over stacked
clouds), elementwise multiplication, and mean cross entropy.

Values are computed in whatever float width the inputs carry: training
runs float32, gradient checks run float64.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ArgumentError, DataError, ShapeError

_ids = itertools.count()


class Tensor:
    """Dense array plus (lazily allocated) gradient buffer."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp", "_id")

    def __init__(self, value, requires_grad: bool = False):
        value = np.asarray(value)
        if value.dtype not in (np.float32, np.float64):
            value = value.astype(np.float64)
        self.value = value
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self._id = next(_ids)

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        """Accumulate gradients of this tensor into every ancestor.

        ``seed`` is the upstream gradient; it defaults to ones (for a
        scalar loss this is the usual d loss / d loss = 1).
        """
        if seed is None:
            seed = np.ones(self.shape, dtype=self.dtype)
        else:
            seed = np.broadcast_to(np.asarray(seed, dtype=self.dtype), self.shape).copy()
        _accumulate(self, seed)

        nodes = []
        seen = {id(self)}
        stack = [self]
        while stack:
            node = stack.pop()
            nodes.append(node)
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    seen.add(id(parent))
                    stack.append(parent)
        nodes.sort(key=lambda t: t._id, reverse=True)
        for node in nodes:
            if node._vjp is not None and node.grad is not None:
                node._vjp(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _node(value, parents, vjp) -> Tensor:
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _as_ids(segment_ids, n: int) -> np.ndarray:
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.shape != (n,):
        raise ShapeError(f"segment ids must have shape ({n},), got {ids.shape}")
    return ids


def _uniform_block(ids: np.ndarray, num_segments: int):
    """Rows-per-segment when ids are 0..r-1 in contiguous equal runs, else None."""
    n = ids.size
    if num_segments == 0 or n % num_segments:
        return None
    m = n // num_segments
    if ids[0] == 0 and ids[-1] == num_segments - 1:
        expected = np.repeat(np.arange(num_segments), m)
        if np.array_equal(ids, expected):
            return m
    return None


# ---------------------------------------------------------------------------
# elementwise and affine ops
# ---------------------------------------------------------------------------

def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for x (n, c_in), w (c_in, c_out), b (c_out,)."""
    if x.value.ndim != 2 or w.value.ndim != 2 or b.value.ndim != 1:
        raise ShapeError("affine expects 2-D x, 2-D w, 1-D b")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(f"affine shape mismatch: x{x.shape} w{w.shape} b{b.shape}")
    value = x.value @ w.value + b.value

    def vjp(g):
        _accumulate(x, g @ w.value.T)
        _accumulate(w, x.value.T @ g)
        _accumulate(b, g.sum(axis=0))

    return _node(value, (x, w, b), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Plain 2-D matrix product."""
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    value = a.value @ b.value

    def vjp(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    return _node(value, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    value = a.value * b.value

    def vjp(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)

    return _node(value, (a, b), vjp)


def relu(x: Tensor) -> Tensor:
    value = np.maximum(x.value, 0)

    def vjp(g):
        _accumulate(x, g * (x.value > 0))

    return _node(value, (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        value = 1.0 / (1.0 + np.exp(-x.value))

    def vjp(g):
        _accumulate(x, g * value * (1.0 - value))

    return _node(value, (x,), vjp)


# ---------------------------------------------------------------------------
# segment / region ops
# ---------------------------------------------------------------------------

def segment_max(x: Tensor, segment_ids, num_segments: int | None = None) -> Tensor:
    """Columnwise max over row groups: out[s, j] = max_{i in segment s} x[i, j].

    Gradient routes to a single argmax row per (segment, column), the
    earliest row on ties.  Every segment must be non-empty.
    """
    if x.value.ndim != 2:
        raise ShapeError("segment_max expects a 2-D tensor")
    n, c = x.shape
    ids = _as_ids(segment_ids, n)
    r = int(num_segments) if num_segments is not None else int(ids.max()) + 1 if n else 0
    if r < 1:
        raise ArgumentError("segment_max needs at least one segment")
    if ids.min() < 0 or ids.max() >= r:
        raise ArgumentError(f"segment ids must lie in [0, {r})")

    m = _uniform_block(ids, r)
    if m is not None:
        blocks = x.value.reshape(r, m, c)
        value = blocks.max(axis=1)
        winners = blocks.argmax(axis=1) + (np.arange(r) * m)[:, None]
    else:
        counts = np.bincount(ids, minlength=r)
        if (counts == 0).any():
            raise ArgumentError(f"empty segment {int(np.flatnonzero(counts == 0)[0])}")
        value = np.full((r, c), -np.inf, dtype=x.dtype)
        np.maximum.at(value, ids, x.value)
        candidates = np.where(x.value == value[ids], np.arange(n)[:, None], n)
        winners = np.full((r, c), n, dtype=np.int64)
        np.minimum.at(winners, ids, candidates)

    def vjp(g):
        grad = np.zeros_like(x.value)
        grad[winners, np.arange(c)] += g
        _accumulate(x, grad)

    return _node(value, (x,), vjp)


def broadcast_rows(x: Tensor, segment_ids, num_segments: int | None = None) -> Tensor:
    """Copy region row ``s`` of x to every row whose segment id is ``s``.

    The backward pass sums the member gradients, making this the exact
    adjoint of a per-region reduction.
    """
    if x.value.ndim != 2:
        raise ShapeError("broadcast_rows expects a 2-D tensor")
    r = x.shape[0]
    if num_segments is not None and num_segments != r:
        raise ShapeError(f"x has {r} rows but num_segments={num_segments}")
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError("segment ids must be 1-D")
    if ids.size and (ids.min() < 0 or ids.max() >= r):
        raise ArgumentError(f"segment ids must lie in [0, {r})")
    value = x.value[ids]
    m = _uniform_block(ids, r)

    def vjp(g):
        if m is not None:
            _accumulate(x, g.reshape(r, m, x.shape[1]).sum(axis=1))
        else:
            acc = np.zeros_like(x.value)
            np.add.at(acc, ids, g)
            _accumulate(x, acc)

    return _node(value, (x,), vjp)


def concat_cols(xs) -> Tensor:
    """Stack tensors side by side; all must share the row count."""
    xs = list(xs)
    if not xs:
        raise ArgumentError("concat_cols needs at least one tensor")
    n = xs[0].shape[0]
    for t in xs:
        if t.value.ndim != 2 or t.shape[0] != n:
            raise ShapeError(f"concat_cols row mismatch: {[t.shape for t in xs]}")
    if len(xs) == 1:
        return xs[0]
    value = np.concatenate([t.value for t in xs], axis=1)
    offsets = np.cumsum([0] + [t.shape[1] for t in xs])

    def vjp(g):
        for t, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
            _accumulate(t, g[:, lo:hi].copy())

    return _node(value, tuple(xs), vjp)


# ---------------------------------------------------------------------------
# attention building blocks
# ---------------------------------------------------------------------------

def rowwise_softmax(x: Tensor) -> Tensor:
    """Numerically stable softmax over each row (max-subtracted)."""
    if x.value.ndim != 2:
        raise ShapeError("rowwise_softmax expects a 2-D tensor")
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        dot = (g * value).sum(axis=1, keepdims=True)
        _accumulate(x, (g - dot) * value)

    return _node(value, (x,), vjp)


def gram(x: Tensor, rows_per_group: int | None = None) -> Tensor:
    """Per-group Gram matrices: for each block of ``rows_per_group`` rows
    E, emit E @ E.T stacked row-wise.

    With the default (one group spanning all rows) this is the pairwise
    dot-product matrix of the row vectors.  The result is made exactly
    symmetric, which a shared embedding guarantees mathematically.
    """
    if x.value.ndim != 2:
        raise ShapeError("gram expects a 2-D tensor")
    n, c = x.shape
    r = rows_per_group if rows_per_group is not None else n
    if r < 1 or n % r:
        raise ShapeError(f"rows_per_group {r} must divide row count {n}")
    groups = n // r
    e = x.value.reshape(groups, r, c)
    m = np.matmul(e, e.transpose(0, 2, 1))
    m = 0.5 * (m + m.transpose(0, 2, 1))
    value = m.reshape(n, r)

    def vjp(g):
        gb = g.reshape(groups, r, r)
        de = np.matmul(gb + gb.transpose(0, 2, 1), e)
        _accumulate(x, de.reshape(n, c))

    return _node(value, (x,), vjp)


def group_matmul(a: Tensor, b: Tensor, rows_per_group: int | None = None) -> Tensor:
    """Per-group product A_g @ B_g for row blocks of two stacked matrices.

    ``a`` must have ``rows_per_group`` columns (a square mixing matrix
    per group, e.g. attention weights); ``b`` carries the values.
    """
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError("group_matmul expects 2-D tensors")
    n = a.shape[0]
    r = rows_per_group if rows_per_group is not None else n
    if r < 1 or n % r or a.shape[1] != r or b.shape[0] != n:
        raise ShapeError(
            f"group_matmul mismatch: a{a.shape} b{b.shape} rows_per_group={r}"
        )
    groups = n // r
    av = a.value.reshape(groups, r, r)
    bv = b.value.reshape(groups, r, b.shape[1])
    value = np.matmul(av, bv).reshape(n, b.shape[1])

    def vjp(g):
        gb = g.reshape(groups, r, b.shape[1])
        _accumulate(a, np.matmul(gb, bv.transpose(0, 2, 1)).reshape(n, r))
        _accumulate(b, np.matmul(av.transpose(0, 2, 1), gb).reshape(n, b.shape[1]))

    return _node(value, (a, b), vjp)


# ---------------------------------------------------------------------------
# regularization and loss
# ---------------------------------------------------------------------------

def dropout(x: Tensor, p: float, training: bool, seed: int) -> Tensor:
    """Inverted dropout: zero entries with probability p and scale the
    survivors by 1/(1-p).  A no-op outside training."""
    if not (0.0 <= p < 1.0):
        raise ArgumentError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    rng = np.random.Generator(np.random.PCG64(seed))
    scale = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    value = x.value * scale

    def vjp(g):
        _accumulate(x, g * scale)

    return _node(value, (x,), vjp)


def cross_entropy(logits: Tensor, labels, class_weights=None) -> Tensor:
    """Mean negative log softmax probability of the true class.

    ``class_weights`` optionally reweights rows by their label's weight
    (weighted mean), for imbalanced datasets.
    """
    if logits.value.ndim != 2:
        raise ShapeError("cross_entropy expects 2-D logits")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise DataError(f"label {int(labels.max())} out of range for {k} classes")

    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    nll = lse - shifted[np.arange(n), labels]
    if class_weights is not None:
        w = np.asarray(class_weights, dtype=logits.dtype)
        if w.shape != (k,):
            raise ShapeError(f"class_weights must have shape ({k},), got {w.shape}")
        row_w = w[labels]
        denom = row_w.sum()
        if denom <= 0:
            raise ArgumentError("class weights sum to zero over this batch")
        value = np.asarray((nll * row_w).sum() / denom, dtype=logits.dtype)
    else:
        row_w = None
        value = np.asarray(nll.mean(), dtype=logits.dtype)

    def vjp(g):
        soft = np.exp(shifted)
        soft /= soft.sum(axis=1, keepdims=True)
        soft[np.arange(n), labels] -= 1.0
        if row_w is not None:
            soft *= (row_w / row_w.sum())[:, None]
        else:
            soft /= n
        _accumulate(logits, soft * g)

    return _node(value, (logits,), vjp)
