"""Primitive kernels: forward computation plus recorded reverse rules.

Every kernel validates shapes, optionally checks inputs for non-finite
values (see ``engine.set_finite_checks``), computes the forward result and
records a backward closure on the active tape. Gradients follow plain
calculus; broadcasting gradients are summed back to the source shape.
"""

import numpy as np

from .. import _accel
from ..errors import DegenerateMaskError, ShapeError, ValidationError
from .engine import Value, as_value, check_finite, record


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` following numpy broadcasting rules."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def matmul(a, b):
    """a @ b with `a` of rank 2 or 3 (leading batch axis) and `b` of rank 2."""
    a, b = as_value(a), as_value(b)
    if a.data.ndim not in (2, 3) or b.data.ndim != 2:
        raise ShapeError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    check_finite("matmul", a.data, b.data)
    out = Value(a.data @ b.data)

    def backward_fn(g):
        ga = g @ b.data.T if a.requires_grad else None
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1])
            g2 = g.reshape(-1, b.shape[1])
            gb = a2.T @ g2
        else:
            gb = None
        return ga, gb

    return record("matmul", out, (a, b), backward_fn)


def add(a, b):
    """Elementwise sum with numpy broadcasting."""
    a, b = as_value(a), as_value(b)
    check_finite("add", a.data, b.data)
    try:
        out = Value(a.data + b.data)
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} + {b.shape}") from None

    def backward_fn(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    return record("add", out, (a, b), backward_fn)


def mul(a, b):
    """Elementwise product with numpy broadcasting."""
    a, b = as_value(a), as_value(b)
    check_finite("mul", a.data, b.data)
    try:
        out = Value(a.data * b.data)
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} * {b.shape}") from None

    def backward_fn(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return record("mul", out, (a, b), backward_fn)


def scale(a, c):
    """a * c for a python scalar c."""
    a = as_value(a)
    c = float(c)
    check_finite("scale", a.data, np.asarray(c))
    out = Value(a.data * c)
    return record("scale", out, (a,), lambda g: (g * c,))


def tanh(a):
    a = as_value(a)
    check_finite("tanh", a.data)
    y = np.tanh(a.data)
    out = Value(y)
    return record("tanh", out, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a):
    """max(a, 0); subgradient 0 at exactly 0."""
    a = as_value(a)
    check_finite("relu", a.data)
    keep = a.data > 0
    out = Value(np.where(keep, a.data, 0.0))
    return record("relu", out, (a,), lambda g: (g * keep,))


def sigmoid(a):
    a = as_value(a)
    check_finite("sigmoid", a.data)
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = Value(y)
    return record("sigmoid", out, (a,), lambda g: (g * y * (1.0 - y),))


def concat_last_axis(parts):
    """Concatenate along the last axis; all leading dims must agree."""
    parts = [as_value(p) for p in parts]
    if not parts:
        raise ShapeError("concat_last_axis: empty input list")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeError(
                f"concat_last_axis: leading dims differ, {parts[0].shape} vs {p.shape}"
            )
    check_finite("concat_last_axis", *[p.data for p in parts])
    out = Value(np.concatenate([p.data for p in parts], axis=-1))
    sizes = [p.shape[-1] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backward_fn(g):
        return tuple(
            g[..., bounds[i]:bounds[i + 1]] if p.requires_grad else None
            for i, p in enumerate(parts)
        )

    return record("concat_last_axis", out, tuple(parts), backward_fn)


def slice_last_axis(a, start, stop):
    a = as_value(a)
    if not (0 <= start < stop <= a.shape[-1]):
        raise ShapeError(
            f"slice_last_axis: [{start}:{stop}] out of range for {a.shape}"
        )
    out = Value(a.data[..., start:stop])

    def backward_fn(g):
        ga = np.zeros_like(a.data)
        ga[..., start:stop] = g
        return (ga,)

    return record("slice_last_axis", out, (a,), backward_fn)


def reshape(a, shape):
    a = as_value(a)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    out = Value(a.data.reshape(shape))
    return record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def gather_rows(table, indices):
    """Rows of a 2-D table at integer `indices` (rank <= 2); repeated
    indices scatter their gradients additively."""
    table = as_value(table)
    if table.data.ndim != 2:
        raise ShapeError(f"gather_rows: table must be 2-D, got {table.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim > 2:
        raise ShapeError(f"gather_rows: indices rank {idx.ndim} too high")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(
            f"gather_rows: index out of range for table with {table.shape[0]} rows"
        )
    check_finite("gather_rows", table.data)
    out = Value(table.data[idx])

    def backward_fn(g):
        gt = np.zeros_like(table.data)
        _accel.scatter_add_rows(
            gt, idx.reshape(-1), np.ascontiguousarray(g.reshape(-1, table.shape[1]))
        )
        return (gt,)

    return record("gather_rows", out, (table,), backward_fn)


def select_positions(a, positions):
    """Per-row selection along axis 1: out[n] = a[n, positions[n]].

    `a` has rank 2 or 3; `positions` is an int vector of length a.shape[0].
    """
    a = as_value(a)
    if a.data.ndim not in (2, 3):
        raise ShapeError(f"select_positions: rank {a.data.ndim} unsupported")
    pos = np.asarray(positions, dtype=np.int64)
    n = a.shape[0]
    if pos.shape != (n,):
        raise ShapeError(f"select_positions: positions shape {pos.shape} != ({n},)")
    if pos.size and (pos.min() < 0 or pos.max() >= a.shape[1]):
        raise ShapeError(f"select_positions: position out of range for {a.shape}")
    check_finite("select_positions", a.data)
    rows = np.arange(n)
    out = Value(a.data[rows, pos])

    def backward_fn(g):
        ga = np.zeros_like(a.data)
        ga[rows, pos] = g
        return (ga,)

    return record("select_positions", out, (a,), backward_fn)


def stack_positions(values):
    """Stack rank-2 Values (N, d) into (N, len(values), d)."""
    values = [as_value(v) for v in values]
    if not values:
        raise ShapeError("stack_positions: empty input list")
    base = values[0].shape
    for v in values[1:]:
        if v.shape != base:
            raise ShapeError(f"stack_positions: shapes differ, {base} vs {v.shape}")
    check_finite("stack_positions", *[v.data for v in values])
    out = Value(np.stack([v.data for v in values], axis=1))

    def backward_fn(g):
        return tuple(
            g[:, i, :] if v.requires_grad else None for i, v in enumerate(values)
        )

    return record("stack_positions", out, tuple(values), backward_fn)


def masked_softmax(scores, mask):
    """Softmax along the last axis restricted to mask==True positions.

    Masked positions receive exactly probability 0 and propagate zero
    gradient to their scores. A row with no unmasked position is an error.
    """
    scores = as_value(scores)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.shape:
        raise ShapeError(
            f"masked_softmax: mask shape {mask.shape} != scores shape {scores.shape}"
        )
    if not mask.any(axis=-1).all():
        raise DegenerateMaskError("masked_softmax: some row is fully masked")
    check_finite("masked_softmax", scores.data)
    shifted = scores.data - np.max(
        np.where(mask, scores.data, -np.inf), axis=-1, keepdims=True
    )
    e = np.exp(np.where(mask, shifted, -np.inf))
    p = e / e.sum(axis=-1, keepdims=True)
    out = Value(p)

    def backward_fn(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - inner),)

    return record("masked_softmax", out, (scores,), backward_fn)


def conv1d(x, filters, bias=None):
    """1-D convolution over positions with 'same' zero padding.

    x: (N, L, d) or (L, d); filters: (w, d, d_out); bias: optional (d_out,).
    Output length equals input length; padded-in positions read zeros.
    """
    x, filters = as_value(x), as_value(filters)
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or filters.data.ndim != 3:
        raise ShapeError(f"conv1d: need (N,L,d) and (w,d,d'), got {x.shape}, {filters.shape}")
    w, d_in, d_out = filters.shape
    if xd.shape[2] != d_in:
        raise ShapeError(f"conv1d: channel mismatch, input {x.shape} vs filters {filters.shape}")
    bias = as_value(bias) if bias is not None else None
    if bias is not None and bias.shape != (d_out,):
        raise ShapeError(f"conv1d: bias shape {bias.shape} != ({d_out},)")
    check_finite("conv1d", xd, filters.data)

    n, length, _ = xd.shape
    pad_l = (w - 1) // 2
    pad_r = w - 1 - pad_l
    xp = np.pad(xd, ((0, 0), (pad_l, pad_r), (0, 0)))
    y = np.zeros((n, length, d_out))
    for t in range(w):
        y += xp[:, t:t + length, :] @ filters.data[t]
    if bias is not None:
        y += bias.data
    out = Value(y[0] if squeeze else y)

    def backward_fn(g):
        g3 = g[None] if squeeze else g
        gx = gf = gb = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for t in range(w):
                gxp[:, t:t + length, :] += g3 @ filters.data[t].T
            gx = gxp[:, pad_l:pad_l + length, :]
            if squeeze:
                gx = gx[0]
        if filters.requires_grad:
            gf = np.zeros_like(filters.data)
            g2 = g3.reshape(-1, d_out)
            for t in range(w):
                gf[t] = xp[:, t:t + length, :].reshape(-1, d_in).T @ g2
        if bias is not None and bias.requires_grad:
            gb = g3.sum(axis=(0, 1))
        return (gx, gf, gb) if bias is not None else (gx, gf)

    inputs = (x, filters, bias) if bias is not None else (x, filters)
    return record("conv1d", out, inputs, backward_fn)


def _pool_args(a, mask):
    a = as_value(a)
    squeeze = a.data.ndim == 2
    ad = a.data[None] if squeeze else a.data
    if ad.ndim != 3:
        raise ShapeError(f"pool: need (N,L,d) or (L,d), got {a.shape}")
    mask = np.asarray(mask, dtype=bool)
    m = mask[None] if squeeze else mask
    if m.shape != ad.shape[:2]:
        raise ShapeError(f"pool: mask shape {mask.shape} incompatible with {a.shape}")
    if not m.any(axis=1).all():
        raise DegenerateMaskError("pool: some row is fully masked")
    return a, ad, m, squeeze


def max_pool_over_positions(a, mask):
    """Channelwise max over unmasked positions (axis 1); gradient routes to
    the first position attaining the max."""
    a, ad, m, squeeze = _pool_args(a, mask)
    check_finite("max_pool_over_positions", ad)
    neg = np.where(m[:, :, None], ad, -np.inf)
    argmax = neg.argmax(axis=1)                      # (N, d)
    n, _, d = ad.shape
    rows = np.arange(n)[:, None]
    chans = np.arange(d)[None, :]
    y = ad[rows, argmax, chans]
    out = Value(y[0] if squeeze else y)

    def backward_fn(g):
        g3 = g[None] if squeeze else g
        ga = np.zeros_like(ad)
        ga[rows, argmax, chans] = g3
        return (ga[0] if squeeze else ga,)

    return record("max_pool_over_positions", out, (a,), backward_fn)


def mean_pool_over_positions(a, mask):
    """Channelwise mean over unmasked positions (axis 1)."""
    a, ad, m, squeeze = _pool_args(a, mask)
    check_finite("mean_pool_over_positions", ad)
    counts = m.sum(axis=1, keepdims=True).astype(np.float64)   # (N, 1)
    y = (ad * m[:, :, None]).sum(axis=1) / counts
    out = Value(y[0] if squeeze else y)

    def backward_fn(g):
        g3 = g[None] if squeeze else g
        ga = (g3 / counts)[:, None, :] * m[:, :, None]
        return (ga[0] if squeeze else ga,)

    return record("mean_pool_over_positions", out, (a,), backward_fn)


def dropout(a, rate, training, rng):
    """Inverted dropout: scales kept entries by 1/(1-rate) at train time so
    evaluation is the identity. rate 0 or training=False is a pass-through."""
    a = as_value(a)
    if not 0.0 <= rate < 1.0:
        raise ValidationError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    check_finite("dropout", a.data)
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    out = Value(a.data * keep)
    return record("dropout", out, (a,), lambda g: (g * keep,))


def spmm(adj, h):
    """Sparse (CSR, constant) @ dense (Value). The sparse factor is data,
    not a differentiable input."""
    h = as_value(h)
    if h.data.ndim != 2 or adj.shape[1] != h.shape[0]:
        raise ShapeError(f"spmm: cannot multiply {adj.shape} @ {h.shape}")
    check_finite("spmm", h.data)
    out = Value(adj @ h.data)

    def backward_fn(g):
        return (adj.T @ g,)

    return record("spmm", out, (h,), backward_fn)


def reduce_sum(a, axis=None):
    """Sum over `axis` (or everything when None, yielding a scalar)."""
    a = as_value(a)
    check_finite("reduce_sum", a.data)
    out = Value(a.data.sum(axis=axis))

    def backward_fn(g):
        if axis is None:
            return (np.full_like(a.data, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return record("reduce_sum", out, (a,), backward_fn)


def cross_entropy(logits, labels, index_subset):
    """Mean negative log-likelihood of `labels` under softmax(logits),
    restricted to the rows in `index_subset`."""
    logits = as_value(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be (N, C), got {logits.shape}")
    n, c = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy: labels shape {labels.shape} != ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValidationError(f"cross_entropy: label out of range [0, {c})")
    idx = np.asarray(index_subset, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeError("cross_entropy: index_subset must be a non-empty vector")
    if idx.min() < 0 or idx.max() >= n:
        raise ShapeError(f"cross_entropy: subset index out of range [0, {n})")
    check_finite("cross_entropy", logits.data)

    sub = logits.data[idx]
    shifted = sub - sub.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    picked = log_p[np.arange(idx.size), labels[idx]]
    out = Value(-picked.mean())

    def backward_fn(g):
        p = np.exp(log_p)
        p[np.arange(idx.size), labels[idx]] -= 1.0
        gl = np.zeros_like(logits.data)
        np.add.at(gl, idx, p * (float(g) / idx.size))
        return (gl,)

    return record("cross_entropy", out, (logits,), backward_fn)
