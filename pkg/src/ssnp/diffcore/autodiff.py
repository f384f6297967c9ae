"""Reverse-mode automatic differentiation on dense float64 arrays.

A `Tape` records every primitive operation in execution order; `backward`
replays the record in reverse, so the topological order is simply the
creation order. Arrays are immutable once created and ops are deterministic
functions of their inputs, which keeps whole training runs bit-reproducible.

Convolutions are evaluated as matrix products (im2col gather / bincount
scatter); transposed convolutions are restricted to kernel == stride, where
they reduce to block reshapes around a single matmul.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Incompatible operand shapes for a primitive operation."""

    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """Value node on a tape. `data` is never mutated after construction."""

    __slots__ = ("data", "grad", "tape", "_backward")

    def __init__(self, data: np.ndarray, tape: "Tape | None"):
        self.data = data
        self.grad: np.ndarray | None = None
        self.tape = tape
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g: np.ndarray) -> None:
        # First write copies: closures may hand us views of shared buffers.
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


class Tape:
    """Execution record plus the parameter leaves touched by this pass."""

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._param_leaves: dict[str, Tensor] = {}

    def const(self, data) -> Tensor:
        return Tensor(_as_f64(data), self)

    def param(self, store, name: str) -> Tensor:
        """Leaf tensor bound to a named parameter (cached per tape).

        The leaf's gradient aliases the store's accumulator, so backward
        writes parameter gradients into the store directly."""
        leaf = self._param_leaves.get(name)
        if leaf is None:
            leaf = Tensor(store.value(name), self)
            leaf.grad = store.grad(name)
            self._param_leaves[name] = leaf
        return leaf

    def _record(self, out: Tensor, backward) -> Tensor:
        out._backward = backward
        self._nodes.append(out)
        return out


def _tape_of(*ts: Tensor) -> Tape:
    for t in ts:
        if t.tape is not None:
            return t.tape
    raise ValueError("operation requires at least one tape-bound tensor")


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) for every node reachable from `loss`.

    Parameter gradients land in the stores their leaves were bound to;
    parameters that never joined the tape keep whatever gradient they
    already had (zero after a reset).
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape._nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise / reduction primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError("add", a.data.shape, b.data.shape)
    t = _tape_of(a, b)
    out = Tensor(a.data + b.data, t)

    def _bw(g):
        a._accum(g)
        b._accum(g)

    return t._record(out, _bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError("sub", a.data.shape, b.data.shape)
    t = _tape_of(a, b)
    out = Tensor(a.data - b.data, t)

    def _bw(g):
        a._accum(g)
        b._accum(-g)

    return t._record(out, _bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError("mul", a.data.shape, b.data.shape)
    t = _tape_of(a, b)
    out = Tensor(a.data * b.data, t)

    def _bw(g):
        a._accum(g * b.data)
        b._accum(g * a.data)

    return t._record(out, _bw)


def scale(a: Tensor, k: float) -> Tensor:
    t = _tape_of(a)
    out = Tensor(a.data * k, t)

    def _bw(g):
        a._accum(g * k)

    return t._record(out, _bw)


def relu(a: Tensor) -> Tensor:
    t = _tape_of(a)
    out = Tensor(np.maximum(a.data, 0.0), t)

    def _bw(g):
        a._accum(g * (a.data > 0.0))

    return t._record(out, _bw)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values to [lo, hi]; gradient is zero outside the band."""
    t = _tape_of(a)
    out = Tensor(np.minimum(np.maximum(a.data, lo), hi), t)

    def _bw(g):
        a._accum(g * ((a.data >= lo) & (a.data <= hi)))

    return t._record(out, _bw)


def sum_all(a: Tensor) -> Tensor:
    t = _tape_of(a)
    out = Tensor(np.asarray(a.data.sum()), t)

    def _bw(g):
        a._accum(np.broadcast_to(g, a.data.shape))

    return t._record(out, _bw)


def detach(a: Tensor) -> Tensor:
    """Constant copy of `a`: value flows forward, gradients stop here."""
    t = _tape_of(a)
    return Tensor(a.data, t)


# ---------------------------------------------------------------------------
# structural primitives
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    t = _tape_of(a)
    out = Tensor(a.data.reshape(shape), t)

    def _bw(g):
        a._accum(g.reshape(a.data.shape))

    return t._record(out, _bw)


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ValueError("concat of zero tensors")
    t = _tape_of(*parts)
    datas = [p.data for p in parts]
    ref = datas[0].shape
    for d in datas[1:]:
        if len(d.shape) != len(ref):
            raise ShapeError("concat", ref, d.shape)
    out = Tensor(np.concatenate(datas, axis=axis), t)
    sizes = [d.shape[axis] for d in datas]

    def _bw(g):
        offset = 0
        for p, n in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + n)
            p._accum(g[tuple(sl)])
            offset += n

    return t._record(out, _bw)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    t = _tape_of(a)
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    out = Tensor(a.data[sl], t)

    def _bw(g):
        full = np.zeros_like(a.data)
        full[sl] = g
        a._accum(full)

    return t._record(out, _bw)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows by (unique) indices; gradient scatters back."""
    if a.data.ndim != 2:
        raise ShapeError("gather_rows", a.data.shape)
    idx = np.asarray(idx, dtype=np.intp)
    t = _tape_of(a)
    out = Tensor(a.data[idx], t)

    def _bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        a._accum(full)

    return t._record(out, _bw)


def broadcast_row(v: Tensor, n: int) -> Tensor:
    """Repeat a d-vector into an (n, d) matrix."""
    if v.data.ndim != 1:
        raise ShapeError("broadcast_row", v.data.shape)
    t = _tape_of(v)
    out = Tensor(np.broadcast_to(v.data, (n, v.data.shape[0])).copy(), t)

    def _bw(g):
        v._accum(g.sum(axis=0))

    return t._record(out, _bw)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; either operand may be a vector (row / column)."""
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2) \
            or a.data.ndim + b.data.ndim < 3 or a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError("matmul", a.data.shape, b.data.shape)
    t = _tape_of(a, b)
    out = Tensor(a.data @ b.data, t)

    def _bw(g):
        if a.data.ndim == 1:       # (d,) @ (d, k)
            a._accum(b.data @ g)
            b._accum(np.outer(a.data, g))
        elif b.data.ndim == 1:     # (n, d) @ (d,)
            a._accum(np.outer(g, b.data))
            b._accum(a.data.T @ g)
        else:
            a._accum(g @ b.data.T)
            b._accum(a.data.T @ g)

    return t._record(out, _bw)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a vector bias to each row (or to a bare vector)."""
    if b.data.ndim != 1 or x.data.shape[-1] != b.data.shape[0]:
        raise ShapeError("add_bias", x.data.shape, b.data.shape)
    t = _tape_of(x, b)
    out = Tensor(x.data + b.data, t)

    def _bw(g):
        x._accum(g)
        b._accum(g.sum(axis=tuple(range(g.ndim - 1))) if g.ndim > 1 else g)

    return t._record(out, _bw)


def affine(x: Tensor, w: Tensor, b: Tensor, relu_after: bool = False) -> Tensor:
    """Fused x @ w + b with optional rectification (one tape node)."""
    if b.data.ndim != 1 or w.data.ndim != 2 or x.data.ndim not in (1, 2) \
            or x.data.shape[-1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[0]:
        raise ShapeError("affine", x.data.shape, w.data.shape, b.data.shape)
    t = _tape_of(x, w, b)
    y = x.data @ w.data + b.data
    if relu_after:
        y = np.maximum(y, 0.0)
    out = Tensor(y, t)

    def _bw(g):
        gy = g * (y > 0.0) if relu_after else g
        if x.data.ndim == 1:
            x._accum(w.data @ gy)
            w._accum(np.outer(x.data, gy))
            b._accum(gy)
        else:
            x._accum(gy @ w.data.T)
            w._accum(x.data.T @ gy)
            b._accum(gy.sum(axis=0))

    return t._record(out, _bw)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

_COL_INDEX_CACHE: dict[tuple, np.ndarray] = {}
_SCATTER_INDEX_CACHE: dict[tuple, np.ndarray] = {}


def _col_indices(hp: int, wp: int, c: int, kh: int, kw: int, stride: int) -> np.ndarray:
    """Flat gather indices into a padded (hp, wp, c) image, one row per output
    position, one column per (kh, kw, c) tap."""
    key = (hp, wp, c, kh, kw, stride)
    idx = _COL_INDEX_CACHE.get(key)
    if idx is None:
        ho = (hp - kh) // stride + 1
        wo = (wp - kw) // stride + 1
        i0 = np.arange(ho) * stride
        j0 = np.arange(wo) * stride
        di = np.arange(kh)
        dj = np.arange(kw)
        ci = np.arange(c)
        rows = (i0[:, None, None, None, None] + di[None, None, :, None, None]) * (wp * c)
        cols = (j0[None, :, None, None, None] + dj[None, None, None, :, None]) * c
        idx = (rows + cols + ci[None, None, None, None, :]).reshape(ho * wo, kh * kw * c)
        _COL_INDEX_CACHE[key] = idx
    return idx


def _scatter_indices(n: int, hp: int, wp: int, c: int, kh: int, kw: int, stride: int) -> np.ndarray:
    """Raveled batch-inclusive version of `_col_indices` for bincount scatter."""
    key = (n, hp, wp, c, kh, kw, stride)
    flat = _SCATTER_INDEX_CACHE.get(key)
    if flat is None:
        idx = _col_indices(hp, wp, c, kh, kw, stride)
        flat = (idx[None, :, :] + (np.arange(n) * (hp * wp * c))[:, None, None]).ravel()
        _SCATTER_INDEX_CACHE[key] = flat
    return flat


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int, padding: int = 0,
           relu_after: bool = False) -> Tensor:
    """2-D convolution, channels last: (n, h, w, cin) * (kh, kw, cin, cout)."""
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[3] != w.data.shape[2]:
        raise ShapeError("conv2d", x.data.shape, w.data.shape)
    kh, kw, cin, cout = w.data.shape
    n, h, wd, _ = x.data.shape
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else x.data
    hp, wp = h + 2 * padding, wd + 2 * padding
    if hp < kh or wp < kw:
        raise ShapeError("conv2d", x.data.shape, w.data.shape)
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    idx = _col_indices(hp, wp, cin, kh, kw, stride)
    cols2 = np.take(xp.reshape(n, hp * wp * cin), idx, axis=1).reshape(n * ho * wo, kh * kw * cin)
    wmat = w.data.reshape(kh * kw * cin, cout)
    y = (cols2 @ wmat + b.data).reshape(n, ho, wo, cout)
    if relu_after:
        y = np.maximum(y, 0.0)
    t = _tape_of(x, w, b)
    out = Tensor(y, t)

    def _bw(g):
        if relu_after:
            g = g * (y > 0.0)
        g2 = g.reshape(n * ho * wo, cout)
        w._accum((cols2.T @ g2).reshape(w.data.shape))
        b._accum(g2.sum(axis=0))
        dcols = (g2 @ wmat.T).reshape(n, ho, wo, kh, kw, cin)
        dxp = np.zeros((n, hp, wp, cin))
        for di in range(kh):
            for dj in range(kw):
                dxp[:, di : di + stride * ho : stride, dj : dj + stride * wo : stride, :] += dcols[:, :, :, di, dj, :]
        if padding:
            dxp = dxp[:, padding:-padding, padding:-padding, :]
        x._accum(dxp)

    return t._record(out, _bw)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor, factor: int,
                     relu_after: bool = False) -> Tensor:
    """Transposed convolution with kernel size == stride == `factor`.

    Non-overlapped output blocks make both directions single matmuls.
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[3] != w.data.shape[2]:
        raise ShapeError("conv_transpose2d", x.data.shape, w.data.shape)
    kh, kw, cin, cout = w.data.shape
    if kh != factor or kw != factor:
        raise ValueError(f"conv_transpose2d: kernel {kh}x{kw} must equal stride {factor}")
    n, hi, wi, _ = x.data.shape
    xf = x.data.reshape(n * hi * wi, cin)
    wmat = w.data.transpose(2, 0, 1, 3).reshape(cin, kh * kw * cout)
    blocks = (xf @ wmat).reshape(n, hi, wi, kh, kw, cout)
    y = blocks.transpose(0, 1, 3, 2, 4, 5).reshape(n, hi * kh, wi * kw, cout) + b.data
    if relu_after:
        y = np.maximum(y, 0.0)
    t = _tape_of(x, w, b)
    out = Tensor(y, t)

    def _bw(g):
        if relu_after:
            g = g * (y > 0.0)
        gb = g.reshape(n, hi, kh, wi, kw, cout).transpose(0, 1, 3, 2, 4, 5)
        g2 = np.ascontiguousarray(gb).reshape(n * hi * wi, kh * kw * cout)
        x._accum((g2 @ wmat.T).reshape(x.data.shape))
        w._accum((xf.T @ g2).reshape(cin, kh, kw, cout).transpose(1, 2, 0, 3))
        b._accum(g2.sum(axis=0).reshape(kh * kw, cout).sum(axis=0))

    return t._record(out, _bw)


# ---------------------------------------------------------------------------
# set pooling and losses
# ---------------------------------------------------------------------------


def mean_pool_set(x: Tensor) -> Tensor:
    """Mean over the set axis (rows) with compensated summation, so the
    result is permutation-invariant to ~1e-15."""
    if x.data.ndim != 2:
        raise ShapeError("mean_pool_set", x.data.shape)
    m = x.data.shape[0]
    if m == 0:
        raise ValueError("mean_pool_set: empty set")
    s = np.zeros(x.data.shape[1])
    comp = np.zeros_like(s)
    for i in range(m):
        y = x.data[i] - comp
        tt = s + y
        comp = (tt - s) - y
        s = tt
    t = _tape_of(x)
    out = Tensor(s / m, t)

    def _bw(g):
        x._accum(np.broadcast_to(g / m, x.data.shape))

    return t._record(out, _bw)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if pred.data.shape != target.data.shape:
        raise ShapeError("mse", pred.data.shape, target.data.shape)
    t = _tape_of(pred, target)
    diff = pred.data - target.data
    out = Tensor(np.asarray(np.mean(diff * diff)), t)
    inv = 2.0 / diff.size

    def _bw(g):
        d = g * inv * diff
        pred._accum(d)
        target._accum(-d)

    return t._record(out, _bw)


def bernoulli_nll(logits: Tensor, targets: Tensor) -> Tensor:
    """Total negative Bernoulli log-likelihood, numerically stable form."""
    if logits.data.shape != targets.data.shape:
        raise ShapeError("bernoulli_nll", logits.data.shape, targets.data.shape)
    ld = logits.data
    td = targets.data
    nll = np.maximum(ld, 0.0) - ld * td + np.log1p(np.exp(-np.abs(ld)))
    t = _tape_of(logits, targets)
    out = Tensor(np.asarray(nll.sum()), t)

    def _bw(g):
        sig = 1.0 / (1.0 + np.exp(-ld))
        logits._accum(g * (sig - td))
        targets._accum(g * (-ld))

    return t._record(out, _bw)


def kl_diag(q_mean: Tensor, q_logvar: Tensor, p_mean: Tensor, p_logvar: Tensor) -> Tensor:
    """Sum of KL(q || p) over all rows for diagonal Gaussians.

    `p` may be a single d-vector paired against a (m, d) batch of `q` rows.
    """
    qm, qlv, pm, plv = q_mean.data, q_logvar.data, p_mean.data, p_logvar.data
    if qm.shape != qlv.shape or pm.shape != plv.shape or qm.shape[-1] != pm.shape[-1]:
        raise ShapeError("kl_diag", qm.shape, pm.shape)
    if not (pm.shape == qm.shape or pm.ndim == 1):
        raise ShapeError("kl_diag", qm.shape, pm.shape)
    dlv = qlv - plv
    dmu = qm - pm
    e_nplv = np.exp(-plv)
    # expm1 keeps each element nonnegative under rounding when q ~= p.
    term = (np.expm1(dlv) - dlv) + dmu * dmu * e_nplv
    e_dlv = np.exp(dlv)
    t = _tape_of(q_mean, q_logvar, p_mean, p_logvar)
    out = Tensor(np.asarray(max(0.5 * term.sum(), 0.0)), t)
    reduce_p = pm.shape != qm.shape

    def _bw(g):
        dqm = g * dmu * e_nplv
        dqlv = g * 0.5 * (e_dlv - 1.0)
        dplv = g * 0.5 * (1.0 - e_dlv - dmu * dmu * e_nplv)
        q_mean._accum(dqm)
        q_logvar._accum(dqlv)
        if reduce_p:
            p_mean._accum((-dqm).sum(axis=0))
            p_logvar._accum(dplv.sum(axis=0))
        else:
            p_mean._accum(-dqm)
            p_logvar._accum(dplv)

    return t._record(out, _bw)


def gauss_sample(mean: Tensor, logvar: Tensor, eps: np.ndarray) -> Tensor:
    """Reparameterized sample mean + exp(logvar / 2) * eps.

    Gradients flow into mean and logvar; eps is a fixed noise array.
    """
    if mean.data.shape != logvar.data.shape or mean.data.shape != eps.shape:
        raise ShapeError("gauss_sample", mean.data.shape, logvar.data.shape, eps.shape)
    std = np.exp(0.5 * logvar.data)
    t = _tape_of(mean, logvar)
    out = Tensor(mean.data + std * eps, t)

    def _bw(g):
        mean._accum(g)
        logvar._accum(g * 0.5 * std * eps)

    return t._record(out, _bw)
