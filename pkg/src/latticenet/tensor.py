"""Reverse-mode autodiff over dense float64 arrays.

A Tensor wraps a numpy array plus an optional gradient. Primitives record
their parents and a backward rule on a tape (the implicit graph of parent
references); ``backward`` walks the tape in reverse topological order.
Everything is float64 and deterministic: identical inputs give bit-identical
outputs.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DimensionError, InputError, UsageError


class Tensor:
    """Dense n-d array with an optional accumulated gradient.

    ``requires_grad`` is propagated: a result of an op requires grad iff any
    of its inputs does. Leaf tensors (no parents) accumulate into ``.grad``
    across repeated backward calls; interior nodes get their gradient from
    the most recent call.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 0 and min(self.data.shape, default=1) < 1:
            raise DimensionError(f"zero-sized extent in shape {self.data.shape}")
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        out.grad = None
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- elementwise arithmetic (identical shapes only; see _check_same_shape)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def sum(self):
        return tensor_sum(self)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _check_same_shape(a, b):
    if a.data.shape != b.data.shape:
        raise DimensionError(
            f"elementwise op needs identical shapes, got {a.data.shape} and {b.data.shape}"
        )


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b)
    return Tensor._from_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b)
    return Tensor._from_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    """Elementwise product; ``b`` may be a plain scalar/array constant."""
    if not isinstance(b, Tensor):
        return scale(a, b)
    _check_same_shape(a, b)
    return Tensor._from_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a, c):
    """Multiply by a constant scalar or ndarray (no gradient through c)."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim and c.shape != a.data.shape:
        raise DimensionError(f"constant shape {c.shape} != tensor shape {a.data.shape}")
    return Tensor._from_op(a.data * c, (a,), lambda g: (g * c,))


def tensor_sum(a):
    data = np.asarray(a.data.sum())
    return Tensor._from_op(data, (a,), lambda g: (np.broadcast_to(g, a.data.shape),))


def reshape(a, shape):
    old = a.data.shape
    return Tensor._from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def flatten_batch(a):
    """[N, ...] -> [N, D]."""
    n = a.data.shape[0]
    return reshape(a, (n, -1))


def concat(tensors, axis=1):
    tensors = list(tensors)
    if not tensors:
        raise InputError("concat of an empty tensor list")
    n = tensors[0].data.shape[0]
    for t in tensors:
        if t.data.shape[0] != n:
            raise DimensionError(
                f"concat batch extents differ: {n} vs {t.data.shape[0]}"
            )
    data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return Tensor._from_op(data, tensors, backward)


def relu(a):
    mask = a.data > 0
    return Tensor._from_op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def dense(x, weight, bias):
    """Affine map [N,D] @ [D,K] + [K]."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise DimensionError(
            f"dense expects 2-d input/weight, got {x.data.shape} and {weight.data.shape}"
        )
    if x.data.shape[1] != weight.data.shape[0]:
        raise DimensionError(
            f"dense inner extents disagree: {x.data.shape} vs {weight.data.shape}"
        )
    if bias.data.shape != (weight.data.shape[1],):
        raise DimensionError(
            f"dense bias shape {bias.data.shape} != ({weight.data.shape[1]},)"
        )
    data = x.data @ weight.data + bias.data

    def backward(g):
        return (g @ weight.data.T, x.data.T @ g, g.sum(axis=0))

    return Tensor._from_op(data, (x, weight, bias), backward)


def _conv_out_extent(extent, pad, k, stride, what):
    span = extent + 2 * pad - k
    if span < 0 or span % stride != 0:
        raise ConfigurationError(
            f"{what}: extent {extent} with pad {pad}, kernel {k}, stride {stride} "
            "gives a non-integer output extent"
        )
    return span // stride + 1


def _im2col(xp, kh, kw, stride, ho, wo):
    # (N, C, Hp, Wp) padded input -> window view (N, C, Ho, Wo, kh, kw)
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
    )


def conv2d(x, kernel, bias, stride=1, padding=0):
    """Cross-correlation of [N,C,H,W] with [F,C,kh,kw] plus per-filter bias."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise DimensionError(
            f"conv2d expects 4-d input/kernel, got {x.data.shape} and {kernel.data.shape}"
        )
    n, c, h, w = x.data.shape
    f, ck, kh, kw = kernel.data.shape
    if ck != c:
        raise DimensionError(f"conv2d channels: input has {c}, kernel expects {ck}")
    if bias.data.shape != (f,):
        raise DimensionError(f"conv2d bias shape {bias.data.shape} != ({f},)")
    ho = _conv_out_extent(h, padding, kh, stride, "conv2d height")
    wo = _conv_out_extent(w, padding, kw, stride, "conv2d width")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = _im2col(xp, kh, kw, stride, ho, wo)
    # (N*Ho*Wo, C*kh*kw) patch matrix
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * ho * wo, c * kh * kw
    )
    kflat = kernel.data.reshape(f, -1)
    out = (cols @ kflat.T + bias.data).reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def backward(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, f)
        gbias = gmat.sum(axis=0) if bias.requires_grad else None
        gkernel = (gmat.T @ cols).reshape(f, c, kh, kw) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gmat @ kflat).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                        :, :, :, :, i, j
                    ]
            gx = gxp[:, :, padding : padding + h, padding : padding + w]
            if padding:
                gx = np.ascontiguousarray(gx)
        return (gx, gkernel, gbias)

    return Tensor._from_op(np.ascontiguousarray(out), (x, kernel, bias), backward)


def _pool_windows(x, window, stride):
    if x.data.ndim != 4:
        raise DimensionError(f"pooling expects 4-d input, got {x.data.shape}")
    n, c, h, w = x.data.shape
    if window > h or window > w:
        raise ConfigurationError(f"pool window {window} exceeds input {h}x{w}")
    if (h - window) % stride != 0 or (w - window) % stride != 0:
        raise ConfigurationError(
            f"pool window {window}/stride {stride} does not tile input {h}x{w}"
        )
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    return _im2col(x.data, window, window, stride, ho, wo), ho, wo


def maxpool2d(x, window, stride=None):
    """Per-window maximum; gradient routes to the first (row-major) argmax."""
    stride = window if stride is None else stride
    windows, ho, wo = _pool_windows(x, window, stride)
    n, c = x.data.shape[:2]
    flat = np.ascontiguousarray(windows).reshape(n, c, ho, wo, window * window)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gx = np.zeros_like(x.data)
        nn, cc, hh, ww = np.indices(idx.shape, sparse=False)
        rows = hh * stride + idx // window
        colc = ww * stride + idx % window
        np.add.at(gx, (nn, cc, rows, colc), g)
        return (gx,)

    return Tensor._from_op(out, (x,), backward)


def avgpool2d(x, window, stride=None):
    stride = window if stride is None else stride
    windows, ho, wo = _pool_windows(x, window, stride)
    out = np.ascontiguousarray(windows).reshape(
        x.data.shape[0], x.data.shape[1], ho, wo, window * window
    ).mean(axis=-1)
    inv = 1.0 / (window * window)

    def backward(g):
        gx = np.zeros_like(x.data)
        gw = g * inv
        for i in range(window):
            for j in range(window):
                gx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gw
        return (gx,)

    return Tensor._from_op(out, (x,), backward)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood over [N,K] logits and integer labels."""
    if logits.data.ndim != 2:
        raise DimensionError(f"logits must be 2-d, got {logits.data.shape}")
    labels = np.asarray(labels)
    n, k = logits.data.shape
    if labels.shape != (n,):
        raise InputError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise InputError(f"label out of range [0, {k}): {labels.min()}..{labels.max()}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = np.asarray((lse - shifted[np.arange(n), labels]).mean())

    def backward(g):
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        probs[np.arange(n), labels] -= 1.0
        return (probs * (float(g) / n),)

    return Tensor._from_op(loss, (logits,), backward)


def backward(loss):
    """Accumulate dLoss/dTensor into every requires_grad leaf on the tape."""
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._parents:
            node.grad = g
            for parent, gp in zip(node._parents, node._backward(g)):
                if gp is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = gp if acc is None else acc + gp
        else:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad = node.grad + g


def numerical_grad(f, point, epsilon=1e-5):
    """Central finite differences of a scalar tensor function.

    Returns (grad, checkable) where ``checkable`` marks coordinates whose
    one-sided differences agree, i.e. the function is locally smooth there.
    """
    x = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    grad = np.zeros_like(x)
    checkable = np.ones(x.shape, dtype=bool)
    f0 = float(f(Tensor(x)).data)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        fp = float(f(Tensor(x)).data)
        flat[i] = orig - epsilon
        fm = float(f(Tensor(x)).data)
        flat[i] = orig
        central = (fp - fm) / (2 * epsilon)
        fwd = (fp - f0) / epsilon
        bwd = (f0 - fm) / epsilon
        grad.reshape(-1)[i] = central
        # A kink (e.g. relu at 0) makes the one-sided slopes disagree.
        if abs(fwd - bwd) > 1e-2 * max(1.0, abs(central)):
            checkable.reshape(-1)[i] = False
    return grad, checkable


def grad_check(f, point, epsilon=1e-5, return_details=False):
    """Max relative error between analytic and central-difference gradients.

    Coordinates where the function is not locally smooth are excluded.
    Error metric: |analytic - numeric| / max(1, |numeric|).
    """
    x = Tensor(np.array(point.data if isinstance(point, Tensor) else point), requires_grad=True)
    out = f(x)
    backward(out)
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
    numeric, checkable = numerical_grad(f, x, epsilon)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    max_err = float(err[checkable].max()) if checkable.any() else 0.0
    if return_details:
        return max_err, int(checkable.sum()), int((~checkable).sum())
    return max_err
