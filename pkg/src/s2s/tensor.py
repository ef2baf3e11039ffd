"""Dense tensors with reverse-mode automatic differentiation, on numpy.

This is the numerical substrate for the whole package: a graph-recording
Tensor, convolution primitives (im2col + one GEMM per call), elementwise
activations, numerically stable losses, and Adam.

Training runs in float32. Every op keeps the dtype it is handed, so the
gradient-check tests simply build float64 tensors and get float64 math.
Image layout is (batch, channel, height, width), row-major.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    """N-dimensional array plus optional gradient and backward linkage.

    ``grad`` is allocated lazily on first accumulation and always matches
    ``data`` in shape. Intermediate nodes record their parents and a
    closure that pushes the output gradient back to them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward_fn = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        """Same data, no graph. Shares the underlying array."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward_fn = None
        return out

    def zero_grad(self):
        self.grad = None

    # -- autodiff plumbing ---------------------------------------------------

    def backward(self):
        """Reverse-mode sweep from a scalar loss; accumulates into .grad.

        The graph is single-use: after the sweep every visited node drops
        its parent links and closure, so activations and im2col buffers are
        freed by refcount instead of waiting on the cycle collector.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        self.grad = np.ones_like(self.data)
        order = _topo_order(self)
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn()
        for node in order:
            node._backward_fn = None
            node._parents = ()

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = _ensure_tensor(other, self.dtype)
        out = _from_op(self.data + other.data, (self, other))

        def bw():
            _accumulate(self, _unbroadcast(out.grad, self.data.shape))
            _accumulate(other, _unbroadcast(out.grad, other.data.shape))

        return _attach(out, bw)

    __radd__ = __add__

    def __mul__(self, other):
        other = _ensure_tensor(other, self.dtype)
        out = _from_op(self.data * other.data, (self, other))

        def bw():
            _accumulate(self, _unbroadcast(other.data * out.grad, self.data.shape))
            _accumulate(other, _unbroadcast(self.data * out.grad, other.data.shape))

        return _attach(out, bw)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-_ensure_tensor(other, self.dtype))

    def __rsub__(self, other):
        return _ensure_tensor(other, self.dtype) + (-self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _from_op(self.data.reshape(shape), (self,))

        def bw():
            _accumulate(self, out.grad.reshape(self.data.shape))

        return _attach(out, bw)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = _from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(self, np.broadcast_to(g, self.data.shape))

        return _attach(out, bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.mean(axis=axis, keepdims=keepdims)
        out = _from_op(out_data, (self,))
        scale = out_data.size / self.data.size

        def bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(self, np.broadcast_to(g * scale, self.data.shape))

        return _attach(out, bw)


def _ensure_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _from_op(data: np.ndarray, parents: Sequence[Tensor]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._backward_fn = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
    else:
        out.requires_grad = False
        out._parents = ()
    return out


def _attach(out: Tensor, backward_fn) -> Tensor:
    if out.requires_grad:
        out._backward_fn = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g)  # owned, writable copy
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gs, ts) in enumerate(zip(g.shape, shape)):
        if gs != ts:
            g = g.sum(axis=i, keepdims=True)
    return g


def _topo_order(root: Tensor) -> list:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, emit = stack.pop()
        if emit:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


# -- activations ---------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    out = _from_op(np.maximum(x.data, 0), (x,))

    def bw():
        _accumulate(x, (x.data > 0).astype(x.data.dtype) * out.grad)

    return _attach(out, bw)


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    out = _from_op(np.where(x.data > 0, x.data, alpha * x.data), (x,))

    def bw():
        slope = np.where(x.data > 0, 1.0, alpha).astype(x.data.dtype)
        _accumulate(x, slope * out.grad)

    return _attach(out, bw)


def tanh(x: Tensor) -> Tensor:
    out = _from_op(np.tanh(x.data), (x,))

    def bw():
        _accumulate(x, (1.0 - out.data * out.data) * out.grad)

    return _attach(out, bw)


def sigmoid(x: Tensor) -> Tensor:
    out = _from_op(_stable_sigmoid(x.data), (x,))

    def bw():
        _accumulate(x, out.data * (1.0 - out.data) * out.grad)

    return _attach(out, bw)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    pos = z >= 0
    out = np.empty_like(z)
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACTIVATIONS = {
    "relu": relu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def activation(x: Tensor, kind: str, alpha: float = 0.2) -> Tensor:
    """Elementwise activation dispatcher; leaky_relu takes the slope alpha."""
    if kind == "leaky_relu":
        return leaky_relu(x, alpha)
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def sqrt(x: Tensor) -> Tensor:
    out = _from_op(np.sqrt(x.data), (x,))

    def bw():
        _accumulate(x, out.grad / (2.0 * out.data))

    return _attach(out, bw)


def rsqrt(x: Tensor) -> Tensor:
    """1/sqrt(x), used by normalization."""
    out = _from_op(1.0 / np.sqrt(x.data), (x,))

    def bw():
        _accumulate(x, -0.5 * out.data ** 3 * out.grad)

    return _attach(out, bw)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along an axis; gradient splits back per input extent."""
    tensors = list(tensors)
    out = _from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors)

    def bw():
        start = 0
        for t in tensors:
            size = t.data.shape[axis]
            sl = [slice(None)] * out.grad.ndim
            sl[axis] = slice(start, start + size)
            _accumulate(t, out.grad[tuple(sl)])
            start += size

    return _attach(out, bw)


# -- convolution primitives ------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, hout: int, wout: int) -> np.ndarray:
    """(B,C,Hp,Wp) -> (C*kh*kw, B*hout*wout) patch matrix.

    The batch is folded into the GEMM's long axis so every call is a single
    large 2D matmul even when the spatial map has shrunk to 1x1.
    """
    b, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, kh, kw, hout, wout),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )
    return view.transpose(1, 2, 3, 0, 4, 5).reshape(c * kh * kw, b * hout * wout)


def _col2im(cols: np.ndarray, shape: tuple, kh: int, kw: int, stride: int,
            hout: int, wout: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patches back onto the padded grid."""
    b, c, hp, wp = shape
    out = np.zeros(shape, dtype=cols.dtype)
    cols6 = cols.reshape(c, kh, kw, b, hout, wout).transpose(3, 0, 1, 2, 4, 5)
    for u in range(kh):
        hu = u + stride * (hout - 1) + 1
        for v in range(kw):
            wv = v + stride * (wout - 1) + 1
            out[:, :, u:hu:stride, v:wv:stride] += cols6[:, :, u, v]
    return out


def _to_flat(x: np.ndarray) -> np.ndarray:
    """(B,C,H,W) -> (C, B*H*W)."""
    b, c, h, w = x.shape
    return x.transpose(1, 0, 2, 3).reshape(c, b * h * w)


def _from_flat(x2: np.ndarray, b: int, h: int, w: int) -> np.ndarray:
    """(C, B*H*W) -> contiguous (B,C,H,W)."""
    c = x2.shape[0]
    return np.ascontiguousarray(x2.reshape(c, b, h, w).transpose(1, 0, 2, 3))


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of (B,Cin,H,W) with (Cout,Cin,kH,kW).

    Output spatial size is floor((H + 2*pad - kH)/stride) + 1. Differentiable
    in x, weight, and bias.
    """
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if pad < 0:
        raise ValueError(f"pad must be non-negative, got {pad}")
    b, cin, h, w = x.data.shape
    cout, cin_w, kh, kw = weight.data.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {cin_w}")
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}"
        )
    hout = (h + 2 * pad - kh) // stride + 1
    wout = (w + 2 * pad - kw) // stride + 1

    xp = _pad_hw(x.data, pad)
    cols = _im2col(xp, kh, kw, stride, hout, wout)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    out_data = _from_flat(wmat @ cols, b, hout, wout)
    if bias is not None:
        out_data += bias.data.reshape(1, cout, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _from_op(out_data, parents)

    def bw():
        g2 = _to_flat(out.grad)
        if weight.requires_grad:
            _accumulate(weight, (g2 @ cols.T).reshape(weight.data.shape))
        if x.requires_grad:
            gx = _col2im(wmat.T @ g2, xp.shape, kh, kw, stride, hout, wout)
            if pad:
                gx = gx[:, :, pad:pad + h, pad:pad + w]
            _accumulate(x, gx)
        if bias is not None and bias.requires_grad:
            _accumulate(bias, out.grad.sum(axis=(0, 2, 3)))

    return _attach(out, bw)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                     stride: int = 1, pad: int = 0) -> Tensor:
    """Linear adjoint of conv2d at the same (stride, pad).

    Weight layout is (Cin, Cout, kH, kW); output spatial size is
    (H - 1)*stride - 2*pad + kH. For zero bias and compatible shapes,
    <conv2d(a, w), b> == <a, conv_transpose2d(b, w)>.
    """
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if pad < 0:
        raise ValueError(f"pad must be non-negative, got {pad}")
    b, cin, hin, win = x.data.shape
    cin_w, cout, kh, kw = weight.data.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv_transpose2d: input has {cin} channels, weight expects {cin_w}"
        )
    hout = (hin - 1) * stride - 2 * pad + kh
    wout = (win - 1) * stride - 2 * pad + kw
    if hout < 1 or wout < 1:
        raise ShapeError(f"conv_transpose2d: output size {hout}x{wout} is empty")

    wmat = weight.data.reshape(cin, cout * kh * kw)
    xmat = _to_flat(x.data)
    cols = wmat.T @ xmat
    padded_shape = (b, cout, hout + 2 * pad, wout + 2 * pad)
    out_data = _col2im(cols, padded_shape, kh, kw, stride, hin, win)
    if pad:
        out_data = np.ascontiguousarray(out_data[:, :, pad:pad + hout, pad:pad + wout])
    if bias is not None:
        out_data += bias.data.reshape(1, cout, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _from_op(out_data, parents)

    def bw():
        gp = _pad_hw(out.grad, pad)
        gcols = _im2col(gp, kh, kw, stride, hin, win)
        if x.requires_grad:
            _accumulate(x, _from_flat(wmat @ gcols, b, hin, win))
        if weight.requires_grad:
            _accumulate(weight, (xmat @ gcols.T).reshape(weight.data.shape))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, out.grad.sum(axis=(0, 2, 3)))

    return _attach(out, bw)


# -- normalization -----------------------------------------------------------


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5,
               training: bool = True, running_mean: Optional[np.ndarray] = None,
               running_var: Optional[np.ndarray] = None,
               momentum: float = 0.1) -> Tensor:
    """Per-channel batch normalization over (B, H, W), fused single node.

    Train mode normalizes by batch statistics (population variance) and
    folds them into the running buffers in place; eval mode normalizes by
    the running buffers. gamma and beta have shape (C,).
    """
    c = x.data.shape[1]
    axes = (0, 2, 3)
    g4 = gamma.data.reshape(1, c, 1, 1)
    b4 = beta.data.reshape(1, c, 1, 1)
    if training:
        mu = x.data.mean(axis=axes, keepdims=True)
        centered = x.data - mu
        var = np.mean(centered * centered, axis=axes, keepdims=True)
        if running_mean is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu.reshape(c)
        if running_var is not None:
            running_var *= 1.0 - momentum
            running_var += momentum * var.reshape(c)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv
    else:
        if running_mean is None or running_var is None:
            raise ValueError("eval-mode batch_norm requires running statistics")
        inv = (1.0 / np.sqrt(running_var + eps)).reshape(1, c, 1, 1).astype(x.dtype)
        xhat = (x.data - running_mean.reshape(1, c, 1, 1)) * inv

    out = _from_op(g4 * xhat + b4, (x, gamma, beta))

    def bw():
        go = out.grad
        if gamma.requires_grad:
            _accumulate(gamma, (go * xhat).sum(axis=axes))
        if beta.requires_grad:
            _accumulate(beta, go.sum(axis=axes))
        if x.requires_grad:
            if training:
                # dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
                dxhat = go * g4
                m1 = dxhat.mean(axis=axes, keepdims=True)
                m2 = (dxhat * xhat).mean(axis=axes, keepdims=True)
                _accumulate(x, inv * (dxhat - m1 - xhat * m2))
            else:
                _accumulate(x, go * (g4 * inv))

    return _attach(out, bw)


# -- losses ------------------------------------------------------------------


def bce_with_logits(logits: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross-entropy from raw logits, softplus form.

    Elementwise max(z,0) - z*t + log(1 + exp(-|z|)); stays finite for |z|
    up to at least 1e4. Gradient w.r.t. logits is (sigmoid(z) - t)/n.
    """
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=logits.dtype)
    z = logits.data
    if z.shape != t.shape:
        raise ShapeError(f"bce_with_logits: logits {z.shape} vs target {t.shape}")
    elem = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out = _from_op(np.asarray(elem.mean()), (logits,))

    def bw():
        n = z.size
        _accumulate(logits, (_stable_sigmoid(z) - t) * (out.grad / n))

    return _attach(out, bw)


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference; the subgradient at ties is 0."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l1_loss: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    out = _from_op(np.asarray(np.abs(diff).mean()), (a, b))

    def bw():
        g = np.sign(diff) * (out.grad / diff.size)
        _accumulate(a, g)
        _accumulate(b, -g)

    return _attach(out, bw)


# -- optimizer ---------------------------------------------------------------


class Adam:
    """Standard Adam with bias correction.

    Moment buffers start at zero; step_count increments by exactly one per
    step. Parameters with no accumulated gradient are treated as having a
    zero gradient.
    """

    def __init__(self, params: Iterable[Tensor], lr: float = 2e-4,
                 beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self._scratch = [np.empty_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.step_count
        bc2 = 1.0 - b2 ** self.step_count
        for p, m, v, s in zip(self.params, self._m, self._v, self._scratch):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            np.multiply(m, b1, out=m)
            np.multiply(g, 1.0 - b1, out=s)
            np.add(m, s, out=m)
            np.multiply(v, b2, out=v)
            np.multiply(g, g, out=s)
            np.multiply(s, 1.0 - b2, out=s)
            np.add(v, s, out=v)
            np.divide(v, bc2, out=s)
            np.sqrt(s, out=s)
            np.add(s, self.eps, out=s)
            np.divide(m, s, out=s)
            np.multiply(s, self.lr / bc1, out=s)
            np.subtract(p.data, s, out=p.data)
