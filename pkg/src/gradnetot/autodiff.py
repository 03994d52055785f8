"""Tape-based reverse-mode differentiation over numpy arrays.

A :class:`Tape` records a closed set of array operations. Values carry any
leading batch axes the caller wants (e.g. ``(B, d, d)`` stacks of Jacobians);
binary elementwise ops follow numpy broadcasting and reduce their adjoints
back to the operand shape.

Example
-------
>>> import numpy as np
>>> from gradnetot import autodiff as ad
>>> tape = ad.Tape()
>>> W = tape.leaf(np.eye(2), requires_grad=True)
>>> loss = ad.sum(ad.square(W @ np.ones((2, 1))))
>>> tape.backward(loss)
>>> W.grad
array([[2., 2.],
       [2., 2.]])
"""

import numpy as np
from scipy.special import expit, logsumexp as _logsumexp

from . import linalg
from .errors import DimensionMismatch, DoubleBackward, NonScalarRoot, NotPositiveDefinite, UnsupportedActivation


def _softplus(z):
    return np.logaddexp(0.0, z)


class Activation:
    """Elementwise function with derivatives of order -1 (antiderivative) through 3.

    Every order is computed from ``z`` and a shared base value ``t = base(z)``
    (``tanh`` or the logistic function) so a tape can evaluate the base once.
    """

    def __init__(self, name, base, ladder):
        self.name = name
        self.base = base
        self._ladder = ladder  # index order + 1; None means no closed form

    def has(self, order):
        return -1 <= order <= 3 and self._ladder[order + 1] is not None

    def __call__(self, z, order=0, t=None):
        if not -1 <= order <= 3:
            raise ValueError(f"derivative order {order} not available")
        fn = self._ladder[order + 1]
        if fn is None:
            raise UnsupportedActivation(f"{self.name} has no closed-form antiderivative")
        return fn(z, self.base(z) if t is None else t)


def _sig_d1(z, s):
    return s * (1.0 - s)


def _sig_d2(z, s):
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def _sig_d3(z, s):
    u = s * (1.0 - s)
    return u * (1.0 - 2.0 * s) ** 2 - 2.0 * u * u


ACTIVATIONS = {
    "tanh": Activation(
        "tanh",
        np.tanh,
        (
            # log cosh z = |z| - log(1 + |tanh z|), stable for all z
            lambda z, t: np.abs(z) - np.log1p(np.abs(t)),
            lambda z, t: t,
            lambda z, t: 1.0 - t * t,
            lambda z, t: -2.0 * t * (1.0 - t * t),
            lambda z, t: (1.0 - t * t) * (6.0 * t * t - 2.0),
        ),
    ),
    "sigmoid": Activation(
        "sigmoid",
        expit,
        (lambda z, s: _softplus(z), lambda z, s: s, _sig_d1, _sig_d2, _sig_d3),
    ),
    "softplus": Activation(
        "softplus",
        expit,
        (None, lambda z, s: _softplus(z), lambda z, s: s, _sig_d1, _sig_d2),
    ),
}


def activation_fn(name, order=0):
    """Plain-array evaluation of ``name`` differentiated ``order`` times (``-1`` = antiderivative)."""
    try:
        act = ACTIVATIONS[name]
    except KeyError:
        raise UnsupportedActivation(f"unknown activation {name!r}") from None
    if not -1 <= order <= 3:
        raise ValueError(f"derivative order {order} not available")
    if not act.has(order):
        raise UnsupportedActivation(f"{name} has no closed-form antiderivative")
    return lambda z: act(z, order)


class Node:
    """A recorded value on a :class:`Tape`."""

    __slots__ = ("tape", "index", "op", "parents", "value", "requires_grad", "grad", "_vjp", "_base")

    def __init__(self, tape, index, op, parents, value, requires_grad, vjp):
        self.tape = tape
        self.index = index
        self.op = op
        self.parents = parents
        self.value = value
        self.requires_grad = requires_grad
        self.grad = None
        self._vjp = vjp
        self._base = {}

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape}, index={self.index})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return mul(other, self)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


class Tape:
    """Append-only record of operations; one backward pass per recording."""

    def __init__(self):
        self.nodes = []
        self._backward_done = False
        self._bound = {}

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value, requires_grad=False):
        value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ValueError("leaf value must be finite")
        return self._record("leaf", value, (), None, requires_grad)

    def const(self, value):
        return self.leaf(value, requires_grad=False)

    def bind(self, net):
        """Leaves for ``net.params`` on this tape, created once and then reused."""
        key = id(net)
        if key not in self._bound:
            self._bound[key] = (net, {k: self.leaf(v, requires_grad=True) for k, v in net.params.items()})
        return self._bound[key][1]

    def _record(self, op, value, parents, vjp, requires_grad=None):
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        node = Node(self, len(self.nodes), op, parents, value, requires_grad, vjp if requires_grad else None)
        self.nodes.append(node)
        return node

    def backward(self, root):
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        if root.value.size != 1:
            raise NonScalarRoot(f"backward root must be scalar, got shape {root.value.shape}")
        if self._backward_done:
            raise DoubleBackward("backward already ran on this tape; call reset() first")
        self._backward_done = True
        adj = [None] * (root.index + 1)
        adj[root.index] = np.ones_like(root.value)
        for i in range(root.index, -1, -1):
            node = self.nodes[i]
            g = adj[i]
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node.parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                j = parent.index
                adj[j] = pg if adj[j] is None else adj[j] + pg
        for node in self.nodes:
            if node.requires_grad:
                g = adj[node.index] if node.index < len(adj) else None
                node.grad = np.zeros_like(node.value) if g is None else np.asarray(g, dtype=np.float64)

    def reset(self):
        """Discard every recorded node so the tape can be reused."""
        self.nodes = []
        self._bound = {}
        self._backward_done = False


def _tape_of(*args):
    for a in args:
        if isinstance(a, Node):
            return a.tape
    raise TypeError("at least one operand must be a Node")


def _lift(tape, x):
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ValueError("operands live on different tapes")
        return x
    return tape.const(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} do not broadcast") from None
    return tape, a, b


def add(a, b):
    tape, a, b = _binary(a, b)
    sa, sb = a.shape, b.shape
    return tape._record("add", a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    tape, a, b = _binary(a, b)
    sa, sb = a.shape, b.shape
    return tape._record("sub", a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    """Elementwise product."""
    tape, a, b = _binary(a, b)
    av, bv = a.value, b.value

    def vjp(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return tape._record("mul", av * bv, (a, b), vjp)


def scalar_mul(a, c):
    c = float(c)
    return a.tape._record("scalar_mul", c * a.value, (a,), lambda g: (c * g,))


def matmul(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    if av.ndim < 2 or bv.ndim < 2:
        raise DimensionMismatch("matmul operands must be at least 2-D")
    value = linalg.matmul(av, bv)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(bv, -1, -2))
        gb = np.matmul(np.swapaxes(av, -1, -2), g)
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return tape._record("matmul", value, (a, b), vjp)


def transpose(a):
    """Swap the last two axes."""
    return a.tape._record("transpose", linalg.transpose(a.value), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def permute(a, axes):
    """Reorder axes like ``np.transpose(a, axes)``."""
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return a.tape._record("permute", np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a, shape):
    old = a.shape
    return a.tape._record("reshape", a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def elementwise(a, activation, order=0):
    """Apply ``activation`` differentiated ``order`` times (``-1`` = antiderivative, up to 2)."""
    if order > 2:
        raise ValueError("elementwise nodes support derivative order <= 2")
    activation_fn(activation, order)
    act = ACTIVATIONS[activation]
    av = a.value
    key = act.base
    if key not in a._base:
        a._base[key] = act.base(av)
    t = a._base[key]
    return a.tape._record(
        f"elementwise[{activation},{order}]", act(av, order, t), (a,), lambda g: (g * act(av, order + 1, t),)
    )


def softplus(a):
    return elementwise(a, "softplus", 0)


def diag_embed(a):
    """``(..., n) -> (..., n, n)`` with ``a`` on the diagonal."""
    n = a.shape[-1]
    value = a.value[..., :, None] * np.eye(n)
    return a.tape._record("diag_embed", value, (a,), lambda g: (np.diagonal(g, axis1=-2, axis2=-1).copy(),))


def logdet_spd(a):
    """``log det`` of (a stack of) SPD matrices, differentiated through the Cholesky factor."""
    L = linalg.cholesky(a.value)
    value = linalg.logdet_from_cholesky(L)

    def vjp(g):
        Linv = np.linalg.inv(L)
        Ainv = np.matmul(np.swapaxes(Linv, -1, -2), Linv)
        Ainv = 0.5 * (Ainv + np.swapaxes(Ainv, -1, -2))
        return (np.asarray(g)[..., None, None] * Ainv,)

    return a.tape._record("logdet_spd", value, (a,), vjp)


def logabsdet(a):
    """``log |det A|`` for general square matrices (used by the unconstrained baseline)."""
    av = a.value
    sign, value = np.linalg.slogdet(av)
    if np.any(sign == 0) or not np.all(np.isfinite(value)):
        raise NotPositiveDefinite("singular matrix in logabsdet")

    def vjp(g):
        return (np.asarray(g)[..., None, None] * np.swapaxes(np.linalg.inv(av), -1, -2),)

    return a.tape._record("logabsdet", value, (a,), vjp)


def _expand_reduced(g, shape, axis):
    if axis is None:
        return np.broadcast_to(g, shape)
    return np.broadcast_to(np.expand_dims(g, axis), shape)


def sum(a, axis=None):
    shape = a.shape
    value = np.sum(a.value, axis=axis)
    return a.tape._record("sum", np.asarray(value), (a,), lambda g: (_expand_reduced(g, shape, axis),))


def mean(a, axis=None):
    shape = a.shape
    count = a.value.size if axis is None else shape[axis]
    value = np.mean(a.value, axis=axis)
    return a.tape._record("mean", np.asarray(value), (a,), lambda g: (_expand_reduced(g, shape, axis) / count,))


def square(a):
    av = a.value
    return a.tape._record("square", av * av, (a,), lambda g: (2.0 * av * g,))


def softmax(a, axis=-1):
    """Softmax over ``axis`` (the component axis of a mixture or module stack)."""
    av = a.value
    e = np.exp(av - np.max(av, axis=axis, keepdims=True))
    s = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return a.tape._record("softmax", s, (a,), vjp)


def logsumexp(a, axis=-1):
    av = a.value
    value = _logsumexp(av, axis=axis)

    def vjp(g):
        s = np.exp(av - np.expand_dims(value, axis))
        return (np.expand_dims(g, axis) * s,)

    return a.tape._record("logsumexp", np.asarray(value), (a,), vjp)


def huber(a, delta=1.0):
    av = a.value
    absv = np.abs(av)
    value = np.where(absv <= delta, 0.5 * av * av, delta * (absv - 0.5 * delta))
    return a.tape._record("huber", value, (a,), lambda g: (g * np.clip(av, -delta, delta),))
