"""Monotone gradient networks and an unconstrained baseline.

Three architectures share one interface (``forward``, ``jacobian``,
``forward_and_jacobian``, ``potential`` where defined):

``GradNetC``
    ``T(x) = sum_g softplus(a_g) W_g^T act(W_g x + b_g) + L L^T x + c``.
    The Jacobian ``sum_g softplus(a_g) W_g^T diag(act'(.)) W_g + L L^T`` is
    symmetric positive definite for every input and parameter value.
``GradNetM``
    Gradient of ``tau * logsumexp(phi_m(x) / tau)`` over convex module
    potentials ``phi_m``, each of the GradNetC form plus an offset.
``BaselineMLP``
    Two hidden layers, no structural constraint.

Parameters live in ``net.params`` (a dict of float64 arrays). Per-group and
per-module tensors are stacked along a leading axis so each evaluation is a
handful of batched tape operations. ``L`` is stored as an unconstrained
strictly-lower part plus a raw diagonal that passes through softplus.
"""

import json

import numpy as np

from . import autodiff as ad
from .autodiff import activation_fn
from .errors import DimensionMismatch, UnsupportedActivation

FORMAT_VERSION = 1
SOFTPLUS_INV_ONE = float(np.log(np.expm1(1.0)))


def softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def _points(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != dim:
        raise DimensionMismatch(f"expected inputs of dimension {dim}, got shape {x.shape}")
    return X, single


def _lower_factor(L_off, L_diag):
    d = L_diag.shape[-1]
    mask = np.tril(np.ones((d, d)), k=-1)
    return L_off * mask + ad.diag_embed(ad.softplus(L_diag))


def _ridge_terms(X, W, b, a, activation, need_phi, need_grad, need_hess):
    """Stacked ridge sums ``s * sum_k act~(w_k.x + b_k)`` and their derivatives.

    ``W`` is ``(S, k, d)``; returns ``phi (S, B)`` and ``grad (S, B, d)``. For
    the Hessians the factors ``dact (S, B, k)`` and ``outer (S, k, d*d)`` are
    returned instead, since ``H_s = dact_s @ outer_s`` and callers only need
    weighted sums over ``s`` (see :func:`_weighted_hessian`).
    """
    S, k, d = W.shape
    Z = X @ ad.transpose(W) + ad.reshape(b, (S, 1, k))
    scale = ad.softplus(a)
    phi = grad = hess = None
    if need_phi:
        phi = ad.sum(ad.elementwise(Z, activation, -1), axis=2) * ad.reshape(scale, (S, 1))
    if need_grad:
        act = ad.elementwise(Z, activation, 0) * ad.reshape(scale, (S, 1, 1))
        grad = act @ W
    if need_hess:
        dact = ad.elementwise(Z, activation, 1) * ad.reshape(scale, (S, 1, 1))
        outer = ad.reshape(ad.reshape(W, (S, k, d, 1)) * ad.reshape(W, (S, k, 1, d)), (S, k, d * d))
        hess = (dact, outer)
    return phi, grad, hess


def _weighted_hessian(dact, outer, weights=None):
    """``sum_s weights_s * dact_s @ outer_s`` as one ``(B, S*k) @ (S*k, d*d)`` product -> ``(B, d, d)``.

    ``weights`` is ``(S, B)`` or ``None`` for unit weights.
    """
    S, B, k = dact.shape
    dd = outer.shape[2]
    d = int(round(np.sqrt(dd)))
    if weights is not None:
        dact = dact * ad.reshape(weights, (S, B, 1))
    flat = ad.reshape(ad.permute(dact, (1, 0, 2)), (B, S * k))
    return ad.reshape(flat @ ad.reshape(outer, (S * k, dd)), (B, d, d))


def _symmetric(J):
    # (J + J^T)/2 is bitwise symmetric because floating-point addition commutes.
    return (J + ad.transpose(J)) * 0.5


class _Network:
    arch = None
    spd_jacobian = True

    def __init__(self, params, activation="tanh"):
        if activation not in ad.ACTIVATIONS:
            raise UnsupportedActivation(f"unknown activation {activation!r}")
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self.activation = activation

    @property
    def n_params(self):
        return int(sum(v.size for v in self.params.values()))

    def copy(self):
        return type(self)(**self._ctor_kwargs(), params={k: v.copy() for k, v in self.params.items()})

    def _ctor_kwargs(self):
        return {"activation": self.activation}

    def _bound(self, tape):
        if tape is None:
            tape = ad.Tape()
            return tape, {k: tape.const(v) for k, v in self.params.items()}
        return tape, tape.bind(self)

    def _run(self, x, tape, need_T, need_J):
        X, single = _points(x, self.dim)
        tape, P = self._bound(tape)
        T, J = self._trace(tape.const(X), P, need_T, need_J)
        if single:
            T = None if T is None else ad.reshape(T, (self.dim,))
            J = None if J is None else ad.reshape(J, (self.dim, self.dim))
        return T, J

    def _values(self, x, need_T, need_J):
        T, J = self._run(x, None, need_T, need_J)
        out = (None if T is None else T.value, None if J is None else J.value)
        (T if T is not None else J).tape.reset()  # break the node <-> tape cycle now
        return out

    def forward(self, x, tape=None):
        """Map ``x`` of shape ``(d,)`` or ``(B, d)``; returns a tape node when ``tape`` is given."""
        if tape is None:
            return self._values(x, True, False)[0]
        return self._run(x, tape, True, False)[0]

    def jacobian(self, x, tape=None):
        if tape is None:
            return self._values(x, False, True)[1]
        return self._run(x, tape, False, True)[1]

    def forward_and_jacobian(self, x, tape=None):
        if tape is None:
            return self._values(x, True, True)
        return self._run(x, tape, True, True)

    def __call__(self, x):
        return self.forward(x)

    def log_det_node(self, J):
        """``log det J`` on the tape; SPD path for monotone nets."""
        return ad.logdet_spd(J) if self.spd_jacobian else ad.logabsdet(J)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "architecture": self.arch,
            "dimension": self.dim,
            "activation": self.activation,
            "temperature": getattr(self, "temperature", None),
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
        }


class GradNetC(_Network):
    arch = "C"

    @property
    def dim(self):
        return self.params["c"].shape[0]

    def _trace(self, X, P, need_T, need_J):
        _, grad, hess = _ridge_terms(X, P["W"], P["b"], P["a"], self.activation, False, need_T, need_J)
        L = _lower_factor(P["L_off"], P["L_diag"])
        A = L @ ad.transpose(L)
        T = J = None
        if need_T:
            T = ad.sum(grad, axis=0) + X @ ad.transpose(A) + P["c"]
        if need_J:
            J = _symmetric(_weighted_hessian(*hess) + A)
        return T, J

    def potential(self, x):
        """Convex potential whose gradient is :meth:`forward`."""
        X, single = _points(x, self.dim)
        p = self.params
        antider = activation_fn(self.activation, -1)
        Z = np.einsum("bd,gkd->gbk", X, p["W"]) + p["b"][:, None, :]
        scale = activation_fn("softplus")(p["a"])
        ridge = np.sum(scale[:, None] * antider(Z).sum(axis=2), axis=0)
        L = _numpy_lower(p["L_off"], p["L_diag"])
        XL = X @ L
        out = ridge + 0.5 * np.sum(XL * XL, axis=1) + X @ p["c"]
        return out[0] if single else out


class GradNetM(_Network):
    arch = "M"

    def __init__(self, params, activation="tanh", temperature=1.0):
        if not activation_fn_available(activation):
            raise UnsupportedActivation(f"GradNetM needs a closed-form antiderivative of {activation}")
        super().__init__(params, activation)
        if not temperature > 0:
            raise ValueError("temperature must be positive")
        self.temperature = float(temperature)

    def _ctor_kwargs(self):
        return {"activation": self.activation, "temperature": self.temperature}

    @property
    def dim(self):
        return self.params["c"].shape[1]

    @property
    def n_modules(self):
        return self.params["c"].shape[0]

    def _module_terms(self, X, P, need_hess):
        Mn, d = P["c"].shape
        phi_r, grad_r, hess_r = _ridge_terms(X, P["W"], P["b"], P["a"], self.activation, True, True, need_hess)
        L = _lower_factor(P["L_off"], P["L_diag"])
        A = L @ ad.transpose(L)
        XL = X @ L
        phi = (
            phi_r
            + ad.sum(ad.square(XL), axis=2) * 0.5
            + ad.reshape(X @ ad.reshape(P["c"], (Mn, d, 1)), (Mn, -1))
            + ad.reshape(P["offset"], (Mn, 1))
        )
        G = grad_r + X @ ad.transpose(A) + ad.reshape(P["c"], (Mn, 1, d))
        return phi, G, (hess_r, A)

    def _trace(self, X, P, need_T, need_J):
        Mn, d = self.params["c"].shape
        B = X.shape[0]
        tau = self.temperature
        phi, G, (hess_r, A) = self._module_terms(X, P, need_J)
        w = ad.softmax(phi * (1.0 / tau), axis=0)
        T = ad.sum(ad.reshape(w, (Mn, B, 1)) * G, axis=0)
        J = None
        if need_J:
            # sum_m w_m H_m, with H_m = ridge Hessian + A_m
            mixed_A = ad.reshape(ad.transpose(w) @ ad.reshape(A, (Mn, d * d)), (B, d, d))
            mixed_H = _weighted_hessian(*hess_r, weights=w) + mixed_A
            # weighted covariance of the module gradients, batched as (B, d, M) @ (B, M, d)
            D = ad.permute(G - T, (1, 0, 2))
            wD = D * ad.reshape(ad.transpose(w), (B, Mn, 1))
            cov = ad.transpose(wD) @ D
            J = _symmetric(mixed_H + cov * (1.0 / tau))
        return T, J

    def module_potentials(self, x):
        """``(M,)`` or ``(M, B)`` array of the individual convex module potentials."""
        X, single = _points(x, self.dim)
        tape = ad.Tape()
        P = {k: tape.const(v) for k, v in self.params.items()}
        phi, _, _ = self._module_terms(tape.const(X), P, False)
        tape.reset()
        return phi.value[:, 0] if single else phi.value

    def potential(self, x):
        from scipy.special import logsumexp

        phi = self.module_potentials(x)
        return self.temperature * logsumexp(phi / self.temperature, axis=0)


class BaselineMLP(_Network):
    arch = "baseline"
    spd_jacobian = False

    @property
    def dim(self):
        return self.params["b3"].shape[0]

    def _trace(self, X, P, need_T, need_J):
        act = self.activation
        B = X.shape[0]
        h1 = P["b1"].shape[0]
        Z1 = X @ ad.transpose(P["W1"]) + P["b1"]
        H1 = ad.elementwise(Z1, act, 0)
        Z2 = H1 @ ad.transpose(P["W2"]) + P["b2"]
        T = J = None
        if need_T:
            T = ad.elementwise(Z2, act, 0) @ ad.transpose(P["W3"]) + P["b3"]
        if need_J:
            # one Jacobian column per input coordinate (forward-mode over d directions)
            d = self.dim
            D1 = ad.elementwise(Z1, act, 1)
            D2 = ad.elementwise(Z2, act, 1)
            basis = np.eye(d)
            for j in range(d):
                u = D1 * ad.reshape(P["W1"] @ basis[:, j:j + 1], (1, h1))
                v = D2 * (u @ ad.transpose(P["W2"]))
                col = ad.reshape(v @ ad.transpose(P["W3"]), (B, d, 1)) * basis[j].reshape(1, 1, d)
                J = col if J is None else J + col
        return T, J

    def potential(self, x):
        raise UnsupportedActivation("the baseline network is not a gradient field and has no potential")


def activation_fn_available(name):
    try:
        activation_fn(name, -1)
    except UnsupportedActivation:
        return False
    return True


def _numpy_lower(L_off, L_diag):
    d = L_diag.shape[-1]
    mask = np.tril(np.ones((d, d)), k=-1)
    diag = activation_fn("softplus")(L_diag)
    return L_off * mask + diag[..., :, None] * np.eye(d)


def init_gradnet_c(dim, rng, groups=4, width=64, activation="tanh"):
    """Random ``W ~ N(0, 1/d)``, ``b = 0``, ``L = I``, ``c = 0``.

    ``softplus(a) = 1/(groups * width)`` keeps the initial ridge Jacobian
    ``O(1)`` regardless of width, so the net starts close to ``x -> 2x``.
    """
    if groups < 1 or width < 1:
        raise ValueError("hidden sizes must be >= 1")
    params = {
        "W": rng.standard_normal((groups, width, dim)) / np.sqrt(dim),
        "b": np.zeros((groups, width)),
        "a": np.full(groups, float(softplus_inv(1.0 / (groups * width)))),
        "L_off": np.zeros((dim, dim)),
        "L_diag": np.full(dim, SOFTPLUS_INV_ONE),
        "c": np.zeros(dim),
    }
    return GradNetC(params, activation)


def init_gradnet_m(dim, rng, modules=8, width=32, activation="tanh", temperature=1.0):
    if modules < 1 or width < 1:
        raise ValueError("hidden sizes must be >= 1")
    params = {
        "W": rng.standard_normal((modules, width, dim)) / np.sqrt(dim),
        "b": np.zeros((modules, width)),
        "a": np.full(modules, float(softplus_inv(1.0 / width))),
        "L_off": np.zeros((modules, dim, dim)),
        "L_diag": np.full((modules, dim), SOFTPLUS_INV_ONE),
        "c": np.zeros((modules, dim)),
        "offset": np.zeros(modules),
    }
    return GradNetM(params, activation, temperature)


def init_baseline(dim, rng, width=64, activation="tanh"):
    params = {
        "W1": rng.standard_normal((width, dim)) / np.sqrt(dim),
        "b1": np.zeros(width),
        "W2": rng.standard_normal((width, width)) / np.sqrt(width),
        "b2": np.zeros(width),
        "W3": rng.standard_normal((dim, width)) / np.sqrt(width),
        "b3": np.zeros(dim),
    }
    return BaselineMLP(params, activation)


def init(arch, dim, rng, **kwargs):
    """Build a freshly initialized network for ``arch`` in ``{"C", "M", "baseline"}``."""
    builders = {"C": init_gradnet_c, "M": init_gradnet_m, "baseline": init_baseline}
    try:
        return builders[arch](dim, rng, **kwargs)
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}") from None


def identity_gradnet_c(dim, scale=1.0, shift=None, groups=1, width=1, activation="tanh"):
    """GradNetC computing the affine map ``scale * x + shift`` exactly (all ridge weights zero).

    ``scale`` may be a positive scalar or an SPD matrix.
    """
    S = np.atleast_2d(np.asarray(scale, dtype=np.float64))
    if S.shape == (1, 1):
        S = S[0, 0] * np.eye(dim)
    L = np.linalg.cholesky(S)
    params = {
        "W": np.zeros((groups, width, dim)),
        "b": np.zeros((groups, width)),
        "a": np.zeros(groups),
        "L_off": np.tril(L, k=-1),
        "L_diag": softplus_inv(np.diag(L)),
        "c": np.zeros(dim) if shift is None else np.asarray(shift, dtype=np.float64),
    }
    return GradNetC(params, activation)


def monotonicity_violations(T, x1, x2, tol=1e-10):
    """Number of pairs with ``(T(x1) - T(x2)) . (x1 - x2) < -tol``.

    ``T`` is any callable mapping ``(N, d)`` arrays to ``(N, d)`` arrays.
    """
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    x2 = np.atleast_2d(np.asarray(x2, dtype=np.float64))
    if x1.shape != x2.shape or x1.shape[0] == 0:
        raise DimensionMismatch("pair arrays must be nonempty and of equal shape")
    inner = np.sum((T(x1) - T(x2)) * (x1 - x2), axis=1)
    return int(np.count_nonzero(inner < -tol))


def net_from_dict(doc):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
    params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
    arch = doc["architecture"]
    if arch == "C":
        net = GradNetC(params, doc["activation"])
    elif arch == "M":
        net = GradNetM(params, doc["activation"], doc["temperature"])
    elif arch == "baseline":
        net = BaselineMLP(params, doc["activation"])
    else:
        raise ValueError(f"unknown architecture {arch!r}")
    if net.dim != doc["dimension"]:
        raise ValueError("checkpoint dimension does not match parameter shapes")
    return net


def save_checkpoint(net, path, seed=None, iteration=0):
    doc = net.to_dict()
    doc["rng_seed"] = seed
    doc["iteration"] = int(iteration)
    # json writes floats with repr(), the shortest string that round-trips exactly
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return path


def load_checkpoint(path):
    """Returns ``(net, doc)``; ``doc`` keeps the seed and iteration metadata."""
    with open(path) as fh:
        doc = json.load(fh)
    return net_from_dict(doc), doc
