"""Monge-Ampere residual training of transport maps.

Each iteration samples a fresh batch ``x_j ~ p``, pushes it through the
network, and penalizes the residual::

    r_j = log det J_T(x_j) - (log p(x_j) - log q(T(x_j)))

The gradient flows through both the Jacobian term and ``log q(T(x))`` unless
``detach_labels`` is set. Parameters are updated with bias-corrected Adam
under a geometric learning-rate schedule; mixture densities can have their
shared variance decayed on the same kind of schedule.
"""

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .gradnet import save_checkpoint
from .linalg import logdet_spd
from .errors import ConfigError, NonFiniteLoss, NotPositiveDefinite


@dataclass
class TrainConfig:
    batch_size: int = 1000
    iterations: int = 2000
    lr_start: float = 1e-2
    lr_end: float = 1e-4
    sigma2_start: float | None = None
    sigma2_end: float | None = None
    decay_source_sigma2: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "squared"
    huber_delta: float = 1.0
    detach_labels: bool = False
    clip_norm: float | None = None
    eval_every: int = 100

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1:
            raise ConfigError("batch_size and iterations must be >= 1")
        if not self.lr_start >= self.lr_end > 0:
            raise ConfigError("need lr_start >= lr_end > 0")
        if (self.sigma2_start is None) != (self.sigma2_end is None):
            raise ConfigError("sigma2_start and sigma2_end must be given together")
        if self.sigma2_start is not None and not (self.sigma2_start > 0 and self.sigma2_end > 0):
            raise ConfigError("sigma2 endpoints must be positive")
        if self.loss not in ("squared", "huber"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update applied to ``params`` in place."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def schedule(i, total, v_start, v_end):
    """Geometric interpolation ``v_start * (v_end / v_start) ** (i / total)``."""
    if total <= 0:
        return v_end
    if not 0 <= i <= total:
        raise ValueError("iteration outside [0, total]")
    return v_start * (v_end / v_start) ** (i / total)


def monge_ampere_loss(net, batch, p, q, tape, loss="squared", huber_delta=1.0, detach_labels=False):
    """Mean of ``ell(log det J_T(x_j) - log p(x_j) + log q(T(x_j)))`` as a scalar tape node."""
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    log_p = p.log_density(X)
    Y, J = net.forward_and_jacobian(X, tape)
    log_det = net.log_det_node(J)
    if detach_labels:
        log_q = tape.const(q.log_density(Y.value))
    else:
        log_q = q.log_density_node(Y)
    residual = log_det - log_p + log_q
    per_sample = ad.square(residual) if loss == "squared" else ad.huber(residual, huber_delta)
    return ad.mean(per_sample)


def residuals(net, X, p, q):
    """Plain-array ``log det J_T(x) - (log p(x) - log q(T(x)))`` per point."""
    T, J = net.forward_and_jacobian(X)
    if net.spd_jacobian:
        log_det = logdet_spd(J)
    else:
        log_det = np.linalg.slogdet(J)[1]
    return log_det - (p.log_density(X) - q.log_density(T))


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    checkpoint: str | None = None

    @property
    def final_loss(self):
        return self.losses[-1]


def _with_sigma2(density, sigma2):
    return density.with_sigma2(sigma2) if getattr(density, "kind", None) == "mixture" else density


def _clip(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        return {k: g * scale for k, g in grads.items()}
    return grads


def train(net, p, q, cfg, log_path=None, checkpoint_path=None):
    """Run the training loop on ``net`` in place and return a :class:`TrainReport`.

    ``log_path`` receives one JSON line per logged iteration; ``checkpoint_path``
    receives the final parameters in the checkpoint JSON format.
    """
    if not (net.dim == p.dim == q.dim):
        raise ValueError(f"dimension mismatch: net {net.dim}, p {p.dim}, q {q.dim}")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    report = TrainReport()
    last = cfg.iterations - 1
    start = time.perf_counter()
    log_fh = open(log_path, "w") if log_path else None
    try:
        for i in range(cfg.iterations):
            lr = schedule(i, last, cfg.lr_start, cfg.lr_end)
            sigma2 = None
            p_i, q_i = p, q
            if cfg.sigma2_start is not None:
                sigma2 = schedule(i, last, cfg.sigma2_start, cfg.sigma2_end)
                q_i = _with_sigma2(q, sigma2)
                if cfg.decay_source_sigma2:
                    p_i = _with_sigma2(p, sigma2)
            X = p_i.sample(rng, cfg.batch_size)
            tape = ad.Tape()
            try:
                loss = monge_ampere_loss(net, X, p_i, q_i, tape, cfg.loss, cfg.huber_delta, cfg.detach_labels)
            except NotPositiveDefinite as exc:
                raise NonFiniteLoss(i, float("nan")) from exc
            value = float(loss.value)
            if not np.isfinite(value):
                raise NonFiniteLoss(i, value)
            tape.backward(loss)
            grads = {k: node.grad for k, node in tape.bind(net).items()}
            tape.reset()
            if cfg.clip_norm is not None:
                grads = _clip(grads, cfg.clip_norm)
            adam_step(net.params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
            report.losses.append(value)
            if i % cfg.eval_every == 0 or i == last:
                rec = {"iter": i, "loss": value, "lr": lr, "sigma2": sigma2, "time": time.perf_counter() - start}
                report.records.append(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    if checkpoint_path:
        save_checkpoint(net, checkpoint_path, seed=cfg.seed, iteration=cfg.iterations)
        report.checkpoint = str(checkpoint_path)
    return report
