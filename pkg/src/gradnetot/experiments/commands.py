"""Experiment drivers behind the command-line subcommands.

Each ``cmd_*`` function takes a config dataclass and an output directory,
writes its artifacts there, and returns the manifest dict that is also saved
as ``manifest.json``. Point sets are CSV with 17 significant digits so a rerun
with the same seed can be compared byte for byte.
"""

import csv
import dataclasses
import datetime
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .. import densities as dn
from .. import discrete_ot as dot
from .. import gradnet as gn
from .. import linalg
from .. import training as tr
from ..errors import ConfigError, NoConvergenceWarning
from .images import load_image, normalized_cross_correlation, rasterize, write_pgm

FRAME_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)


def _fmt(v):
    return f"{v:.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return str(path)


def write_points_csv(path, X, Y=None):
    """``x0..x{d-1}`` columns, plus ``y0..`` when a mapped set is given."""
    d = X.shape[1]
    header = [f"x{i}" for i in range(d)]
    data = X
    if Y is not None:
        header += [f"y{i}" for i in range(d)]
        data = np.hstack([X, Y])
    return write_csv(path, header, data.tolist())


class _Config:
    """Fail-closed construction from JSON-like dicts."""

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return dataclasses.asdict(self)

    def _check_training(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise ConfigError("iterations and batch_size must be >= 1")
        if not self.lr_start >= self.lr_end > 0:
            raise ConfigError("need lr_start >= lr_end > 0")


@dataclass
class Gauss2DConfig(_Config):
    seed: int = 0
    iterations: int = 4000
    batch_size: int = 1000
    lr_start: float = 1e-2
    lr_end: float = 1e-4
    mean: list = field(default_factory=lambda: [1.0, -1.0])
    cov: list = field(default_factory=lambda: [[3.0, 1.5], [1.5, 1.0]])
    architectures: list = field(default_factory=lambda: ["baseline", "C", "M"])
    n_test: int = 1000
    n_pairs: int = 10_000

    def __post_init__(self):
        self._check_training()
        if np.shape(self.mean) != (2,) or np.shape(self.cov) != (2, 2):
            raise ConfigError("mean must have 2 entries and cov must be 2x2")
        if not self.architectures or set(self.architectures) - {"baseline", "C", "M"}:
            raise ConfigError("architectures must be a nonempty subset of baseline, C, M")
        if self.n_test < 1 or self.n_pairs < 1:
            raise ConfigError("n_test and n_pairs must be >= 1")


@dataclass
class HighDimConfig(_Config):
    seed: int = 0
    dims: list = field(default_factory=lambda: [2, 4, 8, 16])
    iterations: int = 3000
    batch_size: int = 1000
    lr_start: float = 5e-2
    lr_end: float = 1e-3
    architectures: list = field(default_factory=lambda: ["C", "M"])
    n_test: int = 1000

    def __post_init__(self):
        self._check_training()
        if not self.dims or any(int(d) != d or d < 2 for d in self.dims):
            raise ConfigError("dims must be a nonempty list of integers >= 2")
        if not self.architectures or set(self.architectures) - {"C", "M"}:
            raise ConfigError("architectures must be a nonempty subset of C, M")


@dataclass
class MorphConfig(_Config):
    source: str = ""
    target: str = ""
    source_index: int = 0
    target_index: int = 0
    seed: int = 0
    iterations: int = 2000
    batch_size: int = 1000
    lr_start: float = 1e-2
    lr_end: float = 1e-4
    sigma2: float = 1e-4
    sigma2_start: float = 1e-2
    modules: int = 8
    width: int = 32
    n_samples: int = 1000
    epsilon: float = 0.005
    sinkhorn_max_iter: int = 10_000
    sinkhorn_tol: float = 1e-6
    grid: int = 28

    def __post_init__(self):
        self._check_training()
        if not self.source or not self.target:
            raise ConfigError("source and target image paths are required")
        if not (self.sigma2 > 0 and self.sigma2_start >= self.sigma2):
            raise ConfigError("need sigma2_start >= sigma2 > 0")
        if self.epsilon <= 0 or self.n_samples < 1:
            raise ConfigError("epsilon must be positive and n_samples >= 1")


@dataclass
class VerifyConfig(_Config):
    checkpoint: str = ""
    n_points: int = 1000
    densities: str | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.checkpoint:
            raise ConfigError("checkpoint path is required")
        if self.n_points < 2:
            raise ConfigError("n_points must be >= 2")


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _finish(out_dir, command, cfg, started, outputs, metrics):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "started": started,
        "finished": _now(),
        "outputs": [str(p) for p in outputs],
        "metrics": metrics,
    }
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _train_cfg(cfg, seed, **extra):
    return tr.TrainConfig(
        batch_size=cfg.batch_size,
        iterations=cfg.iterations,
        lr_start=cfg.lr_start,
        lr_end=cfg.lr_end,
        seed=seed,
        **extra,
    )


def _fit_gaussian(arch, p, q, cfg, seed, out, tag):
    net = gn.init(arch, p.dim, np.random.default_rng([seed, 1]))
    report = tr.train(
        net, p, q, _train_cfg(cfg, seed), log_path=out / f"trace_{tag}.jsonl", checkpoint_path=out / f"checkpoint_{tag}.json"
    )
    return net, report, [out / f"trace_{tag}.jsonl", out / f"checkpoint_{tag}.json"]


def cmd_gauss2d(cfg, out_dir):
    """Skewed 2-D Gaussian to ``N(0, I)`` with the baseline MLP, GradNetC and GradNetM."""
    started = _now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = dn.GaussianDensity(cfg.mean, cfg.cov)
    q = dn.GaussianDensity(np.zeros(2), np.eye(2))
    oracle = dot.whitening_map(p)
    X = p.sample(np.random.default_rng([cfg.seed, 9]), cfg.n_test)
    pair_rng = np.random.default_rng([cfg.seed, 10])
    X1, X2 = p.sample(pair_rng, cfg.n_pairs), p.sample(pair_rng, cfg.n_pairs)
    outputs = [write_points_csv(out / "whitening.csv", X, oracle(X))]
    metrics = {}
    for k, arch in enumerate(cfg.architectures):
        net, report, files = _fit_gaussian(arch, p, q, cfg, cfg.seed + k, out, arch)
        Y = net.forward(X)
        outputs += files + [write_points_csv(out / f"map_{arch}.csv", X, Y)]
        metrics[arch] = {
            "mse_to_whitening": dot.map_mse(Y, oracle(X), X),
            "monotonicity_violations": gn.monotonicity_violations(net.forward, X1, X2),
            "final_loss": report.final_loss,
        }
    return _finish(out, "gauss2d", cfg, started, outputs, metrics)


def cmd_gauss_highdim(cfg, out_dir):
    """Random Gaussians in each dimension of ``cfg.dims``; MSE of each net to the whitening map."""
    started = _now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, outputs, metrics = [], [], {}
    for idx, d in enumerate(cfg.dims):
        seed = cfg.seed + idx
        p = dn.random_gaussian(d, np.random.default_rng([seed, 0]))
        q = dn.GaussianDensity(np.zeros(d), np.eye(d))
        oracle = dot.whitening_map(p)
        X = p.sample(np.random.default_rng([seed, 9]), cfg.n_test)
        for arch in cfg.architectures:
            net, report, files = _fit_gaussian(arch, p, q, cfg, seed, out, f"{arch}_d{d}")
            mse = dot.map_mse(net.forward, oracle, X)
            rows.append((d, arch, mse))
            outputs += files
            metrics[f"{arch}_d{d}"] = {"mse_to_whitening": mse, "final_loss": report.final_loss}
    outputs.append(write_csv(out / "mse.csv", ["dim", "model", "mse"], rows))
    return _finish(out, "gauss-highdim", cfg, started, outputs, metrics)


def cmd_morph(cfg, out_dir):
    """Learn the map between two digit images and compare it with Sinkhorn barycentric projection."""
    started = _now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    src = load_image(cfg.source, cfg.source_index).intensities
    tgt = load_image(cfg.target, cfg.target_index).intensities
    p = dn.image_to_mixture(src, cfg.sigma2)
    q = dn.image_to_mixture(tgt, cfg.sigma2)
    net = gn.init_gradnet_m(2, np.random.default_rng([cfg.seed, 1]), modules=cfg.modules, width=cfg.width)
    tcfg = _train_cfg(cfg, cfg.seed, sigma2_start=cfg.sigma2_start, sigma2_end=cfg.sigma2)
    report = tr.train(net, p, q, tcfg, log_path=out / "trace.jsonl", checkpoint_path=out / "checkpoint.json")
    outputs = [out / "trace.jsonl", out / "checkpoint.json"]

    sample_rng = np.random.default_rng([cfg.seed, 9])
    X = p.sample(sample_rng, cfg.n_samples)
    Y = q.sample(sample_rng, cfg.n_samples)
    TX = net.forward(X)
    uniform = np.full(cfg.n_samples, 1.0 / cfg.n_samples)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NoConvergenceWarning)
        plan = dot.sinkhorn(
            dot.sqeuclidean_cost(X, Y), uniform, uniform, cfg.epsilon, cfg.sinkhorn_max_iter, cfg.sinkhorn_tol
        )
    bary = dot.barycentric_projection(plan, Y)

    for t in FRAME_TIMES:
        tag = f"{t:.2f}"
        for name, dest in (("map", TX), ("bary", bary)):
            pts = dot.interpolate(X, dest, t)
            outputs.append(write_points_csv(out / f"frame_{name}_t{tag}.csv", pts))
            pgm = out / f"frame_{name}_t{tag}.pgm"
            write_pgm(pgm, rasterize(pts, cfg.grid))
            outputs.append(pgm)
    outputs.append(write_points_csv(out / "samples.csv", X, TX))
    outputs.append(write_points_csv(out / "barycentric.csv", X, bary))

    metrics = {
        "map_vs_projection_mse": dot.map_mse(TX, bary, X),
        "final_loss": report.final_loss,
        "sinkhorn_converged": plan.converged,
        "sinkhorn_iterations": plan.n_iter,
        "sinkhorn_marginal_error": plan.marginal_error,
        "sinkhorn_warnings": [str(w.message) for w in caught],
        "frame0_ncc_with_source": normalized_cross_correlation(rasterize(X, src.shape[0]), src),
    }
    return _finish(out, "morph", cfg, started, outputs, metrics)


def _load_density_pair(path):
    with open(path) as fh:
        doc = json.load(fh)
    if set(doc) != {"source", "target"}:
        raise ConfigError("density file must have exactly the keys 'source' and 'target'")
    return dn.density_from_dict(doc["source"]), dn.density_from_dict(doc["target"])


def cmd_verify(cfg, out_dir):
    """Check the structural guarantees of a saved network and, optionally, its residuals."""
    started = _now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net, doc = gn.load_checkpoint(cfg.checkpoint)
    rng = np.random.default_rng([cfg.seed, 0])
    X = rng.standard_normal((cfg.n_points, net.dim))
    J = net.jacobian(X)
    asym = float(np.max(np.abs(J - linalg.transpose(J))))
    if asym == 0.0:
        min_eig = float(np.min(np.linalg.eigvalsh(J)))
    else:
        min_eig = float(np.min(np.linalg.eigvals(J).real))
    X1, X2 = rng.standard_normal((2, cfg.n_points, net.dim))
    metrics = {
        "architecture": doc["architecture"],
        "dimension": net.dim,
        "max_asymmetry": asym,
        "min_eigenvalue": min_eig,
        "monotonicity_violations": gn.monotonicity_violations(net.forward, X1, X2),
    }
    if cfg.densities:
        p, q = _load_density_pair(cfg.densities)
        Xp = p.sample(rng, cfg.n_points)
        r = np.abs(tr.residuals(net, Xp, p, q))
        metrics["residual_mean"] = float(r.mean())
        metrics["residual_max"] = float(r.max())
    outputs = [write_csv(out / "verify.csv", ["metric", "value"], [(k, v) for k, v in metrics.items()])]
    return _finish(out, "verify", cfg, started, outputs, metrics)


COMMANDS = {
    "gauss2d": (Gauss2DConfig, cmd_gauss2d),
    "gauss-highdim": (HighDimConfig, cmd_gauss_highdim),
    "morph": (MorphConfig, cmd_morph),
    "verify": (VerifyConfig, cmd_verify),
}
