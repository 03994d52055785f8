"""Learning optimal transport maps with monotone gradient networks."""

__version__ = "0.1.0"

from .densities import GaussianDensity, GaussianMixture, image_to_mixture, random_gaussian
from .discrete_ot import barycentric_projection, interpolate, map_mse, sinkhorn, whitening_map
from .gradnet import BaselineMLP, GradNetC, GradNetM, load_checkpoint, save_checkpoint
from .training import TrainConfig, monge_ampere_loss, train

__all__ = [
    "BaselineMLP",
    "GaussianDensity",
    "GaussianMixture",
    "GradNetC",
    "GradNetM",
    "TrainConfig",
    "barycentric_projection",
    "image_to_mixture",
    "interpolate",
    "load_checkpoint",
    "map_mse",
    "monge_ampere_loss",
    "random_gaussian",
    "save_checkpoint",
    "sinkhorn",
    "train",
    "whitening_map",
]
