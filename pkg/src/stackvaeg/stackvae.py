"""Channel-weight-sharing block-wise VAE.

Every channel row of an (N, l) window goes through the same encoder and
decoder layers; the graph fusion step is the only place channels interact.
"""
from dataclasses import dataclass

import numpy as np

from .graphlearn import fuse
from .nn import LinearLayer, ShapeError, relu, softplus

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class StackVaeConfig:
    window_len: int = 40
    latent_dim: int = 20
    hidden_dim: int = None  # defaults to 2 * latent_dim
    sigma_floor: float = 1e-4
    fusion_ratio: float = 0.5

    def __post_init__(self):
        if self.hidden_dim is None:
            self.hidden_dim = 2 * self.latent_dim
        if min(self.window_len, self.latent_dim, self.hidden_dim) < 1:
            raise ValueError("window_len, latent_dim and hidden_dim must be >= 1")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be > 0")
        if not 0.0 <= self.fusion_ratio <= 1.0:
            raise ValueError("fusion_ratio must lie in [0, 1]")


LAYER_NAMES = ("enc_in", "enc_mu", "enc_sigma", "dec_in", "dec_mu", "dec_sigma")


@dataclass
class StackVaeParams:
    enc_in: LinearLayer
    enc_mu: LinearLayer
    enc_sigma: LinearLayer
    dec_in: LinearLayer
    dec_mu: LinearLayer
    dec_sigma: LinearLayer

    @classmethod
    def init(cls, rng, cfg):
        l, h, m = cfg.window_len, cfg.hidden_dim, cfg.latent_dim
        shapes = [(l, h), (h, m), (h, m), (m, h), (h, l), (h, l)]
        return cls(*(LinearLayer.init(rng, a, b) for a, b in shapes))

    def layers(self):
        return {name: getattr(self, name) for name in LAYER_NAMES}

    def named_parameters(self):
        out = {}
        for name, layer in self.layers().items():
            out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
        return out

    def named_grads(self):
        out = {}
        for name, layer in self.layers().items():
            out[f"{name}.weight"] = layer.grad_weight
            out[f"{name}.bias"] = layer.grad_bias
        return out

    def zero_grad(self):
        for layer in self.layers().values():
            layer.zero_grad()

    def count(self):
        return sum(layer.n_params for layer in self.layers().values())


def param_count_formula(l, h, m):
    # encoder: l->h, twin h->m heads; decoder: m->h, twin h->l heads
    return (l * h + h) + 2 * (h * m + m) + (m * h + h) + 2 * (h * l + l)


@dataclass
class PosteriorGaussian:
    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class LikelihoodGaussian:
    mu: np.ndarray
    sigma: np.ndarray


def _check_window(X, cfg):
    if X.shape[-1] != cfg.window_len:
        raise ShapeError(f"window has {X.shape[-1]} steps, model expects {cfg.window_len}")


def encode(X, adj_matrix, cfg, params, cache=None):
    """Return ``(H1, posterior)`` for a window (N, l) or a batch (B, N, l)."""
    X = np.asarray(X, dtype=np.float64)
    _check_window(X, cfg)
    if adj_matrix.shape != (X.shape[-2], X.shape[-2]):
        raise ShapeError(f"adjacency {adj_matrix.shape} does not match {X.shape[-2]} channels")
    pre1 = params.enc_in.forward(X)
    H1 = relu(pre1)
    H2 = fuse(H1, adj_matrix, cfg.fusion_ratio)
    mu = params.enc_mu.forward(H2)
    pre_s = params.enc_sigma.forward(H2)
    sigma = softplus(pre_s) + cfg.sigma_floor
    if cache is not None:
        cache.update(X=X, pre1=pre1, H1=H1, H2=H2, pre_zs=pre_s)
    return H1, PosteriorGaussian(mu, sigma)


def reparameterize(posterior, noise):
    return posterior.mu + posterior.sigma * noise


def decode(Z, cfg, params, cache=None):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[-1] != cfg.latent_dim:
        raise ShapeError(f"latent has {Z.shape[-1]} dims, model expects {cfg.latent_dim}")
    pre_h = params.dec_in.forward(Z)
    Hd = relu(pre_h)
    mu = params.dec_mu.forward(Hd)
    pre_s = params.dec_sigma.forward(Hd)
    sigma = softplus(pre_s) + cfg.sigma_floor
    if cache is not None:
        cache.update(Z=Z, pre_hd=pre_h, Hd=Hd, pre_xs=pre_s)
    return LikelihoodGaussian(mu, sigma)


def gaussian_nll(X, likelihood):
    r = (X - likelihood.mu) / likelihood.sigma
    return float((0.5 * r * r + np.log(likelihood.sigma)).sum() + HALF_LOG_2PI * r.size)


def kl_standard_normal(posterior):
    mu, s = posterior.mu, posterior.sigma
    return float((0.5 * (mu * mu + s * s - 1.0) - np.log(s)).sum())


def vae_loss(X, posterior, likelihood):
    """Negative one-sample ELBO: Gaussian NLL plus closed-form KL, both summed."""
    if (posterior.sigma <= 0).any() or (likelihood.sigma <= 0).any():
        raise AssertionError("non-positive standard deviation reached the loss")
    if X.shape != likelihood.mu.shape:
        raise ShapeError(f"X {X.shape} vs reconstruction {likelihood.mu.shape}")
    return gaussian_nll(X, likelihood) + kl_standard_normal(posterior)


def reconstruct(X, adj_matrix, cfg, params):
    """Posterior-mean reconstruction; no sampling, so repeated calls agree exactly."""
    _, post = encode(X, adj_matrix, cfg, params)
    return decode(post.mu, cfg, params).mu
