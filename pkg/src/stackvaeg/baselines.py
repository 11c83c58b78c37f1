"""Per-channel lasso structure learning and the fixed-graph VAE variant."""
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .graphlearn import normalize_adjacency
from .trainer import train


@dataclass
class LassoConfig:
    l1_weight: float = 0.1
    max_iters: int = 10000
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be >= 0")
        if self.tolerance <= 0 or self.max_iters < 1:
            raise ValueError("tolerance must be > 0 and max_iters >= 1")


class ConvergenceWarning(UserWarning):
    pass


def soft_threshold(rho, lam):
    return np.sign(rho) * np.maximum(np.abs(rho) - lam, 0.0)


def lasso_objective(S, n, beta, l1_weight):
    resid = beta @ S - S[n]
    return 0.5 * np.mean(resid * resid) + l1_weight * np.abs(beta).sum()


def lasso_regress_channel(S, n, cfg):
    """Coordinate descent on ``mean_t 0.5 (b . x_t - x_nt)^2 + l1 * |b|_1`` with ``b_n = 0``."""
    S = np.asarray(S, dtype=np.float64)
    N, T = S.shape
    if T < 2:
        raise ValueError("need at least 2 time steps")
    beta = np.zeros(N)
    gram = S @ S.T / T
    target = S @ S[n] / T
    others = [j for j in range(N) if j != n]
    for _ in range(cfg.max_iters):
        max_change = 0.0
        for j in others:
            z = gram[j, j]
            if z == 0.0:
                continue
            # correlation of x_j with the partial residual that excludes x_j
            rho = target[j] - gram[j] @ beta + z * beta[j]
            new = soft_threshold(rho, cfg.l1_weight) / z
            max_change = max(max_change, abs(new - beta[j]))
            beta[j] = new
        if max_change < cfg.tolerance:
            return beta
    warnings.warn(f"lasso for channel {n} did not converge in {cfg.max_iters} sweeps",
                  ConvergenceWarning, stacklevel=2)
    return beta


def standardize(S):
    S = np.asarray(S, dtype=np.float64)
    centered = S - S.mean(axis=1, keepdims=True)
    std = centered.std(axis=1, keepdims=True)
    return np.where(std > 0, centered / np.where(std > 0, std, 1.0), 0.0)


def lasso_coefficients(S, cfg, standardized=True):
    S = standardize(S) if standardized else np.asarray(S, dtype=np.float64)
    return np.stack([lasso_regress_channel(S, n, cfg) for n in range(S.shape[0])])


def lasso_adjacency(S, cfg, standardized=True):
    """Row-stochastic graph from clamped lasso coefficients; no top-k cut."""
    A = np.maximum(lasso_coefficients(S, cfg, standardized), 0.0)
    return normalize_adjacency(A)


def train_fixed_graph(dataset, adj_fixed, vae_cfg, graph_cfg, hyper, seed, **kwargs):
    adj_fixed = np.asarray(adj_fixed, dtype=np.float64)
    if (adj_fixed < 0).any() or not np.allclose(adj_fixed.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("fixed adjacency must be nonnegative and row-stochastic")
    return train(dataset, vae_cfg, replace(graph_cfg, graph_weight=0.0), hyper, seed,
                 fixed_adjacency=adj_fixed, **kwargs)
