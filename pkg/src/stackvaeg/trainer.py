"""Joint training of the VAE and the graph module under the total loss."""
import copy
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import apply_normalizer, fit_normalizer, window_array
from . import stackvae as sv
from .graphlearn import GraphConfig, graph_loss
from .model import StackVAEG
from .nn import AdamState, TrainHyper, adam_step
from .stackvae import StackVaeConfig

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; ``run`` holds the state after the last good epoch."""

    def __init__(self, message, run):
        super().__init__(message)
        self.run = run


@dataclass
class TrainRun:
    vae_cfg: StackVaeConfig
    graph_cfg: GraphConfig
    hyper: TrainHyper
    model: StackVAEG
    adam: AdamState
    rng: np.random.Generator
    seed: int
    epoch: int = 0
    loss_history: list = field(default_factory=list)  # per epoch (vae, graph, total)
    val_history: list = field(default_factory=list)  # per epoch held-out total loss
    norm_stats: tuple = None
    val_fraction: float = 0.1
    stride: int = 1


def init_run(n_channels, vae_cfg, graph_cfg, hyper, seed, fixed_adjacency=None, val_fraction=0.1, stride=1):
    if graph_cfg.n_channels != n_channels:
        raise ValueError(f"graph config is for {graph_cfg.n_channels} channels, data has {n_channels}")
    rng = np.random.default_rng(seed)
    model = StackVAEG.init(rng, vae_cfg, graph_cfg, fixed_adjacency)
    adam = AdamState.for_params(model.named_parameters())
    return TrainRun(vae_cfg, graph_cfg, hyper, model, adam, rng, seed,
                    val_fraction=val_fraction, stride=stride)


def split_train_val(values, l, val_fraction):
    """Windows for fitting and windows whose end step lies in the held-out tail."""
    T = values.shape[1]
    n_val = int(np.floor(val_fraction * T))
    split = T - n_val
    train = window_array(values[:, :split], l) if split >= l else np.empty((0, values.shape[0], l))
    if n_val == 0 or split < l:
        return train, None
    return train, window_array(values[:, split - l + 1:], l)


def prepare(run, dataset):
    if dataset.norm_stats is None:
        if run.norm_stats is None:
            run.norm_stats = fit_normalizer(dataset)
        dataset = apply_normalizer(dataset, run.norm_stats)
    elif run.norm_stats is None:
        run.norm_stats = dataset.norm_stats
    train, val = split_train_val(dataset.values, run.vae_cfg.window_len, run.val_fraction)
    if run.stride > 1:
        train = train[::run.stride]
    return train, val


def _snapshot(run):
    return copy.deepcopy(run)


def run_epoch(run, windows):
    model, hyper = run.model, run.hyper
    lr = hyper.lr_at(run.epoch)
    params = model.named_parameters()
    trainable = {k: params[k] for k in model.trainable_names()}
    m = run.vae_cfg.latent_dim
    order = run.rng.permutation(len(windows))
    sums = np.zeros(3)
    n_batches = 0
    for start in range(0, len(order), hyper.batch_size):
        Xb = windows[order[start:start + hyper.batch_size]]
        noise = run.rng.standard_normal(Xb.shape[:2] + (m,))
        parts = model.forward(Xb, noise)
        if not np.isfinite(parts.total):
            raise FloatingPointError(f"non-finite loss {parts.total} at epoch {run.epoch}")
        grads = model.backward()
        adam_step(trainable, {k: grads[k] for k in trainable}, run.adam, hyper, lr)
        sums += (parts.vae, parts.graph, parts.total)
        n_batches += 1
    return lr, tuple(float(v) for v in sums / n_batches)


def validation_loss(model, windows):
    if windows is None or len(windows) == 0:
        return float("nan")
    noise = np.zeros(windows.shape[:2] + (model.vae_cfg.latent_dim,))
    parts = model.forward(windows, noise)
    model._cache = None
    return parts.total


def log_line(epoch, lr, parts):
    vae, graph, total = parts
    return f"{epoch}\t{lr!r}\t{vae!r}\t{graph!r}\t{total!r}"


def fit(run, dataset, epochs=None, on_epoch=None):
    """Continue ``run`` until it has completed ``epochs`` epochs (default: hyper.epochs)."""
    epochs = run.hyper.epochs if epochs is None else epochs
    train_w, val_w = prepare(run, dataset)
    if epochs > run.epoch and len(train_w) < run.hyper.batch_size:
        raise ValueError(f"only {len(train_w)} training windows for batch size {run.hyper.batch_size}")
    while run.epoch < epochs:
        good = _snapshot(run)
        try:
            lr, parts = run_epoch(run, train_w)
        except FloatingPointError as exc:
            raise TrainingDiverged(str(exc), good) from exc
        run.epoch += 1
        run.loss_history.append(parts)
        run.val_history.append(validation_loss(run.model, val_w))
        line = log_line(run.epoch, lr, parts)
        log.info(line)
        if on_epoch is not None:
            on_epoch(run, line)
    return run


def train(dataset, vae_cfg, graph_cfg, hyper, seed, on_epoch=None, fixed_adjacency=None,
          val_fraction=0.1, stride=1):
    run = init_run(dataset.n_channels, vae_cfg, graph_cfg, hyper, seed, fixed_adjacency,
                   val_fraction, stride)
    return fit(run, dataset, on_epoch=on_epoch)


def total_loss(X, adj_matrix, gamma, lam, model, noise):
    """``(L_total, L_VAE, L_Graph)`` for a batch, each component averaged over the batch."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X, noise = X[None], noise[None]
    cfg = replace(model.vae_cfg, fusion_ratio=gamma)
    _, post = sv.encode(X, adj_matrix, cfg, model.vae)
    like = sv.decode(sv.reparameterize(post, noise), cfg, model.vae)
    B = X.shape[0]
    vae = sv.vae_loss(X, post, like) / B
    graph = graph_loss(X, adj_matrix) / B
    return vae + lam * graph, vae, graph
