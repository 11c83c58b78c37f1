"""StackVAE-G: the shared-weight VAE fused with the learned channel graph."""
from dataclasses import dataclass

import numpy as np

from . import graphlearn as gl
from . import stackvae as sv
from .nn import sigmoid


@dataclass
class LossParts:
    total: float
    vae: float
    graph: float


class StackVAEG:
    """Parameters plus the forward/backward pass of the total training loss.

    ``fixed_adjacency`` replaces the learned graph with a frozen matrix. With
    a fixed graph, or with ``fusion_ratio == 0`` (the plain StackVAE), the
    embeddings receive no updates and the graph loss carries zero weight.
    """

    def __init__(self, vae_cfg, graph_cfg, vae_params, embedding, fixed_adjacency=None):
        self.vae_cfg = vae_cfg
        self.graph_cfg = graph_cfg
        self.vae = vae_params
        self.embedding = embedding
        self.fixed_adjacency = None if fixed_adjacency is None else np.asarray(fixed_adjacency, dtype=np.float64)
        self._cache = None

    @classmethod
    def init(cls, rng, vae_cfg, graph_cfg, fixed_adjacency=None):
        params = sv.StackVaeParams.init(rng, vae_cfg)
        emb = gl.NodeEmbedding.init(rng, graph_cfg.n_channels, graph_cfg.embed_dim)
        return cls(vae_cfg, graph_cfg, params, emb, fixed_adjacency)

    @property
    def learns_graph(self):
        return self.fixed_adjacency is None and self.vae_cfg.fusion_ratio > 0

    @property
    def effective_graph_weight(self):
        return self.graph_cfg.graph_weight if self.learns_graph else 0.0

    def named_parameters(self):
        out = dict(self.vae.named_parameters())
        out.update(self.embedding.named_parameters())
        return out

    def trainable_names(self):
        names = list(self.vae.named_parameters())
        if self.learns_graph:
            names += list(self.embedding.named_parameters())
        return names

    def n_vae_params(self):
        return self.vae.count()

    def n_params(self):
        return sum(v.size for v in self.named_parameters().values())

    def adjacency(self, cache=None):
        if self.fixed_adjacency is not None:
            return gl.fixed_adjacency(self.fixed_adjacency)
        return gl.learn_adjacency(self.embedding, self.graph_cfg, cache)

    def forward(self, X, noise, adj=None):
        """Batch-mean losses for windows X (B, N, l) and standard-normal noise (B, N, m)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X, noise = X[None], noise[None]
        cache = {}
        if adj is None:
            adj = self.adjacency(cache)
        A = adj.matrix
        _, post = sv.encode(X, A, self.vae_cfg, self.vae, cache)
        Z = sv.reparameterize(post, noise)
        like = sv.decode(Z, self.vae_cfg, self.vae, cache)
        B = X.shape[0]
        vae = sv.vae_loss(X, post, like) / B
        graph = gl.graph_loss(X, A) / B
        lam = self.effective_graph_weight
        cache.update(adj=adj, post=post, like=like, noise=noise, B=B, lam=lam)
        self._cache = cache
        return LossParts(vae + lam * graph, vae, graph)

    def backward(self):
        """Gradients of the last forward's total loss, keyed like ``named_parameters``."""
        if self._cache is None:
            raise RuntimeError("backward() called before forward()")
        c = self._cache
        self._cache = None
        p, cfg = self.vae, self.vae_cfg
        p.zero_grad()
        X, B, adj = c["X"], c["B"], c["adj"]
        A = adj.matrix
        scale = 1.0 / B
        post, like, eps = c["post"], c["like"], c["noise"]

        resid = X - like.mu
        var = like.sigma * like.sigma
        g_mu_x = -scale * resid / var
        g_sig_x = scale * (1.0 / like.sigma - resid * resid / (var * like.sigma))
        g_pre_xs = g_sig_x * sigmoid(c["pre_xs"])
        g_hd = p.dec_mu.backward(c["Hd"], g_mu_x) + p.dec_sigma.backward(c["Hd"], g_pre_xs)
        g_z = p.dec_in.backward(c["Z"], g_hd * (c["pre_hd"] > 0))

        g_mu_z = g_z + scale * post.mu
        g_sig_z = g_z * eps + scale * (post.sigma - 1.0 / post.sigma)
        g_pre_zs = g_sig_z * sigmoid(c["pre_zs"])
        g_h2 = p.enc_mu.backward(c["H2"], g_mu_z) + p.enc_sigma.backward(c["H2"], g_pre_zs)

        gamma = cfg.fusion_ratio
        g_h1 = (1.0 - gamma) * g_h2 + gamma * (A.T @ g_h2)
        p.enc_in.backward(X, g_h1 * (c["pre1"] > 0))

        grads = {k: v.copy() for k, v in p.named_grads().items()}
        if self.learns_graph:
            H1 = c["H1"]
            g_adj = gamma * np.einsum("bnd,bjd->nj", g_h2, H1)
            if c["lam"]:
                R = X - A @ X
                g_adj -= 2.0 * scale * c["lam"] * np.einsum("bnt,bjt->nj", R, X)
            grads.update(gl.adjacency_backward(self.embedding, self.graph_cfg.amplifier, adj, c, g_adj))
        return grads

    def loss_and_grads(self, X, noise):
        parts = self.forward(X, noise)
        return parts.total, self.backward()

    def reconstruct(self, X, adj=None):
        adj = self.adjacency() if adj is None else adj
        return sv.reconstruct(X, adj.matrix, self.vae_cfg, self.vae)
