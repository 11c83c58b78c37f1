"""Channel-interrelation graph: embeddings -> similarity -> top-k row-stochastic matrix."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import LinearLayer, ShapeError


@dataclass
class GraphConfig:
    n_channels: int
    embed_dim: int = 16
    amplifier: float = 2.0
    top_k: int = 10
    graph_weight: float = 1.0

    def __post_init__(self):
        if self.amplifier < 0:
            raise ValueError("amplifier must be >= 0")
        if not 1 <= self.top_k <= self.n_channels:
            raise ValueError(f"top_k must lie in [1, {self.n_channels}], got {self.top_k}")
        if self.graph_weight < 0:
            raise ValueError("graph_weight must be >= 0")


@dataclass
class NodeEmbedding:
    E: np.ndarray  # (N, embed_dim)
    proj: LinearLayer

    @classmethod
    def init(cls, rng, n_channels, embed_dim):
        # unit-norm rows keep tanh(M M^T) out of saturation at the start
        E = rng.standard_normal((n_channels, embed_dim)) / np.sqrt(embed_dim)
        return cls(E, LinearLayer.init(rng, embed_dim, embed_dim))

    def named_parameters(self):
        return {"graph.E": self.E, "graph.proj.weight": self.proj.weight,
                "graph.proj.bias": self.proj.bias}


@dataclass
class SparseAdjacency:
    matrix: np.ndarray  # row-stochastic (N, N)
    kept_indices: list  # per row, the columns surviving top-k
    mask: np.ndarray = None  # (N, N) 0/1 top-k mask
    degree: np.ndarray = None  # (N,) 1 + row sums of the sparsified A

    @property
    def n(self):
        return self.matrix.shape[0]

    def neighbors(self, row, min_weight=0.0):
        """Off-diagonal columns with a surviving weight above ``min_weight``."""
        return [int(j) for j in self.kept_indices[row]
                if j != row and self.matrix[row, j] > min_weight]


def identity_adjacency(n):
    return SparseAdjacency(np.eye(n), [[i] for i in range(n)], np.eye(n), np.ones(n))


def fixed_adjacency(matrix):
    """Wrap an already row-stochastic matrix; no top-k, no renormalization."""
    M = np.asarray(matrix, dtype=np.float64)
    kept = [np.flatnonzero(row).tolist() for row in M]
    return SparseAdjacency(M, kept, (M != 0).astype(np.float64), None)


def compute_dense_adjacency(emb, alpha, cache=None):
    """``A = relu(alpha * tanh(M M^T))`` with ``M = tanh(alpha * proj(E))``."""
    Q = emb.proj.forward(emb.E)
    M = np.tanh(alpha * Q)
    T = np.tanh(M @ M.T)
    A = np.maximum(alpha * T, 0.0)
    if cache is not None:
        cache.update(M=M, T=T)
    return A


def topk_mask(A, k):
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    # stable sort of -A: largest first, ties toward the lowest column index
    order = np.argsort(-A, axis=1, kind="stable")[:, :k]
    mask = np.zeros_like(A)
    np.put_along_axis(mask, order, 1.0, axis=1)
    return mask, [sorted(int(j) for j in row) for row in order]


def sparsify_and_normalize(A, k):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"adjacency must be square, got {A.shape}")
    if (A < 0).any():
        raise ValueError("sparsify_and_normalize expects a nonnegative matrix")
    mask, kept = topk_mask(A, k)
    return normalize_adjacency(A * mask, kept, mask)


def normalize_adjacency(A_sparse, kept=None, mask=None):
    """``D^-1 (I + A)`` with ``D = diag(1 + row sums of A)``."""
    n = A_sparse.shape[0]
    degree = 1.0 + A_sparse.sum(axis=1)
    matrix = (np.eye(n) + A_sparse) / degree[:, None]
    if kept is None:
        kept = [sorted(set(np.flatnonzero(A_sparse[i]).tolist()) | {i}) for i in range(n)]
    if mask is None:
        mask = (A_sparse != 0).astype(np.float64)
    return SparseAdjacency(matrix, kept, mask, degree)


def learn_adjacency(emb, cfg, cache=None):
    A = compute_dense_adjacency(emb, cfg.amplifier, cache)
    adj = sparsify_and_normalize(A, cfg.top_k)
    if cache is not None:
        cache["A"] = A
    return adj


def adjacency_backward(emb, alpha, adj, cache, grad_adj):
    """Push a gradient w.r.t. the normalized matrix back into the embedding params.

    The top-k mask is held fixed, so only surviving entries carry gradient.
    Returns gradients keyed like ``NodeEmbedding.named_parameters``.
    """
    M, T = cache["M"], cache["T"]
    At = adj.matrix
    # d/dA_ij of (delta_ij + A_ij) / d_i, with d_i = 1 + sum_j A_ij
    g_sparse = (grad_adj - (grad_adj * At).sum(axis=1, keepdims=True)) / adj.degree[:, None]
    g_A = g_sparse * adj.mask
    g_T = alpha * g_A * (alpha * T > 0)
    g_P = g_T * (1.0 - T * T)
    g_M = (g_P + g_P.T) @ M
    g_Q = alpha * g_M * (1.0 - M * M)
    return {
        "graph.E": g_Q @ emb.proj.weight,
        "graph.proj.weight": g_Q.T @ emb.E,
        "graph.proj.bias": g_Q.sum(axis=0),
    }


def graph_loss(X, adj_matrix):
    """``||X - A X||^2`` summed over channels and steps; X may carry a batch axis."""
    X = np.asarray(X, dtype=np.float64)
    n = adj_matrix.shape[0]
    if adj_matrix.shape != (n, n) or X.shape[-2] != n:
        raise ShapeError(f"X {X.shape} incompatible with adjacency {adj_matrix.shape}")
    R = X - adj_matrix @ X
    return float((R * R).sum())


def fuse(H1, adj_matrix, gamma):
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("fusion ratio must lie in [0, 1]")
    return (1.0 - gamma) * H1 + gamma * (adj_matrix @ H1)


def write_adjacency_csv(matrix, path):
    Path(path).write_text("".join(",".join(repr(float(v)) for v in row) + "\n" for row in matrix))


def read_adjacency_csv(path):
    rows = [[float(c) for c in line.split(",")]
            for line in Path(path).read_text().splitlines() if line.strip()]
    M = np.array(rows, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"{path}: adjacency must be square, got {M.shape}")
    return M


def write_edge_list(matrix, path):
    lines = [f"{i} {j} {float(matrix[i, j])!r}\n"
             for i in range(matrix.shape[0]) for j in range(matrix.shape[1]) if matrix[i, j] != 0]
    Path(path).write_text("".join(lines))


def pgm_bytes(matrix):
    """Plain (P2) grayscale image, one pixel per entry, ``round(255 * v / max)``."""
    M = np.asarray(matrix, dtype=np.float64)
    peak = M.max()
    pix = np.zeros(M.shape, dtype=np.int64) if peak <= 0 else np.rint(255.0 * M / peak).astype(np.int64)
    pix = np.clip(pix, 0, 255)
    rows, cols = M.shape
    body = "".join(" ".join(str(v) for v in row) + "\n" for row in pix)
    return f"P2\n{cols} {rows}\n255\n{body}".encode("ascii")


def write_pgm(matrix, path):
    Path(path).write_bytes(pgm_bytes(matrix))


def read_pgm(path):
    tokens = Path(path).read_text().split()
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pix = np.array([int(t) for t in tokens[4:]], dtype=np.int64).reshape(rows, cols)
    return pix, maxval


def export_adjacency(matrix, out_dir, prefix="adjacency"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out_dir / f"{prefix}.csv", "edges": out_dir / f"{prefix}_edges.txt",
             "pgm": out_dir / f"{prefix}.pgm"}
    write_adjacency_csv(matrix, paths["csv"])
    write_edge_list(matrix, paths["edges"])
    write_pgm(matrix, paths["pgm"])
    return paths


def neighbor_precision(adj, group_of, min_weight=0.0):
    """Fraction of kept off-diagonal neighbors that share the row's group.

    Also returns the number of rows left without any neighbor.
    """
    hits = total = isolated = 0
    for i in range(adj.n):
        nb = adj.neighbors(i, min_weight)
        isolated += not nb
        total += len(nb)
        hits += sum(group_of[j] == group_of[i] for j in nb)
    return (hits / total if total else 0.0), isolated
