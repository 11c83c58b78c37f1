"""Small dense numerical kernel: linear layers, activations, Adam, gradient checks.

Matrices are float64 numpy arrays. Layers act on the last axis, so one layer
is shared across every leading (batch, channel) index.
"""
from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float64
SOFTPLUS_LINEAR_CUTOFF = 30.0


class ShapeError(ValueError):
    pass


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return (x > 0).astype(DTYPE)


def softplus(x):
    x = np.asarray(x, dtype=DTYPE)
    # log1p(exp(x)) overflows for large x; past the cutoff the result equals x
    safe = np.minimum(x, SOFTPLUS_LINEAR_CUTOFF)
    return np.where(x > SOFTPLUS_LINEAR_CUTOFF, x, np.log1p(np.exp(safe)))


def sigmoid(x):
    x = np.asarray(x, dtype=DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_act(x):
    return np.tanh(x)


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class LinearLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    grad_weight: np.ndarray = None
    grad_bias: np.ndarray = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=DTYPE)
        self.bias = np.asarray(self.bias, dtype=DTYPE)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"bad layer shapes {self.weight.shape}, {self.bias.shape}")
        if self.grad_weight is None:
            self.grad_weight = np.zeros_like(self.weight)
        if self.grad_bias is None:
            self.grad_bias = np.zeros_like(self.bias)

    @classmethod
    def init(cls, rng, n_in, n_out):
        return cls(glorot_uniform(rng, n_in, n_out), np.zeros(n_out))

    @property
    def n_in(self):
        return self.weight.shape[1]

    @property
    def n_out(self):
        return self.weight.shape[0]

    @property
    def n_params(self):
        return self.weight.size + self.bias.size

    def forward(self, x):
        """Apply to the last axis of ``x``: ``x @ W.T + b``."""
        x = np.asarray(x, dtype=DTYPE)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"expected last axis {self.n_in}, got shape {x.shape}")
        return x @ self.weight.T + self.bias

    def backward(self, x, grad_out):
        """Accumulate parameter gradients and return the gradient w.r.t. ``x``."""
        g2 = grad_out.reshape(-1, self.n_out)
        self.grad_weight += g2.T @ x.reshape(-1, self.n_in)
        self.grad_bias += g2.sum(axis=0)
        return grad_out @ self.weight

    def zero_grad(self):
        self.grad_weight.fill(0.0)
        self.grad_bias.fill(0.0)


def linear_forward(layer, x):
    """Column convention: ``weight @ x + bias`` for x of shape (in,) or (in, cols)."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] != layer.n_in:
        raise ShapeError(f"x has {x.shape[0]} rows, layer expects {layer.n_in}")
    if x.ndim == 1:
        return layer.weight @ x + layer.bias
    return layer.weight @ x + layer.bias[:, None]


@dataclass
class TrainHyper:
    learning_rate: float = 1e-3
    lr_decay: float = 0.8
    decay_interval: int = 10
    weight_decay: float = 1e-3
    grad_clip: float = 12.0
    epochs: int = 256
    batch_size: int = 64

    def __post_init__(self):
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.weight_decay < 0 or self.grad_clip <= 0:
            raise ValueError("weight_decay must be >= 0 and grad_clip > 0")
        if self.decay_interval < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("decay_interval, batch_size must be >= 1 and epochs >= 0")

    def lr_at(self, epoch):
        return self.learning_rate * self.lr_decay ** (epoch // self.decay_interval)


@dataclass
class AdamState:
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params):
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()})


def clip_gradient(g, clip):
    return np.clip(g, -clip, clip)


def adam_step(params, grads, state, hyper, lr=None):
    """One in-place update of every array in ``params``.

    Gradients are clipped elementwise to ``[-grad_clip, grad_clip]``, weight
    decay is applied directly to the parameters, then the bias-corrected Adam
    update runs on the clipped gradients.
    """
    lr = hyper.learning_rate if lr is None else lr
    for name, g in grads.items():
        if params[name].shape != g.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, param {params[name].shape}")
        if not np.all(np.isfinite(g)):
            bad = np.argwhere(~np.isfinite(g))[0]
            raise FloatingPointError(f"non-finite gradient in {name} at index {tuple(bad)}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        p = params[name]
        g = clip_gradient(g, hyper.grad_clip)
        if hyper.weight_decay:
            p -= lr * hyper.weight_decay * p
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    analytic: float
    numeric: float


def relative_error(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def gradient_check(loss_and_grads, params, h=1e-5, floor=1e-6, names=None):
    """Compare analytic gradients against central differences for every entry.

    ``loss_and_grads()`` must evaluate the loss at the current contents of
    ``params`` (arrays are perturbed in place) and return ``(loss, grads)``.
    """
    if h <= 0:
        raise ValueError("finite-difference step h must be positive")
    _, grads = loss_and_grads()
    grads = {k: np.array(v, copy=True) for k, v in grads.items()}
    worst = GradCheckResult(0.0, None, None, 0.0, 0.0)
    for name in names or list(params):
        p = params[name]
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            lp = loss_and_grads()[0]
            p[idx] = old - h
            lm = loss_and_grads()[0]
            p[idx] = old
            numeric = (lp - lm) / (2 * h)
            analytic = float(grads[name][idx])
            err = relative_error(analytic, numeric, floor)
            if worst.worst_param is None or err > worst.max_rel_error:
                worst = GradCheckResult(err, name, idx, analytic, numeric)
    return worst
