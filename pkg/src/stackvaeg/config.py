"""Flat ``key = value`` run configuration with defaults for every knob."""
from dataclasses import dataclass, fields
from pathlib import Path

from .baselines import LassoConfig
from .graphlearn import GraphConfig
from .nn import TrainHyper
from .stackvae import StackVaeConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # paths
    train_csv: str = None
    train_labels: str = None
    test_csv: str = None
    test_labels: str = None
    out_dir: str = "out"
    checkpoint: str = None
    fixed_graph: str = None
    seed: int = 0
    # model
    window_len: int = 40
    latent_dim: int = 20
    hidden_dim: int = None
    sigma_floor: float = 1e-4
    fusion_ratio: float = 0.5
    embed_dim: int = 16
    amplifier: float = 2.0
    top_k: int = 10
    graph_weight: float = 1.0
    # optimisation
    learning_rate: float = 1e-3
    lr_decay: float = 0.8
    decay_interval: int = 10
    weight_decay: float = 1e-3
    grad_clip: float = 12.0
    epochs: int = 256
    batch_size: int = 64
    stride: int = 1
    val_fraction: float = 0.1
    # lasso baseline
    lasso_l1: float = 0.1
    lasso_max_iters: int = 10000
    lasso_tol: float = 1e-8
    # detection
    threshold: float = None
    point_adjust: bool = True
    channel_errors: bool = False
    # synthetic data
    synth_channels: int = 8
    synth_groups: int = 2
    synth_train_length: int = 4000
    synth_test_length: int = 4000
    synth_anomalies: int = 10
    synth_noise: float = 0.02
    synth_min_duration: int = 40
    synth_max_duration: int = 100

    def vae_config(self):
        return StackVaeConfig(self.window_len, self.latent_dim, self.hidden_dim,
                              self.sigma_floor, self.fusion_ratio)

    def graph_config(self, n_channels):
        return GraphConfig(n_channels, self.embed_dim, self.amplifier,
                           min(self.top_k, n_channels), self.graph_weight)

    def train_hyper(self):
        return TrainHyper(self.learning_rate, self.lr_decay, self.decay_interval, self.weight_decay,
                          self.grad_clip, self.epochs, self.batch_size)

    def lasso_config(self):
        return LassoConfig(self.lasso_l1, self.lasso_max_iters, self.lasso_tol)

    def out_path(self, name):
        return Path(self.out_dir) / name

    def checkpoint_path(self):
        return Path(self.checkpoint) if self.checkpoint else self.out_path("checkpoint.bin")


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, raw, lineno):
    typ = _TYPES[key]
    if raw.lower() in ("none", ""):
        return None
    try:
        if typ is bool:
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} expects {typ.__name__}, got {raw!r}") from None
    return raw


def parse_config(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw, lineno)
    return RunConfig(**values)


def load_config(path=None):
    return RunConfig() if path is None else parse_config(Path(path).read_text())


def format_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            v = "none"
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
