"""Shared-weight stacked VAE with a learned channel graph, for multivariate anomaly detection."""
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .graphlearn import GraphConfig
from .model import StackVAEG
from .nn import TrainHyper
from .stackvae import StackVaeConfig
from .trainer import fit, train

__all__ = ["GraphConfig", "RunConfig", "StackVAEG", "StackVaeConfig", "TrainHyper",
           "fit", "load_checkpoint", "load_config", "save_checkpoint", "train"]
__version__ = "0.1.0"
