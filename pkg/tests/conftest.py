import numpy as np
import pytest

from stackvaeg.graphlearn import GraphConfig
from stackvaeg.model import StackVAEG
from stackvaeg.stackvae import StackVaeConfig


def tiny_model(seed=0, n=3, l=8, m=4, h=8, embed_dim=4, gamma=0.5, k=2, lam=1.0, alpha=2.0):
    rng = np.random.default_rng(seed)
    vc = StackVaeConfig(l, m, h, 1e-4, gamma)
    gc = GraphConfig(n, embed_dim, alpha, k, lam)
    return StackVAEG.init(rng, vc, gc), rng


@pytest.fixture
def model3():
    return tiny_model()
