import numpy as np
import pytest

from podcount import BackboneConfig, PointProposalNetwork


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_network(seed: int = 3, dtype=np.float64, embed_dim: int = 8,
                 depths=(1, 1, 1), window: int = 2) -> PointProposalNetwork:
    """Smallest useful network: fast enough for finite-difference checks."""
    cfg = BackboneConfig(embed_dim=embed_dim, depths=depths, window=window)
    return PointProposalNetwork(cfg, rng=np.random.default_rng(seed), dtype=dtype)
