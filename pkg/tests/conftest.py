import numpy as np
import pytest

from dualrrm.channel import Realization, TopologyConfig, sample_topology
from dualrrm.core import RrmProblemConfig
from dualrrm.seeding import derive_seed


def make_realizations(m, count, seed, area=500.0, rho=0.956):
    """Small in-memory dataset without going through the config machinery."""
    topo = TopologyConfig(m=m, area_side_m=area)
    out = []
    for i in range(count):
        topo_seed = derive_seed(seed, 0, i)
        out.append(
            Realization(
                large=sample_topology(topo, topo_seed),
                fading_seed=derive_seed(seed, 1, i),
                rho=rho,
                topology_seed=topo_seed,
            )
        )
    return out


def params_equal(a, b):
    return all(
        na == nb and np.array_equal(x, y)
        for (na, x), (nb, y) in zip(a.named_arrays(), b.named_arrays())
    )


def relabel_matrix(h, perm):
    return h[np.ix_(perm, perm)]


@pytest.fixture
def problem6():
    return RrmProblemConfig(m=6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
