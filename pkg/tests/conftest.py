from __future__ import annotations

import numpy as np
import pytest

from bullwhip.metrics import OmegaParams
from bullwhip.tables import IOTable, Sector, SyntheticSpec, build_network, synthesize


@pytest.fixture
def params():
    return OmegaParams(alpha=0.4, rho=0.7)


@pytest.fixture
def chain2_table():
    """Two-sector chain: wood -> retail -> households.

    Retail sells 1 to households and buys 0.5 of wood; wood sells nothing
    to households.  Hand-checkable positions: U = (1, 2), D = (2, 1).
    """
    return IOTable(
        sectors=(Sector("c1_retail", "c1", "retail"), Sector("c1_wood", "c1", "wood")),
        destinations=("c1",),
        Z=np.array([[0.0, 0.0], [0.5, 0.0]]),
        F=np.array([[1.0], [0.0]]),
        Y=np.array([1.0, 0.5]),
    )


@pytest.fixture
def chain2_model(chain2_table):
    return build_network(chain2_table)


@pytest.fixture
def line3():
    return synthesize(SyntheticSpec(n_sectors=3, topology="line"))


@pytest.fixture
def line6():
    return synthesize(SyntheticSpec(n_sectors=6, topology="line"))


@pytest.fixture
def random_model():
    """Multi-destination sparse model, small enough for brute-force oracles."""
    return synthesize(
        SyntheticSpec(n_sectors=8, n_destinations=3, topology="random-sparse", seed=7)
    )
