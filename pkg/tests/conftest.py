import numpy as np
import pytest

from mamimo.geometry import build_topology
from mamimo.model import RadioConfig


@pytest.fixture(scope="session")
def radio():
    return RadioConfig()


@pytest.fixture(scope="session")
def fast_radio():
    # same interleaving structure, only 4 pilots per user: keeps tests quick
    return RadioConfig(total_subcarriers=48, pilot_count=4, interleave_factor=12)


@pytest.fixture(scope="session")
def ura():
    return build_topology("ura")


@pytest.fixture(scope="session")
def ura_small():
    # 2x2 panel, 4 antennas
    return build_topology("ura", ura_shape=(2, 2))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_csi_matrix(rng, m, f):
    """Random complex matrix with float32-representable entries."""
    return (rng.standard_normal((m, f)).astype(np.float32).astype(np.float64)
            + 1j * rng.standard_normal((m, f)).astype(np.float32).astype(np.float64))
