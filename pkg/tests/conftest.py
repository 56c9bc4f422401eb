import numpy as np
import pytest

from latticediff.generator import assemble_fiber, build_rate_table
from latticediff.presets import flat_dispersion_1d, reference_1d, reference_2d


@pytest.fixture(scope="session")
def ref1d():
    return reference_1d()


@pytest.fixture(scope="session")
def ref1d_table(ref1d):
    return build_rate_table(ref1d)


@pytest.fixture(scope="session")
def ref1d_block(ref1d, ref1d_table):
    return assemble_fiber(ref1d, ref1d_table, np.zeros(1), 0.0)


@pytest.fixture(scope="session")
def ref2d():
    return reference_2d(n_k=8, m_dir=8)


@pytest.fixture(scope="session")
def flat1d():
    return flat_dispersion_1d()
