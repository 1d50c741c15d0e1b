import numpy as np
import pytest
from hypothesis import settings

from gibbsglauber.core import Domain, HardSphere
from gibbsglauber.dynamics import GlauberParams
from gibbsglauber.oracle import TonksModel
from gibbsglauber.validation import SampleBatch

settings.register_profile("suite", max_examples=60, deadline=None)
settings.load_profile("suite")

# the 1D hard-rod workhorse: L=1, r=0.15 (sigma=0.3), lambda=1
TONKS = TonksModel(1.0, 0.3, 1.0)


@pytest.fixture(scope="session")
def tonks_model():
    return TONKS


@pytest.fixture(scope="session")
def tonks_params():
    return GlauberParams(
        domain=Domain((1.0,)),
        potential=HardSphere(0.15),
        activity=1.0,
        horizon=50.0,
        seed=20240611,
    )


@pytest.fixture(scope="session")
def tonks_batch_small(tonks_params):
    """20k equilibrated chains, reused by the statistical unit tests."""
    return SampleBatch.generate(tonks_params, 20_000)


@pytest.fixture(scope="session")
def tonks_pmf():
    from gibbsglauber.oracle import tonks_pmf_vector

    return tonks_pmf_vector(TONKS)
