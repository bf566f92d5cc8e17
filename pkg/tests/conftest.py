import pytest

from endofix import DgpConfig, DistSpec, RngStream
from endofix.simulation import MODEL_SPEC, generate


@pytest.fixture
def dgp1_small():
    """One fixed small dataset with real endogeneity (delta=1, rho=0.5)."""
    cfg = DgpConfig("dgp1", n=250, e_dist=DistSpec.gamma(1, 1), delta=1.0,
                    rho=0.5)
    return generate(cfg, RngStream(1234))


@pytest.fixture
def model_spec():
    return MODEL_SPEC
