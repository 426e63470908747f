import pytest

from spinreadout.model import desk_scale, homogeneous_ensemble, reference_params


@pytest.fixture
def ref_device():
    return reference_params()


@pytest.fixture
def desk100(ref_device):
    """100 spins with chi inflated so that lambda stays at the reference value 4."""
    params = desk_scale(ref_device, 100)
    return params, homogeneous_ensemble(params)
