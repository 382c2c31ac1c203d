import numpy as np
import pytest

from smi_sim.domain.models import PrincipalIdentity
from smi_sim.modules.crypto.primitives import generate_keypair


@pytest.fixture
def alice():
    return PrincipalIdentity(user_id="alice", device_id="dev-a")


@pytest.fixture
def bob():
    return PrincipalIdentity(user_id="bob", device_id="dev-b")


@pytest.fixture
def alice_keys():
    return generate_keypair(101)


@pytest.fixture
def bob_keys():
    return generate_keypair(202)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
