"""Shared fixtures: the pairing-group setup is expensive, do it once."""

import pytest

from locauth.abe import scheme as abe
from locauth.rng import DeterministicRng


@pytest.fixture(scope="session")
def abe_keys():
    return abe.setup(128, DeterministicRng(0xA11CE))


@pytest.fixture(scope="session")
def params(abe_keys):
    return abe_keys[0]


@pytest.fixture(scope="session")
def msk(abe_keys):
    return abe_keys[1]
