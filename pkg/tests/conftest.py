from __future__ import annotations

import numpy as np
import pytest

from qcausal.fixtures import build_switch_protocol, random_protocol, sample_valid_protocols


@pytest.fixture(scope="session")
def switch():
    return build_switch_protocol()


@pytest.fixture(scope="session")
def suite_specs():
    """The first 100 valid seeded random protocols."""
    return sample_valid_protocols(100)


@pytest.fixture(scope="session")
def small_spec():
    """A valid two-party spec small enough for dense oracles."""
    for seed, spec in sample_valid_protocols(40):
        if spec.n_parties == 2 and spec.layout.dim <= 1024:
            return spec
    raise AssertionError("no small spec among the first seeds")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def valid_random(seed: int, **kw):
    from qcausal.protocol import validate_protocol

    spec = random_protocol(seed, **kw)
    return spec if validate_protocol(spec).valid else None
