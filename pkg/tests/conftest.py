import functools
import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chainrec.systems import SystemSpec, instantiate  # noqa: E402

# grid spacings used throughout the suite
ETAS = {
    "identity": 1 / 64,
    "rigid_rotation": 1 / 64,
    "f1": 1 / 360,
    "f2": 1 / 2187,
    "f3": 1 / 2187,
    "f4": 0.035,
    "f5": 0.035,
    "torus_product": 1 / 120,
    "two_circle_swap": 1 / 360,
    "cantor_union": 1 / 729,
}


@functools.lru_cache(maxsize=None)
def system(name: str, eta: float | None = None, **params):
    return instantiate(SystemSpec(name, dict(params)), ETAS[name] if eta is None else eta)


@functools.lru_cache(maxsize=None)
def gr(name: str):
    from chainrec.generalized import gr_estimate

    return gr_estimate(system(name))


@functools.lru_cache(maxsize=None)
def mane(name: str):
    from chainrec.mane import mane_estimate

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return mane_estimate(system(name))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
