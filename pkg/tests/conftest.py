import functools

import numpy as np
import pytest

from offgrid import recipes
from offgrid.phantom import trig_phantom_samples
from offgrid.trigpoly import IndexRect


@functools.lru_cache(maxsize=None)
def bundled(name):
    return recipes.load_trig_phantom(name)


@functools.lru_cache(maxsize=None)
def bundled_samples(name, n):
    """Samples of a bundled phantom on the centered ``n x n`` grid (cached, rasterizing is slow)."""
    return trig_phantom_samples(bundled(name)[1], IndexRect.centered((n, n)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_coeffs(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def hermitian(c):
    return 0.5 * (c + np.conj(c[::-1, ::-1]))
