import numpy as np
import pytest

from latentprior import gaussian, generator, spaces


@pytest.fixture(scope="session")
def bundle():
    return generator.init_generator(0)


@pytest.fixture(scope="session")
def other_bundle():
    return generator.init_generator(1)


@pytest.fixture(scope="session")
def fitted_model(bundle):
    ws = generator.sample_styles(bundle, 1, 8192)
    return gaussian.fit_gaussian(spaces.w_to_v(ws), ws)


@pytest.fixture(scope="session")
def style_batch(bundle):
    return generator.sample_styles(bundle, 2, 256)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
