"""Shared test fixtures; the expensive 64x64 objects are session-scoped."""
import numpy as np
import pytest

from qdeconv.basis import QabConfig, build_basis
from qdeconv.blur import BlurOperator, make_gaussian_psf
from qdeconv.image import devectorize, make_synthetic, vectorize
from qdeconv.poisson import NoiseSpec, degrade


@pytest.fixture(scope="session")
def chirp64():
    return make_synthetic(64)


@pytest.fixture(scope="session")
def blur64():
    return BlurOperator(make_gaussian_psf(4, 3.0), 64, 64)


@pytest.fixture(scope="session")
def degraded64(chirp64, blur64):
    """Chirp blurred and Poisson-degraded to 20 dB with the stock seed."""
    return degrade(vectorize(chirp64), blur64, NoiseSpec(target_snr_db=20.0, seed=7))


@pytest.fixture(scope="session")
def basis64(degraded64, blur64):
    """Eigenbasis built from the degraded chirp, as the solver would."""
    y_img = devectorize(degraded64.observed, blur64.height, blur64.width)
    return build_basis(y_img, QabConfig(), method="lanczos")
