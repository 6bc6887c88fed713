import numpy as np
import pytest

from config import settings
from core.quadrature import QuadratureGrid
from core.spectral import SpectralField, grid_for, random_factor

SMALL_L = 8


@pytest.fixture
def band_limit() -> int:
    return SMALL_L


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def grid(band_limit: int) -> QuadratureGrid:
    return grid_for(band_limit)


@pytest.fixture
def smooth_field(band_limit: int, rng: np.random.Generator) -> SpectralField:
    """Small low-degree factor, well inside every resolution threshold"""
    return random_factor(band_limit, 0.05, rng, max_degree=3)


@pytest.fixture
def unit_points(rng: np.random.Generator) -> np.ndarray:
    x = rng.normal(size=(64, 5))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@pytest.fixture(autouse=True)
def _default_settings(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(settings, "debug_corrupt_ordering", False)
    monkeypatch.setattr(settings, "laplacian_convention", "beltrami")
