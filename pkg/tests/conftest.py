import numpy as np
import pytest

from frspec.fields import SpectralField4, leray_project
from frspec.geometry import TorusGeometry


def random_field(geometry, seed=0, divergence_free=True, amplitude=None, spectrum_r=0.0):
    """Zero-mean Hermitian random field, optionally Leray-projected."""
    rng = np.random.default_rng(seed)
    L = geometry.L
    raw = rng.standard_normal((L, L, L, 4)) + 1j * rng.standard_normal((L, L, L, 4))
    if spectrum_r:
        raw = raw * (1.0 + geometry.check_sq[..., None]) ** (-spectrum_r / 2.0)
    f = SpectralField4(geometry, raw)
    f.make_hermitian()
    f.pin_zero_mode()
    if divergence_free:
        f = leray_project(f)
    if amplitude is not None:
        from frspec.fields import l2_norm

        f = (amplitude / l2_norm(f)) * f
    return f


@pytest.fixture(scope="session")
def unit_torus_4():
    return TorusGeometry((1, 1, 1), 4)


@pytest.fixture(scope="session")
def unit_torus_3():
    return TorusGeometry((1, 1, 1), 3)


@pytest.fixture(scope="session")
def aniso_torus_4():
    return TorusGeometry((1, 4, 1), 4)
