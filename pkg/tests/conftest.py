import pathlib

import pytest

from shvlab.grid import GridSpec, build_grid
from shvlab.stokes import build_divfree_basis, compute_stokes_spectrum, spectrum_cache_io

CACHE = pathlib.Path(__file__).parent / "_eigcache"


def _spectrum(grid, n_modes, tag):
    CACHE.mkdir(exist_ok=True)
    path = CACHE / f"{tag}.eig"
    if path.exists():
        try:
            spec = spectrum_cache_io(path, "load", grid=grid)
            if spec.n_modes >= n_modes:
                return spec
        except ValueError:
            pass
    spec = compute_stokes_spectrum(grid, build_divfree_basis(grid), n_modes)
    spectrum_cache_io(path, "save", spectrum=spec)
    return spec


@pytest.fixture(scope="session")
def grid16():
    return build_grid(GridSpec(dim=2, cells=(16, 16), lengths=(1.0, 1.0)))


@pytest.fixture(scope="session")
def grid24():
    return build_grid(GridSpec(dim=2, cells=(24, 24), lengths=(1.0, 1.0)))


@pytest.fixture(scope="session")
def grid32():
    return build_grid(GridSpec(dim=2, cells=(32, 32), lengths=(1.0, 1.0)))


@pytest.fixture(scope="session")
def grid48():
    return build_grid(GridSpec(dim=2, cells=(48, 48), lengths=(1.0, 1.0)))


@pytest.fixture(scope="session")
def spectrum16(grid16):
    # full spectrum: n_free = 15 * 15
    return _spectrum(grid16, 15 * 15, "sq16-full")


@pytest.fixture(scope="session")
def spectrum24(grid24):
    return _spectrum(grid24, 128, "sq24-128")


@pytest.fixture(scope="session")
def spectrum32(grid32):
    return _spectrum(grid32, 160, "sq32-160")


@pytest.fixture(scope="session")
def spectrum48(grid48):
    return _spectrum(grid48, 16, "sq48-16")
