import numpy as np
import pytest

from bpplus import store
from bpplus.gkp import GkpParams, NoiseParams

# Small-but-physical scale used by most integration tests: large Delta keeps
# the Fock cutoff tiny while preserving every structural property.
SMALL_DELTA = 0.6
SMALL_DIM = 32
SMALL_RANK = 2


@pytest.fixture(scope="session")
def small_params() -> GkpParams:
    return GkpParams(delta=SMALL_DELTA, dim=SMALL_DIM)


@pytest.fixture(scope="session")
def table_noise() -> NoiseParams:
    return NoiseParams()


@pytest.fixture(scope="session")
def small_mset(small_params, table_noise) -> store.ModelSet:
    """Extracted model set at the small scale (one Lindblad run per session)."""
    return store.extract_model_set(small_params, table_noise, rank=SMALL_RANK, seed=7)


@pytest.fixture(scope="session")
def small_mset_noiseless(small_params) -> store.ModelSet:
    return store.extract_model_set(
        small_params, NoiseParams.noiseless(), rank=SMALL_RANK, seed=7
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    mat = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = mat @ mat.conj().T
    return rho / np.trace(rho)


def random_ket(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)
