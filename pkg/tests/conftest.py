"""
Pytest configuration and fixtures

Provides shared fixtures for all tests.
"""
from pathlib import Path

import numpy as np
import pytest

from app.constants import (
    REFERENCE_EPS_EC,
    REFERENCE_EPS_PA,
    REFERENCE_EPS_TOT,
    REFERENCE_M,
    REFERENCE_N,
    REFERENCE_QBER,
    REFERENCE_QX,
    TEST_BLOCK_LENGTH,
)
from app.models.schemas import ExperimentConfig, load_config
from app.services.keyrate import RateInputs, SecurityBudget
from app.services.noise_model import OperationalNoise
from app.services.postprocess import CodeLibrary

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator, fresh per test"""
    return np.random.default_rng(12345)


@pytest.fixture
def reference_noise() -> OperationalNoise:
    """Q_X = 0.05 and QBER = 0.0159 on three Bobs"""
    return OperationalNoise(q_x=REFERENCE_QX, q_ab=(REFERENCE_QBER,) * 3)


@pytest.fixture
def reference_budget() -> SecurityBudget:
    return SecurityBudget.compose(REFERENCE_EPS_TOT, REFERENCE_EPS_EC, REFERENCE_EPS_PA, N=4)


@pytest.fixture
def reference_inputs() -> RateInputs:
    """Four parties, n = 4.04e6 key rounds, m = 5.01e4 test rounds"""
    return RateInputs(
        L=REFERENCE_N + 2 * REFERENCE_M,
        n=REFERENCE_N,
        m=REFERENCE_M,
        p=0.012,
        q_x_m=REFERENCE_QX,
        qber_m=REFERENCE_QBER,
        N=4,
    )


@pytest.fixture(scope="session")
def code_library() -> CodeLibrary:
    """Codes are built once per test session"""
    return CodeLibrary(cache_dir=None)


@pytest.fixture(scope="session")
def code_two_thirds(code_library):
    return code_library.get("2/3", TEST_BLOCK_LENGTH)


@pytest.fixture(scope="session")
def code_four_fifths(code_library):
    return code_library.get("4/5", TEST_BLOCK_LENGTH)


@pytest.fixture
def tmp_output(tmp_path) -> Path:
    out = tmp_path / "output"
    out.mkdir()
    return out


@pytest.fixture
def desk_config(tmp_output) -> ExperimentConfig:
    """Bundled desk-scale configuration writing into a temporary directory"""
    return load_config(CONFIG_DIR / "desk.toml", [f'output.directory="{tmp_output.as_posix()}"'])
