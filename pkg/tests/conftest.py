import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from earcapauth.core import PipelineConfig  # noqa: E402
from earcapauth.ingestion import chunk_dataset  # noqa: E402
from earcapauth.synth import GeneratorParams, calibrated_params, generate_dataset  # noqa: E402


@pytest.fixture(scope="session")
def small_params():
    # 22 s sessions leave 2 s (6 chunks) after the default trims
    return GeneratorParams(
        n_participants=4,
        n_rest_sessions=12,
        n_walking_sessions=8,
        session_duration_s=22.0,
        session_sigma=20.0,
        motion_sigma_extra=30.0,
        rng_seed=11,
    )


@pytest.fixture(scope="session")
def small_dataset(small_params):
    return generate_dataset(small_params)


@pytest.fixture(scope="session")
def config():
    return PipelineConfig()


@pytest.fixture(scope="session")
def calibrated_dataset():
    return generate_dataset(calibrated_params())


@pytest.fixture(scope="session")
def calibrated_table(calibrated_dataset, config):
    return chunk_dataset(calibrated_dataset, config)
