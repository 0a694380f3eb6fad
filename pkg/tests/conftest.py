import pytest

from dpchain.bench import BenchConfig, generate_write_workload, ground_truth
from dpchain.privacy import derive_seed


@pytest.fixture(scope="session")
def default_config():
    return BenchConfig()


@pytest.fixture(scope="session")
def small_config():
    """Cut-down run for fast pipeline tests."""
    return BenchConfig(
        init_tx_total=60,
        rates=(20.0,),
        query_round_duration=2.0,
        sweep_repetitions=2,
        endorse_delay=0.0,
        query_processing_delay=0.0,
        order_delay=0.0,
        validate_delay=0.0,
    )


@pytest.fixture(scope="session")
def workload(default_config):
    return generate_write_workload(
        default_config, derive_seed(default_config.master_seed, "workload")
    )


@pytest.fixture(scope="session")
def workload_truth(workload):
    return ground_truth(workload)
