import pytest

from graphtee.core.config import settings
from graphtee.models.config import DatasetConfig, RunConfig, TrainConfig
from graphtee.services.gradients import toy_samples


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size experiments")


def pytest_collection_modifyitems(config, items):
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    skip_reddit = pytest.mark.skip(reason="GRAPHTEE_REDDIT_DIR is not set")
    for item in items:
        if "slow" in item.keywords and not config.getoption("--runslow"):
            item.add_marker(skip_slow)
        if "reddit" in item.keywords and not settings.reddit_dir:
            item.add_marker(skip_reddit)


@pytest.fixture
def tiny_dataset_config():
    return DatasetConfig(n_graphs=30, n_nodes=8, m=2, d=3, train_fraction=0.4, val_fraction=0.3)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(
        batch_size=8,
        epochs_stage1=2,
        epochs_stage2=2,
        width=4,
        n_layers=2,
        learning_rate=1e-2,
        lambda_grid=[0.0, 1.0],
        k_percent=25.0,
        sinkhorn_iters=10,
    )


@pytest.fixture
def tiny_run_config(tiny_dataset_config, tiny_train_config):
    return RunConfig(seed=0, dataset=tiny_dataset_config, train=tiny_train_config)


@pytest.fixture
def toy_train():
    return toy_samples(0, n_graphs=8, n_nodes=6, d=3)


@pytest.fixture
def toy_val():
    return toy_samples(1, n_graphs=4, n_nodes=6, d=3)
