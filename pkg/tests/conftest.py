import numpy as np
import pytest

from prach_hybrid.dataset import DatasetSpec, generate_instances, split
from prach_hybrid.mlp import TrainConfig, train
from prach_hybrid.zc import RootSet


@pytest.fixture(scope="session")
def roots():
    return RootSet()


class ModelCache:
    """Desk-scale models trained once per test session."""

    def __init__(self):
        self._models = {}
        self._data = {}

    def dataset(self, channel="tdlc300", num_rx=1, kind="pdp", seed=11, instances=2000):
        key = (channel, num_rx, kind, seed, instances)
        if key not in self._data:
            spec = DatasetSpec(instances_per_snr=instances, channel=channel, num_rx=num_rx,
                               input_kind=kind, seed=seed)
            self._data[key] = generate_instances(spec)
        return self._data[key]

    def model(self, channel="tdlc300", num_rx=1, kind="pdp", seed=11, instances=2000):
        key = (channel, num_rx, kind, seed, instances)
        if key not in self._models:
            data = self.dataset(channel, num_rx, kind, seed, instances)
            tr, _ = split(data, 0.75, seed)
            m = train(tr, TrainConfig(seed=seed))
            m.train_meta["dataset"] = {"channel": channel, "num_rx": num_rx}
            self._models[key] = m
        return self._models[key]


@pytest.fixture(scope="session")
def models():
    return ModelCache()


@pytest.fixture(scope="session")
def pdp_model(models):
    return models.model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_record():
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
