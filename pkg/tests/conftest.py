import numpy as np
import pytest

from wmfm.datagen import ScenarioConfig, build_dataset
from wmfm.model import EncoderConfig


def small_encoder(scenario=None, dtype="float64", **kw):
    """A narrow encoder on the default scenario input shapes, fast enough for unit tests."""
    scenario = scenario or ScenarioConfig()
    sizes = dict(
        embed_dim=8, channel_conv=(4,), channel_head=(16, 8), image_backbone=(4, 8),
        image_head=(16, 8), projection_head=(16, 8), dtype=dtype,
    )
    sizes.update(kw)
    return EncoderConfig.for_scenario(scenario, **sizes)


@pytest.fixture(scope="session")
def scenario():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def small_ds(scenario):
    return build_dataset(scenario, 240, split_ratios=(0.5, 0.25, 0.25), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
