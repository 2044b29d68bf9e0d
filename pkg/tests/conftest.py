import numpy as np
import pytest
import torch

from swanisac.config import RunConfig

torch.set_num_threads(1)


@pytest.fixture
def desk_cfg():
    return RunConfig().replace(geometry={"N": 8}, data={"num_samples": 20},
                               train={"epochs": 2, "batch": 8, "eval_batch": 16})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
