from pathlib import Path

import numpy as np
import pytest

from streaming_ac.config import toy_config
from streaming_ac.pipeline import Model
from streaming_ac.weights import init_weights

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance results, printed at the end of the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def toy_model():
    cfg = toy_config()
    return Model(cfg, init_weights(cfg, 7))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def noise(seconds, seed=0, sample_rate=16000, amp=0.1):
    r = np.random.default_rng(seed)
    return (amp * r.standard_normal(int(seconds * sample_rate))).astype(np.float32)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
