import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from c2fdet.cascade import PipelineConfig


@pytest.fixture
def cfg():
    return PipelineConfig()


@pytest.fixture
def fixtures_dir():
    return Path(__file__).parent / "fixtures"
