from pathlib import Path

import pytest

# The conformance fixtures are owned by the consumer side of the protocol;
# they are shared data files, not code.
CONFORMANCE_DIR = Path(__file__).parents[2] / "tests" / "fixtures" / "sidecar_conformance"


@pytest.fixture(scope="session")
def conformance_dir():
    assert CONFORMANCE_DIR.is_dir(), f"missing conformance fixtures at {CONFORMANCE_DIR}"
    return CONFORMANCE_DIR
