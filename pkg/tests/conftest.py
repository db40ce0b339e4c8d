from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def repo_configs():
    paths = sorted((REPO_ROOT / "configs").glob("*.yaml"))
    assert paths, "configs/ directory is empty"
    return paths
