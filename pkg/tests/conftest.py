import math
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"

FIG5_X0 = 0.97817754723285288
FIG5_P = math.pi / 2


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIG_DIR
