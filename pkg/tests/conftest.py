import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from util import WORLD


@pytest.fixture(scope="session")
def world():
    return WORLD


@pytest.fixture(autouse=True)
def llm_api_key(monkeypatch):
    monkeypatch.setenv("HEXFLEET_LLM_API_KEY", "test-key")
