import os
import sys

import pytest

# Repo root on the import path so tests import core/ and features/ like main.py does
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core.market import LocalVolSurface  # noqa: E402
from features import presets  # noqa: E402


@pytest.fixture
def zero_curve():
    return presets.curve("zero")


@pytest.fixture
def default_curve():
    return presets.curve("default")


@pytest.fixture
def hw_default():
    return presets.hull_white("hw_default")


@pytest.fixture
def asset1_lv(zero_curve):
    return LocalVolSurface(presets.surface("asset1"), zero_curve)


@pytest.fixture
def config_home(tmp_path, monkeypatch):
    """HOME pointed at a temp dir so ConfigStore writes there"""
    monkeypatch.setenv("HOME", str(tmp_path))
    return tmp_path
