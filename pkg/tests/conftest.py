"""
测试公共配置
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# 添加项目根目录到 Python 路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.measures import MeasureSpec, preset  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def kingman():
    return preset("kingman")


@pytest.fixture
def uniform():
    return preset("uniform")


@pytest.fixture
def x2():
    return preset("x2")


@pytest.fixture
def beta_half():
    return MeasureSpec.beta(0.5)
