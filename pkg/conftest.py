#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
测试公共配置: 模块路径、共享数据夹具与 slow 标记
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from Losses.loss_lib import LossSpec
from Data.gross_error import Dataset, DesignSpec, GrossErrorSpec, generate, equal_theta0


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 完整规模的定性复现，耗时较长 (-m 'not slow' 跳过)")


@pytest.fixture
def welsch():
    return LossSpec.welsch(0.1)


@pytest.fixture
def huber():
    return LossSpec.huber(1.0)


@pytest.fixture
def lowdim_design():
    """p=10, n=200, N(0, I) 设计, ‖θ₀‖₂=1"""
    return DesignSpec(200, 10, "gaussian", 1.0, equal_theta0(10, 1.0))


@pytest.fixture
def clean_noise():
    return GrossErrorSpec(0.0, sigma=1.0, outlier_sigma=3.0)


@pytest.fixture
def lowdim_dataset(lowdim_design, clean_noise):
    return generate(lowdim_design, clean_noise, seed=7)


@pytest.fixture
def integer_dataset():
    """整数取值的小数据集，风险与梯度可精确手算"""
    x = np.array([[1.0, 2.0], [-1.0, 0.0], [3.0, -2.0], [0.0, 1.0]])
    y = np.array([2.0, -1.0, 4.0, 0.0])
    return Dataset(x, y)
