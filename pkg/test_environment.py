#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
环境测试脚本
检查 MEst 工具包必需的 Python 包是否已安装，以及是否满足最低版本
"""

import sys
import importlib

# (导入名, pip 包名, 最低版本)
REQUIRED_PACKAGES = [
    ('numpy', 'numpy', (1, 19)),
    ('scipy', 'scipy', (1, 7)),
    ('pandas', 'pandas', (1, 3)),
    ('tqdm', 'tqdm', (4, 59)),
]

TEST_PACKAGES = [
    ('pytest', 'pytest', (7, 0)),
    ('hypothesis', 'hypothesis', (6, 0)),
]


def _version_tuple(version):
    parts = []
    for piece in version.split('.')[:2]:
        digits = ''.join(ch for ch in piece if ch.isdigit())
        parts.append(int(digits) if digits else 0)
    return tuple(parts)


def check_packages(packages):
    """返回缺失或版本过低的包 (pip 名列表)"""
    missing = []
    for module_name, pip_name, minimum in packages:
        try:
            module = importlib.import_module(module_name)
        except ImportError:
            print(f"❌ {module_name}: 未安装 (需要: {pip_name})")
            missing.append(pip_name)
            continue
        version = getattr(module, '__version__', '0')
        if _version_tuple(version) < minimum:
            print(f"⚠️ {module_name}: 版本 {version} 过低，需要 ≥ {'.'.join(map(str, minimum))}")
            missing.append(pip_name)
        else:
            print(f"✅ {module_name}: {version}")
    return missing


def test_environment():
    """测试运行环境"""
    print("=" * 60)
    print("MEst 稳健 M 估计工具包 环境测试")
    print("=" * 60)
    print(f"✅ Python版本: {sys.version}")
    assert sys.version_info >= (3, 8), "需要 Python 3.8+"

    print("\n核心依赖:")
    missing = check_packages(REQUIRED_PACKAGES)
    print("\n测试依赖:")
    missing += check_packages(TEST_PACKAGES)

    print("\n" + "=" * 60)
    if missing:
        print("❌ 环境检查失败，缺少必需包:")
        for package in missing:
            print(f"   pip install --upgrade {package}")
    else:
        print("✅ 环境检查通过! 可以运行 mest 与测试套件")
    print("=" * 60)
    assert not missing, f"缺少或版本过低: {missing}"


if __name__ == "__main__":
    try:
        test_environment()
    except AssertionError:
        sys.exit(1)
