#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Losses Library

稳健回归损失函数库，提供 M 估计所需的损失族及其完整导数层级。

功能特点:
- 三种损失族: 平方损失 (squared)、Huber(α)、Welsch(α)
- ρ, ψ=ρ′, ψ′, ψ″ 全部支持标量与 numpy 数组
- 每一族的导数界 (L_ψ, L_ψ′, L_ψ″)，供理论模块计算半径
- 配置 JSON 形式 {"family": "welsch", "alpha": 0.1} 的解析与输出
"""

import math
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)


class InvalidLossSpecError(ValueError):
    """损失函数配置非法 (未知族或 α 越界)"""


class LossFamily(str, Enum):
    SQUARED = "squared"
    HUBER = "huber"
    WELSCH = "welsch"


@dataclass(frozen=True)
class LossSpec:
    """
    损失函数配置

    Args:
        family (LossFamily): 损失族
        alpha (float): 调节参数 α；平方损失忽略该参数
    """
    family: LossFamily
    alpha: float = 0.0

    def __post_init__(self):
        try:
            family = LossFamily(self.family)
        except ValueError:
            raise InvalidLossSpecError(f"未知的损失族: {self.family!r}") from None
        object.__setattr__(self, "family", family)

        alpha = float(self.alpha)
        if not math.isfinite(alpha) or alpha < 0:
            raise InvalidLossSpecError(f"α 必须为非负有限数: {self.alpha}")
        if family is not LossFamily.SQUARED and alpha <= 0:
            raise InvalidLossSpecError(f"{family.value} 损失要求 α > 0, 当前 α={alpha}")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def squared(cls):
        return cls(LossFamily.SQUARED, 0.0)

    @classmethod
    def huber(cls, alpha):
        return cls(LossFamily.HUBER, alpha)

    @classmethod
    def welsch(cls, alpha):
        return cls(LossFamily.WELSCH, alpha)

    @classmethod
    def from_dict(cls, data):
        """从配置字典构造，例如 {"family": "huber", "alpha": 1.0}"""
        if not isinstance(data, dict) or "family" not in data:
            raise InvalidLossSpecError(f"损失配置缺少 family 字段: {data!r}")
        family = str(data["family"]).lower()
        return cls(family, data.get("alpha", 0.0))

    def to_dict(self):
        return {"family": self.family.value, "alpha": self.alpha}

    @property
    def is_convex(self):
        return self.family is not LossFamily.WELSCH

    def label(self):
        if self.family is LossFamily.SQUARED:
            return "squared"
        return f"{self.family.value}(α={self.alpha:g})"


@dataclass(frozen=True)
class LossBounds:
    """导数上界: |ψ| ≤ l_psi, |ψ′| ≤ l_psi1, |ψ″| ≤ l_psi2"""
    l_psi: float
    l_psi1: float
    l_psi2: float

    @property
    def universal(self):
        # 单一常数形式 max{‖ψ‖∞, ‖ψ′‖∞, ‖ψ″‖∞}
        return max(self.l_psi, self.l_psi1, self.l_psi2)

    def to_dict(self):
        return {"l_psi": self.l_psi, "l_psi1": self.l_psi1, "l_psi2": self.l_psi2}


def loss_for_alpha(family, alpha):
    """
    按实验网格中的 α 取损失: α=0 统一视为最小二乘基线

    Args:
        family (str | LossFamily): α>0 时使用的损失族
        alpha (float): 网格中的 α

    Returns:
        LossSpec: 对应的损失配置
    """
    if float(alpha) == 0.0:
        return LossSpec.squared()
    return LossSpec(LossFamily(family), alpha)


def _as_array(t):
    arr = np.asarray(t, dtype=np.float64)
    return arr, arr.ndim == 0


def _finish(out, scalar):
    return float(out) if scalar else out


def rho(spec, t):
    """损失值 ρ_α(t)"""
    t, scalar = _as_array(t)
    a = spec.alpha
    if spec.family is LossFamily.SQUARED:
        out = 0.5 * t * t
    elif spec.family is LossFamily.HUBER:
        at = np.abs(t)
        out = np.where(at <= a, 0.5 * t * t, a * (at - 0.5 * a))
    else:
        # expm1 保证 α→0 时趋于 t²/2
        out = -np.expm1(-0.5 * a * t * t) / a
    return _finish(out, scalar)


def psi(spec, t):
    """得分函数 ψ = ρ′，奇函数"""
    t, scalar = _as_array(t)
    a = spec.alpha
    if spec.family is LossFamily.SQUARED:
        out = t.copy() if not scalar else t
    elif spec.family is LossFamily.HUBER:
        out = np.clip(t, -a, a)
    else:
        out = t * np.exp(-0.5 * a * t * t)
    return _finish(out, scalar)


def psi_prime(spec, t):
    """ψ′；Huber 在拐点 |t|=α 处取 1"""
    t, scalar = _as_array(t)
    a = spec.alpha
    if spec.family is LossFamily.SQUARED:
        out = np.ones_like(t)
    elif spec.family is LossFamily.HUBER:
        out = np.where(np.abs(t) <= a, 1.0, 0.0)
    else:
        at2 = a * t * t
        out = np.exp(-0.5 * at2) * (1.0 - at2)
    return _finish(out, scalar)


def psi_double_prime(spec, t):
    """ψ″；Welsch 为 αt(αt²−3)e^{−αt²/2}，在 t=0 处为 0"""
    t, scalar = _as_array(t)
    a = spec.alpha
    if spec.family is LossFamily.WELSCH:
        at2 = a * t * t
        out = np.exp(-0.5 * at2) * a * t * (at2 - 3.0)
    else:
        out = np.zeros_like(t)
    return _finish(out, scalar)


def bounds(spec):
    """
    理论公式使用的导数上界

    Welsch 的 |ψ| 界取较松的 √(e/α)，与闭式半径中的常数保持一致；
    紧界见 tight_psi_bound。
    """
    a = spec.alpha
    if spec.family is LossFamily.SQUARED:
        return LossBounds(math.inf, 1.0, 0.0)
    if spec.family is LossFamily.HUBER:
        return LossBounds(a, 1.0, 0.0)
    return LossBounds(math.sqrt(math.e / a), 1.0, 1.5 * math.sqrt(a))


def tight_psi_bound(spec):
    """sup|ψ| 的精确值 (Welsch 在 t=1/√α 取到 1/√(αe))"""
    if spec.family is LossFamily.SQUARED:
        return math.inf
    if spec.family is LossFamily.HUBER:
        return spec.alpha
    return 1.0 / math.sqrt(spec.alpha * math.e)
