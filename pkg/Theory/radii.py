#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Theory 稳健性/可处理性半径计算

功能特点:
- Huber / Welsch 的闭式 η₀、η₁、κ
- 通用管线: 由 H(s) 与导数界计算 η₀、η₁、κ，用于交叉验证闭式结果
- 高维 ℓ₁ 惩罚问题的统计半径 r_s，连同常数 C₀、C₁ 与推荐 λ_n

各公式使用的导数界:
- η₀ 使用 |ψ| 的界 l_psi
- η₁ 分子与 κ 使用 |ψ′| 的界 l_psi1，η₁ 分母使用 |ψ″| 的界 l_psi2
"""

import math
import logging
from dataclasses import dataclass, asdict, replace

from Losses.loss_lib import LossSpec, LossFamily, bounds
from .quadrature import (
    DEFAULT_QUAD_TOL,
    UnboundedScoreError,
    big_h,
    h_prime_zero,
    huber_bound_big_h,
)

logger = logging.getLogger(__name__)


def _safe_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class ModelConstants:
    """
    理论常数

    Args:
        sigma (float): 正常噪声标准差 σ
        tau (float): 设计尺度 τ
        r (float): 约束球半径
        gamma (float): E[xxᵀ] ⪰ γτ²I 中的 γ ∈ (0,1]
        c2 (float): 四阶矩常数 E⟨u,X⟩⁴ ≤ c₂‖u‖⁴τ⁴
        delta (float): 污染比例 δ ∈ [0,1)
    """
    sigma: float
    tau: float
    r: float
    gamma: float = 1.0
    c2: float = 3.0
    delta: float = 0.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.tau > 0 and self.r > 0):
            raise ValueError(f"σ, τ, r 必须为正: σ={self.sigma}, τ={self.tau}, r={self.r}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"γ 必须位于 (0,1]: {self.gamma}")
        if not self.c2 > 0:
            raise ValueError(f"c₂ 必须为正: {self.c2}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"δ 必须位于 [0,1): {self.delta}")

    @classmethod
    def gaussian_design(cls, sigma=1.0, tau=1.0, r=10.0, delta=0.0):
        """高斯设计: γ=1, c₂=3"""
        return cls(sigma, tau, r, gamma=1.0, c2=3.0, delta=delta)

    @classmethod
    def uniform_design(cls, sigma=1.0, tau=1.0, r=10.0, delta=0.0):
        """均匀设计: γ=1/3, c₂=1，Welsch 闭式半径的常数在此取值下成立"""
        return cls(sigma, tau, r, gamma=1.0 / 3.0, c2=1.0, delta=delta)

    def with_delta(self, delta):
        return replace(self, delta=delta)

    @property
    def s_tilde(self):
        """H 的求值点 (8τr/3)√(c₂/γ)"""
        return 8.0 * self.tau * self.r / 3.0 * math.sqrt(self.c2 / self.gamma)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TheoryRadii:
    eta0: float
    eta1: float
    kappa: float
    tractable: bool

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class HighDimRadius:
    r_s: float
    lambda_rec: float
    c0: float
    c1: float

    def to_dict(self):
        return asdict(self)


def _regime(eta0, eta1):
    # η₁ = +∞ (Huber) 时 η₀ 恒小于 η₁，η₀ 的 ∞ 来自 exp 溢出
    if eta1 == math.inf:
        return True
    return bool(eta1 > 0 and eta0 < eta1)


def _kappa(h0, l_psi1, mc):
    return ((1.0 - mc.delta) * h0 * mc.gamma - mc.delta * l_psi1) / 2.0 * mc.tau ** 2


def huber_radii(alpha, mc, quad_tol=DEFAULT_QUAD_TOL):
    """
    Huber 闭式: η₀ = δ/(1−δ)·4√(2π)σ³/((α²+3σ²)τ)·e^{(α²+22τ²r²)/(2σ²)}，η₁ = ∞

    κ 中的 h′(0) 由数值积分得到。
    """
    spec = LossSpec.huber(alpha)
    d, s, t, r = mc.delta, mc.sigma, mc.tau, mc.r
    if d == 0:
        eta0 = 0.0
    else:
        lead = d / (1.0 - d) * 4.0 * math.sqrt(2.0 * math.pi) * s ** 3 / ((alpha ** 2 + 3.0 * s ** 2) * t)
        eta0 = lead * _safe_exp((alpha ** 2 + 22.0 * t ** 2 * r ** 2) / (2.0 * s ** 2))
    eta1 = math.inf
    kappa = _kappa(h_prime_zero(spec, s, quad_tol), bounds(spec).l_psi1, mc)
    return TheoryRadii(eta0, eta1, kappa, _regime(eta0, eta1))


def welsch_radii(alpha, mc):
    """
    Welsch 闭式:
    η₀ = δ/(1−δ)·√(e/α)·4(1+ασ²)^{3/2}/τ·e^{32αr²τ²/(3(1+ασ²))}
    η₁ = [τ² − δ(τ² + (1+ασ²)^{3/2})] / (3√(3α)(1+ασ²)^{3/2}τ)
    κ 使用 h′(0) = (1+ασ²)^{−3/2}
    """
    spec = LossSpec.welsch(alpha)
    d, t, r = mc.delta, mc.tau, mc.r
    a = 1.0 + alpha * mc.sigma ** 2
    a15 = a ** 1.5
    if d == 0:
        eta0 = 0.0
    else:
        lead = d / (1.0 - d) * math.sqrt(math.e / alpha) * 4.0 * a15 / t
        eta0 = lead * _safe_exp(32.0 * alpha * r ** 2 * t ** 2 / (3.0 * a))
    eta1 = (t ** 2 - d * (t ** 2 + a15)) / (3.0 * math.sqrt(3.0 * alpha) * a15 * t)
    kappa = _kappa(1.0 / a15, bounds(spec).l_psi1, mc)
    return TheoryRadii(eta0, eta1, kappa, _regime(eta0, eta1))


def _curvature_denominator(spec, mc, quad_tol, use_closed_form, huber_bound):
    if spec.family is LossFamily.HUBER and huber_bound:
        h_value = huber_bound_big_h(spec.alpha, mc.sigma, mc.s_tilde)
    else:
        h_value = big_h(spec, mc.sigma, mc.s_tilde, quad_tol, use_closed_form)
    return 0.75 * h_value * mc.tau * mc.gamma


def generic_eta0(spec, mc, quad_tol=DEFAULT_QUAD_TOL, use_closed_form=False, huber_bound=False):
    """
    η₀ = δL_ψ / ((1−δ)·(3/4)·H((8τr/3)√(c₂/γ))·τγ)

    Args:
        spec (LossSpec): 损失 (L_ψ 必须有限)
        mc (ModelConstants): 理论常数
        quad_tol (float): 积分容差
        use_closed_form (bool): Welsch 是否使用 H 的闭式 (默认走数值路径)
        huber_bound (bool): Huber 是否改用闭式半径所用的 H 下界

    Returns:
        float: η₀
    """
    b = bounds(spec)
    if not math.isfinite(b.l_psi):
        raise UnboundedScoreError(f"{spec.label()} 的 L_ψ 无界，η₀ 无定义")
    if mc.delta == 0:
        return 0.0
    denom = _curvature_denominator(spec, mc, quad_tol, use_closed_form, huber_bound)
    if denom == 0:
        return math.inf
    return mc.delta * b.l_psi / ((1.0 - mc.delta) * denom)


def generic_eta1(spec, mc, quad_tol=DEFAULT_QUAD_TOL):
    """
    η₁ = ((1−δ)h′(0)γ − δL_ψ′) / (2√c₂ τ L_ψ″)

    L_ψ″=0 (Huber、平方损失) 时返回带分子符号的 ∞。
    """
    b = bounds(spec)
    num = (1.0 - mc.delta) * h_prime_zero(spec, mc.sigma, quad_tol) * mc.gamma - mc.delta * b.l_psi1
    den = 2.0 * math.sqrt(mc.c2) * mc.tau * b.l_psi2
    if den == 0:
        return math.copysign(math.inf, num) if num != 0 else 0.0
    return num / den


def generic_kappa(spec, mc, quad_tol=DEFAULT_QUAD_TOL):
    """κ = ((1−δ)h′(0)γ − δL_ψ′)/2 · τ²"""
    return _kappa(h_prime_zero(spec, mc.sigma, quad_tol), bounds(spec).l_psi1, mc)


def generic_radii(spec, mc, quad_tol=DEFAULT_QUAD_TOL, use_closed_form=False, huber_bound=False):
    eta0 = generic_eta0(spec, mc, quad_tol, use_closed_form, huber_bound)
    eta1 = generic_eta1(spec, mc, quad_tol)
    return TheoryRadii(eta0, eta1, generic_kappa(spec, mc, quad_tol), _regime(eta0, eta1))


def family_radii(spec, mc, quad_tol=DEFAULT_QUAD_TOL):
    """按损失族选择闭式半径"""
    if spec.family is LossFamily.HUBER:
        return huber_radii(spec.alpha, mc, quad_tol)
    if spec.family is LossFamily.WELSCH:
        return welsch_radii(spec.alpha, mc)
    raise UnboundedScoreError("平方损失没有对应的稳健性半径")


def high_dim_radius(spec, mc, s0, n, p, lambda_n, m_bound, c_pi,
                    quad_tol=DEFAULT_QUAD_TOL, use_closed_form=True):
    """
    高维统计半径
    r_s = δ/(1−δ)·C₀ + 4√s₀/(1−δ)·(M√(log p/n) + λ_n)·C₁

    C₀ = L_ψ / ((3/4)H(s̃)τγ)，C₁ = max(1, C_π) / ((3/4)H(s̃)τγ)。
    推荐 λ_n = 2C_π·M√(log p/n) + (L_ψτ/2)·δ/√s₀；lambda_n=None 时直接取推荐值。

    Returns:
        HighDimRadius: r_s、推荐 λ_n 与常数 C₀、C₁
    """
    b = bounds(spec)
    if not math.isfinite(b.l_psi):
        raise UnboundedScoreError(f"{spec.label()} 的 L_ψ 无界，r_s 无定义")
    if s0 < 1 or n < 1 or p < 1:
        raise ValueError(f"s0, n, p 必须为正整数: s0={s0}, n={n}, p={p}")
    if (lambda_n is not None and lambda_n < 0) or not m_bound > 0 or not c_pi > 0:
        raise ValueError(f"要求 λ_n ≥ 0, M > 0, C_π > 0: λ_n={lambda_n}, M={m_bound}, C_π={c_pi}")

    denom = _curvature_denominator(spec, mc, quad_tol, use_closed_form, huber_bound=False)
    c0 = b.l_psi / denom
    c1 = max(1.0, c_pi) / denom
    rate = m_bound * math.sqrt(math.log(p) / n)
    d = mc.delta
    lambda_rec = 2.0 * c_pi * rate + b.l_psi * mc.tau / 2.0 * d / math.sqrt(s0)
    if lambda_n is None:
        lambda_n = lambda_rec
    r_s = d / (1.0 - d) * c0 + 4.0 * math.sqrt(s0) / (1.0 - d) * (rate + lambda_n) * c1
    if lambda_n < lambda_rec * (1.0 - 1e-12):
        logger.warning(f"⚠️ λ_n={lambda_n:.4g} 低于推荐值 {lambda_rec:.4g}，r_s 的前提不成立")
    return HighDimRadius(r_s, lambda_rec, c0, c1)
