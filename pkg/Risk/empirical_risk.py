#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Risk 经验风险库

功能特点:
- 经验风险 R̂_n(θ) = (1/n) Σ ρ(y_i − ⟨θ, x_i⟩)，使用 math.fsum 精确求和，与求和顺序无关
- 梯度 −(1/n) Σ ψ(r_i) x_i 与 Hessian (1/n) Σ ψ′(r_i) x_i x_iᵀ
- 大维数下的 Hessian-向量积与方向曲率，无需存储 p×p 矩阵
- ℓ₁ 惩罚目标函数
- 总体风险的 Monte Carlo 估计 (附标准误)
"""

import math
import logging
from dataclasses import dataclass

import numpy as np

from Losses.loss_lib import rho, psi, psi_prime
from Data.gross_error import generate

logger = logging.getLogger(__name__)

# 超过该维数时不再构造稠密 Hessian
DENSE_HESSIAN_MAX_P = 2000


@dataclass(frozen=True, eq=False)
class RiskEval:
    """一次风险评估的结果，可序列化为 JSON"""
    value: float
    gradient: np.ndarray = None
    hessian: np.ndarray = None

    def to_dict(self):
        return {
            "value": self.value,
            "gradient": None if self.gradient is None else self.gradient.tolist(),
            "hessian": None if self.hessian is None else self.hessian.tolist(),
        }


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    std_error: float

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error}


def _mean(values):
    return math.fsum(values) / values.shape[0]


def empirical_risk(ds, spec, theta):
    """经验风险 R̂_n(θ)"""
    return _mean(rho(spec, ds.residuals(theta)))


def empirical_gradient(ds, spec, theta):
    """∇R̂_n(θ) = −(1/n) Xᵀψ(y − Xθ)"""
    r = ds.residuals(theta)
    return -(ds.x.T @ psi(spec, r)) / ds.n


def empirical_hessian(ds, spec, theta):
    """
    ∇²R̂_n(θ) = (1/n) Xᵀ diag(ψ′(r)) X，结果严格对称

    维数超过 DENSE_HESSIAN_MAX_P 时请改用 hessian_vector_product。
    """
    if ds.p > DENSE_HESSIAN_MAX_P:
        raise ValueError(f"p={ds.p} 超过稠密 Hessian 上限 {DENSE_HESSIAN_MAX_P}，请使用 hessian_vector_product")
    w = psi_prime(spec, ds.residuals(theta))
    hess = (ds.x * w[:, None]).T @ ds.x / ds.n
    return 0.5 * (hess + hess.T)


def hessian_vector_product(ds, spec, theta, v):
    """∇²R̂_n(θ) v"""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (ds.p,):
        raise ValueError(f"向量维度 {v.shape} 与 p={ds.p} 不一致")
    w = psi_prime(spec, ds.residuals(theta))
    return ds.x.T @ (w * (ds.x @ v)) / ds.n


def directional_curvature(ds, spec, theta, v):
    """νᵀ∇²R̂_n(θ)ν = (1/n) Σ ψ′(r_i)⟨x_i, ν⟩²"""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (ds.p,):
        raise ValueError(f"向量维度 {v.shape} 与 p={ds.p} 不一致")
    w = psi_prime(spec, ds.residuals(theta))
    xv = ds.x @ v
    return _mean(w * xv * xv)


def penalized_objective(ds, spec, theta, lambda_n):
    """R̂_n(θ) + λ_n‖θ‖₁"""
    if lambda_n < 0:
        raise ValueError(f"惩罚系数 λ_n 必须非负: {lambda_n}")
    return empirical_risk(ds, spec, theta) + lambda_n * float(np.abs(theta).sum())


def risk_and_gradient(ds, spec, theta):
    """一次残差计算同时得到风险与梯度，供迭代求解器使用"""
    r = ds.residuals(theta)
    return _mean(rho(spec, r)), -(ds.x.T @ psi(spec, r)) / ds.n


def evaluate(ds, spec, theta, with_gradient=True, with_hessian=False):
    """组合评估，返回 RiskEval"""
    value = empirical_risk(ds, spec, theta)
    gradient = empirical_gradient(ds, spec, theta) if with_gradient else None
    hessian = empirical_hessian(ds, spec, theta) if with_hessian else None
    return RiskEval(value, gradient, hessian)


def population_risk_mc(design, noise, spec, theta, n_mc, seed):
    """
    总体风险 R(θ) = E ρ(Y − ⟨θ, X⟩) 的 Monte Carlo 估计

    Args:
        design (DesignSpec): 设计配置 (其中 n 被 n_mc 取代)
        noise (GrossErrorSpec): 噪声配置
        spec (LossSpec): 损失
        theta (np.ndarray): 评估点
        n_mc (int): Monte Carlo 样本量 (≥ 100)
        seed (int): 随机种子

    Returns:
        MonteCarloEstimate: 估计值与标准误
    """
    if n_mc < 100:
        raise ValueError(f"Monte Carlo 样本量至少为 100: {n_mc}")
    sample = generate(design.with_n(n_mc), noise, seed)
    values = rho(spec, sample.residuals(theta))
    value = _mean(values)
    std_error = float(np.std(values, ddof=1)) / math.sqrt(n_mc)
    return MonteCarloEstimate(value, std_error)
