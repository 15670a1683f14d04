#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Theory 数值积分工具

h(z) = ∫ f₀(ε) ψ(z + ε) dε，f₀ = N(0, σ²)，以及 H(s) = inf_{0<z≤s} h(z)/z。

功能特点:
- 自适应 Gauss–Kronrod 积分 (scipy.integrate.quad)，截断于 z ± 12σ
- 利用 ψ 的奇性改写为 [0, ∞) 上的积分，h(z)/z 在 z→0 时数值稳定
- H(s) 数值解: 对数网格上的向量化积分 (quad_vec) + 有界 Brent 局部细化
- Welsch 的闭式 h、H、h′(0)；Huber 闭式半径所用的 H 下界
"""

import math
import logging

import numpy as np
from scipy import integrate, optimize, special

from Losses.loss_lib import LossFamily, psi, psi_prime

logger = logging.getLogger(__name__)

# 高斯尾截断宽度 (以 σ 计)，尾部质量 < 1e-31
TRUNCATION = 12.0
DEFAULT_QUAD_TOL = 1e-10
DEFAULT_GRID_SIZE = 10000


class UnboundedScoreError(ValueError):
    """损失的 ψ 无界 (平方损失)，相关理论量无定义"""


def _require_bounded(spec):
    if spec.family is LossFamily.SQUARED:
        raise UnboundedScoreError("平方损失的 ψ 无界，无法计算 h(z) / H(s) / η₀")


def _require_sigma(sigma):
    if not sigma > 0:
        raise ValueError(f"噪声标准差 σ 必须为正: {sigma}")


def _gauss(u, sigma):
    return np.exp(-0.5 * (u / sigma) ** 2) / (math.sqrt(2.0 * math.pi) * sigma)


def _breakpoints(spec, lo, hi, extra=()):
    pts = list(extra)
    if spec.family is LossFamily.HUBER:
        pts.append(spec.alpha)
    pts = sorted({p for p in pts if lo < p < hi})
    return pts or None


def h_over_z(spec, sigma, z, quad_tol=DEFAULT_QUAD_TOL):
    """
    h(z)/z (z > 0)

    h(z)/z = ∫₀^∞ ψ(t) φ_σ(t − z) (1 − e^{−2tz/σ²}) / z dt
    """
    _require_bounded(spec)
    _require_sigma(sigma)
    if not z > 0:
        raise ValueError(f"h_over_z 要求 z > 0: {z}")
    two_over_var = 2.0 / sigma ** 2

    def integrand(t):
        return psi(spec, t) * _gauss(t - z, sigma) * (-math.expm1(-two_over_var * t * z) / z)

    lo = max(0.0, z - TRUNCATION * sigma)
    hi = z + TRUNCATION * sigma
    value, _ = integrate.quad(integrand, lo, hi, epsabs=quad_tol, epsrel=quad_tol, limit=400,
                              points=_breakpoints(spec, lo, hi, extra=(z,)))
    return value


def h_numeric(spec, sigma, z, quad_tol=DEFAULT_QUAD_TOL):
    """
    h(z) 的自适应积分，h(0)=0，h(−z)=−h(z)

    Args:
        spec (LossSpec): 损失 (平方损失被拒绝)
        sigma (float): 正常噪声标准差
        z (float): 位置
        quad_tol (float): 积分绝对/相对容差

    Returns:
        float: h(z)
    """
    _require_bounded(spec)
    _require_sigma(sigma)
    z = float(z)
    if z == 0.0:
        return 0.0
    if z < 0:
        return -h_numeric(spec, sigma, -z, quad_tol)
    return z * h_over_z(spec, sigma, z, quad_tol)


def h_prime_zero(spec, sigma, quad_tol=DEFAULT_QUAD_TOL, use_closed_form=True):
    """h′(0) = E_{f₀} ψ′(ε)"""
    _require_sigma(sigma)
    if spec.family is LossFamily.SQUARED:
        return 1.0
    if spec.family is LossFamily.WELSCH and use_closed_form:
        return welsch_h_prime_zero(spec.alpha, sigma)
    half = TRUNCATION * sigma
    pts = None
    if spec.family is LossFamily.HUBER and spec.alpha < half:
        pts = [-spec.alpha, spec.alpha]
    value, _ = integrate.quad(lambda t: psi_prime(spec, t) * _gauss(t, sigma), -half, half,
                              epsabs=quad_tol, epsrel=quad_tol, limit=400, points=pts)
    return value


def huber_h_prime_zero(alpha, sigma):
    """Huber: h′(0) = P(|ε| ≤ α) = erf(α / (σ√2))"""
    return float(special.erf(alpha / (sigma * math.sqrt(2.0))))


def welsch_h(alpha, sigma, z):
    """Welsch 闭式 h(z) = z(1+ασ²)^{−3/2} exp(−αz²/(2(1+ασ²)))"""
    a = 1.0 + alpha * sigma ** 2
    return z * a ** -1.5 * math.exp(-alpha * z * z / (2.0 * a))


def welsch_big_h(alpha, sigma, s):
    """Welsch 闭式 H(s)；h(z)/z 单调递减，下确界在 z=s 处取到"""
    a = 1.0 + alpha * sigma ** 2
    return a ** -1.5 * math.exp(-alpha * s * s / (2.0 * a))


def welsch_h_prime_zero(alpha, sigma):
    return (1.0 + alpha * sigma ** 2) ** -1.5


def huber_bound_big_h(alpha, sigma, s):
    """Huber 闭式半径所用的 H(s) 下界 (α³/(3√(2π)σ³) + α/(√(2π)σ)) e^{−(s²+α²)/(2σ²)}"""
    root = math.sqrt(2.0 * math.pi)
    lead = alpha ** 3 / (3.0 * root * sigma ** 3) + alpha / (root * sigma)
    return lead * math.exp(-(s * s + alpha * alpha) / (2.0 * sigma ** 2))


def _h_over_z_grid(spec, sigma, grid, quad_tol):
    two_over_var = 2.0 / sigma ** 2

    def integrand(t):
        return psi(spec, t) * _gauss(t - grid, sigma) * (-np.expm1(-two_over_var * t * grid) / grid)

    hi = grid[-1] + TRUNCATION * sigma
    values, _ = integrate.quad_vec(integrand, 0.0, hi, epsabs=quad_tol, epsrel=quad_tol,
                                   norm="max", points=_breakpoints(spec, 0.0, hi))
    return values


def big_h(spec, sigma, s, quad_tol=DEFAULT_QUAD_TOL, use_closed_form=True, grid_size=DEFAULT_GRID_SIZE):
    """
    H(s) = inf_{0<z≤s} h(z)/z

    Welsch 默认使用闭式；其余情形在 (1e−8·s, s] 的对数网格上求 h(z)/z，
    再在网格最小点的相邻区间内做有界 Brent 细化。最终值均由标量积分重新计算。

    Args:
        spec (LossSpec): 损失
        sigma (float): 正常噪声标准差
        s (float): 上界 s > 0
        quad_tol (float): 积分容差
        use_closed_form (bool): Welsch 是否使用闭式
        grid_size (int): 网格点数

    Returns:
        float: H(s)
    """
    _require_bounded(spec)
    _require_sigma(sigma)
    if not s > 0:
        raise ValueError(f"H(s) 要求 s > 0: {s}")
    if spec.family is LossFamily.WELSCH and use_closed_form:
        return welsch_big_h(spec.alpha, sigma, s)

    grid = np.geomspace(1e-8 * s, s, int(grid_size))
    values = _h_over_z_grid(spec, sigma, grid, quad_tol)
    idx = int(np.argmin(values))
    candidates = [h_over_z(spec, sigma, float(grid[idx]), quad_tol)]

    lo = float(grid[max(idx - 1, 0)])
    hi = float(grid[min(idx + 1, len(grid) - 1)])
    if hi > lo:
        refined = optimize.minimize_scalar(lambda z: h_over_z(spec, sigma, z, quad_tol),
                                           bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-10 * s})
        candidates.append(h_over_z(spec, sigma, float(refined.x), quad_tol))
    result = min(candidates)
    logger.debug(f"H({s:.4g}) = {result:.6e} ({spec.label()}, σ={sigma})")
    return result
