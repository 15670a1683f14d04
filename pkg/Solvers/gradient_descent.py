#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Solvers 梯度下降求解器

约束问题 min R̂_n(θ) s.t. ‖θ‖₂ ≤ r 使用投影梯度下降；
惩罚问题 min R̂_n(θ) + λ_n‖θ‖₁ s.t. ‖θ‖₂ ≤ r 使用近端梯度下降。

功能特点:
- 固定步长 (模拟实验 1，案例研究 0.5) 或安全步长 1/L̂
- 可选回溯线搜索 (步长减半直到充分下降)
- 迭代位移停止准则 ‖θ_{k+1} − θ_k‖₂ ≤ tol
- 按步幅记录轨迹 (到最终点距离、目标函数值)
- 目标函数非有限或投影前范数超过 10r 时抛出 DivergenceError，携带已记录的部分轨迹
"""

import math
import logging
from dataclasses import dataclass, asdict, replace

import numpy as np
import pandas as pd

from Losses.loss_lib import bounds
from Risk.empirical_risk import risk_and_gradient
from .proximal import project_ball, prox_l1_ball

logger = logging.getLogger(__name__)

# 投影前范数超过 DIVERGENCE_FACTOR·r 视为发散
DIVERGENCE_FACTOR = 10.0
MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class SolverConfig:
    """
    求解器配置

    Args:
        radius (float): 约束球半径 r
        step_size (float | None): 固定步长；None 表示使用安全步长 1/L̂
        lambda_n (float): ℓ₁ 惩罚系数，0 表示无惩罚
        max_iters (int): 最大迭代次数
        tol (float): 迭代位移停止阈值
        seed (int): 多起点抽样种子
        record_stride (int): 轨迹记录步幅
        backtracking (bool): 是否启用回溯线搜索
    """
    radius: float = 10.0
    step_size: float = 1.0
    lambda_n: float = 0.0
    max_iters: int = 10000
    tol: float = 1e-8
    seed: int = 0
    record_stride: int = 1
    backtracking: bool = False

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"球半径 r 必须为正: {self.radius}")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError(f"步长必须为正: {self.step_size}")
        if not self.lambda_n >= 0:
            raise ValueError(f"λ_n 必须非负: {self.lambda_n}")
        if int(self.max_iters) < 1:
            raise ValueError(f"max_iters 必须为正整数: {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol 必须为正: {self.tol}")
        if int(self.record_stride) < 1:
            raise ValueError(f"record_stride 必须为正整数: {self.record_stride}")

    @classmethod
    def from_dict(cls, data):
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"未知的求解器配置项: {sorted(unknown)}")
        return cls(**known)

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(eq=False)
class SolveTrace:
    """
    求解轨迹

    iterates_norm_gap 与 objective 在 recorded_iters 对应的迭代处记录，
    迭代编号从 1 开始 (第 k 次更新之后)，最后一次迭代总会被记录。
    iterates 仅在 keep_iterates=True 时保存 (每行一个记录的迭代点)。
    """
    iterates_norm_gap: np.ndarray
    objective: np.ndarray
    recorded_iters: np.ndarray
    converged: bool
    iterations: int
    theta_final: np.ndarray
    iterates: np.ndarray = None

    def curve_frame(self):
        """导出 (iter, gap, objective) 曲线"""
        return pd.DataFrame({
            "iter": self.recorded_iters,
            "gap": self.iterates_norm_gap,
            "objective": self.objective,
        })

    @property
    def final_objective(self):
        return float(self.objective[-1]) if len(self.objective) else math.nan

    def distances_to(self, point):
        """各记录迭代点到给定点的 ℓ₂ 距离"""
        if self.iterates is None:
            raise ValueError("轨迹未保存迭代点，请以 keep_iterates=True 求解")
        if len(self.iterates) == 0:
            return np.empty(0)
        return np.linalg.norm(self.iterates - np.asarray(point, dtype=np.float64), axis=1)

    def to_dict(self):
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "theta_final": self.theta_final.tolist(),
            "recorded_iters": self.recorded_iters.tolist(),
            "iterates_norm_gap": self.iterates_norm_gap.tolist(),
            "objective": self.objective.tolist(),
        }


class DivergenceError(RuntimeError):
    """迭代发散 (步长过大)；trace 为发散前的部分轨迹"""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def safe_step_size(ds, spec):
    """安全步长 1/L̂，L̂ = L_ψ′ · λ_max((1/n)XᵀX)"""
    lam_max = float(np.linalg.norm(ds.x, 2)) ** 2 / ds.n
    l_hat = bounds(spec).l_psi1 * lam_max
    if not l_hat > 0:
        raise ValueError("设计矩阵为零矩阵，无法确定安全步长")
    return 1.0 / l_hat


def sample_start(p, radius, rng):
    """
    在 B₂(0, r) 内均匀抽取初始点: 高斯方向归一化，半径取 U^{1/p}·r

    Args:
        p (int): 维数
        radius (float): 球半径
        rng (np.random.Generator): 随机流

    Returns:
        np.ndarray: 初始点
    """
    if not radius > 0:
        raise ValueError(f"球半径必须为正: {radius}")
    direction = rng.standard_normal(p)
    norm = float(np.linalg.norm(direction))
    while norm == 0.0:
        direction = rng.standard_normal(p)
        norm = float(np.linalg.norm(direction))
    scale = radius * rng.random() ** (1.0 / p)
    return direction * (scale / norm)


def _build_trace(thetas, objectives, iters, converged, iterations, theta_final, keep_iterates=False):
    gaps = np.array([np.linalg.norm(t - theta_final) for t in thetas])
    iterates = None
    if keep_iterates:
        iterates = np.vstack(thetas) if thetas else np.empty((0, theta_final.shape[0]))
    return SolveTrace(
        iterates_norm_gap=gaps,
        objective=np.array(objectives, dtype=np.float64),
        recorded_iters=np.array(iters, dtype=np.int64),
        converged=converged,
        iterations=iterations,
        theta_final=theta_final,
        iterates=iterates,
    )


def _descend(ds, spec, cfg, theta_init, lambda_n, keep_iterates=False):
    theta_init = np.asarray(theta_init, dtype=np.float64)
    if theta_init.shape != (ds.p,):
        raise ValueError(f"初始点维度 {theta_init.shape} 与 p={ds.p} 不一致")
    radius = cfg.radius
    step = cfg.step_size if cfg.step_size is not None else safe_step_size(ds, spec)
    limit = DIVERGENCE_FACTOR * radius

    def prox(v, s):
        if lambda_n == 0:
            return project_ball(v, radius)
        return prox_l1_ball(v, s * lambda_n, radius)

    def penalty(theta):
        return lambda_n * float(np.abs(theta).sum()) if lambda_n else 0.0

    theta = project_ball(theta_init, radius)
    value, grad = risk_and_gradient(ds, spec, theta)
    objective = value + penalty(theta)

    thetas, objectives, iters = [], [], []
    converged = False
    k = 0
    while k < cfg.max_iters:
        k += 1
        candidate = theta - step * grad
        cand_norm = float(np.linalg.norm(candidate))
        if not math.isfinite(cand_norm) or (cand_norm > limit and not cfg.backtracking):
            partial = _build_trace(thetas, objectives, iters, False, k - 1, theta, keep_iterates)
            raise DivergenceError(
                f"第 {k} 次迭代投影前范数 {cand_norm:.3g} 超过 {limit:g}，请减小步长", partial)
        new_theta = prox(candidate, step)
        new_value, new_grad = risk_and_gradient(ds, spec, new_theta)
        new_objective = new_value + penalty(new_theta)

        if cfg.backtracking:
            halvings = 0
            while True:
                diff = new_theta - theta
                bound = value + float(grad @ diff) + float(diff @ diff) / (2.0 * step)
                if new_value <= bound + 1e-12 * max(1.0, abs(value)) or halvings >= MAX_BACKTRACKS:
                    break
                step *= 0.5
                halvings += 1
                new_theta = prox(theta - step * grad, step)
                new_value, new_grad = risk_and_gradient(ds, spec, new_theta)
                new_objective = new_value + penalty(new_theta)

        if not math.isfinite(new_objective):
            partial = _build_trace(thetas, objectives, iters, False, k - 1, theta, keep_iterates)
            raise DivergenceError(f"第 {k} 次迭代目标函数非有限，请减小步长", partial)

        displacement = float(np.linalg.norm(new_theta - theta))
        theta, value, grad, objective = new_theta, new_value, new_grad, new_objective
        converged = displacement <= cfg.tol
        if k % cfg.record_stride == 0 or converged or k == cfg.max_iters:
            thetas.append(theta.copy())
            objectives.append(objective)
            iters.append(k)
        if converged:
            break

    logger.debug(f"求解结束: 迭代 {k} 次, 收敛={converged}, 目标值={objective:.6g}")
    return _build_trace(thetas, objectives, iters, converged, k, theta, keep_iterates)


def solve_pgd(ds, spec, cfg, theta_init, keep_iterates=False):
    """
    投影梯度下降 θ_{k+1} = Π_{B₂(0,r)}(θ_k − η∇R̂_n(θ_k))

    Returns:
        SolveTrace: 求解轨迹
    """
    if cfg.lambda_n != 0:
        raise ValueError(f"solve_pgd 仅用于无惩罚问题，当前 λ_n={cfg.lambda_n}；请使用 solve_prox_gd")
    return _descend(ds, spec, cfg, theta_init, 0.0, keep_iterates)


def solve_prox_gd(ds, spec, cfg, theta_init, keep_iterates=False):
    """
    近端梯度下降 θ_{k+1} = prox_{ηλ_n‖·‖₁ + I_B}(θ_k − η∇R̂_n(θ_k))

    λ_n=0 时与 solve_pgd 的迭代完全一致。
    """
    return _descend(ds, spec, cfg, theta_init, float(cfg.lambda_n), keep_iterates)
