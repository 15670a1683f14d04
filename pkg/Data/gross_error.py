#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Data 粗差模型数据生成库

在粗差 (gross error) 污染模型 (1-δ)f₀ + δg 下生成线性回归数据。

功能特点:
- 高斯各向同性 / 均匀盒两种设计分布
- 离群噪声均值可依赖特征 (‖x‖² + 1) 或取常数
- 基于计数器 (Philox) 的具名随机流，按 (seed, 行块) 派生，生成结果与执行顺序无关
- 对已有数据集的响应变量施加同一污染模型
- 可复现的训练/测试划分
"""

import math
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)

# 每个随机流负责的行数；按固定块大小抽样，n 变化时前缀行保持不变
ROW_CHUNK = 4096

# 随机流命名空间
STREAM_DESIGN = 1
STREAM_CORRUPT = 2
STREAM_SPLIT = 3
STREAM_START = 4
STREAM_GRID = 5


def rng_stream(seed, *keys):
    """
    具名随机流: 由 (seed, keys...) 唯一确定的 Philox 生成器

    Args:
        seed (int): 非负整数种子
        *keys (int): 流标识，例如 (命名空间, 块编号)

    Returns:
        np.random.Generator: 独立随机流
    """
    if int(seed) < 0:
        raise ValueError(f"种子必须为非负整数: {seed}")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed, *keys):
    """由父种子与标识派生子任务种子 (63 位非负整数)"""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


class DesignKind(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


class OutlierMeanMode(str, Enum):
    X_NORM_PLUS_ONE = "x_norm_plus_one"
    CONSTANT = "constant"


@dataclass(frozen=True)
class GrossErrorSpec:
    """
    粗差噪声配置

    Args:
        delta (float): 污染比例 δ ∈ [0,1]
        sigma (float): 正常噪声 f₀=N(0,σ²) 的标准差
        outlier_mean_mode (OutlierMeanMode): 离群均值 μ_i 的取法
        outlier_constant (float): CONSTANT 模式下的 μ
        outlier_sigma (float): 离群噪声标准差
    """
    delta: float
    sigma: float = 1.0
    outlier_mean_mode: OutlierMeanMode = OutlierMeanMode.X_NORM_PLUS_ONE
    outlier_constant: float = 0.0
    outlier_sigma: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "outlier_mean_mode", OutlierMeanMode(self.outlier_mean_mode))
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"污染比例 δ 必须位于 [0,1]: {self.delta}")
        if not self.sigma > 0:
            raise ValueError(f"噪声标准差 σ 必须为正: {self.sigma}")
        if not self.outlier_sigma > 0:
            raise ValueError(f"离群噪声标准差必须为正: {self.outlier_sigma}")

    def with_delta(self, delta):
        return GrossErrorSpec(delta, self.sigma, self.outlier_mean_mode,
                              self.outlier_constant, self.outlier_sigma)

    def outlier_means(self, x):
        if self.outlier_mean_mode is OutlierMeanMode.CONSTANT:
            return np.full(x.shape[0], float(self.outlier_constant))
        return np.einsum("ij,ij->i", x, x) + 1.0

    @classmethod
    def from_dict(cls, data):
        return cls(
            delta=float(data.get("delta", 0.0)),
            sigma=float(data.get("sigma", 1.0)),
            outlier_mean_mode=data.get("outlier_mean_mode", OutlierMeanMode.X_NORM_PLUS_ONE.value),
            outlier_constant=float(data.get("outlier_constant", 0.0)),
            outlier_sigma=float(data.get("outlier_sigma", 3.0)),
        )

    def to_dict(self):
        return {
            "delta": self.delta,
            "sigma": self.sigma,
            "outlier_mean_mode": self.outlier_mean_mode.value,
            "outlier_constant": self.outlier_constant,
            "outlier_sigma": self.outlier_sigma,
        }


@dataclass(frozen=True, eq=False)
class DesignSpec:
    """
    设计矩阵与真实参数配置

    Args:
        n (int): 样本量
        p (int): 维数
        kind (DesignKind): GAUSSIAN 为 N(0, τ²I)，UNIFORM 为 [-τ, τ]^p 上的均匀分布
        tau (float): 尺度 τ
        theta0 (np.ndarray): 真实参数 θ₀，长度 p
    """
    n: int
    p: int
    kind: DesignKind = DesignKind.GAUSSIAN
    tau: float = 1.0
    theta0: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        if int(self.n) < 1 or int(self.p) < 1:
            raise ValueError(f"n 与 p 必须为正整数: n={self.n}, p={self.p}")
        if not self.tau > 0:
            raise ValueError(f"τ 必须为正: {self.tau}")
        theta0 = np.zeros(self.p) if self.theta0 is None else np.array(self.theta0, dtype=np.float64)
        if theta0.shape != (int(self.p),):
            raise ValueError(f"θ₀ 长度 {theta0.shape} 与 p={self.p} 不一致")
        theta0.setflags(write=False)
        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", int(self.p))

    def with_n(self, n):
        return DesignSpec(n, self.p, self.kind, self.tau, self.theta0)

    def second_moment(self):
        """E‖x‖²"""
        if self.kind is DesignKind.GAUSSIAN:
            return self.p * self.tau ** 2
        return self.p * self.tau ** 2 / 3.0

    def check_radius(self, radius):
        """理论公式要求 ‖θ₀‖₂ ≤ r/3"""
        norm = float(np.linalg.norm(self.theta0))
        if norm > radius / 3.0:
            logger.warning(f"⚠️ ‖θ₀‖₂={norm:.4g} 超过 r/3={radius / 3.0:.4g}，理论半径的前提不成立")
            return False
        return True

    def sample_rows(self, rng, rows):
        if self.kind is DesignKind.GAUSSIAN:
            return self.tau * rng.standard_normal((rows, self.p))
        return rng.uniform(-self.tau, self.tau, size=(rows, self.p))

    def to_dict(self):
        return {
            "n": self.n,
            "p": self.p,
            "kind": self.kind.value,
            "tau": self.tau,
            "theta0": self.theta0.tolist(),
        }


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    回归数据集 (构造后不可变)

    Args:
        x (np.ndarray): n×p 设计矩阵
        y (np.ndarray): 长度 n 的响应
        outlier_mask (np.ndarray | None): 各行噪声是否来自离群分布 g
    """
    x: np.ndarray
    y: np.ndarray
    outlier_mask: np.ndarray = None

    def __post_init__(self):
        x = _frozen(self.x, np.float64)
        y = _frozen(self.y, np.float64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"数据维度不一致: x{x.shape}, y{y.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.outlier_mask is not None:
            mask = _frozen(self.outlier_mask, bool)
            if mask.shape != y.shape:
                raise ValueError(f"outlier_mask 长度 {mask.shape} 与 y{y.shape} 不一致")
            object.__setattr__(self, "outlier_mask", mask)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def residuals(self, theta):
        """y − Xθ；逐行内积，结果与行所在位置无关"""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.p,):
            raise ValueError(f"θ 维度 {theta.shape} 与数据维数 p={self.p} 不一致")
        return self.y - np.einsum("ij,j->i", self.x, theta)

    def subset(self, idx):
        mask = None if self.outlier_mask is None else self.outlier_mask[idx]
        return Dataset(self.x[idx], self.y[idx], mask)

    def concat(self, other):
        if self.p != other.p:
            raise ValueError(f"维数不一致: {self.p} vs {other.p}")
        mask = None
        if self.outlier_mask is not None and other.outlier_mask is not None:
            mask = np.concatenate([self.outlier_mask, other.outlier_mask])
        return Dataset(np.vstack([self.x, other.x]), np.concatenate([self.y, other.y]), mask)

    def with_response(self, y, outlier_mask=None):
        return Dataset(self.x, y, outlier_mask)


def _draw_noise(x_chunk, noise, rng):
    # 抽样顺序固定: 标记均匀数、正常噪声、离群噪声
    rows = x_chunk.shape[0]
    flags = rng.random(rows) < noise.delta
    inlier = noise.sigma * rng.standard_normal(rows)
    outlier = noise.outlier_means(x_chunk) + noise.outlier_sigma * rng.standard_normal(rows)
    return np.where(flags, outlier, inlier), flags


def _chunks(n):
    for index, start in enumerate(range(0, n, ROW_CHUNK)):
        yield index, start, min(start + ROW_CHUNK, n)


def generate(design, noise, seed):
    """
    按粗差模型生成数据 y_i = ⟨θ₀, x_i⟩ + ε_i

    Args:
        design (DesignSpec): 设计配置
        noise (GrossErrorSpec): 噪声配置
        seed (int): 随机种子

    Returns:
        Dataset: 含 outlier_mask 的数据集
    """
    xs, eps, flags = [], [], []
    for index, start, stop in _chunks(design.n):
        rows = stop - start
        # 每块总是抽满 ROW_CHUNK 行，使前缀行与 n 无关
        x_chunk = design.sample_rows(rng_stream(seed, STREAM_DESIGN, index, 0), ROW_CHUNK)
        e_chunk, f_chunk = _draw_noise(x_chunk, noise, rng_stream(seed, STREAM_DESIGN, index, 1))
        xs.append(x_chunk[:rows])
        eps.append(e_chunk[:rows])
        flags.append(f_chunk[:rows])

    x = np.vstack(xs)
    mask = np.concatenate(flags)
    y = np.einsum("ij,j->i", x, design.theta0) + np.concatenate(eps)
    logger.debug(f"生成数据: n={design.n}, p={design.p}, δ={noise.delta}, 离群行 {int(mask.sum())}")
    return Dataset(x, y, mask)


def corrupt_responses(ds, noise, seed):
    """对已有数据集的响应施加粗差噪声 y_i ← y_i + ε_i，μ_i 由该行特征计算"""
    eps, flags = [], []
    for index, start, stop in _chunks(ds.n):
        rng = rng_stream(seed, STREAM_CORRUPT, index)
        e_chunk, f_chunk = _draw_noise(ds.x[start:stop], noise, rng)
        eps.append(e_chunk)
        flags.append(f_chunk)
    return ds.with_response(ds.y + np.concatenate(eps), np.concatenate(flags))


def sparse_theta0(p, s0, value):
    """前 s0 个坐标取 value，其余为 0"""
    if not 1 <= s0 <= p:
        raise ValueError(f"稀疏度 s0 必须满足 1 ≤ s0 ≤ p: s0={s0}, p={p}")
    theta = np.zeros(p)
    theta[:s0] = value
    return theta


def equal_theta0(p, norm=1.0):
    """所有坐标相等、ℓ₂ 范数为 norm 的参数"""
    return np.full(p, norm / math.sqrt(p))


def split(ds, n_train, seed):
    """
    无放回随机划分训练集/测试集

    Returns:
        tuple[Dataset, Dataset]: (训练集, 测试集)，两者均保持原行序
    """
    if not 0 < n_train < ds.n:
        raise ValueError(f"训练集大小必须满足 0 < n_train < n: n_train={n_train}, n={ds.n}")
    perm = rng_stream(seed, STREAM_SPLIT).permutation(ds.n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))
