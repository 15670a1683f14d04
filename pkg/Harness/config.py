#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Harness 实验配置

JSON 配置文件 + 每类实验的预设。预设默认为桌面规模
(重复 25 次、10 个起点)，full=True 恢复完整规模 (100 次、20 个起点)。

配置示例:
    {
      "kind": "lowdim_robustness",
      "delta_grid": [0.0, 0.1, 0.2, 0.3],
      "alpha_grid": [0.0, 0.1],
      "replicas": 25,
      "solver": {"radius": 10, "step_size": 1.0},
      "design": {"n": 200, "p": 10, "kind": "gaussian", "theta0": {"kind": "equal", "norm": 1.0}},
      "noise": {"sigma": 1.0, "outlier_sigma": 3.0}
    }
"""

import json
import math
import logging
from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from pathlib import Path

import numpy as np

from Losses.loss_lib import LossFamily, InvalidLossSpecError
from Data.gross_error import DesignSpec, GrossErrorSpec, sparse_theta0, equal_theta0
from Solvers.gradient_descent import SolverConfig

logger = logging.getLogger(__name__)

DESK_REPLICAS, FULL_REPLICAS = 25, 100
DESK_STARTS, FULL_STARTS = 10, 20
UCONV_MAX_P = 5


class ConfigError(ValueError):
    """实验配置格式错误或取值不一致"""


class ExperimentKind(str, Enum):
    LOWDIM_TRACTABILITY = "lowdim_tractability"
    LOWDIM_ROBUSTNESS = "lowdim_robustness"
    HIGHDIM = "highdim"
    CASESTUDY = "casestudy"
    UNIFORM_CONVERGENCE = "uconv"


OUTPUT_FILES = {
    ExperimentKind.LOWDIM_TRACTABILITY: ("lowdim_gaps.csv", "lowdim_uniqueness.csv"),
    ExperimentKind.LOWDIM_ROBUSTNESS: ("robustness_errors.csv",),
    ExperimentKind.HIGHDIM: ("highdim_gaps.csv", "highdim_support.csv"),
    ExperimentKind.CASESTUDY: ("case_pred_error.csv", "case_convergence.csv"),
    ExperimentKind.UNIFORM_CONVERGENCE: ("uconv_trend.csv",),
}


def parse_theta0(spec, p):
    """θ₀ 可以是数值列表，或 {"kind": "equal", "norm": 1} / {"kind": "sparse", "s0": 10, "value": 0.316}"""
    if spec is None:
        return equal_theta0(p, 1.0)
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=np.float64)
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "equal":
            return equal_theta0(p, float(spec.get("norm", 1.0)))
        if kind == "sparse":
            s0 = int(spec["s0"])
            return sparse_theta0(p, s0, float(spec.get("value", 1.0 / math.sqrt(s0))))
    raise ConfigError(f"无法解析 theta0: {spec!r}")


def parse_design(data):
    try:
        p = int(data["p"])
        return DesignSpec(
            n=int(data["n"]),
            p=p,
            kind=data.get("kind", "gaussian"),
            tau=float(data.get("tau", 1.0)),
            theta0=parse_theta0(data.get("theta0"), p),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"设计配置错误: {e}") from e


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """
    实验配置

    Args:
        kind (ExperimentKind): 实验类型
        delta_grid (tuple): 污染比例网格
        alpha_grid (tuple): α 网格 (α=0 表示最小二乘)
        replicas (int): 每个 (δ, α) 单元的重复次数
        starts (int): 多起点个数
        solver (SolverConfig): 基础求解器配置
        design (DesignSpec | None): 设计配置 (案例研究由数据文件决定)
        noise (GrossErrorSpec): 噪声配置 (δ 由网格覆盖)
        family (LossFamily): α>0 时使用的损失族
        output_dir (str): 输出目录
        seed (int): 主种子
        output_names (dict): 输出文件改名 {默认文件名: 新文件名}
        curve_alpha (float): 案例研究中记录收敛曲线的 α
    """
    kind: ExperimentKind
    delta_grid: tuple
    alpha_grid: tuple
    replicas: int
    starts: int
    solver: SolverConfig
    design: DesignSpec = None
    noise: GrossErrorSpec = field(default_factory=lambda: GrossErrorSpec(0.0))
    family: LossFamily = LossFamily.WELSCH
    output_dir: str = "mest_output"
    seed: int = 0
    cluster_tol: float = 1e-3
    workers: int = 1
    n_train: int = 1000
    dataset_path: str = None
    n_ladder: tuple = (500, 1000, 2000, 4000, 8000, 16000)
    proxy_factor: int = 64
    theta_grid_size: int = 64
    output_names: dict = field(default_factory=dict)
    curve_alpha: float = 0.7

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ExperimentKind(self.kind))
            object.__setattr__(self, "family", LossFamily(self.family))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in self.delta_grid))
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "n_ladder", tuple(int(n) for n in self.n_ladder))
        object.__setattr__(self, "output_names", dict(self.output_names or {}))
        object.__setattr__(self, "curve_alpha", float(self.curve_alpha))
        self.validate()

    def validate(self):
        if not self.delta_grid or not self.alpha_grid:
            raise ConfigError("delta_grid 与 alpha_grid 不能为空")
        if any(not 0.0 <= d < 1.0 for d in self.delta_grid):
            raise ConfigError(f"δ 必须位于 [0,1): {self.delta_grid}")
        if any(not a >= 0.0 for a in self.alpha_grid):
            raise ConfigError(f"α 必须非负: {self.alpha_grid}")
        if self.replicas < 1:
            raise ConfigError(f"replicas 至少为 1: {self.replicas}")
        if self.starts < 2:
            raise ConfigError(f"starts 至少为 2: {self.starts}")
        if self.seed < 0 or self.workers < 1:
            raise ConfigError(f"seed 必须非负且 workers ≥ 1: seed={self.seed}, workers={self.workers}")
        if self.kind is not ExperimentKind.CASESTUDY and self.design is None:
            raise ConfigError(f"{self.kind.value} 实验需要 design 配置")
        if self.kind is ExperimentKind.UNIFORM_CONVERGENCE:
            if self.design.p > UCONV_MAX_P:
                raise ConfigError(f"一致收敛实验要求 p ≤ {UCONV_MAX_P}: p={self.design.p}")
            if len(self.n_ladder) < 2 or sorted(self.n_ladder) != list(self.n_ladder):
                raise ConfigError(f"n_ladder 需为至少两个递增的样本量: {self.n_ladder}")
        unknown = sorted(set(self.output_names) - set(OUTPUT_FILES[self.kind]))
        if unknown:
            raise ConfigError(f"output_names 含有 {self.kind.value} 不产生的文件: {unknown}")
        for alias in self.output_names.values():
            if not isinstance(alias, str) or not alias or Path(alias).name != alias:
                raise ConfigError(f"输出文件名必须是不含目录的非空字符串: {alias!r}")
        if len(set(self.output_names.values())) != len(self.output_names):
            raise ConfigError(f"输出文件名重复: {self.output_names}")
        if not self.curve_alpha >= 0:
            raise ConfigError(f"curve_alpha 必须非负: {self.curve_alpha}")

    def override(self, **changes):
        """返回覆盖若干字段后的新配置；None 值被忽略"""
        changes = {k: v for k, v in changes.items() if v is not None}
        try:
            return replace(self, **changes)
        except TypeError as e:
            raise ConfigError(f"未知的配置项: {e}") from None

    @classmethod
    def from_dict(cls, data, full=False):
        """以对应实验类型的预设为底，叠加配置字典"""
        if "kind" not in data:
            raise ConfigError("配置缺少 kind 字段")
        base = preset(data["kind"], full=full)
        changes = {}
        for key, value in data.items():
            if key == "kind":
                continue
            if key == "solver":
                try:
                    changes["solver"] = SolverConfig.from_dict({**base.solver.to_dict(), **value})
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"求解器配置错误: {e}") from None
            elif key == "design":
                changes["design"] = parse_design(value)
            elif key == "noise":
                try:
                    changes["noise"] = GrossErrorSpec.from_dict({**base.noise.to_dict(), **value})
                except ValueError as e:
                    raise ConfigError(f"噪声配置错误: {e}") from None
            elif key in cls.__dataclass_fields__:
                changes[key] = value
            else:
                raise ConfigError(f"未知的配置项: {key}")
        try:
            return replace(base, **changes)
        except (TypeError, ValueError, InvalidLossSpecError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from None

    def to_dict(self):
        data = {}
        for key in self.__dataclass_fields__:
            value = getattr(self, key)
            if hasattr(value, "to_dict"):
                value = value.to_dict()
            elif isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            data[key] = value
        return data


def _read_json_object(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"配置文件不存在: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"配置文件不是合法 JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("配置文件顶层必须是对象")
    return data


def load_config(path, full=False):
    """读取 JSON 实验配置文件"""
    return ExperimentConfig.from_dict(_read_json_object(path), full=full)


# 分节书写时需改名的字段 → 命令行参数名
_SECTION_KEYS = {
    "solver": {"step_size": "step"},
    "loss": {},
    "design": {"kind": "design"},
    "noise": {},
    "constants": {},
}


def load_command_config(path, allowed):
    """
    读取 generate/solve/probe/theory 子命令的 JSON 配置，返回 {参数名: 值}

    顶层键直接对应命令行参数名 (连字符等同下划线)；也可分节书写:
    {"loss": {"family": "welsch", "alpha": 0.1}, "solver": {"radius": 10, "step_size": 1.0}}。
    命令行上显式给出的参数覆盖文件中的值。

    Args:
        path (str): 配置文件路径
        allowed (set): 该子命令接受的参数名

    Returns:
        dict: 参数默认值
    """
    data = _read_json_object(path)
    values = {}
    for key, value in data.items():
        if key in _SECTION_KEYS and isinstance(value, dict):
            renames = _SECTION_KEYS[key]
            for sub_key, sub_value in value.items():
                name = renames.get(sub_key, sub_key).replace("-", "_")
                values[name] = sub_value
        else:
            values[key.replace("-", "_")] = value
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigError(f"未知的配置项: {unknown}")
    return values


def preset(kind, full=False):
    """
    各实验类型的默认配置

    Args:
        kind (str | ExperimentKind): 实验类型
        full (bool): 是否使用完整规模的重复次数与起点个数

    Returns:
        ExperimentConfig: 预设配置
    """
    try:
        kind = ExperimentKind(kind)
    except ValueError:
        raise ConfigError(f"未知的实验类型: {kind!r}") from None
    replicas = FULL_REPLICAS if full else DESK_REPLICAS
    starts = FULL_STARTS if full else DESK_STARTS
    noise = GrossErrorSpec(0.0, sigma=1.0, outlier_sigma=3.0)
    lowdim = DesignSpec(200, 10, "gaussian", 1.0, equal_theta0(10, 1.0))

    if kind is ExperimentKind.LOWDIM_TRACTABILITY:
        return ExperimentConfig(kind, (0.0, 0.05, 0.1, 0.2, 0.3, 0.4), (0.1,), 1, starts,
                                SolverConfig(radius=10.0, step_size=1.0), lowdim, noise)
    if kind is ExperimentKind.LOWDIM_ROBUSTNESS:
        return ExperimentConfig(kind, (0.0, 0.1, 0.2, 0.3, 0.4), (0.0, 0.05, 0.1, 0.3), replicas, starts,
                                SolverConfig(radius=10.0, step_size=1.0), lowdim, noise)
    if kind is ExperimentKind.HIGHDIM:
        # 真实坐标需高于 λ=0.1 下伪坐标的幅值 (约 0.1–0.2)
        design = DesignSpec(200, 400, "gaussian", 1.0, sparse_theta0(400, 10, 1.0))
        # p > n 时固定步长 1 超过 2/L̂，使用安全步长
        return ExperimentConfig(kind, (0.0, 0.1, 0.3), (0.1,), 1, starts,
                                SolverConfig(radius=10.0, step_size=None, lambda_n=0.1), design, noise)
    if kind is ExperimentKind.CASESTUDY:
        return ExperimentConfig(kind, (0.0, 0.1, 0.2, 0.3, 0.4), (0.0, 0.4, 0.7), replicas, starts,
                                SolverConfig(radius=10.0, step_size=0.5), None, noise)
    design = DesignSpec(16000, 2, "gaussian", 1.0, equal_theta0(2, 1.0))
    return ExperimentConfig(kind, (0.1,), (0.1,), 8, starts,
                            SolverConfig(radius=3.0), design, noise)
