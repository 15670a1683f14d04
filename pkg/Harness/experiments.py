#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Harness 实验运行器

复现低维/高维模拟、Airfoil 案例研究与一致收敛趋势检查，输出供外部绘图使用的 CSV。

功能特点:
- 低维可处理性: 每个 δ 一个数据集，多起点投影梯度下降，输出迭代-距离曲线
- 低维稳健性: (δ, α) 网格上多次重复，取目标函数最小的最终点计算估计误差
- 高维: 近端梯度下降多起点探针 + 支撑集精度/召回
- 案例研究: 随机划分、训练集标准化与响应污染、测试集预测误差与迭代点到估计量的距离曲线
- 一致收敛: 样本梯度与大样本代理之间的最大偏差随 n 的变化及对数斜率
- 所有随机性来自 (seed, 任务标识) 派生的独立流，顺序模式下结果逐字节可复现
"""

import json
import math
import time
import logging
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
import scipy
import tqdm as tqdm_module
from tqdm import tqdm

from Losses.loss_lib import loss_for_alpha
from Data.gross_error import generate, corrupt_responses, split, derive_seed, rng_stream, STREAM_GRID
from Data.table_io import load_table, standardize, TableSchema
from Risk.empirical_risk import empirical_gradient
from Solvers.gradient_descent import sample_start
from Solvers.tractability import probe_tractability
from .config import ExperimentKind, ConfigError, OUTPUT_FILES

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"
SUPPORT_THRESHOLD = 1e-6

# 派生种子的任务标识
_KEY_DATA, _KEY_STARTS, _KEY_SPLIT, _KEY_CORRUPT, _KEY_PROXY, _KEY_LADDER = range(1, 7)

# 逐迭代曲线表，运行报告中不展开
CURVE_TABLES = {"lowdim_gaps.csv", "highdim_gaps.csv", "case_convergence.csv"}

@dataclass(eq=False)
class ExperimentResult:
    """实验结果: 输出表 (文件名 → DataFrame) 与写入清单的摘要"""
    kind: ExperimentKind
    frames: dict
    summary: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SweepCell:
    delta: float
    alpha: float
    mean_error: float
    std_dev: float
    std_error: float
    uniqueness_rate: float
    mean_iterations: float
    replicas: int


@dataclass(eq=False)
class SweepResult:
    """(δ, α) 网格上的估计误差表，每个网格点一个单元"""
    cells: list

    def to_frame(self):
        frame = pd.DataFrame([cell.__dict__ for cell in self.cells],
                             columns=list(SweepCell.__dataclass_fields__))
        return frame.sort_values(["delta", "alpha"], kind="mergesort").reset_index(drop=True)

    def cell(self, delta, alpha):
        for c in self.cells:
            if c.delta == delta and c.alpha == alpha:
                return c
        raise KeyError((delta, alpha))


def _map(func, items, workers, desc, progress):
    items = list(items)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(tqdm(pool.map(func, items), total=len(items), desc=desc,
                             disable=not progress, leave=False))
    return [func(item) for item in tqdm(items, desc=desc, disable=not progress, leave=False)]


def _summary_stats(values):
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return mean, std, std / math.sqrt(values.size)


def gaps_frame(reports):
    """
    迭代-距离曲线表: delta, iter, gap_00, gap_01, ...

    每个起点的距离以其自身最终点为参照；收敛后的迭代记为 0，
    发散或未记录的迭代记为 NaN。
    """
    blocks = []
    for delta, report in reports.items():
        iters = sorted(set().union(*(t.recorded_iters.tolist() for t in report.traces)))
        index = pd.Index(iters, name="iter")
        block = pd.DataFrame(index=index)
        for s, (trace, bad) in enumerate(zip(report.traces, report.diverged)):
            series = pd.Series(trace.iterates_norm_gap, index=trace.recorded_iters).reindex(index)
            if trace.converged and not bad:
                series[index > trace.iterations] = 0.0
            block[f"gap_{s:02d}"] = series.to_numpy()
        block = block.reset_index()
        block.insert(0, "delta", delta)
        blocks.append(block)
    return pd.concat(blocks, ignore_index=True)


def _probe_cell(ds, spec, cfg, start_seed, workers=1, progress=False, keep_iterates=False):
    solver = cfg.solver.replace(seed=start_seed)
    return probe_tractability(ds, spec, solver, cfg.starts, cfg.cluster_tol, workers, progress,
                              keep_iterates=keep_iterates)


def run_lowdim_tractability(cfg, progress=False):
    """
    低维可处理性: 对每个 δ 生成一个数据集并运行多起点探针

    所有 δ 共用同一数据种子与起点种子。

    Returns:
        ExperimentResult: lowdim_gaps.csv 与 lowdim_uniqueness.csv
    """
    if cfg.kind is not ExperimentKind.LOWDIM_TRACTABILITY:
        raise ConfigError(f"实验类型不匹配: {cfg.kind.value}")
    alpha = cfg.alpha_grid[0]
    spec = loss_for_alpha(cfg.family, alpha)
    data_seed = derive_seed(cfg.seed, _KEY_DATA)
    start_seed = derive_seed(cfg.seed, _KEY_STARTS)

    reports, rows = {}, []
    for delta in tqdm(sorted(cfg.delta_grid), desc="δ 网格", disable=not progress):
        ds = generate(cfg.design, cfg.noise.with_delta(delta), data_seed)
        report = _probe_cell(ds, spec, cfg, start_seed, cfg.workers)
        reports[delta] = report
        rows.append({
            "delta": delta,
            "alpha": alpha,
            "unique": report.unique,
            "max_pairwise_gap": report.max_pairwise_gap,
            "n_clusters": len(report.clusters),
            "n_diverged": report.n_diverged,
            "mean_iterations": report.mean_iterations,
        })
        logger.info(f"δ={delta:.2f} {spec.label()}: 唯一={report.unique}, "
                    f"最大距离={report.max_pairwise_gap:.3e}, 平均迭代 {report.mean_iterations:.1f}")

    frames = {"lowdim_gaps.csv": gaps_frame(reports), "lowdim_uniqueness.csv": pd.DataFrame(rows)}
    summary = {f"unique@δ={d:g}": r.unique for d, r in reports.items()}
    return ExperimentResult(cfg.kind, frames, summary, reports)


def run_lowdim_robustness(cfg, progress=False):
    """
    低维稳健性: 每个 (δ, α) 单元重复 replicas 次，记录 ‖θ̂ − θ₀‖₂

    同一重复编号在所有单元中共用数据与起点种子。

    Returns:
        ExperimentResult: robustness_errors.csv；reports 中含 SweepResult
    """
    if cfg.kind is not ExperimentKind.LOWDIM_ROBUSTNESS:
        raise ConfigError(f"实验类型不匹配: {cfg.kind.value}")
    theta0 = cfg.design.theta0
    cells = []
    grid = [(d, a) for d in sorted(cfg.delta_grid) for a in sorted(cfg.alpha_grid)]
    for delta, alpha in tqdm(grid, desc="(δ, α) 网格", disable=not progress):
        spec = loss_for_alpha(cfg.family, alpha)
        noise = cfg.noise.with_delta(delta)

        def replicate(rep):
            ds = generate(cfg.design, noise, derive_seed(cfg.seed, _KEY_DATA, rep))
            report = _probe_cell(ds, spec, cfg, derive_seed(cfg.seed, _KEY_STARTS, rep))
            error = float(np.linalg.norm(report.best_final() - theta0))
            return error, report.unique, report.mean_iterations

        outcomes = _map(replicate, range(cfg.replicas), cfg.workers, "重复", progress)
        errors = [o[0] for o in outcomes]
        mean, std, se = _summary_stats(errors)
        cells.append(SweepCell(
            delta=delta,
            alpha=alpha,
            mean_error=mean,
            std_dev=std,
            std_error=se,
            uniqueness_rate=float(np.mean([o[1] for o in outcomes])),
            mean_iterations=float(np.mean([o[2] for o in outcomes])),
            replicas=len(outcomes),
        ))
        logger.info(f"δ={delta:.2f} {spec.label()}: 平均误差 {mean:.4f} ± {se:.4f}")

    sweep = SweepResult(cells)
    return ExperimentResult(cfg.kind, {"robustness_errors.csv": sweep.to_frame()}, {}, {"sweep": sweep})


def support_metrics(theta_hat, theta0, threshold=SUPPORT_THRESHOLD):
    """
    支撑集指标

    Returns:
        dict: precision、recall，以及 top_s0_recovered (真实支撑全部位于幅值最大的 s₀ 个非零坐标中)
    """
    truth = set(np.flatnonzero(theta0).tolist())
    estimated = set(np.flatnonzero(np.abs(theta_hat) > threshold).tolist())
    hits = len(truth & estimated)
    order = np.argsort(-np.abs(theta_hat), kind="stable")[:len(truth)]
    top = {int(j) for j in order if abs(theta_hat[j]) > threshold}
    return {
        "precision": hits / len(estimated) if estimated else 0.0,
        "recall": hits / len(truth) if truth else 1.0,
        "top_s0_recovered": truth <= top,
    }


def run_highdim(cfg, progress=False):
    """
    高维稀疏实验: 近端梯度下降多起点探针与支撑集恢复

    所有 δ 共用数据种子与起点种子，迭代次数可直接比较。

    Returns:
        ExperimentResult: highdim_gaps.csv 与 highdim_support.csv
    """
    if cfg.kind is not ExperimentKind.HIGHDIM:
        raise ConfigError(f"实验类型不匹配: {cfg.kind.value}")
    spec = loss_for_alpha(cfg.family, cfg.alpha_grid[0])
    data_seed = derive_seed(cfg.seed, _KEY_DATA)
    start_seed = derive_seed(cfg.seed, _KEY_STARTS)

    reports, rows = {}, []
    for delta in tqdm(sorted(cfg.delta_grid), desc="δ 网格", disable=not progress):
        ds = generate(cfg.design, cfg.noise.with_delta(delta), data_seed)
        report = _probe_cell(ds, spec, cfg, start_seed, cfg.workers)
        reports[delta] = report
        if report.n_diverged == report.starts:
            metrics = {"precision": 0.0, "recall": 0.0, "top_s0_recovered": False}
        else:
            metrics = support_metrics(report.best_final(), cfg.design.theta0)
        rows.append({"delta": delta, "unique": report.unique, **metrics,
                     "mean_iterations": report.mean_iterations})
        logger.info(f"δ={delta:.2f}: 唯一={report.unique}, 召回 {metrics['recall']:.2f}, "
                    f"平均迭代 {report.mean_iterations:.1f}")

    frames = {"highdim_gaps.csv": gaps_frame(reports), "highdim_support.csv": pd.DataFrame(rows)}
    return ExperimentResult(cfg.kind, frames, {}, reports)


def distance_curve(report):
    """
    各起点迭代点到估计量 (目标函数最小的最终点) 的平均距离，按迭代编号索引

    起点收敛后沿用其最后一个记录值；发散的起点不计入。
    """
    best = report.best_final()
    series = [pd.Series(trace.distances_to(best), index=trace.recorded_iters)
              for trace, bad in zip(report.traces, report.diverged) if not bad]
    return pd.concat(series, axis=1).sort_index().ffill().mean(axis=1)


def run_casestudy(cfg, dataset_path=None, progress=False):
    """
    Airfoil 案例研究

    每次重复: 随机划分 → 训练集特征标准化 (变换复用到测试集) → 训练响应中心化并按 δ 污染
    → 多起点拟合 → 用未污染的测试响应计算均方预测误差。预测值加回训练响应均值。
    α = curve_alpha 时另外记录各 δ 下迭代点到估计量的平均距离曲线 (该 α 不必在 alpha_grid 中)。

    Returns:
        ExperimentResult: case_pred_error.csv 与 case_convergence.csv
    """
    if cfg.kind is not ExperimentKind.CASESTUDY:
        raise ConfigError(f"实验类型不匹配: {cfg.kind.value}")
    path = dataset_path or cfg.dataset_path
    if path is None:
        raise ConfigError("案例研究需要数据文件路径 (dataset_path)")
    ds = load_table(path, TableSchema.WHITESPACE_LAST_COL_RESPONSE)
    if not 0 < cfg.n_train < ds.n:
        raise ConfigError(f"n_train={cfg.n_train} 超出数据规模 n={ds.n}")
    alphas = sorted(set(cfg.alpha_grid) | {cfg.curve_alpha})

    def replicate(rep):
        train, test = split(ds, cfg.n_train, derive_seed(cfg.seed, _KEY_SPLIT, rep))
        train, transform = standardize(train)
        test = transform.apply(test)
        y_mean = float(train.y.mean())
        centered = train.with_response(train.y - y_mean)
        out, curves = {}, {}
        for delta in sorted(cfg.delta_grid):
            corrupted = corrupt_responses(centered, cfg.noise.with_delta(delta),
                                          derive_seed(cfg.seed, _KEY_CORRUPT, rep))
            for alpha in alphas:
                spec = loss_for_alpha(cfg.family, alpha)
                keep = alpha == cfg.curve_alpha
                report = _probe_cell(corrupted, spec, cfg, derive_seed(cfg.seed, _KEY_STARTS, rep),
                                     keep_iterates=keep)
                if keep:
                    curves[delta] = distance_curve(report)
                if alpha in cfg.alpha_grid:
                    pred = test.x @ report.best_final() + y_mean
                    out[(delta, alpha)] = (float(np.mean((test.y - pred) ** 2)), report.unique)
        return out, curves

    outcomes = _map(replicate, range(cfg.replicas), cfg.workers, "重复", progress)
    rows, curve_blocks = [], []
    for delta in sorted(cfg.delta_grid):
        for alpha in sorted(cfg.alpha_grid):
            cell = [o[(delta, alpha)] for o, _ in outcomes]
            mean, _, se = _summary_stats([c[0] for c in cell])
            rows.append({
                "delta": delta,
                "alpha": alpha,
                "mean_pred_error": mean,
                "std_error": se,
                "uniqueness_rate": float(np.mean([c[1] for c in cell])),
                "replicas": len(outcomes),
            })
            logger.info(f"δ={delta:.2f} α={alpha:g}: 预测误差 {mean:.4f} ± {se:.4f}")
        curve = pd.concat([c[delta] for _, c in outcomes], axis=1).sort_index().ffill().mean(axis=1)
        curve_blocks.append(pd.DataFrame({
            "delta": delta,
            "alpha": cfg.curve_alpha,
            "iter": curve.index.to_numpy(dtype=np.int64),
            "mean_distance": curve.to_numpy(),
        }))
        logger.info(f"δ={delta:.2f} α={cfg.curve_alpha:g}: 收敛曲线 {len(curve)} 个迭代点, "
                    f"首个平均距离 {curve.iloc[0]:.4f}")
    frames = {
        "case_pred_error.csv": pd.DataFrame(rows),
        "case_convergence.csv": pd.concat(curve_blocks, ignore_index=True),
    }
    return ExperimentResult(cfg.kind, frames)


def theta_grid(p, radius, size, seed):
    """B₂(0, r) 内的 θ 网格: 原点加 size 个均匀抽样点"""
    points = [np.zeros(p)]
    points += [sample_start(p, radius, rng_stream(seed, STREAM_GRID, i)) for i in range(size)]
    return points


def run_uniform_convergence(cfg, progress=False):
    """
    一致收敛趋势: sup_θ ‖∇R̂_n(θ) − ∇R̂_N(θ)‖₂ 随 n 的变化

    N = proxy_factor · max(n_ladder) 的大样本作为总体代理 (独立种子)；
    每个 n 的最大偏差对 replicas 次重复取平均，再拟合 log-log 斜率。

    Returns:
        ExperimentResult: uconv_trend.csv，summary 中含各 (δ, α) 的斜率
    """
    if cfg.kind is not ExperimentKind.UNIFORM_CONVERGENCE:
        raise ConfigError(f"实验类型不匹配: {cfg.kind.value}")
    ladder = list(cfg.n_ladder)
    n_proxy = cfg.proxy_factor * ladder[-1]
    grid = theta_grid(cfg.design.p, cfg.solver.radius, cfg.theta_grid_size, cfg.seed)

    rows, slopes = [], {}
    for di, delta in enumerate(sorted(cfg.delta_grid)):
        noise = cfg.noise.with_delta(delta)
        proxy = generate(cfg.design.with_n(n_proxy), noise, derive_seed(cfg.seed, _KEY_PROXY, di))
        for alpha in sorted(cfg.alpha_grid):
            spec = loss_for_alpha(cfg.family, alpha)
            reference = [empirical_gradient(proxy, spec, theta) for theta in grid]

            def replicate(rep):
                sups = []
                for ni, n in enumerate(ladder):
                    ds = generate(cfg.design.with_n(n), noise,
                                  derive_seed(cfg.seed, _KEY_LADDER, di, rep, ni))
                    sups.append(max(float(np.linalg.norm(empirical_gradient(ds, spec, theta) - ref))
                                    for theta, ref in zip(grid, reference)))
                return sups

            outcomes = np.array(_map(replicate, range(cfg.replicas), cfg.workers, "重复", progress))
            sup_gap = outcomes.mean(axis=0)
            slope = float(np.polyfit(np.log(ladder), np.log(sup_gap), 1)[0])
            slopes[(delta, alpha)] = slope
            for n, gap in zip(ladder, sup_gap):
                rows.append({"delta": delta, "alpha": alpha, "n": n, "sup_gap": float(gap)})
            logger.info(f"δ={delta:.2f} α={alpha:g}: log-log 斜率 {slope:.3f}")

    summary = {f"slope@δ={d:g},α={a:g}": s for (d, a), s in slopes.items()}
    return ExperimentResult(cfg.kind, {"uconv_trend.csv": pd.DataFrame(rows)}, summary,
                            {"slopes": slopes})


RUNNERS = {
    ExperimentKind.LOWDIM_TRACTABILITY: run_lowdim_tractability,
    ExperimentKind.LOWDIM_ROBUSTNESS: run_lowdim_robustness,
    ExperimentKind.HIGHDIM: run_highdim,
    ExperimentKind.CASESTUDY: run_casestudy,
    ExperimentKind.UNIFORM_CONVERGENCE: run_uniform_convergence,
}


def run_experiment(cfg, progress=False):
    return RUNNERS[cfg.kind](cfg, progress=progress)


def write_frame(frame, path):
    """固定浮点格式写出 CSV，保证重复运行逐字节一致"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="nan")
    return path


def write_outputs(result, output_dir, names=None):
    """
    写出全部结果表，返回文件路径列表

    Args:
        result (ExperimentResult): 实验结果
        output_dir (str | Path): 输出目录
        names (dict): 默认文件名 → 实际文件名，未列出的沿用默认名
    """
    output_dir = Path(output_dir)
    names = names or {}
    written = []
    for name, frame in result.frames.items():
        target = names.get(name, name)
        written.append(write_frame(frame, output_dir / target))
        logger.info(f"✅ 写出 {target}: {len(frame)} 行")
    return written


def json_ready(value):
    """
    转换为严格 JSON 可表示的对象

    非有限浮点记为字符串 "inf" / "-inf" / "nan"；numpy 标量与数组转为 Python 对象。
    """
    if isinstance(value, dict):
        return {str(k): json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [json_ready(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "nan"
        return "inf" if value > 0 else "-inf"
    return value


def dumps_json(value, indent=None):
    """严格 JSON 序列化 (allow_nan=False)"""
    return json.dumps(json_ready(value), indent=indent, ensure_ascii=False, allow_nan=False)


def package_versions():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "tqdm": tqdm_module.__version__,
    }


def write_manifest(cfg, result, output_dir, wall_time, outputs):
    """运行清单 JSON: 配置、种子、包版本、耗时、输出文件与结果摘要"""
    manifest = {
        "kind": cfg.kind.value,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "versions": package_versions(),
        "wall_time_seconds": wall_time,
        "created_at": time.strftime("%Y-%m-%d %H:%M:%S"),
        "outputs": [Path(p).name for p in outputs],
        "summary": result.summary,
    }
    path = Path(output_dir) / f"manifest_{cfg.kind.value}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(manifest, indent=2), encoding="utf-8")
    return path
