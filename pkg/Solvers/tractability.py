#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Solvers 可处理性探针

从球内多个随机起点运行梯度下降，检查是否收敛到同一驻点。

功能特点:
- 每个起点使用 (seed, 起点编号) 派生的独立随机流
- workers=1 顺序执行 (逐位可复现)，workers>1 使用线程池并行
- 最终点的最大两两距离与单连接聚类 (阈值 cluster_tol)
- 发散的起点单独标记，此时判定为不唯一
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import linkage, fcluster
from scipy.spatial.distance import pdist
from tqdm import tqdm

from Data.gross_error import rng_stream, STREAM_START
from .gradient_descent import solve_pgd, solve_prox_gd, sample_start, DivergenceError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Cluster:
    representative: np.ndarray
    count: int


@dataclass(eq=False)
class TractabilityReport:
    """
    多起点探针结果

    unique 当且仅当 max_pairwise_gap ≤ cluster_tol；有起点发散时 max_pairwise_gap 记为 ∞。
    """
    starts: int
    finals: list
    max_pairwise_gap: float
    clusters: list
    unique: bool
    cluster_tol: float
    traces: list = field(default_factory=list)
    diverged: list = field(default_factory=list)

    @property
    def n_diverged(self):
        return int(sum(self.diverged))

    @property
    def mean_iterations(self):
        return float(np.mean([t.iterations for t in self.traces]))

    def best_final(self):
        """目标函数值最小的最终点 (未发散的起点中)，即 M 估计量"""
        candidates = [i for i, bad in enumerate(self.diverged) if not bad]
        if not candidates:
            raise RuntimeError("所有起点均发散，无法给出估计量")
        best = min(candidates, key=lambda i: self.traces[i].final_objective)
        return self.finals[best]

    def to_dict(self, with_traces=False):
        data = {
            "starts": self.starts,
            "unique": self.unique,
            "max_pairwise_gap": self.max_pairwise_gap,
            "cluster_tol": self.cluster_tol,
            "clusters": [{"representative": c.representative.tolist(), "count": c.count}
                         for c in self.clusters],
            "finals": [f.tolist() for f in self.finals],
            "diverged": list(self.diverged),
        }
        if with_traces:
            data["traces"] = [t.to_dict() for t in self.traces]
        return data


def cluster_finals(finals, cluster_tol):
    """单连接聚类；代表点取各簇中编号最小的成员"""
    points = np.vstack(finals)
    if len(finals) == 1:
        return [Cluster(points[0].copy(), 1)]
    labels = fcluster(linkage(points, method="single"), t=cluster_tol, criterion="distance")
    clusters = []
    seen = {}
    for i, label in enumerate(labels):
        if label not in seen:
            seen[label] = len(clusters)
            clusters.append(Cluster(points[i].copy(), 0))
        clusters[seen[label]].count += 1
    return clusters


def probe_tractability(ds, spec, cfg, n_starts, cluster_tol=1e-3, workers=1, progress=False,
                       keep_iterates=False):
    """
    多起点可处理性探针

    Args:
        ds (Dataset): 数据集
        spec (LossSpec): 损失
        cfg (SolverConfig): 求解器配置；lambda_n>0 时使用近端梯度下降
        n_starts (int): 起点个数 (≥ 2)
        cluster_tol (float): 聚类与唯一性判定阈值
        workers (int): 并行线程数
        progress (bool): 是否显示进度条
        keep_iterates (bool): 各起点轨迹是否保存迭代点

    Returns:
        TractabilityReport: 探针报告
    """
    if n_starts < 2:
        raise ValueError(f"起点个数至少为 2: {n_starts}")
    solver = solve_prox_gd if cfg.lambda_n > 0 else solve_pgd

    def run_start(i):
        theta_init = sample_start(ds.p, cfg.radius, rng_stream(cfg.seed, STREAM_START, i))
        try:
            return solver(ds, spec, cfg, theta_init, keep_iterates), False
        except DivergenceError as e:
            logger.warning(f"⚠️ 起点 {i} 发散: {e}")
            return e.trace, True

    indices = range(n_starts)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(run_start, indices), total=n_starts,
                                desc="多起点求解", disable=not progress, leave=False))
    else:
        results = [run_start(i) for i in tqdm(indices, desc="多起点求解",
                                              disable=not progress, leave=False)]

    traces = [trace for trace, _ in results]
    diverged = [bad for _, bad in results]
    finals = [trace.theta_final for trace in traces]

    if any(diverged):
        max_gap = math.inf
    else:
        max_gap = float(pdist(np.vstack(finals)).max())
    clusters = cluster_finals(finals, cluster_tol)
    unique = max_gap <= cluster_tol

    logger.debug(f"探针完成: {n_starts} 个起点, 最大两两距离 {max_gap:.3e}, "
                 f"{len(clusters)} 个簇, 发散 {sum(diverged)} 个, 唯一={unique}")
    return TractabilityReport(
        starts=n_starts,
        finals=finals,
        max_pairwise_gap=max_gap,
        clusters=clusters,
        unique=unique,
        cluster_tol=cluster_tol,
        traces=traces,
        diverged=diverged,
    )
