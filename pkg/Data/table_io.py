#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst-Data 表格读写与标准化

功能特点:
- 读取 Airfoil 格式 (空白分隔，末列为响应) 与带表头 CSV (y,x1,...,xp[,is_outlier])
- 解析错误定位到文件行号与列号
- 训练集特征标准化 (样本标准差分母 n-1)，变换可复用到测试集
- 数据集导出为 CSV
"""

import re
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .gross_error import Dataset

logger = logging.getLogger(__name__)


class TableSchema(str, Enum):
    CSV_HEADER = "csv"
    WHITESPACE_LAST_COL_RESPONSE = "whitespace"


class TableParseError(ValueError):
    """
    表格解析失败

    Args:
        row (int): 出错的文件行号 (从 1 开始，0 表示整个文件)
        column (int | None): 出错的列号 (从 1 开始)
    """

    def __init__(self, message, row=0, column=None):
        self.row = row
        self.column = column
        where = f"第 {row} 行" + (f" 第 {column} 列" if column is not None else "")
        super().__init__(f"{where}: {message}")


class ConstantColumnError(ValueError):
    """标准化时遇到常数列"""

    def __init__(self, column):
        self.column = column
        super().__init__(f"特征列 {column} 为常数列 (样本标准差为 0)，无法标准化")


_RAGGED = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


def _read_raw(path, schema):
    try:
        if schema is TableSchema.CSV_HEADER:
            return pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True)
        return pd.read_csv(path, header=None, dtype=str, sep=r"\s+", engine="python")
    except pd.errors.EmptyDataError:
        raise TableParseError("文件为空") from None
    except pd.errors.ParserError as e:
        match = _RAGGED.search(str(e))
        if match:
            expected, line, saw = match.groups()
            raise TableParseError(f"列数不一致: 期望 {expected} 列，实际 {saw} 列",
                                  row=int(line)) from None
        raise TableParseError(f"无法解析: {e}") from None


def _to_numeric(raw, first_line):
    values = np.empty(raw.shape, dtype=np.float64)
    for j, col in enumerate(raw.columns):
        cells = raw[col]
        if cells.isna().any():
            i = int(np.flatnonzero(cells.isna().to_numpy())[0])
            raise TableParseError("缺少字段 (行长度不一致)", row=first_line + i, column=j + 1)
        numeric = pd.to_numeric(cells.str.strip(), errors="coerce")
        bad = numeric.isna().to_numpy()
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise TableParseError(f"非数值单元格 {cells.iloc[i]!r}", row=first_line + i, column=j + 1)
        values[:, j] = numeric.to_numpy(dtype=np.float64)
    return values


def load_table(path, schema=TableSchema.CSV_HEADER):
    """
    读取回归数据表

    Args:
        path (str | Path): 文件路径
        schema (TableSchema): CSV_HEADER 要求表头 y,x1,...,xp (可选 is_outlier 列)；
                              WHITESPACE_LAST_COL_RESPONSE 以最后一列为响应

    Returns:
        Dataset: 解析得到的数据集
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"数据文件不存在: {path}")
    schema = TableSchema(schema)
    raw = _read_raw(path, schema)

    if schema is TableSchema.WHITESPACE_LAST_COL_RESPONSE:
        if raw.shape[1] < 2:
            raise TableParseError("至少需要一个特征列和一个响应列")
        values = _to_numeric(raw, first_line=1)
        ds = Dataset(values[:, :-1], values[:, -1])
        logger.info(f"📁 读取 {path.name}: n={ds.n}, p={ds.p}")
        return ds

    header = [str(h).strip() for h in raw.iloc[0].tolist()]
    body = raw.iloc[1:].reset_index(drop=True)
    if len(body) == 0:
        raise TableParseError("只有表头，没有数据行", row=1)
    has_mask = header[-1] == "is_outlier"
    features = header[1:-1] if has_mask else header[1:]
    expected = [f"x{j + 1}" for j in range(len(features))]
    if not header or header[0] != "y" or features != expected or not features:
        raise TableParseError(f"表头应为 y,x1,...,xp，实际为 {','.join(header)}", row=1)

    values = _to_numeric(body, first_line=2)
    mask = None
    if has_mask:
        flags = values[:, -1]
        if not np.isin(flags, (0.0, 1.0)).all():
            i = int(np.flatnonzero(~np.isin(flags, (0.0, 1.0)))[0])
            raise TableParseError("is_outlier 只能为 0 或 1", row=2 + i, column=values.shape[1])
        mask = flags.astype(bool)
        values = values[:, :-1]
    ds = Dataset(values[:, 1:], values[:, 0], mask)
    logger.info(f"📁 读取 {path.name}: n={ds.n}, p={ds.p}")
    return ds


def dump_csv(ds, path):
    """导出为带表头的 CSV: y,x1,...,xp[,is_outlier]"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(ds.x, columns=[f"x{j + 1}" for j in range(ds.p)])
    frame.insert(0, "y", ds.y)
    if ds.outlier_mask is not None:
        frame["is_outlier"] = ds.outlier_mask.astype(int)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


@dataclass(frozen=True, eq=False)
class StandardizeTransform:
    """按列标准化变换 (x - mean) / std"""
    mean: np.ndarray
    std: np.ndarray

    def apply(self, ds):
        if ds.p != self.mean.shape[0]:
            raise ValueError(f"维数不一致: 变换 p={self.mean.shape[0]}, 数据 p={ds.p}")
        return Dataset((ds.x - self.mean) / self.std, ds.y, ds.outlier_mask)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def standardize(ds):
    """
    特征列标准化为样本均值 0、样本标准差 1，响应不变

    Returns:
        tuple[Dataset, StandardizeTransform]: 标准化后的数据与可复用的变换
    """
    mean = ds.x.mean(axis=0)
    std = ds.x.std(axis=0, ddof=1) if ds.n > 1 else np.zeros(ds.p)
    for j in range(ds.p):
        if not std[j] > 1e-12 * max(1.0, abs(mean[j])):
            raise ConstantColumnError(j + 1)
    transform = StandardizeTransform(mean, std)
    return transform.apply(ds), transform
