#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
近端算子: ℓ₂ 球投影、软阈值及二者复合
"""

import numpy as np

# 投影后范数的相对舍入余量，保证投影幂等
_BALL_SLACK = 4 * np.finfo(np.float64).eps


def project_ball(v, radius):
    """投影到 B₂(0, radius)"""
    if not radius > 0:
        raise ValueError(f"球半径必须为正: {radius}")
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= radius * (1.0 + _BALL_SLACK):
        return v.copy()
    return v * (radius / norm)


def soft_threshold(v, t):
    """逐分量软阈值 sign(v)·max(|v|−t, 0)"""
    if t < 0:
        raise ValueError(f"阈值必须非负: {t}")
    v = np.asarray(v, dtype=np.float64)
    if t == 0:
        return v.copy()
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_l1_ball(v, t, radius):
    """t‖·‖₁ 与 B₂(0, radius) 指示函数之和的近端算子"""
    return project_ball(soft_threshold(v, t), radius)
