"""
节点结构分析

沿每个分量剖面统计 w 的变号次数与同号极大区间 (对称类内的节点域)，
并计算 Euler–Lagrange 残差 ‖Aw − μ₂B(|w|)w‖/‖Aw‖。
"""

from __future__ import annotations

import numpy as np

from ..discretize import Mesh, as_values, assemble_stiffness, assemble_weighted_mass, integrate_power
from ..errors import FieldError
from ..geometry import ModelGeometry
from .trace import NodalReport

ZERO_TOL = 1e-12


def _signs(values: np.ndarray, scale: float) -> np.ndarray:
    """忽略 |w| ≤ 1e−12·max 的节点后的符号序列"""
    keep = np.abs(values) > ZERO_TOL * scale
    return np.sign(values[keep])


def count_sign_changes(values: np.ndarray, periodic: bool = False, scale: float | None = None) -> int:
    s = _signs(np.asarray(values, dtype=float), scale if scale is not None else np.abs(values).max())
    if len(s) < 2:
        return 0
    changes = int(np.count_nonzero(s[1:] != s[:-1]))
    if periodic and s[0] != s[-1]:
        changes += 1
    return changes


def count_domains(values: np.ndarray, periodic: bool = False, scale: float | None = None) -> dict[str, int]:
    """每种符号的极大区间数"""
    s = _signs(np.asarray(values, dtype=float), scale if scale is not None else np.abs(values).max())
    out = {'positive': 0, 'negative': 0}
    if len(s) == 0:
        return out
    starts = np.concatenate([[True], s[1:] != s[:-1]])
    runs = s[starts]
    if periodic and len(runs) > 1 and runs[0] == runs[-1]:
        runs = runs[:-1]
    out['positive'] = int(np.count_nonzero(runs > 0))
    out['negative'] = int(np.count_nonzero(runs < 0))
    return out


def total_sign_changes(mesh: Mesh, values: np.ndarray) -> int:
    """所有分量变号次数之和"""
    scale = np.abs(values).max()
    return sum(count_sign_changes(values[c.dof_slice], c.periodic, scale) for c in mesh.components)


def nodal_analysis(geom: ModelGeometry, mesh: Mesh, w, u, mu2_value: float, A=None) -> NodalReport:
    """
    w 的节点报告。

    w 应为 B(u)-归一化的第二特征向量，u 已体积归一化；
    此时不动点 u = |w| 对应 L w = μ₂|w|^{N−2}w。
    """
    wv = as_values(w)
    uv = as_values(u)
    scale = np.abs(wv).max()
    if scale == 0:
        raise FieldError("nodal_analysis 要求 w ≢ 0")
    N = geom.const.N

    per_comp = []
    changes = 0
    domains = {'positive': 0, 'negative': 0}
    for i, c in enumerate(mesh.components):
        part = wv[c.dof_slice]
        sc = count_sign_changes(part, c.periodic, scale)
        dom = count_domains(part, c.periodic, scale)
        changes += sc
        domains['positive'] += dom['positive']
        domains['negative'] += dom['negative']
        per_comp.append({'component': i, 'sign_changes': sc, **dom})

    A = assemble_stiffness(geom, mesh) if A is None else A
    Aw = A @ wv
    Bw = assemble_weighted_mass(geom, mesh, np.abs(wv), N - 2) @ wv
    el = float(np.linalg.norm(Aw - mu2_value * Bw) / max(np.linalg.norm(Aw), 1e-300))

    u_norm = integrate_power(geom, mesh, uv, N) ** (1.0 / N)
    diff = integrate_power(geom, mesh, uv - np.abs(wv), N) ** (1.0 / N)

    significant = wv[np.abs(wv) > ZERO_TOL * scale]
    return NodalReport(
        sign_changes=changes,
        nodal_domains=domains,
        el_residual=el,
        u_vs_absw=diff / u_norm,
        is_nodal=bool(np.any(significant > 0) and np.any(significant < 0)),
        per_component=per_comp,
    )
