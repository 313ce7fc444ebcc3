"""
标量泛函 — mu2lab

Y (Yamabe 泛函)、F(u, v)、带 B₀ 的 Sobolev 商 G、μ_k 估计、
子空间上的 sup (小型 Gram 矩阵束) 以及 λ⁺ 商。

μ_k 的数值均为对称类内 μ_k 的上界 (在子集上取下确界)。
"""

from __future__ import annotations

import logging
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy import linalg

from .discretize import (
    ConformalFactor, Field, Mesh, as_values, assemble_mass, assemble_stiffness,
    assemble_weighted_mass, integrate_power, lumped_mass, normalize_volume,
)
from .errors import DegenerateSpanError, FieldError, PencilError
from .geometry import ModelGeometry, zonal_eigenvalues
from .pencil import DEFAULT_DEFLATION_TOL, rayleigh, solve_pencil

logger = logging.getLogger(__name__)


class MuEstimate(NamedTuple):
    """λ_k(u)·Vol(u)^{2/n}"""
    k: int
    value: float
    lambda_k: float
    volume: float
    deflated_rank: int


# ═══════════════════════════════════════════════
# 辅助
# ═══════════════════════════════════════════════

def round_factor(geom: ModelGeometry, mesh: Mesh) -> ConformalFactor:
    """归一化常数因子 u ≡ Vol^{−1/N}"""
    return normalize_volume(geom, mesh, Field.constant(mesh))


def lower_bound(n: int, mu1: float) -> float:
    """2^{2/n}·μ₁"""
    return 2.0 ** (2.0 / n) * mu1


def upper_target(n: int, mu1: float, mu1_sphere: float) -> float:
    """(μ₁^{n/2} + μ₁(𝕊ⁿ)^{n/2})^{2/n}；μ₁ ≤ 0 时取 μ₁(𝕊ⁿ)"""
    m = max(mu1, 0.0)
    return (m ** (n / 2) + mu1_sphere ** (n / 2)) ** (2.0 / n)


def _weight_and_volume(geom: ModelGeometry, mesh: Mesh, u, floor: float | None = None):
    N = geom.const.N
    B = assemble_weighted_mass(geom, mesh, u, N - 2, floor)
    return B, integrate_power(geom, mesh, u, N)


# ═══════════════════════════════════════════════
# Y, F, G
# ═══════════════════════════════════════════════

def yamabe_Y(geom: ModelGeometry, mesh: Mesh, v, A=None) -> float:
    """Y(v) = vᵀAv / (∫|v|^N)^{2/N}"""
    values = as_values(v)
    N = geom.const.N
    denom = integrate_power(geom, mesh, values, N)
    if not denom > 0:
        raise FieldError("Y 要求 v ≢ 0")
    A = assemble_stiffness(geom, mesh) if A is None else A
    return float(values @ (A @ values)) / denom ** (2.0 / N)


def F(geom: ModelGeometry, mesh: Mesh, u, v, A=None, curvature=None) -> float:
    """F(u, v) = rayleigh(A, B(u), v)·(∫u^N)^{2/n}"""
    if A is None:
        A = assemble_stiffness(geom, mesh, curvature)
    B, vol = _weight_and_volume(geom, mesh, u)
    return rayleigh(A, B, v) * vol ** (2.0 / geom.n)


def sobolev_quotient_G(geom: ModelGeometry, mesh: Mesh, u, v, B0: float) -> float:
    """与 F 相同，但刚度中 S 替换为常数 B₀"""
    return F(geom, mesh, u, v, curvature=B0)


# ═══════════════════════════════════════════════
# 子空间 sup 与 μ_k
# ═══════════════════════════════════════════════

def sup_over_subspace(geom: ModelGeometry, mesh: Mesh, u, fields: Sequence, A=None,
                      curvature=None, deflation_tol: float = DEFAULT_DEFLATION_TOL) -> float:
    """
    sup_{v ∈ span(fields)∖0} F(u, v)。

    由 k×k 矩阵束 (VᵀAV) x = λ (VᵀBV) x 的最大特征值精确给出。
    """
    V = np.column_stack([as_values(f) for f in fields])
    if A is None:
        A = assemble_stiffness(geom, mesh, curvature)
    B, vol = _weight_and_volume(geom, mesh, u)
    GA = V.T @ (A @ V)
    GB = V.T @ (B @ V)
    GA = 0.5 * (GA + GA.T)
    GB = 0.5 * (GB + GB.T)
    gb = linalg.eigvalsh(GB)
    if gb.min() <= deflation_tol * max(gb.max(), 0.0) or gb.max() <= 0:
        raise DegenerateSpanError(float(gb.min()), V.shape[1])
    lam = linalg.eigvalsh(GA, GB)
    return float(lam[-1]) * vol ** (2.0 / geom.n)


def sup_over_span(geom: ModelGeometry, mesh: Mesh, u, v1, v2, A=None, curvature=None,
                  deflation_tol: float = DEFAULT_DEFLATION_TOL) -> float:
    """二维子空间 span(v1, v2) 上的 sup F(u, ·)"""
    return sup_over_subspace(geom, mesh, u, [v1, v2], A, curvature, deflation_tol)


def mu_estimate(geom: ModelGeometry, mesh: Mesh, u, k: int, A=None,
                deflation_tol: float = DEFAULT_DEFLATION_TOL, floor: float | None = None) -> MuEstimate:
    """λ_k(u)·Vol(u)^{2/n}，对称类内 μ_k 的上界"""
    if A is None:
        A = assemble_stiffness(geom, mesh)
    B, vol = _weight_and_volume(geom, mesh, u, floor)
    sol = solve_pencil(A, B, k, deflation_tol, mesh.sizes)
    lam = float(sol.eigenvalues[k - 1])
    return MuEstimate(k=k, value=lam * vol ** (2.0 / geom.n), lambda_k=lam,
                      volume=vol, deflated_rank=sol.deflated_rank)


# ═══════════════════════════════════════════════
# λ⁺ 商
# ═══════════════════════════════════════════════

def lambda_plus_quotient(geom: ModelGeometry, mesh: Mesh, v, A=None) -> float:
    """
    (∫|L v|^{2n/(n+2)})^{(n+2)/n} / ∫ v L v

    强形式 L v 取 集中质量⁻¹·A v (节点值)，误差 O(h)。
    """
    values = as_values(v)
    n = geom.n
    A = assemble_stiffness(geom, mesh) if A is None else A
    Av = A @ values
    energy = float(values @ Av)
    if energy <= 0:
        raise PencilError(f"vᵀAv = {energy:.3e} ≤ 0: not in the positive cone of the form")
    Lv = Av / lumped_mass(geom, mesh)
    p = 2.0 * n / (n + 2)
    num = integrate_power(geom, mesh, Lv, p) ** ((n + 2) / n)
    return num / energy


# ═══════════════════════════════════════════════
# 网格收敛
# ═══════════════════════════════════════════════

def mesh_convergence(geom: ModelGeometry, sizes: Sequence[int], k: int,
                     quad_order: int = 6, grading: float = 1.0) -> pd.DataFrame:
    """
    平凡质量下前 k 个特征值随网格加密的收敛表。

    列: M, index, lambda, exact, error, ratio (上一网格误差 / 本网格误差)。
    """
    exact = zonal_eigenvalues(geom, k)
    rows = []
    prev: dict[int, float] = {}
    for M in sizes:
        mesh = Mesh.build(geom, int(M), quad_order, grading)
        sol = solve_pencil(assemble_stiffness(geom, mesh), assemble_mass(geom, mesh), k)
        for i, lam in enumerate(sol.eigenvalues):
            ex = float(exact[i]) if exact is not None else np.nan
            err = abs(lam - ex) if exact is not None else np.nan
            ratio = prev[i] / err if i in prev and err > 0 else np.nan
            rows.append({'M': int(M), 'index': i + 1, 'lambda': float(lam),
                         'exact': ex, 'error': err, 'ratio': ratio})
            prev[i] = err
        logger.info("网格 M=%d: λ = %s", M, np.array2string(sol.eigenvalues, precision=6))
    return pd.DataFrame(rows)
