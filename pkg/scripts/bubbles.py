"""
Aubin bubble 试验函数族 — mu2lab

v_ε(t) = C_ε·η(r)·(ε + r²)^{(2−n)/2}，r 为到中心的距离，
η 为五次 smoothstep 截断 (r ≤ δ 时为 1，r ≥ 2δ 时为 0，|η′| ≤ 15/(8δ))，
C_ε 由 ∫v_ε^N dv_g = 1 确定。

本模块还提供：
- 范数标度律拟合 (三种区间)
- 双 bubble 共形因子 u_ε = Y(v_ε)^{1/(N−2)}v_ε + μ₁^{1/(N−2)}v
- 负曲率发散演示 u_ε = v_ε + ε
- 截断敏感性

双 bubble 的 sup 与下界之差由交叉项与截断误差主导，按 ε^{(n−2)/4} 衰减。
n = 5 时 ε = 1e−3 已在下界的 5% 以内；n = 3 只有 ε^{1/4}，
𝕊³ 上 (M = 800, grading 2) 实测 sup/下界 ≈ 8.89 (ε = 1e−1)、2.0 (1e−2)、1.38 (1e−3)。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy import optimize as sopt

from .discretize import (
    ConformalFactor, Field, Mesh, assemble_mass, assemble_stiffness, integrate_power,
    normalize_volume,
)
from .errors import ConfigError, GeometryError, ResolutionError
from .functionals import (
    mu_estimate, round_factor, sup_over_subspace, sup_over_span, upper_target, yamabe_Y,
)
from .geometry import ModelGeometry, mu1_closed_form
from .pencil import solve_pencil
from .progress import track

logger = logging.getLogger(__name__)

MIN_CORE_NODES = 8


def default_eps_grid(count: int = 12, low: float = 1e-4, high: float = 1e-1) -> np.ndarray:
    """对数等距 ε 网格，从大到小"""
    return np.logspace(math.log10(high), math.log10(low), count)


# ═══════════════════════════════════════════════
# 参数与截断
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class BubbleParams:
    """
    bubble 参数。

    center: 'start' / 'end' 为极点；浮点数为区间内部的中心 (平面型集中)。
    c_eps: 归一化常数，由 normalized_params 计算。
    """
    eps: float
    delta: float = 0.5
    component: int = 0
    center: str | float = 'start'
    c_eps: float = float('nan')

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"ε 必须为正, 得到 {self.eps}")
        if not self.delta > 0:
            raise ConfigError(f"δ 必须为正, 得到 {self.delta}")


def cutoff(r: np.ndarray, delta: float) -> np.ndarray:
    """五次 smoothstep：[δ, 2δ] 上从 1 降到 0，C²"""
    s = np.clip((np.asarray(r, dtype=float) - delta) / delta, 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


def _distance(geom: ModelGeometry, mesh: Mesh, p: BubbleParams) -> np.ndarray:
    """宿主分量节点到中心的距离"""
    if not 0 <= p.component < len(geom.components):
        raise ConfigError(f"分量序号 {p.component} 越界 (共 {len(geom.components)} 个)")
    comp = geom.components[p.component]
    t = mesh.components[p.component].dof_coordinates
    T = comp.length
    if 2 * p.delta >= T:
        raise ConfigError(f"截断半径 δ={p.delta} 需满足 2δ < T={T:.6g}")
    if isinstance(p.center, str):
        if p.center not in comp.poles:
            raise GeometryError(
                f"分量 {p.component} 在 {p.center} 端没有密度消失的极点 (可用: {comp.poles or '无'})")
        return t if p.center == 'start' else T - t
    t0 = float(p.center)
    if not 0.0 <= t0 <= T:
        raise ConfigError(f"中心 {t0} 不在 [0, {T}] 内")
    d = np.abs(t - t0)
    return np.minimum(d, T - d) if comp.periodic else d


def _check_resolution(r: np.ndarray, eps: float):
    core = int(np.count_nonzero(r <= math.sqrt(eps)))
    if core < MIN_CORE_NODES:
        raise ResolutionError(
            f"网格无法分辨 ε={eps:.3g}: r ≤ √ε 内只有 {core} 个节点, 需要 ≥ {MIN_CORE_NODES} "
            f"(加密网格或增大 grading)", required_nodes=MIN_CORE_NODES)


# ═══════════════════════════════════════════════
# bubble 构造
# ═══════════════════════════════════════════════

def bubble_profile(geom: ModelGeometry, mesh: Mesh, p: BubbleParams) -> Field:
    """未归一化剖面 ε^{(n−2)/4}·η(r)(ε + r²)^{(2−n)/2}，其它分量为 0"""
    n = geom.n
    r = _distance(geom, mesh, p)
    _check_resolution(r, p.eps)
    local = p.eps ** ((n - 2) / 4) * cutoff(r, p.delta) * (p.eps + r ** 2) ** ((2 - n) / 2)
    values = np.zeros(mesh.ndof)
    values[mesh.components[p.component].dof_slice] = local
    return Field(values, mesh.sizes)


def normalized_params(geom: ModelGeometry, mesh: Mesh, p: BubbleParams) -> BubbleParams:
    """计算 C_ε，使 ∫(C_ε·η(ε + r²)^{(2−n)/2})^N = 1"""
    n = geom.n
    raw = bubble_profile(geom, mesh, p)
    total = integrate_power(geom, mesh, raw, geom.const.N)
    return replace(p, c_eps=p.eps ** ((n - 2) / 4) / total ** (1.0 / geom.const.N))


def aubin_bubble(geom: ModelGeometry, mesh: Mesh, p: BubbleParams) -> Field:
    """归一化 bubble v_ε (∫v_ε^N = 1)"""
    return normalize_volume(geom, mesh, bubble_profile(geom, mesh, p)).field


def antipodal_bubbles(geom: ModelGeometry, mesh: Mesh, eps: float, delta: float = 0.5,
                      component: int = 0) -> ConformalFactor:
    """同一分量两极各放一个 bubble，归一化后的共形因子"""
    v1 = aubin_bubble(geom, mesh, BubbleParams(eps, delta, component, 'start'))
    v2 = aubin_bubble(geom, mesh, BubbleParams(eps, delta, component, 'end'))
    return normalize_volume(geom, mesh, v1.values + v2.values)


# ═══════════════════════════════════════════════
# 范数标度律
# ═══════════════════════════════════════════════

class NormFit(NamedTuple):
    """log∫v_ε^p 对 log ε 的最小二乘拟合"""
    p: float
    slope: float
    expected: float
    regime: str              # 'above' | 'below' | 'critical'
    residual: float          # 拟合残差 RMS
    residual_plain: float    # 临界区间不做对数修正时的残差
    log_shift: float = 0.0   # 临界区间: ∫v_ε^p ∝ ε^a(|ln ε| + β) 中的 β
    points: int = 0          # 窗口内参与拟合的 ε 个数


MIN_FIT_POINTS = 6


def expected_norm_exponent(n: int, p: float) -> tuple[float, str]:
    """∫v_ε^p ~ ε^{a}：返回 (a, 区间)"""
    crit = n / (n - 2)
    if abs(p - crit) <= 1e-12 * crit:
        return n / 4, 'critical'
    if p > crit:
        return (2 * n - (n - 2) * p) / 4, 'above'
    return (n - 2) * p / 4, 'below'


def _fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return float(coef[0]), float(np.sqrt(np.mean(resid ** 2)))


def fit_window(eps_grid: Sequence[float], fit_eps_max: float | None) -> np.ndarray:
    """
    小 ε 端的拟合窗口 ε ≤ fit_eps_max。

    大 ε 处截断与高阶项尚未衰减，渐近斜率只在小 ε 端成立。

    Raises:
        ConfigError: 窗口内少于 6 个点
    """
    eps = np.asarray(eps_grid, dtype=float)
    if fit_eps_max is not None:
        eps = eps[eps <= fit_eps_max * (1 + 1e-9)]
    if len(eps) < MIN_FIT_POINTS:
        window = "全部 ε" if fit_eps_max is None else f"ε ≤ {fit_eps_max:g}"
        raise ConfigError(f"拟合窗口 ({window}) 内至少 {MIN_FIT_POINTS} 个点, 得到 {len(eps)}")
    return eps


def _fit_log_shift(x: np.ndarray, y: np.ndarray, L: np.ndarray) -> tuple[float, float, float]:
    """
    拟合 y = a·x + log(L + β) + c：对每个 β 做线性最小二乘，再对 β 一维极小化。

    Returns:
        (斜率 a, 残差 RMS, β)
    """
    lo, hi = -0.95 * float(L.min()), 10.0 * float(L.max())

    def resid(beta: float) -> float:
        return _fit(x, y - np.log(L + beta))[1]

    grid = np.union1d(np.linspace(lo, hi, 200), [0.0])
    beta0 = float(grid[np.argmin([resid(b) for b in grid])])
    step = (hi - lo) / 199
    res = sopt.minimize_scalar(resid, bounds=(max(lo, beta0 - step), min(hi, beta0 + step)), method='bounded')
    beta = float(res.x) if res.success and res.fun <= resid(beta0) else beta0
    slope, r = _fit(x, y - np.log(L + beta))
    return slope, r, beta


def norm_scaling_fit(geom: ModelGeometry, mesh: Mesh, p_exponent: float, eps_grid: Sequence[float],
                     delta: float = 0.5, component: int = 0, center: str | float = 'start',
                     log_correction: bool = False, fit_eps_max: float | None = 1e-2) -> NormFit:
    """
    拟合 ∫v_ε^p 的 ε-指数。

    只用 ε ≤ fit_eps_max 的点 (None 表示全部)。临界指数 p = n/(n−2) 必须开启
    log_correction：模型 ∫v_ε^p ≈ ε^{n/4}(a|ln ε| + b)，log 项的平移 β = b/a 与斜率一起拟合；
    residual_plain 为固定 β = 0 (即除以 |ln ε|) 时的残差。
    """
    eps_all = np.asarray(eps_grid, dtype=float)
    if len(eps_all) < 8:
        raise ConfigError(f"ε 网格至少 8 个点, 得到 {len(eps_all)}")
    expected, regime = expected_norm_exponent(geom.n, p_exponent)
    if regime == 'critical' and not log_correction:
        raise ConfigError(f"p = n/(n−2) = {p_exponent:.6g} 处于区间边界: 需要 log_correction")
    eps = fit_window(eps_all, fit_eps_max)

    norms = np.array([
        integrate_power(geom, mesh, aubin_bubble(geom, mesh, BubbleParams(e, delta, component, center)),
                        p_exponent)
        for e in eps
    ])
    x, y = np.log(eps), np.log(norms)
    beta = 0.0
    if regime == 'critical':
        L = np.abs(np.log(eps))
        resid_plain = _fit(x, y - np.log(L))[1]
        slope, resid, beta = _fit_log_shift(x, y, L)
    else:
        slope, resid = _fit(x, y)
        resid_plain = resid
    logger.info("范数拟合 p=%.4g: 斜率 %.4f (期望 %.4f, %s, %d 点)",
                p_exponent, slope, expected, regime, len(eps))
    return NormFit(p_exponent, slope, expected, regime, resid, resid_plain, beta, len(eps))


def c_eps_slope(geom: ModelGeometry, mesh: Mesh, eps_grid: Sequence[float], delta: float = 0.5,
                component: int = 0, center: str | float = 'start', fit_eps_max: float | None = 1e-2) -> float:
    """log C_ε 对 log ε 的斜率 (期望 (n−2)/4)，只用 ε ≤ fit_eps_max 的点"""
    eps = fit_window(eps_grid, fit_eps_max)
    c = [normalized_params(geom, mesh, BubbleParams(e, delta, component, center)).c_eps for e in eps]
    return _fit(np.log(eps), np.log(c))[0]


# ═══════════════════════════════════════════════
# 双 bubble 构型
# ═══════════════════════════════════════════════

def yamabe_minimizer(geom: ModelGeometry, mesh: Mesh) -> tuple[Field, float]:
    """
    Yamabe 极小元 v (∫v^N = 1) 与 μ₁ 估计。

    常数为极小元的目录几何直接返回常数；其它几何调用 k = 1 不动点迭代。
    """
    mu1 = mu1_closed_form(geom)
    if mu1 is not None and (geom.is_round_sphere_union() or mu1 <= 0):
        if len(geom.components) > 1 and mu1 > 0:
            # 不交并: 极小元集中在一个分量上
            values = np.zeros(mesh.ndof)
            values[mesh.components[0].dof_slice] = 1.0
            return normalize_volume(geom, mesh, values).field, mu1
        return round_factor(geom, mesh).field, mu1
    from .optimize import minimize_yamabe
    result = minimize_yamabe(geom, mesh, Field.constant(mesh))
    return result.v, result.mu1


def two_bubble_config(geom: ModelGeometry, mesh: Mesh, eps: float, delta: float = 0.5,
                      component: int = 0, center: str | float = 'start',
                      v: Field | None = None, mu1: float | None = None
                      ) -> tuple[ConformalFactor, Field, Field]:
    """
    u_ε = Y(v_ε)^{1/(N−2)}v_ε + μ₁^{1/(N−2)}v (归一化)；μ₁ = 0 时 u_ε = v_ε。

    Returns:
        (u_ε, v_ε, v)
    """
    if v is None or mu1 is None:
        v_min, mu1_min = yamabe_minimizer(geom, mesh)
        v = v if v is not None else v_min
        mu1 = mu1 if mu1 is not None else mu1_min
    if mu1 < -1e-12:
        raise GeometryError(f"μ₁ 估计 {mu1:.6g} < 0: 双 bubble 构型不适用 (改用负曲率发散演示)")

    N = geom.const.N
    v_eps = aubin_bubble(geom, mesh, BubbleParams(eps, delta, component, center))
    if mu1 <= 1e-12:
        u = normalize_volume(geom, mesh, v_eps)
    else:
        Y = yamabe_Y(geom, mesh, v_eps)
        blend = Y ** (1.0 / (N - 2)) * v_eps.values + mu1 ** (1.0 / (N - 2)) * np.abs(v.values)
        u = normalize_volume(geom, mesh, blend)
    return u, v_eps, v


def bubble_sweep(geom: ModelGeometry, mesh: Mesh, eps_grid: Sequence[float], delta: float = 0.5,
                 p_exponent: float | None = None, component: int = 0, center: str | float = 'start',
                 quiet: bool = True) -> pd.DataFrame:
    """
    ε 扫描表: epsilon, Y, C_eps, norm_p, sup_span, bound_target。
    """
    n = geom.n
    p = geom.const.N - 1 if p_exponent is None else p_exponent
    A = assemble_stiffness(geom, mesh)
    v, mu1 = yamabe_minimizer(geom, mesh)
    target = upper_target(n, mu1, geom.const.mu1_sphere)
    rows = []
    for e in track(eps_grid, desc='ε sweep', disable=quiet):
        params = normalized_params(geom, mesh, BubbleParams(float(e), delta, component, center))
        v_eps = aubin_bubble(geom, mesh, params)
        u, _, _ = two_bubble_config(geom, mesh, float(e), delta, component, center, v=v, mu1=mu1)
        rows.append({
            'epsilon': float(e),
            'Y': yamabe_Y(geom, mesh, v_eps, A=A),
            'C_eps': params.c_eps,
            'norm_p': integrate_power(geom, mesh, v_eps, p),
            'sup_span': sup_over_span(geom, mesh, u, v_eps, v, A=A),
            'bound_target': target,
        })
    return pd.DataFrame(rows)


def cutoff_sensitivity(geom: ModelGeometry, mesh: Mesh, eps: float, delta: float = 0.5,
                       component: int = 0, center: str | float = 'start') -> dict:
    """|Y(δ) − Y(2δ)| 及其与 ε^{(n−2)/2}/δ^{n−2} 之比"""
    n = geom.n
    A = assemble_stiffness(geom, mesh)
    y1 = yamabe_Y(geom, mesh, aubin_bubble(geom, mesh, BubbleParams(eps, delta, component, center)), A=A)
    y2 = yamabe_Y(geom, mesh, aubin_bubble(geom, mesh, BubbleParams(eps, 2 * delta, component, center)), A=A)
    budget = eps ** ((n - 2) / 2) / delta ** (n - 2)
    return {'epsilon': eps, 'delta': delta, 'Y_delta': y1, 'Y_2delta': y2,
            'diff': abs(y1 - y2), 'ratio': abs(y1 - y2) / budget}


# ═══════════════════════════════════════════════
# 负曲率发散演示
# ═══════════════════════════════════════════════

def negative_divergence_demo(geom: ModelGeometry, mesh: Mesh, eps_grid: Sequence[float], k: int = 1,
                             delta: float = 0.5, component: int = 0, center: str | float = 'start'
                             ) -> pd.DataFrame:
    """
    u_ε = v_ε + ε，在前 k 个平凡特征向量张成的子空间上取 sup F(u_ε, ·)。

    Returns:
        列 epsilon, value (子空间 sup), mu_k (λ_k·Vol^{2/n}), min_weight, rank 的表
    """
    A = assemble_stiffness(geom, mesh)
    plain = solve_pencil(A, assemble_mass(geom, mesh), k, sizes=mesh.sizes)
    if plain.eigenvalues[k - 1] >= 0:
        raise GeometryError(f"λ_{k} = {plain.eigenvalues[k - 1]:.6g} ≥ 0: 发散演示要求 λ_k < 0")
    fields = plain.fields
    rows = []
    for e in eps_grid:
        v_eps = aubin_bubble(geom, mesh, BubbleParams(float(e), delta, component, center))
        u = ConformalFactor(Field(v_eps.values + float(e), mesh.sizes))
        value = sup_over_subspace(geom, mesh, u, fields, A=A)
        est = mu_estimate(geom, mesh, u, k, A=A)
        rows.append({'epsilon': float(e), 'value': value, 'mu_k': est.value,
                     'min_weight': float(u.values.min()), 'rank': est.deflated_rank})
        logger.debug("发散演示 ε=%.3g: %.6g", e, value)
    return pd.DataFrame(rows)
