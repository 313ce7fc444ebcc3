"""
Euler–Lagrange 不动点迭代 u ← |w|

u_{k+1} = normalize((1−τ)u_k + τ·|w_k|/‖w_k‖_N + floor_k)
τ 从 τ0 开始减半直到 J 不上升 (容差 tol·|J|)；τ < τ_min 时记为 stalled。
w_k 是 select_second_vector 选出的向量，轨迹、终止判据与节点报告都用它。
多分量几何上每步之后按最优比例重标度各分量 (rebalance_components)。
floor_k = max(u_floor·mean(u) − min(u), 0) 仅在 n ≥ 7 时使用 (保持 u^{N−3} 有限)。
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np
import pandas as pd

from ..config import OptimizerConfig
from ..discretize import (
    Field, Mesh, as_values, assemble_stiffness, assemble_weighted_mass, integrate_power, normalize_volume,
)
from ..errors import RankDeficiencyError
from ..functionals import lower_bound, upper_target
from ..geometry import ModelGeometry, mu1_closed_form
from ..pencil import solve_pencil
from .nodal import nodal_analysis
from .objective import Evaluation, evaluate, select_second_vector
from .trace import OptimizerResult, OptimizerTrace, YamabeResult

logger = logging.getLogger(__name__)


# ═══════════════════════════════════════════════
# 公共辅助
# ═══════════════════════════════════════════════

def make_trace(geom: ModelGeometry, method: str, settings: OptimizerConfig, mu1: float | None,
               label: str) -> OptimizerTrace:
    """带上下界监视值的空轨迹"""
    n = geom.n
    if mu1 is None:
        mu1 = mu1_closed_form(geom)
    lb = lower_bound(n, mu1) if mu1 is not None and mu1 >= 0 else math.nan
    ub = upper_target(n, mu1, geom.const.mu1_sphere) if mu1 is not None else math.nan
    return OptimizerTrace(method, lb, ub, label, settings.snapshot_every)


def check_lower_bound(trace: OptimizerTrace, J: float, settings: OptimizerConfig, it: int):
    """J ≥ 2^{2/n}μ₁ − tol·scale；违反时告警并记标志"""
    lb = trace.lower_bound
    if math.isnan(lb):
        return
    if J < lb - settings.monitor_tol * max(abs(lb), 1.0):
        logger.warning("迭代 %d: J=%.8g 低于下界监视值 %.8g", it, J, lb)
        trace.flag('lower_bound_violation')


def u_vs_absw(geom: ModelGeometry, mesh: Mesh, u: np.ndarray, w: np.ndarray) -> float:
    """‖u − |w|‖_N / ‖u‖_N"""
    N = geom.const.N
    return (integrate_power(geom, mesh, u - np.abs(w), N) / integrate_power(geom, mesh, u, N)) ** (1.0 / N)


def apply_floor(u: np.ndarray, u_floor: float) -> np.ndarray:
    """抬高使 min(u) ≥ u_floor·mean(u)"""
    floor = u_floor * float(np.mean(u))
    return u + max(floor - float(u.min()), 0.0)


def fixed_point_step(geom: ModelGeometry, mesh: Mesh, ev: Evaluation, A, settings: OptimizerConfig,
                     w: np.ndarray | None = None) -> tuple[Evaluation | None, float]:
    """
    一次带回溯的阻尼步。

    w 缺省时由 select_second_vector 选取。接受条件 J_new ≤ J + tol·|J|，
    因此在不动点上 (|w| = u) 的步也会被接受。

    Returns:
        (新的评估, 接受的 τ)；τ 退化到 τ_min 以下时返回 (None, τ)
    """
    N = geom.const.N
    u = ev.u.values
    if w is None:
        w = select_second_vector(geom, mesh, ev, settings)
    absw = np.abs(w)
    absw = absw / integrate_power(geom, mesh, absw, N) ** (1.0 / N)
    slack = settings.tol * abs(ev.J)
    tau = settings.tau0
    while tau >= settings.tau_min:
        cand = (1.0 - tau) * u + tau * absw
        if geom.n >= 7:
            cand = apply_floor(cand, settings.u_floor)
        try:
            ev_new = evaluate(geom, mesh, cand, A, settings.deflation_tol)
        except RankDeficiencyError:
            tau *= 0.5
            continue
        if ev_new.J <= ev.J + slack:
            return ev_new, tau
        tau *= 0.5
    return None, tau


# ═══════════════════════════════════════════════
# 多分量: 逐分量重标度
# ═══════════════════════════════════════════════

def _component_spectra(geom: ModelGeometry, mesh: Mesh, u: np.ndarray, A, deflation_tol: float
                       ) -> tuple[np.ndarray, np.ndarray]:
    """各分量的前两个特征值 (m×2) 与体积 ∫_i u^N"""
    N = geom.const.N
    B = assemble_weighted_mass(geom, mesh, u, N - 2)
    lams, vols = [], []
    for c in mesh.components:
        sl = c.dof_slice
        sol = solve_pencil(A[sl, sl], B[sl, sl], 2, deflation_tol)
        part = np.zeros_like(u)
        part[sl] = u[sl]
        lams.append(sol.eigenvalues[:2])
        vols.append(integrate_power(geom, mesh, part, N))
    return np.array(lams, dtype=float), np.array(vols)


def _scaled_objective(lams: np.ndarray, vols: np.ndarray, r: np.ndarray, n: int, N: float) -> float:
    """分量 i 乘以 e^{r_i} 后的 J: 第二小特征值·(Σ V_i e^{N r_i})^{2/n}"""
    vals = (lams * np.exp(-(N - 2) * r)[:, None]).ravel()
    second = float(np.partition(vals, 1)[1])
    return second * float(np.sum(vols * np.exp(N * r))) ** (2.0 / n)


def balance_exponents(lams: np.ndarray, vols: np.ndarray, n: int, N: float,
                      sweeps: int = 10) -> tuple[np.ndarray, float]:
    """
    在分量重标度 u|_i → e^{r_i}u|_i 上极小化 J。

    分量 i 的特征值按 e^{−(N−2)r_i} 缩放，体积按 e^{N r_i}。
    固定其它 r 时 J(r_j) 分段单调，极小值落在两条特征值曲线的交点上，
    因此逐坐标枚举交点即可。

    Returns:
        (r, 对应的 J)
    """
    m = len(vols)
    r = np.zeros(m)
    best = _scaled_objective(lams, vols, r, n, N)
    for _ in range(sweeps):
        improved = False
        for j in range(m):
            for i in range(m):
                if i == j:
                    continue
                for lj in lams[j]:
                    for li in lams[i]:
                        trial = r.copy()
                        trial[j] = r[i] + math.log(lj / li) / (N - 2)
                        J = _scaled_objective(lams, vols, trial, n, N)
                        if J < best * (1 - 1e-12):
                            r, best = trial, J
                            improved = True
        if not improved:
            break
    return r - r.mean(), best


def rebalance_components(geom: ModelGeometry, mesh: Mesh, ev: Evaluation, A,
                         settings: OptimizerConfig) -> Evaluation:
    """
    把各分量的质量重新分配到最优比例；J 不下降时原样返回。

    单分量、存在非正特征值或分量矩阵束秩亏时跳过。
    """
    if len(mesh.components) < 2:
        return ev
    u = ev.u.values
    try:
        lams, vols = _component_spectra(geom, mesh, u, A, settings.deflation_tol)
    except RankDeficiencyError:
        return ev
    if np.any(lams <= 0) or np.any(vols <= 0):
        return ev
    n, N = geom.n, geom.const.N
    r, J = balance_exponents(lams, vols, n, N)
    if J >= _scaled_objective(lams, vols, np.zeros_like(r), n, N) * (1 - 1e-12):
        return ev
    scaled = u.copy()
    for c, ri in zip(mesh.components, r):
        scaled[c.dof_slice] *= math.exp(ri)
    if geom.n >= 7:
        scaled = apply_floor(scaled, settings.u_floor)
    try:
        ev_new = evaluate(geom, mesh, scaled, A, settings.deflation_tol)
    except RankDeficiencyError:
        return ev
    if ev_new.J > ev.J:
        return ev
    logger.debug("分量重标度: J %.10g → %.10g, r = %s", ev.J, ev_new.J, np.round(r, 6))
    return ev_new


# ═══════════════════════════════════════════════
# μ₂ 不动点迭代
# ═══════════════════════════════════════════════

def minimize_fixed_point(geom: ModelGeometry, mesh: Mesh, u0, tau0: float | None = None,
                         max_iters: int | None = None, tol: float | None = None,
                         settings: OptimizerConfig | None = None, mu1: float | None = None,
                         label: str = '') -> OptimizerResult:
    """
    不动点迭代极小化 J(u)。

    终止: |ΔJ| < tol·|J| 且 u_vs_absw ≤ 10·tol → converged；
    回溯失败 → stalled；达到 max_iters → max_iters。
    """
    settings = settings or OptimizerConfig()
    tau0 = settings.tau0 if tau0 is None else tau0
    max_iters = settings.max_iters if max_iters is None else max_iters
    tol = settings.tol if tol is None else tol
    cfg = replace(settings, tau0=tau0, max_iters=max_iters, tol=tol)

    A = assemble_stiffness(geom, mesh)
    start = as_values(u0)
    if geom.n >= 7:
        start = apply_floor(start, cfg.u_floor)
    ev = evaluate(geom, mesh, start, A, cfg.deflation_tol)
    if cfg.rebalance:
        ev = rebalance_components(geom, mesh, ev, A, cfg)
    w = select_second_vector(geom, mesh, ev, cfg)
    trace = make_trace(geom, 'fixed_point', cfg, mu1, label)
    trace.record(0, ev.J, ev.lambda1, ev.lambda2, math.nan,
                 u_vs_absw(geom, mesh, ev.u.values, w), ev.u.values)
    check_lower_bound(trace, ev.J, cfg, 0)
    logger.info("[%s] 不动点迭代开始: J0 = %.8g", label or 'run', ev.J)

    reason = 'max_iters'
    for it in range(1, max_iters + 1):
        new, tau = fixed_point_step(geom, mesh, ev, A, cfg, w)
        if new is None:
            reason = 'stalled'
            break
        if cfg.rebalance:
            new = rebalance_components(geom, mesh, new, A, cfg)
        dJ = ev.J - new.J
        ev = new
        w = select_second_vector(geom, mesh, ev, cfg)
        gap_uw = u_vs_absw(geom, mesh, ev.u.values, w)
        trace.record(it, ev.J, ev.lambda1, ev.lambda2, tau, gap_uw, ev.u.values)
        check_lower_bound(trace, ev.J, cfg, it)
        logger.debug("迭代 %d: J=%.10g τ=%.3g |u−|w||=%.3e", it, ev.J, tau, gap_uw)
        if abs(dJ) < tol * abs(ev.J) and gap_uw <= 10 * tol:
            reason = 'converged'
            break

    trace.finish(reason)
    trace.w_final = Field(w.copy(), mesh.sizes)
    nodal = nodal_analysis(geom, mesh, w, ev.u, ev.J, A)
    logger.info("[%s] 终止 (%s): J = %.8g, 迭代 %d", label or 'run', reason, ev.J, trace.iterations)
    return OptimizerResult(ev.u, trace, nodal)


def u_floor_sensitivity(geom: ModelGeometry, mesh: Mesh, u0, settings: OptimizerConfig | None = None,
                        factors=(1.0, 100.0)) -> pd.DataFrame:
    """不同 u_floor 下的最终 J"""
    settings = settings or OptimizerConfig()
    rows = []
    for f in factors:
        cfg = replace(settings, u_floor=settings.u_floor * f)
        res = minimize_fixed_point(geom, mesh, u0, settings=cfg, label=f'floor×{f:g}')
        rows.append({'u_floor': cfg.u_floor, 'J': res.trace.final_J, 'termination': res.trace.termination})
    return pd.DataFrame(rows)


# ═══════════════════════════════════════════════
# k = 1: Yamabe 极小元
# ═══════════════════════════════════════════════

def minimize_yamabe(geom: ModelGeometry, mesh: Mesh, u0, max_iters: int = 100, tol: float = 1e-10,
                    tau0: float = 0.5, tau_min: float = 1e-4) -> YamabeResult:
    """
    λ₁(u)·Vol^{2/n} 的不动点迭代 u ← |x₁|。

    返回 μ₁ 估计与归一化极小元 v (∫v^N = 1)。仅适用于 μ₁ ≥ 0。
    """
    N = geom.const.N
    A = assemble_stiffness(geom, mesh)

    def first_pair(u):
        un = normalize_volume(geom, mesh, u)
        B = assemble_weighted_mass(geom, mesh, un, N - 2)
        sol = solve_pencil(A, B, 1, sizes=mesh.sizes)
        return un.values, float(sol.eigenvalues[0]), sol.vectors[:, 0]

    u, J, x1 = first_pair(as_values(u0))
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        target = np.abs(x1)
        target = target / integrate_power(geom, mesh, target, N) ** (1.0 / N)
        tau = tau0
        accepted = False
        while tau >= tau_min:
            cand, Jc, xc = first_pair((1 - tau) * u + tau * target)
            if Jc < J:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            converged = True
            break
        dJ = J - Jc
        u, J, x1 = cand, Jc, xc
        if dJ < tol * max(abs(J), 1.0):
            converged = True
            break

    v = normalize_volume(geom, mesh, np.abs(x1)).field
    logger.info("Yamabe 极小化: μ₁ ≈ %.8g (%d 次迭代)", J, it)
    return YamabeResult(v=v, mu1=J, iterations=it, converged=converged)
