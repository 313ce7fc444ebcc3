"""
投影梯度下降

u_{k+1} = normalize(max(u_k − s·G_k, u_floor·mean))，Armijo 回溯：
    J_{k+1} ≤ J_k − c·s‖G_k‖²
失败时 s 减半，成功后下一步 s 加倍。λ₂ 近简并时退回一次不动点步并记标志。
轨迹、终止判据与节点报告用 select_second_vector 选出的 w。
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from ..config import OptimizerConfig
from ..discretize import Field, Mesh, as_values, assemble_stiffness
from ..errors import DegenerateGapError, RankDeficiencyError
from ..geometry import ModelGeometry
from .fixed_point import check_lower_bound, fixed_point_step, make_trace, u_vs_absw
from .nodal import nodal_analysis
from .objective import evaluate, gradient, select_second_vector
from .trace import OptimizerResult

logger = logging.getLogger(__name__)


def project(u: np.ndarray, u_floor: float) -> np.ndarray:
    """逐点截断到 u_floor·mean(u)"""
    return np.maximum(u, u_floor * float(np.mean(u)))


def minimize_gradient(geom: ModelGeometry, mesh: Mesh, u0, step0: float | None = None,
                      max_iters: int | None = None, tol: float | None = None,
                      settings: OptimizerConfig | None = None, mu1: float | None = None,
                      label: str = '') -> OptimizerResult:
    """投影梯度极小化 J(u)，终止约定与不动点迭代相同"""
    settings = settings or OptimizerConfig()
    cfg = replace(
        settings,
        step0=settings.step0 if step0 is None else step0,
        max_iters=settings.max_iters if max_iters is None else max_iters,
        tol=settings.tol if tol is None else tol,
    )
    A = assemble_stiffness(geom, mesh)
    ev = evaluate(geom, mesh, project(as_values(u0), cfg.u_floor), A, cfg.deflation_tol)
    w = select_second_vector(geom, mesh, ev, cfg)
    trace = make_trace(geom, 'gradient', cfg, mu1, label)
    trace.record(0, ev.J, ev.lambda1, ev.lambda2, math.nan,
                 u_vs_absw(geom, mesh, ev.u.values, w), ev.u.values, armijo_slack=math.nan)
    check_lower_bound(trace, ev.J, cfg, 0)
    logger.info("[%s] 投影梯度开始: J0 = %.8g", label or 'run', ev.J)

    s = None
    reason = 'max_iters'
    for it in range(1, cfg.max_iters + 1):
        u = ev.u.values
        try:
            G = gradient(geom, mesh, ev.u, ev.sol, cfg.gap_tol,
                         floor=cfg.u_floor * float(np.mean(u)) if geom.n >= 7 else None).values
        except DegenerateGapError as e:
            logger.warning("迭代 %d: %s，退回不动点步", it, e)
            trace.flag('gradient_fallback')
            new, tau = fixed_point_step(geom, mesh, ev, A, cfg, w)
            if new is None:
                reason = 'stalled'
                break
            dJ = ev.J - new.J
            ev = new
            w = select_second_vector(geom, mesh, ev, cfg)
            gap_uw = u_vs_absw(geom, mesh, ev.u.values, w)
            trace.record(it, ev.J, ev.lambda1, ev.lambda2, tau, gap_uw, ev.u.values,
                         armijo_slack=math.nan)
            check_lower_bound(trace, ev.J, cfg, it)
            if abs(dJ) < cfg.tol * abs(ev.J) and gap_uw <= 10 * cfg.tol:
                reason = 'converged'
                break
            continue

        g2 = float(G @ G)
        if g2 == 0.0:
            reason = 'converged'
            break
        if s is None:
            s = cfg.step0 * float(np.max(np.abs(u))) / float(np.max(np.abs(G)))
        s_min = 1e-14 * cfg.step0 * float(np.max(np.abs(u))) / float(np.max(np.abs(G)))

        accepted = None
        while s >= s_min:
            cand = project(u - s * G, cfg.u_floor)
            try:
                ev_new = evaluate(geom, mesh, cand, A, cfg.deflation_tol)
            except RankDeficiencyError:
                s *= 0.5
                continue
            slack = ev.J - cfg.armijo_c * s * g2 - ev_new.J
            if slack >= 0:
                accepted = (ev_new, s, slack)
                break
            s *= 0.5
        if accepted is None:
            reason = 'stalled'
            break

        ev_new, step, slack = accepted
        dJ = ev.J - ev_new.J
        ev = ev_new
        w = select_second_vector(geom, mesh, ev, cfg)
        gap_uw = u_vs_absw(geom, mesh, ev.u.values, w)
        trace.record(it, ev.J, ev.lambda1, ev.lambda2, step, gap_uw, ev.u.values,
                     armijo_slack=slack, grad_norm2=g2)
        check_lower_bound(trace, ev.J, cfg, it)
        s = 2.0 * step
        if abs(dJ) < cfg.tol * abs(ev.J) and gap_uw <= 10 * cfg.tol:
            reason = 'converged'
            break

    trace.finish(reason)
    trace.w_final = Field(w.copy(), mesh.sizes)
    nodal = nodal_analysis(geom, mesh, w, ev.u, ev.J, A)
    logger.info("[%s] 终止 (%s): J = %.8g, 迭代 %d", label or 'run', reason, ev.J, trace.iterations)
    return OptimizerResult(ev.u, trace, nodal)
