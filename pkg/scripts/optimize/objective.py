"""
目标函数 J(u) = λ₂(u)·Vol(u)^{2/n} 及其导数

导数 (u 体积归一化、w 为 B(u)-归一化第二特征向量):
    G_j = λ₂(N−2)·(∫u^{N−1}φ_j ρ dt − ∫u^{N−3}w²φ_j ρ dt)
这是离散 J 对节点值的精确导数 (先插值再取幂)。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..config import OptimizerConfig
from ..discretize import (
    ConformalFactor, Field, Mesh, as_values, assemble_load, assemble_stiffness,
    assemble_weighted_mass, integrate_power, normalize_volume, weight_at_quadrature,
)
from ..errors import DegenerateGapError
from ..geometry import ModelGeometry
from ..pencil import EigenSolution, solve_pencil
from .nodal import total_sign_changes

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Evaluation:
    """归一化 u 处的 J 与前两个特征对"""
    u: ConformalFactor
    sol: EigenSolution

    @property
    def J(self) -> float:
        return float(self.sol.eigenvalues[1])

    @property
    def lambda1(self) -> float:
        return float(self.sol.eigenvalues[0])

    @property
    def lambda2(self) -> float:
        return float(self.sol.eigenvalues[1])

    @property
    def w(self) -> np.ndarray:
        return self.sol.vectors[:, 1]

    def relative_gap(self) -> float:
        return (self.lambda2 - self.lambda1) / max(abs(self.lambda2), 1.0)


def evaluate(geom: ModelGeometry, mesh: Mesh, u, A=None, deflation_tol: float = 1e-10) -> Evaluation:
    """归一化 u 并求解 k = 2 矩阵束；Vol = 1 时 J = λ₂"""
    un = normalize_volume(geom, mesh, u)
    A = assemble_stiffness(geom, mesh) if A is None else A
    B = assemble_weighted_mass(geom, mesh, un, geom.const.N - 2)
    return Evaluation(un, solve_pencil(A, B, 2, deflation_tol, mesh.sizes))


def objective(geom: ModelGeometry, mesh: Mesh, u, A=None) -> float:
    """J(u) = λ₂(u)·Vol(u)^{2/n}"""
    return evaluate(geom, mesh, u, A).J


def derivative_load(geom: ModelGeometry, mesh: Mesh, u, w, floor: float | None = None) -> np.ndarray:
    """∫u^{N−1}φ_j ρ − ∫u^{N−3}w²φ_j ρ"""
    N = geom.const.N
    wq = mesh.interpolate(as_values(w))
    first = assemble_load(mesh, weight_at_quadrature(mesh, u, N - 1))
    second = assemble_load(mesh, weight_at_quadrature(mesh, u, N - 3, floor) * wq ** 2)
    return first - second


def gradient(geom: ModelGeometry, mesh: Mesh, u, eigensolution: EigenSolution | None = None,
             gap_tol: float = 1e-6, floor: float | None = None, A=None) -> Field:
    """
    J 在体积归一化 u 处对节点扰动 h = φ_j 的方向导数。

    eigensolution 可以对应未归一化的 u：按 u → u/s 的标度律换算，不重新求解。

    Raises:
        DegenerateGapError: 相对间隙 (λ₂ − λ₁)/|λ₂| < gap_tol
    """
    N = geom.const.N
    values = as_values(u)
    if eigensolution is None:
        ev = evaluate(geom, mesh, values, A)
        lam1, lam2, w, un = ev.lambda1, ev.lambda2, ev.w, ev.u.values
    else:
        vol = integrate_power(geom, mesh, values, N)
        s = vol ** (1.0 / N)
        un = values / s
        lam1, lam2 = (float(x) * s ** (N - 2) for x in eigensolution.eigenvalues[:2])
        w = eigensolution.vectors[:, 1] * s ** ((N - 2) / 2)

    gap = (lam2 - lam1) / max(abs(lam2), 1.0)
    if gap < gap_tol:
        raise DegenerateGapError(gap, gap_tol)
    if floor is None and N - 3 < 0:
        floor = 1e-8 * float(np.mean(un))
    G = lam2 * (N - 2) * derivative_load(geom, mesh, un, w, floor)
    return Field(G, mesh.sizes)


# ═══════════════════════════════════════════════
# λ₁ ≈ λ₂ 时的第二向量选择
# ═══════════════════════════════════════════════

def select_second_vector(geom: ModelGeometry, mesh: Mesh, ev: Evaluation,
                         settings: OptimizerConfig) -> np.ndarray:
    """
    间隙简单时返回 x₂；近简并时在 span(x₁, x₂) 内取 w(θ) = cosθ·x₁ + sinθ·x₂：
    先最大化变号次数，再优先取正负部都不可忽略的组合，最后最小化 ‖|w| − u‖_B。

    θ 网格上选出符号模式后，在固定符号下对 (a, b) 做最小二乘并归一化，
    |w| = u 可达时结果精确到舍入误差。
    """
    if ev.relative_gap() >= settings.tie_tol:
        return ev.w
    x1, x2 = ev.sol.vectors[:, 0], ev.sol.vectors[:, 1]
    u = ev.u.values
    B = assemble_weighted_mass(geom, mesh, u, geom.const.N - 2)

    def combo(theta: float) -> np.ndarray:
        return np.cos(theta) * x1 + np.sin(theta) * x2

    def distance(theta: float) -> float:
        d = np.abs(combo(theta)) - u
        return float(d @ (B @ d))

    def one_signed(theta: float) -> bool:
        w = combo(theta)
        scale = 1e-6 * float(np.abs(w).sum())
        return min(float(w[w > 0].sum()), float(-w[w < 0].sum())) <= scale

    thetas = np.linspace(0.0, np.pi, 72, endpoint=False)
    changes = np.array([total_sign_changes(mesh, combo(t)) for t in thetas])
    best_changes = changes.max()
    candidates = thetas[changes == best_changes]
    theta = float(min(candidates, key=lambda t: (one_signed(t), distance(t))))

    s = np.sign(combo(theta))
    X = np.column_stack([s * x1, s * x2])
    a, b = np.linalg.lstsq(X.T @ (B @ X), X.T @ (B @ u), rcond=None)[0]
    refined = float(np.arctan2(b, a))
    if total_sign_changes(mesh, combo(refined)) == best_changes and distance(refined) <= distance(theta):
        theta = refined
    logger.debug("近简并 λ₁≈λ₂: 选取 θ=%.6f (变号 %d)", theta, best_changes)
    return combo(theta)
