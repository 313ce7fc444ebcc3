"""
广义对称特征问题 A x = λ B(u) x — mu2lab

B(u) 在 u 有零点时奇异，在 u 跨越多个数量级时病态。做法：
0. Jacobi 均衡 Ã = DAD, B̃ = DBD (D = diag(B)^{−1/2})，解出后 x = D x̃，
   收缩阈值因此相对于各节点自身的权重，而非全局最大权重；
1. Cholesky 判定 B ≻ tol·‖B‖ 时直接调用 scipy.linalg.eigh(A, B)；
2. 否则对 B 做谱分解，丢弃 B-特征值 ≤ tol·max 的方向，
   在被丢弃方向上对 A 取极小 (Schur 补)，再解约化问题并提升回原空间。

返回的特征向量 B-正交归一，符号约定为绝对值最大分量为正。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import linalg, sparse

from .discretize import Field, as_values
from .errors import DegenerateSpanError, PencilError, RankDeficiencyError

logger = logging.getLogger(__name__)

DEFAULT_DEFLATION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigenSolution:
    """前 k 个特征对及收缩信息"""
    eigenvalues: np.ndarray       # λ₁ ≤ … ≤ λ_k
    vectors: np.ndarray           # (ndof, k)，列为特征向量
    deflated_rank: int
    b_orthonormal: bool = True
    sizes: tuple[int, ...] | None = None

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def gap(self) -> float:
        """λ₂ − λ₁"""
        return float(self.eigenvalues[1] - self.eigenvalues[0]) if self.k > 1 else float('inf')

    def field(self, i: int) -> Field:
        """第 i 个特征向量 (0 起) 作为 Field"""
        sizes = self.sizes or (self.vectors.shape[0],)
        return Field(self.vectors[:, i].copy(), sizes)

    @property
    def fields(self) -> list[Field]:
        return [self.field(i) for i in range(self.k)]


def dense(M) -> np.ndarray:
    if sparse.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


def _check_symmetric(M: np.ndarray, name: str):
    scale = np.abs(M).max() or 1.0
    if np.abs(M - M.T).max() > 1e-10 * scale:
        raise PencilError(f"{name} 非对称: 最大偏差 {np.abs(M - M.T).max():.3e}")


def _fix_signs(X: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(X), axis=0)
    signs = np.sign(X[idx, np.arange(X.shape[1])])
    signs[signs == 0] = 1.0
    return X * signs


def _jacobi_scaling(B: np.ndarray) -> np.ndarray:
    """1/√B_ii；B_ii = 0 的行 (权重恒为零的节点) 取 1"""
    diag = np.diag(B).copy()
    positive = diag > 0
    d = np.ones_like(diag)
    d[positive] = 1.0 / np.sqrt(diag[positive])
    return d


def _is_well_conditioned(B: np.ndarray, tol: float) -> bool:
    """B − tol·‖B‖∞·I 可 Cholesky 分解 ⇒ 所有 B-特征值 > tol·λ_max"""
    shift = tol * np.abs(B).sum(axis=1).max()
    try:
        linalg.cholesky(B - shift * np.eye(B.shape[0]), lower=True, check_finite=False)
    except linalg.LinAlgError:
        return False
    return True


def solve_pencil(A, B, k: int, deflation_tol: float = DEFAULT_DEFLATION_TOL,
                 sizes: Sequence[int] | None = None) -> EigenSolution:
    """
    求 A x = λ B x 的最小 k 个特征对。

    Args:
        A: 对称矩阵 (稠密或稀疏)
        B: 对称半正定矩阵
        k: 特征对个数
        deflation_tol: 相对 B 最大特征值的收缩阈值
        sizes: 各分量自由度，用于生成 Field

    Raises:
        RankDeficiencyError: 收缩后秩 < k
        PencilError: 非对称，或 A 在 B 的零空间上无下界
    """
    if k < 1:
        raise PencilError(f"k 必须 ≥ 1, 得到 {k}")
    A = dense(A)
    B = dense(B)
    _check_symmetric(A, 'A')
    _check_symmetric(B, 'B')
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    n = A.shape[0]
    sizes = tuple(sizes) if sizes is not None else None
    if k > n:
        raise RankDeficiencyError(n, k, "矩阵维数不足")

    # ─── Jacobi 均衡: B̃ = DBD，D = diag(B)^{−1/2} (零对角行取 1) ───
    d = _jacobi_scaling(B)
    A = d[:, None] * A * d[None, :]
    B = d[:, None] * B * d[None, :]

    # ─── 快速路径: B 显著正定 ───
    if _is_well_conditioned(B, deflation_tol):
        lam, X = linalg.eigh(A, B, subset_by_index=[0, k - 1], check_finite=False)
        return EigenSolution(lam, _fix_signs(d[:, None] * X), n, True, sizes)

    # ─── 收缩路径 ───
    b, Q = linalg.eigh(B, check_finite=False)
    bmax = b.max()
    if bmax <= 0:
        raise RankDeficiencyError(0, k, "B 恒为零")
    keep = b > deflation_tol * bmax
    rank = int(keep.sum())
    if rank < k:
        raise RankDeficiencyError(rank, k)

    Qr, Q0 = Q[:, keep], Q[:, ~keep]
    scale = 1.0 / np.sqrt(b[keep])
    Arr = Qr.T @ A @ Qr
    lift_null = None
    if Q0.shape[1]:
        A00 = Q0.T @ A @ Q0
        A0r = Q0.T @ A @ Qr
        a00, V00 = linalg.eigh(A00, check_finite=False)
        a_scale = max(np.abs(A).max(), 1.0)
        if a00.min() < -1e-10 * a_scale:
            raise PencilError(
                f"A 在 B 的零空间上取负值 ({a00.min():.3e}): 形式无下界")
        # 伪逆: 丢弃 A00 的零方向
        inv = np.where(a00 > 1e-12 * a_scale, 1.0 / np.where(a00 > 0, a00, 1.0), 0.0)
        A00_pinv = (V00 * inv) @ V00.T
        Arr = Arr - A0r.T @ A00_pinv @ A0r
        lift_null = -A00_pinv @ A0r

    C = scale[:, None] * Arr * scale[None, :]
    C = 0.5 * (C + C.T)
    lam, Y = linalg.eigh(C, subset_by_index=[0, k - 1], check_finite=False)
    Z = scale[:, None] * Y
    X = Qr @ Z
    if lift_null is not None:
        X = X + Q0 @ (lift_null @ Z)
    logger.debug("收缩: 秩 %d / %d", rank, n)
    return EigenSolution(lam, _fix_signs(d[:, None] * X), rank, True, sizes)


def rayleigh(A, B, x) -> float:
    """xᵀAx / xᵀBx"""
    v = as_values(x)
    Bv = B @ v
    denom = float(v @ Bv)
    b_scale = float(np.abs(B.diagonal()).max())
    if denom <= 1e-14 * max(b_scale, 1e-300) * float(v @ v):
        raise DegenerateSpanError(denom, 1)
    return float(v @ (A @ v)) / denom


def residuals(A, B, sol: EigenSolution) -> np.ndarray:
    """‖A x_i − λ_i B x_i‖ / (‖A‖ + |λ_i|‖B‖)"""
    A = dense(A)
    B = dense(B)
    nA = np.linalg.norm(A, 2)
    nB = np.linalg.norm(B, 2)
    out = []
    for i, lam in enumerate(sol.eigenvalues):
        x = sol.vectors[:, i]
        out.append(np.linalg.norm(A @ x - lam * (B @ x)) / (nA + abs(lam) * nB))
    return np.array(out)


def deflation_sensitivity(A, B, k: int, tols: Sequence[float] = (1e-8, 1e-10, 1e-12)) -> pd.DataFrame:
    """不同收缩阈值下的特征值表"""
    rows = []
    for tol in tols:
        try:
            sol = solve_pencil(A, B, k, tol)
            row = {'tol': tol, 'rank': sol.deflated_rank}
            row.update({f'lambda{i + 1}': float(v) for i, v in enumerate(sol.eigenvalues)})
        except RankDeficiencyError as e:
            row = {'tol': tol, 'rank': e.rank}
        rows.append(row)
    return pd.DataFrame(rows)
