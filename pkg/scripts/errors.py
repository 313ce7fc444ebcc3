"""
异常层级 — mu2lab

所有公开操作的前置条件失败都抛出这里的异常；
命令行入口 (mu2lab.py) 在 main() 中统一映射为退出码：

    0  通过
    1  验证失败 (VerificationError)
    2  配置/几何/场错误 (ConfigError, GeometryError, FieldError)
    3  数值/秩失败 (RankDeficiencyError, ResolutionError, PencilError, ...)
"""

from __future__ import annotations


class Mu2LabError(Exception):
    """mu2lab 基类异常"""
    exit_code = 3


# ═══════════════════════════════════════════════
# 配置与几何 (退出码 2)
# ═══════════════════════════════════════════════

class ConfigError(Mu2LabError, ValueError):
    """运行配置无效：缺字段、未知键、取值越界"""
    exit_code = 2


class GeometryError(Mu2LabError, ValueError):
    """几何数据无效：维数、密度、端点条件不一致"""
    exit_code = 2


# ═══════════════════════════════════════════════
# 数值失败 (退出码 3)
# ═══════════════════════════════════════════════

class RankDeficiencyError(Mu2LabError):
    """权重 B(u) 的秩不足 k"""

    def __init__(self, rank: int, k: int, detail: str = ''):
        self.rank = rank
        self.k = k
        msg = (f"权重秩 {rank} < k={k}: "
               f"weight supports fewer than k independent directions")
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegenerateSpanError(RankDeficiencyError):
    """子空间在 u>0 上的限制不单射 (Gram 退化)"""

    def __init__(self, min_eig: float, k: int):
        Mu2LabError.__init__(
            self,
            f"加权 Gram 矩阵退化 (最小特征值 {min_eig:.3e}): "
            f"restriction to M∖u⁻¹(0) not injective",
        )
        self.rank = k - 1
        self.k = k
        self.min_eig = min_eig


class DegenerateGapError(Mu2LabError):
    """λ₁ ≈ λ₂ 时导数公式不成立"""

    def __init__(self, gap: float, gap_tol: float):
        self.gap = gap
        self.gap_tol = gap_tol
        super().__init__(
            f"特征值间隙 {gap:.3e} < {gap_tol:.1e}: "
            f"derivative formula invalid at degenerate λ₂"
        )


class ResolutionError(Mu2LabError):
    """网格无法分辨 bubble 尺度"""

    def __init__(self, message: str, required_nodes: int | None = None):
        self.required_nodes = required_nodes
        super().__init__(message)


class PencilError(Mu2LabError):
    """矩阵束不满足对称/正性要求"""


class VerificationError(Mu2LabError):
    """不等式套件出现违例"""
    exit_code = 1


class FieldError(Mu2LabError, ValueError):
    """离散场不满足前置条件（零场、负值、维数不匹配）"""
    exit_code = 2
