"""
分段线性有限元离散 — mu2lab

剖面函数用 P1 节点系数表示，所有积分按单元 Gauss–Legendre 求积 (默认 6 阶)。
密度消失端不需要边界条件 (自然边界)；周期分量首尾节点相同。

组装结果都是 scipy.sparse CSR 矩阵，跨分量的项在结构上不存在 (严格分块对角)。

使用示例:
    >>> from scripts.geometry import make_sphere
    >>> from scripts.discretize import Mesh, assemble_stiffness, Field
    >>> geom = make_sphere(3)
    >>> mesh = Mesh.build(geom, 400)
    >>> A = assemble_stiffness(geom, mesh)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from .errors import ConfigError, FieldError, PencilError
from .geometry import ModelGeometry

logger = logging.getLogger(__name__)

MIN_ELEMENTS = 8


# ═══════════════════════════════════════════════
# 网格
# ═══════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class ComponentMesh:
    """单个分量的节点与自由度范围"""
    nodes: np.ndarray       # t₀ = 0 < … < t_M = T
    periodic: bool
    offset: int             # 全局自由度起点

    @property
    def num_elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def ndof(self) -> int:
        return self.num_elements if self.periodic else self.num_elements + 1

    @property
    def dof_slice(self) -> slice:
        return slice(self.offset, self.offset + self.ndof)

    @property
    def dof_coordinates(self) -> np.ndarray:
        return self.nodes[:self.ndof]


def graded_nodes(length: float, num_elements: int, grading: float = 1.0,
                 ends: Sequence[str] = ('start', 'end')) -> np.ndarray:
    """
    幂律加密网格: 向给定端点聚集，γ = 1 时为均匀网格。

    两端: t = (T/2)(2s)^γ 关于中点镜像；单端: t = T·s^γ。
    """
    s = np.linspace(0.0, 1.0, num_elements + 1)
    if grading == 1.0 or not ends:
        return length * s
    if set(ends) == {'start', 'end'}:
        left = 0.5 * (2 * s) ** grading
        right = 1.0 - 0.5 * (2 * (1 - s)) ** grading
        g = np.where(s <= 0.5, left, right)
    elif 'start' in ends:
        g = s ** grading
    else:
        g = 1.0 - (1.0 - s) ** grading
    g[0], g[-1] = 0.0, 1.0
    return length * g


class Mesh:
    """
    多分量 P1 网格及其单元求积数据。

    全局数组按单元排列：
        elem_dofs (E, 2)  单元两端的全局自由度
        xq, wq    (E, k)  物理求积点与权重 (含 h/2)
        rhoq      (E, k)  求积点处的密度
    """

    def __init__(self, geom: ModelGeometry, node_lists: Sequence[np.ndarray], quad_order: int = 6):
        if len(node_lists) != len(geom.components):
            raise ConfigError(f"网格分量数 {len(node_lists)} 与几何分量数 {len(geom.components)} 不一致")
        if quad_order < 1:
            raise ConfigError(f"求积阶数必须 ≥ 1, 得到 {quad_order}")

        self.geom = geom
        self.quad_order = int(quad_order)
        xi, wi = np.polynomial.legendre.leggauss(self.quad_order)
        # 参考单元基函数值 (k, 2)
        self.phi = np.stack([(1 - xi) / 2, (1 + xi) / 2], axis=1)

        comps, dofs, xq, wq, rhoq, h, ecomp = [], [], [], [], [], [], []
        offset = 0
        for ci, (comp, nodes) in enumerate(zip(geom.components, node_lists)):
            nodes = np.asarray(nodes, dtype=float)
            if len(nodes) - 1 < MIN_ELEMENTS:
                raise ConfigError(f"分量 {ci} 单元数 {len(nodes) - 1} < {MIN_ELEMENTS}")
            if np.any(np.diff(nodes) <= 0):
                raise ConfigError(f"分量 {ci} 节点必须严格递增")
            if abs(nodes[0]) > 1e-14 or abs(nodes[-1] - comp.length) > 1e-12 * comp.length:
                raise ConfigError(f"分量 {ci} 首末节点必须为 0 与 T={comp.length}")
            nodes = nodes.copy()
            nodes[0], nodes[-1] = 0.0, comp.length

            cm = ComponentMesh(nodes=nodes, periodic=comp.periodic, offset=offset)
            M = cm.num_elements
            local = np.stack([np.arange(M), np.arange(1, M + 1)], axis=1)
            if cm.periodic:
                local[-1, 1] = 0
            he = np.diff(nodes)
            x = nodes[:-1, None] + (xi[None, :] + 1) * he[:, None] / 2

            comps.append(cm)
            dofs.append(local + offset)
            xq.append(x)
            wq.append(wi[None, :] * he[:, None] / 2)
            rhoq.append(comp.rho(x))
            h.append(he)
            ecomp.append(np.full(M, ci))
            offset += cm.ndof

        self.components: tuple[ComponentMesh, ...] = tuple(comps)
        self.ndof = offset
        self.elem_dofs = np.concatenate(dofs)
        self.xq = np.concatenate(xq)
        self.wq = np.concatenate(wq)
        self.rhoq = np.concatenate(rhoq)
        self.h = np.concatenate(h)
        self.elem_comp = np.concatenate(ecomp)

    # ─── 构造 ───

    @classmethod
    def build(cls, geom: ModelGeometry, num_elements: int | Sequence[int] = 200,
              quad_order: int = 6, grading: float = 1.0) -> 'Mesh':
        """每个分量 num_elements 个单元；grading > 1 时向极点加密 (周期分量保持均匀)"""
        if isinstance(num_elements, (int, np.integer)):
            counts = [int(num_elements)] * len(geom.components)
        else:
            counts = [int(m) for m in num_elements]
        node_lists = []
        for comp, m in zip(geom.components, counts):
            if m < MIN_ELEMENTS:
                raise ConfigError(f"单元数 {m} < {MIN_ELEMENTS}")
            if comp.periodic:
                node_lists.append(graded_nodes(comp.length, m))
            else:
                node_lists.append(graded_nodes(comp.length, m, grading, comp.poles))
        return cls(geom, node_lists, quad_order)

    # ─── 查询 ───

    @property
    def num_elements(self) -> int:
        return len(self.h)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(c.ndof for c in self.components)

    @property
    def dof_coordinates(self) -> np.ndarray:
        return np.concatenate([c.dof_coordinates for c in self.components])

    @property
    def dof_component(self) -> np.ndarray:
        return np.concatenate([np.full(c.ndof, i) for i, c in enumerate(self.components)])

    def interpolate(self, values: np.ndarray) -> np.ndarray:
        """节点值线性插值到求积点，返回 (E, k)"""
        v = np.asarray(values, dtype=float)
        if v.shape != (self.ndof,):
            raise FieldError(f"节点向量长度 {v.shape} 与自由度 {self.ndof} 不匹配")
        return v[self.elem_dofs[:, 0], None] * self.phi[None, :, 0] + \
            v[self.elem_dofs[:, 1], None] * self.phi[None, :, 1]

    def __repr__(self) -> str:
        return f"Mesh(components={len(self.components)}, dofs={self.ndof}, quad_order={self.quad_order})"


# ═══════════════════════════════════════════════
# 场与共形因子
# ═══════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class Field:
    """离散剖面函数：全局节点系数 + 各分量长度"""
    values: np.ndarray
    sizes: tuple[int, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) != sum(self.sizes):
            raise FieldError(f"场长度 {v.shape} 与分量尺寸 {self.sizes} 不匹配")
        if not np.all(np.isfinite(v)):
            raise FieldError("场含非有限值")
        object.__setattr__(self, 'values', v)

    @classmethod
    def from_values(cls, mesh: Mesh, values) -> 'Field':
        return cls(np.asarray(values, dtype=float), mesh.sizes)

    @classmethod
    def constant(cls, mesh: Mesh, c: float = 1.0) -> 'Field':
        return cls(np.full(mesh.ndof, float(c)), mesh.sizes)

    @classmethod
    def from_function(cls, mesh: Mesh, f: Callable[[int, np.ndarray], np.ndarray]) -> 'Field':
        """f(分量序号, 节点坐标) → 节点值"""
        parts = [np.broadcast_to(np.asarray(f(i, c.dof_coordinates), dtype=float), (c.ndof,))
                 for i, c in enumerate(mesh.components)]
        return cls(np.concatenate(parts), mesh.sizes)

    def component(self, i: int) -> np.ndarray:
        start = sum(self.sizes[:i])
        return self.values[start:start + self.sizes[i]]

    def scaled(self, c: float) -> 'Field':
        return Field(self.values * c, self.sizes)


@dataclass(frozen=True, eq=False)
class ConformalFactor:
    """非负场 u，g̃ = u^{N−2}g；normalized 时 ∫u^N dv_g = 1"""
    field: Field
    normalized: bool = False
    volume: float = float('nan')   # ∫u^N dv_g

    def __post_init__(self):
        v = self.field.values
        if np.any(v < 0):
            raise FieldError(f"共形因子必须非负, 最小值 {v.min():.3e}")
        if not np.any(v > 0):
            raise FieldError("共形因子不能恒为 0")

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def as_values(f) -> np.ndarray:
    """Field / ConformalFactor / 数组 → 节点向量"""
    if isinstance(f, ConformalFactor):
        return f.field.values
    if isinstance(f, Field):
        return f.values
    return np.asarray(f, dtype=float)


# ═══════════════════════════════════════════════
# 组装
# ═══════════════════════════════════════════════

def _assemble(mesh: Mesh, local: np.ndarray) -> sparse.csr_matrix:
    """单元矩阵 (E, 2, 2) → 全局 CSR (重复项求和)"""
    rows = np.repeat(mesh.elem_dofs, 2, axis=1)
    cols = np.tile(mesh.elem_dofs, (1, 2))
    mat = sparse.coo_matrix((local.reshape(-1), (rows.reshape(-1), cols.reshape(-1))),
                            shape=(mesh.ndof, mesh.ndof))
    return mat.tocsr()


def _local_mass(mesh: Mesh, coeff: np.ndarray | None = None) -> np.ndarray:
    """∫ coeff·ρ φ_a φ_b 的单元矩阵"""
    w = mesh.wq * mesh.rhoq
    if coeff is not None:
        w = w * coeff
    return np.einsum('eq,qa,qb->eab', w, mesh.phi, mesh.phi)


def _element_curvature(geom: ModelGeometry, mesh: Mesh, curvature) -> np.ndarray:
    if curvature is None:
        per_comp = np.array([c.scalar_curvature for c in geom.components])
    else:
        per_comp = np.broadcast_to(np.asarray(curvature, dtype=float), (len(geom.components),))
    return per_comp[mesh.elem_comp]


def assemble_stiffness(geom: ModelGeometry, mesh: Mesh, curvature=None) -> sparse.csr_matrix:
    """
    A_ij = Σ_e ∫ (c_n ρ φ_i′φ_j′ + S ρ φ_i φ_j) dt

    curvature 可替换 S (标量或逐分量)，用于 B₀ 形式。
    """
    c_n = geom.const.c_n
    grad = np.array([-1.0, 1.0])
    rho_int = np.sum(mesh.wq * mesh.rhoq, axis=1) / mesh.h ** 2
    local = c_n * rho_int[:, None, None] * np.outer(grad, grad)[None, :, :]
    S = _element_curvature(geom, mesh, curvature)
    local = local + S[:, None, None] * _local_mass(mesh)
    return _assemble(mesh, local)


def assemble_mass(geom: ModelGeometry, mesh: Mesh) -> sparse.csr_matrix:
    """平凡质量 M₀_ij = ∫ ρ φ_i φ_j dt"""
    return _assemble(mesh, _local_mass(mesh))


def weight_at_quadrature(mesh: Mesh, u, exponent: float, floor: float | None = None) -> np.ndarray:
    """先插值再取幂: u(x_q)^exponent"""
    uq = np.clip(mesh.interpolate(as_values(u)), 0.0, None)
    if floor is not None:
        uq = np.maximum(uq, floor)
    if exponent < 0 and np.any(uq <= 0):
        raise PencilError(f"负指数 {exponent:.3g} 而 u 有零点: 需要提供正的下限 floor")
    if exponent == 0:
        return np.ones_like(uq)
    return uq ** exponent


def assemble_weighted_mass(geom: ModelGeometry, mesh: Mesh, u, exponent: float,
                           floor: float | None = None) -> sparse.csr_matrix:
    """B_ij = ∫ u^exponent ρ φ_i φ_j dt"""
    return _assemble(mesh, _local_mass(mesh, weight_at_quadrature(mesh, u, exponent, floor)))


def assemble_load(mesh: Mesh, gq: np.ndarray) -> np.ndarray:
    """b_j = ∫ g ρ φ_j dt，g 给定在求积点 (E, k)"""
    contrib = np.einsum('eq,qa->ea', mesh.wq * mesh.rhoq * gq, mesh.phi)
    return np.bincount(mesh.elem_dofs.reshape(-1), weights=contrib.reshape(-1), minlength=mesh.ndof)


def lumped_mass(geom: ModelGeometry, mesh: Mesh) -> np.ndarray:
    """行和集中质量"""
    return np.asarray(assemble_mass(geom, mesh).sum(axis=1)).ravel()


# ═══════════════════════════════════════════════
# 积分与归一化
# ═══════════════════════════════════════════════

def integrate_power(geom: ModelGeometry, mesh: Mesh, f, p: float) -> float:
    """∫ |f|^p ρ dt"""
    fq = np.abs(mesh.interpolate(as_values(f)))
    return float(np.sum(mesh.wq * mesh.rhoq * fq ** p))


def normalize_volume(geom: ModelGeometry, mesh: Mesh, u) -> ConformalFactor:
    """u/(∫u^N)^{1/N}，标记为已归一化"""
    values = as_values(u)
    if np.any(values < 0):
        raise FieldError(f"归一化要求 u ≥ 0, 最小值 {values.min():.3e}")
    N = geom.const.N
    vol = integrate_power(geom, mesh, values, N)
    if not vol > 0:
        raise FieldError("u ≡ 0 无法归一化")
    scaled = values / vol ** (1.0 / N)
    return ConformalFactor(Field(scaled, mesh.sizes), normalized=True, volume=1.0)


def conformal_factor(geom: ModelGeometry, mesh: Mesh, u) -> ConformalFactor:
    """不归一化的共形因子，记录 ∫u^N"""
    if isinstance(u, ConformalFactor):
        return u
    values = as_values(u)
    field = Field(values, mesh.sizes)
    return ConformalFactor(field, normalized=False, volume=integrate_power(geom, mesh, values, geom.const.N))


@dataclass(frozen=True, eq=False)
class AssembledForms:
    """刚度、加权质量、平凡质量与体积"""
    A: sparse.csr_matrix
    B: sparse.csr_matrix
    M0: sparse.csr_matrix
    volume: float


def assemble_forms(geom: ModelGeometry, mesh: Mesh, u, floor: float | None = None) -> AssembledForms:
    """以 N−2 为权重指数组装全部形式"""
    N = geom.const.N
    return AssembledForms(
        A=assemble_stiffness(geom, mesh),
        B=assemble_weighted_mass(geom, mesh, u, N - 2, floor),
        M0=assemble_mass(geom, mesh),
        volume=integrate_power(geom, mesh, u, N),
    )


# ═══════════════════════════════════════════════
# CSV 导入导出 (component, t, value)
# ═══════════════════════════════════════════════

def field_frame(mesh: Mesh, field, name: str = 'value') -> pd.DataFrame:
    return pd.DataFrame({
        'component': mesh.dof_component,
        't': mesh.dof_coordinates,
        name: as_values(field),
    })


def read_field_csv(path: str | Path, mesh: Mesh) -> Field:
    """读取场 CSV 并核对节点坐标"""
    df = pd.read_csv(path, comment='#')
    missing = {'component', 't', 'value'} - set(df.columns)
    if missing:
        raise FieldError(f"场文件缺少列: {', '.join(sorted(missing))}")
    if len(df) != mesh.ndof:
        raise FieldError(f"场文件行数 {len(df)} 与网格自由度 {mesh.ndof} 不一致")
    if not np.array_equal(df['component'].to_numpy(), mesh.dof_component) or \
            not np.allclose(df['t'].to_numpy(), mesh.dof_coordinates, rtol=0, atol=1e-9):
        raise FieldError(f"场文件 {path} 的节点与当前网格不一致")
    logger.debug("读取场 %s (%d 个节点)", path, len(df))
    return Field(df['value'].to_numpy(dtype=float), mesh.sizes)
