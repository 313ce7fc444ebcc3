"""
离散化模块单元测试

测试覆盖:
- 加密网格与多分量自由度布局
- 刚度/质量矩阵的对称性、分块结构与常数检验
- 幂积分与体积归一化
- Field / ConformalFactor 前置条件
- 场 CSV 读写

运行测试:
    python -m pytest tests/test_discretize.py -v
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from scripts.discretize import (
    ConformalFactor, Field, Mesh, assemble_mass, assemble_stiffness, assemble_weighted_mass,
    field_frame, graded_nodes, integrate_power, lumped_mass, normalize_volume, read_field_csv,
    weight_at_quadrature,
)
from scripts.errors import ConfigError, FieldError, PencilError
from scripts.geometry import make_disjoint_union, make_flat_band, make_sphere


# ═══════════════════════════════════════════════
# Fixtures
# ═══════════════════════════════════════════════


@pytest.fixture(scope='module')
def sphere3():
    geom = make_sphere(3)
    return geom, Mesh.build(geom, 100)


@pytest.fixture(scope='module')
def union3():
    geom = make_disjoint_union(make_sphere(3), make_sphere(3))
    return geom, Mesh.build(geom, 60)


@pytest.fixture(scope='module')
def band3():
    geom = make_flat_band(3)
    return geom, Mesh.build(geom, 64)


# ═══════════════════════════════════════════════
# 网格
# ═══════════════════════════════════════════════


class TestMesh:
    """graded_nodes / Mesh.build"""

    def test_uniform_nodes(self):
        nodes = graded_nodes(math.pi, 10)
        np.testing.assert_allclose(np.diff(nodes), math.pi / 10)

    def test_graded_nodes_cluster_at_both_poles(self):
        """γ = 2: 端点单元比中点单元细"""
        nodes = graded_nodes(math.pi, 100, grading=2.0)
        h = np.diff(nodes)
        assert nodes[0] == 0.0 and nodes[-1] == pytest.approx(math.pi)
        assert np.all(h > 0)
        assert h[0] < 0.1 * h[50], f"端点单元 {h[0]:.3e} 未加密 (中点 {h[50]:.3e})"
        assert h[-1] == pytest.approx(h[0], rel=1e-10)

    def test_graded_nodes_single_end(self):
        nodes = graded_nodes(1.0, 50, grading=3.0, ends=('start',))
        h = np.diff(nodes)
        assert h[0] < h[-1]

    def test_pole_dofs(self, sphere3):
        """极点分量: M 个单元 → M+1 个自由度"""
        _, mesh = sphere3
        assert mesh.ndof == 101
        assert mesh.sizes == (101,)

    def test_periodic_dofs(self, band3):
        """周期分量: 首尾节点相同 → M 个自由度"""
        _, mesh = band3
        assert mesh.ndof == 64
        assert mesh.components[0].periodic

    def test_union_dofs(self, union3):
        geom, mesh = union3
        assert mesh.sizes == (61, 61)
        np.testing.assert_array_equal(np.unique(mesh.dof_component), [0, 1])

    def test_too_few_elements(self):
        with pytest.raises(ConfigError):
            Mesh.build(make_sphere(3), 4)

    def test_non_increasing_nodes(self):
        geom = make_sphere(3)
        nodes = np.linspace(0, math.pi, 20)
        nodes[5] = nodes[4]
        with pytest.raises(ConfigError):
            Mesh(geom, [nodes])

    def test_interpolate_shape_mismatch(self, sphere3):
        _, mesh = sphere3
        with pytest.raises(FieldError):
            mesh.interpolate(np.ones(mesh.ndof + 1))


# ═══════════════════════════════════════════════
# 组装
# ═══════════════════════════════════════════════


class TestAssembly:
    """刚度与质量矩阵"""

    def test_mass_total_is_volume(self, sphere3):
        """1ᵀM₀1 = Vol"""
        geom, mesh = sphere3
        one = np.ones(mesh.ndof)
        M0 = assemble_mass(geom, mesh)
        assert float(one @ (M0 @ one)) == pytest.approx(geom.volume, rel=1e-10)
        assert lumped_mass(geom, mesh).sum() == pytest.approx(geom.volume, rel=1e-10)

    def test_stiffness_on_constant(self, sphere3):
        """1ᵀA1 = S·Vol (梯度项为零)"""
        geom, mesh = sphere3
        one = np.ones(mesh.ndof)
        A = assemble_stiffness(geom, mesh)
        assert float(one @ (A @ one)) == pytest.approx(6.0 * geom.volume, rel=1e-10)

    def test_curvature_override(self, sphere3):
        """curvature 参数替换 S"""
        geom, mesh = sphere3
        one = np.ones(mesh.ndof)
        A0 = assemble_stiffness(geom, mesh, curvature=0.0)
        assert abs(float(one @ (A0 @ one))) < 1e-10 * geom.volume

    def test_symmetric(self, sphere3):
        geom, mesh = sphere3
        A = assemble_stiffness(geom, mesh).toarray()
        M0 = assemble_mass(geom, mesh).toarray()
        np.testing.assert_allclose(A, A.T, atol=1e-12)
        np.testing.assert_allclose(M0, M0.T, atol=1e-14)

    def test_block_diagonal_union(self, union3):
        """不交并: 跨分量项结构上为零"""
        geom, mesh = union3
        A = assemble_stiffness(geom, mesh).toarray()
        n0 = mesh.sizes[0]
        assert np.all(A[:n0, n0:] == 0.0)
        assert np.all(A[n0:, :n0] == 0.0)

    def test_periodic_constant_in_kernel(self, band3):
        """平坦周期环带: A·1 = 0"""
        geom, mesh = band3
        A = assemble_stiffness(geom, mesh)
        assert np.abs(A @ np.ones(mesh.ndof)).max() < 1e-12

    def test_weighted_mass_constant_factor(self, sphere3):
        """u ≡ c: B(u) = c^{N−2}·M₀"""
        geom, mesh = sphere3
        B = assemble_weighted_mass(geom, mesh, np.full(mesh.ndof, 2.0), geom.const.N - 2)
        M0 = assemble_mass(geom, mesh)
        np.testing.assert_allclose(B.toarray(), 16.0 * M0.toarray(), rtol=1e-12, atol=1e-14)

    def test_negative_exponent_needs_floor(self, sphere3):
        """负指数且 u 有零点: 需要 floor"""
        _, mesh = sphere3
        u = np.ones(mesh.ndof)
        u[:3] = 0.0
        with pytest.raises(PencilError):
            weight_at_quadrature(mesh, u, -1.0)
        w = weight_at_quadrature(mesh, u, -1.0, floor=1e-8)
        assert np.all(np.isfinite(w))


# ═══════════════════════════════════════════════
# 积分与归一化
# ═══════════════════════════════════════════════


class TestNormalization:
    """integrate_power / normalize_volume"""

    def test_integrate_constant(self, sphere3):
        geom, mesh = sphere3
        assert integrate_power(geom, mesh, np.ones(mesh.ndof), 6.0) == pytest.approx(geom.volume, rel=1e-10)

    def test_normalize_volume(self, sphere3):
        """归一化后 ∫u^N = 1，且常数因子 = Vol^{−1/N}"""
        geom, mesh = sphere3
        u = normalize_volume(geom, mesh, Field.constant(mesh, 3.0))
        assert u.normalized
        assert integrate_power(geom, mesh, u, geom.const.N) == pytest.approx(1.0, rel=1e-12)
        assert u.values[0] == pytest.approx(geom.volume ** (-1.0 / 6.0), rel=1e-10)

    def test_normalize_rejects_negative(self, sphere3):
        geom, mesh = sphere3
        with pytest.raises(FieldError):
            normalize_volume(geom, mesh, -np.ones(mesh.ndof))

    def test_normalize_rejects_zero(self, sphere3):
        geom, mesh = sphere3
        with pytest.raises(FieldError):
            normalize_volume(geom, mesh, np.zeros(mesh.ndof))


# ═══════════════════════════════════════════════
# 场
# ═══════════════════════════════════════════════


class TestField:
    """Field / ConformalFactor / CSV"""

    def test_length_mismatch(self, sphere3):
        _, mesh = sphere3
        with pytest.raises(FieldError):
            Field(np.ones(mesh.ndof - 1), mesh.sizes)

    def test_non_finite(self, sphere3):
        _, mesh = sphere3
        v = np.ones(mesh.ndof)
        v[3] = np.nan
        with pytest.raises(FieldError):
            Field(v, mesh.sizes)

    def test_from_function_per_component(self, union3):
        _, mesh = union3
        f = Field.from_function(mesh, lambda i, t: np.full_like(t, float(i + 1)))
        assert np.all(f.component(0) == 1.0)
        assert np.all(f.component(1) == 2.0)

    def test_conformal_factor_rejects_negative(self, sphere3):
        _, mesh = sphere3
        v = np.ones(mesh.ndof)
        v[0] = -1e-3
        with pytest.raises(FieldError):
            ConformalFactor(Field(v, mesh.sizes))

    def test_conformal_factor_rejects_zero(self, sphere3):
        _, mesh = sphere3
        with pytest.raises(FieldError):
            ConformalFactor(Field.constant(mesh, 0.0))

    def test_csv_round_trip(self, union3, tmp_path):
        """field_frame → CSV → read_field_csv"""
        geom, mesh = union3
        f = Field.from_function(mesh, lambda i, t: np.cos(t) + i)
        path = tmp_path / 'u.csv'
        field_frame(mesh, f).to_csv(path, index=False, float_format='%.17g')
        back = read_field_csv(path, mesh)
        np.testing.assert_allclose(back.values, f.values, rtol=1e-15)

    def test_csv_wrong_mesh(self, sphere3, tmp_path):
        """节点与当前网格不一致 → FieldError"""
        geom, mesh = sphere3
        path = tmp_path / 'u.csv'
        field_frame(mesh, Field.constant(mesh)).to_csv(path, index=False)
        other = Mesh.build(geom, 50)
        with pytest.raises(FieldError):
            read_field_csv(path, other)
