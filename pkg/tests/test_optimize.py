"""
μ₂ 极小化单元测试

测试覆盖:
- J(u) 的离散导数 (中心差分核对)
- 节点结构: 变号次数、节点域、EL 残差
- 不动点迭代: 两个 𝕊³ 的不交并收敛到 2^{2/3}μ₁(𝕊³)
- 投影梯度: Armijo 余量、近简并时退回不动点步
- 多起点: 起点标签、跳过无法分辨的 bubble、结果汇总
- k = 1 Yamabe 极小化

运行测试:
    python -m pytest tests/test_optimize.py -v
    python -m pytest tests/test_optimize.py -v -m "not slow"
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from scripts.config import OptimizerConfig
from scripts.discretize import Field, Mesh, assemble_stiffness, assemble_weighted_mass
from scripts.errors import DegenerateGapError, FieldError, Mu2LabError
from scripts.functionals import lower_bound, round_factor
from scripts.geometry import make_disjoint_union, make_flat_band, make_product_sphere, make_sphere
from scripts.optimize import (
    OptimizerTrace, count_domains, count_sign_changes, evaluate, gradient, initial_factors,
    minimize_fixed_point, minimize_gradient, minimize_yamabe, multistart_minimize, nodal_analysis,
    objective, project, select_second_vector, total_sign_changes, u_floor_sensitivity,
)
from scripts.optimize.fixed_point import (
    apply_floor, balance_exponents, check_lower_bound, rebalance_components, u_vs_absw,
)
from scripts.optimize.multistart import _random_seed
from scripts.pencil import solve_pencil

MU1_S3 = 6.0 * (2.0 * math.pi ** 2) ** (2.0 / 3.0)
TARGET_S3 = 2.0 ** (2.0 / 3.0) * MU1_S3          # ≈ 69.57


# ═══════════════════════════════════════════════
# Fixtures
# ═══════════════════════════════════════════════


@pytest.fixture(scope='module')
def sphere3_coarse():
    geom = make_sphere(3)
    return geom, Mesh.build(geom, 40)


@pytest.fixture(scope='module')
def union3():
    geom = make_disjoint_union(make_sphere(3), make_sphere(3))
    return geom, Mesh.build(geom, 60)


# ═══════════════════════════════════════════════
# 导数
# ═══════════════════════════════════════════════


class TestGradient:
    """离散 J 的精确导数"""

    @pytest.mark.parametrize('make', [lambda: make_sphere(3), lambda: make_flat_band(3)],
                             ids=['sphere3', 'flat_band'])
    @pytest.mark.parametrize('seed', range(20))
    def test_central_difference(self, make, seed):
        """G_j 与 (J(u + h e_j) − J(u − h e_j))/2h 一致"""
        geom = make()
        mesh = Mesh.build(geom, 40)
        rng = np.random.default_rng(seed)
        ev = evaluate(geom, mesh, np.exp(0.3 * rng.standard_normal(mesh.ndof)))
        u = ev.u.values
        G = gradient(geom, mesh, ev.u).values
        h = 1e-5 * u.max()
        for j in rng.choice(np.arange(2, mesh.ndof - 2), size=5, replace=False):
            e = np.zeros_like(u)
            e[j] = h
            fd = (objective(geom, mesh, u + e) - objective(geom, mesh, u - e)) / (2 * h)
            np.testing.assert_allclose(fd, G[j], rtol=1e-4, atol=1e-4 * np.abs(G).max(),
                                       err_msg=f"节点 {j}")

    def test_reuses_unnormalized_eigensolution(self, sphere3_coarse):
        """传入未归一化 u 的特征解时按标度律换算"""
        geom, mesh = sphere3_coarse
        u0 = Field.from_function(mesh, lambda i, t: 2.0 + np.cos(t))
        ev = evaluate(geom, mesh, u0)
        big = ev.u.values * 3.0
        sol = solve_pencil(assemble_stiffness(geom, mesh),
                           assemble_weighted_mass(geom, mesh, big, geom.const.N - 2), 2)
        G_ref = gradient(geom, mesh, ev.u).values
        G_scaled = gradient(geom, mesh, big, eigensolution=sol).values
        np.testing.assert_allclose(G_scaled, G_ref, rtol=1e-6, atol=1e-9 * np.abs(G_ref).max())

    def test_degenerate_gap(self, union3):
        """两个 𝕊³ 上的常数因子: λ₁ = λ₂，导数公式不成立"""
        geom, mesh = union3
        with pytest.raises(DegenerateGapError):
            gradient(geom, mesh, Field.constant(mesh))


# ═══════════════════════════════════════════════
# 节点结构
# ═══════════════════════════════════════════════


class TestNodal:
    """count_sign_changes / count_domains / nodal_analysis"""

    def test_cos_one_sign_change(self):
        t = np.linspace(0, np.pi, 101)
        assert count_sign_changes(np.cos(t)) == 1
        assert count_domains(np.cos(t)) == {'positive': 1, 'negative': 1}

    def test_periodic_wraparound(self):
        """周期: cos t 在圆上变号两次，首尾同号区间合并"""
        t = np.linspace(0, 2 * np.pi, 100, endpoint=False)
        assert count_sign_changes(np.cos(t), periodic=True) == 2
        assert count_domains(np.cos(t), periodic=True) == {'positive': 1, 'negative': 1}

    def test_tiny_values_ignored(self):
        """|w| ≤ 1e−12·max 的节点不计符号"""
        v = np.array([1.0, 1e-14, -1e-14, 1.0])
        assert count_sign_changes(v) == 0

    def test_total_over_components(self, union3):
        _, mesh = union3
        w = Field.from_function(mesh, lambda i, t: np.cos(t) if i == 0 else np.cos(2 * t))
        assert total_sign_changes(mesh, w.values) == 3

    def test_round_sphere_second_eigenvector(self, sphere3_coarse):
        """round u 的第二特征向量 ~ cos t: 一次变号、节点"""
        geom, mesh = sphere3_coarse
        ev = evaluate(geom, mesh, Field.constant(mesh))
        rep = nodal_analysis(geom, mesh, ev.w, ev.u, ev.J)
        assert rep.sign_changes == 1
        assert rep.is_nodal and rep.flag == 'nodal'
        assert rep.nodal_domains == {'positive': 1, 'negative': 1}
        assert rep.per_component[0]['sign_changes'] == 1

    def test_nonnegative_w_not_nodal(self, sphere3_coarse):
        geom, mesh = sphere3_coarse
        u = round_factor(geom, mesh)
        rep = nodal_analysis(geom, mesh, u.values, u, MU1_S3)
        assert not rep.is_nodal
        assert rep.flag == 'not nodal'
        assert rep.u_vs_absw == pytest.approx(0.0, abs=1e-12)
        d = rep.to_dict()
        assert d['flag'] == 'not nodal' and d['sign_changes'] == 0

    def test_euler_lagrange_residual_of_eigenvector(self, sphere3_coarse):
        """w = |w| 的 Yamabe 方程: 常数 w 的 EL 残差 ≈ 0"""
        geom, mesh = sphere3_coarse
        u = round_factor(geom, mesh)
        ev = evaluate(geom, mesh, u)
        rep = nodal_analysis(geom, mesh, u.values, u, ev.lambda1)
        assert rep.el_residual < 1e-8

    def test_zero_w_rejected(self, sphere3_coarse):
        """零场属于输入错误: FieldError，退出码 2"""
        geom, mesh = sphere3_coarse
        with pytest.raises(FieldError) as exc:
            nodal_analysis(geom, mesh, np.zeros(mesh.ndof), Field.constant(mesh), 1.0)
        assert isinstance(exc.value, Mu2LabError)
        assert exc.value.exit_code == 2


# ═══════════════════════════════════════════════
# 不动点迭代
# ═══════════════════════════════════════════════


class TestFixedPoint:
    """minimize_fixed_point"""

    def test_union_converges_to_lower_bound(self, union3):
        """不等质量起点 → 两分量等体积常数因子，J → 2^{2/3}μ₁(𝕊³)"""
        geom, mesh = union3
        u0 = Field.from_function(mesh, lambda i, t: np.full_like(t, 1.0 if i == 0 else 0.8))
        res = minimize_fixed_point(geom, mesh, u0, settings=OptimizerConfig(max_iters=200))
        J = res.trace.final_J
        assert J == pytest.approx(TARGET_S3, rel=5e-3), f"J = {J:.6g}"
        assert J >= TARGET_S3 * (1 - 1e-6)
        assert 'lower_bound_violation' not in res.trace.flags
        assert res.trace.termination in ('converged', 'stalled', 'max_iters')
        if res.trace.termination == 'converged':
            assert res.nodal.u_vs_absw <= 10 * OptimizerConfig().tol
            assert res.nodal.el_residual <= 1e-5

    def test_J_monotone(self, union3):
        """随机起点: 被接受的步 J 不上升 (容差 tol·J)"""
        geom, mesh = union3
        cfg = OptimizerConfig(max_iters=20)
        res = minimize_fixed_point(geom, mesh, _random_seed(mesh, 7), settings=cfg)
        J = res.trace.J
        assert np.all(np.diff(J) <= cfg.tol * J[:-1] + 1e-12 * J[0])
        assert J[-1] < J[0]

    def test_union_constant_start_converges_nodal(self):
        """常数起点已是极小元: 终止为 converged，选出的 w 在各分量上定号且 |w| = u"""
        geom = make_disjoint_union(make_sphere(3), make_sphere(3))
        mesh = Mesh.build(geom, 100)
        res = minimize_fixed_point(geom, mesh, Field.constant(mesh))
        assert res.trace.termination == 'converged'
        assert res.nodal.u_vs_absw < 1e-6
        assert res.nodal.el_residual <= 1e-5
        assert res.nodal.is_nodal
        assert len(res.nodal.per_component) == 2
        signs = set()
        for part in res.nodal.per_component:
            assert part['sign_changes'] == 0
            assert part['positive'] + part['negative'] == 1
            signs.add('positive' if part['positive'] else 'negative')
        assert signs == {'positive', 'negative'}
        np.testing.assert_allclose(np.abs(res.trace.w_final.values), res.u.values,
                                   atol=1e-6 * res.u.values.max())
        df = res.trace.to_frame()
        assert df['u_vs_absw'].iloc[-1] <= 10 * OptimizerConfig().tol

    @pytest.mark.parametrize('seed', [42, 43, 44])
    def test_union_random_start_reaches_target(self, union3, seed):
        """光滑随机起点: 200 步内 J 到达 2^{2/3}μ₁(𝕊³) 的 0.5% 以内"""
        geom, mesh = union3
        res = minimize_fixed_point(geom, mesh, _random_seed(mesh, seed),
                                   settings=OptimizerConfig(max_iters=200))
        J = res.trace.final_J
        assert res.trace.iterations <= 200
        assert J <= TARGET_S3 * 1.005, f"seed={seed}: J = {J:.6g}"
        assert J >= TARGET_S3 * (1 - 5e-3)
        assert 'lower_bound_violation' not in res.trace.flags

    def test_rebalance_equalizes_components(self, union3):
        """两分量质量不等: 重标度后 J 下降到第一特征值相等的比例"""
        geom, mesh = union3
        u0 = Field.from_function(mesh, lambda i, t: np.full_like(t, 1.0 if i == 0 else 0.5))
        A = assemble_stiffness(geom, mesh)
        ev = evaluate(geom, mesh, u0, A)
        balanced = rebalance_components(geom, mesh, ev, A, OptimizerConfig())
        assert balanced.J < ev.J
        assert balanced.J == pytest.approx(TARGET_S3, rel=1e-3)
        assert balanced.relative_gap() < 1e-8

    def test_balance_exponents_two_components(self):
        """λ 按 e^{−(N−2)r} 缩放: 最优 r 使两分量的第一特征值相等"""
        n, N = 3, 6.0
        lams = np.array([[1.0, 4.0], [2.0, 8.0]])
        vols = np.array([1.0, 1.0])
        r, J = balance_exponents(lams, vols, n, N)
        scaled = lams[:, 0] * np.exp(-(N - 2) * r)
        assert scaled[0] == pytest.approx(scaled[1], rel=1e-12)
        assert J <= 2.0 * 2.0 ** (2.0 / n) + 1e-12

    def test_rebalance_skips_single_component(self, sphere3_coarse):
        geom, mesh = sphere3_coarse
        A = assemble_stiffness(geom, mesh)
        ev = evaluate(geom, mesh, Field.from_function(mesh, lambda i, t: 2.0 + np.cos(t)), A)
        assert rebalance_components(geom, mesh, ev, A, OptimizerConfig()) is ev

    def test_trace_frame_columns(self, union3):
        geom, mesh = union3
        res = minimize_fixed_point(geom, mesh, Field.constant(mesh), max_iters=3)
        df = res.trace.to_frame()
        assert list(df.columns) == ['iter', 'J', 'lambda1', 'lambda2', 'gap', 'tau', 'lower_bound', 'u_vs_absw']
        assert df['lower_bound'].iloc[0] == pytest.approx(TARGET_S3, rel=1e-12)
        assert res.trace.w_final is not None

    def test_tie_breaking_prefers_u_like_vector(self, union3):
        """λ₁ = λ₂ 时选取 |w| 最接近 u 的组合"""
        geom, mesh = union3
        ev = evaluate(geom, mesh, Field.constant(mesh))
        w = select_second_vector(geom, mesh, ev, OptimizerConfig())
        u = ev.u.values
        assert total_sign_changes(mesh, w) == 0
        np.testing.assert_allclose(np.abs(w), u, atol=1e-5 * u.max())

    def test_floor_helpers(self):
        u = np.array([0.0, 1.0, 2.0, 3.0])
        lifted = apply_floor(u, 0.5)
        assert lifted.min() == pytest.approx(0.5 * np.mean(u))
        np.testing.assert_allclose(project(u, 0.5), [0.75, 1.0, 2.0, 3.0])

    def test_u_vs_absw_zero(self, sphere3_coarse):
        geom, mesh = sphere3_coarse
        u = round_factor(geom, mesh).values
        assert u_vs_absw(geom, mesh, u, -u) == pytest.approx(0.0, abs=1e-14)

    def test_lower_bound_monitor(self):
        """J 低于监视值时记标志"""
        trace = OptimizerTrace('fixed_point', lower_bound=100.0)
        check_lower_bound(trace, 99.0, OptimizerConfig(), 1)
        assert trace.flags == ['lower_bound_violation']
        quiet = OptimizerTrace('fixed_point')
        check_lower_bound(quiet, -1e9, OptimizerConfig(), 1)
        assert quiet.flags == []

    def test_trace_rejects_unknown_reason(self):
        with pytest.raises(ValueError):
            OptimizerTrace('fixed_point').finish('timeout')

    def test_u_floor_sensitivity_table(self, sphere3_coarse):
        geom, mesh = sphere3_coarse
        df = u_floor_sensitivity(geom, mesh, Field.constant(mesh), OptimizerConfig(max_iters=2))
        assert list(df.columns) == ['u_floor', 'J', 'termination']
        assert len(df) == 2
        assert df['u_floor'].iloc[1] == pytest.approx(100 * df['u_floor'].iloc[0])


# ═══════════════════════════════════════════════
# 投影梯度
# ═══════════════════════════════════════════════


class TestGradientDescent:
    """minimize_gradient"""

    def test_armijo_slack_nonnegative(self, sphere3_coarse):
        geom, mesh = sphere3_coarse
        u0 = Field.from_function(mesh, lambda i, t: 1.5 + np.cos(t))
        res = minimize_gradient(geom, mesh, u0, max_iters=15)
        df = res.trace.to_frame(full=True)
        accepted = df[df['iter'] > 0]
        assert len(accepted) > 0
        assert np.all(accepted['armijo_slack'] >= 0)
        assert np.all(np.diff(df['J'].to_numpy()) <= 0)
        assert df['J'].iloc[-1] >= TARGET_S3 * (1 - 1e-6)

    def test_degenerate_gap_falls_back(self, union3):
        """λ₁ = λ₂: 退回不动点步并记标志"""
        geom, mesh = union3
        res = minimize_gradient(geom, mesh, Field.constant(mesh), max_iters=5)
        assert 'gradient_fallback' in res.trace.flags
        assert res.trace.final_J == pytest.approx(TARGET_S3, rel=1e-6)


# ═══════════════════════════════════════════════
# 多起点
# ═══════════════════════════════════════════════


class TestMultistart:
    """initial_factors / multistart_minimize"""

    def test_labels_and_unresolved_bubble_skipped(self):
        """均匀 200 单元网格分辨不了 ε = 0.01 的 bubble"""
        geom = make_sphere(3)
        mesh = Mesh.build(geom, 200)
        starts = initial_factors(geom, mesh, OptimizerConfig(), seed=42)
        labels = [label for label, _ in starts]
        assert labels == ['constant', 'bubbles(eps=0.1)', 'bubbles(eps=0.03)',
                          'random(42)', 'random(43)', 'random(44)']
        for _, f in starts:
            assert np.all(f.values > 0)

    def test_random_starts_reproducible(self, union3):
        geom, mesh = union3
        cfg = OptimizerConfig(multistart=['random'], random_seeds=2)
        a = initial_factors(geom, mesh, cfg, seed=7)
        b = initial_factors(geom, mesh, cfg, seed=7)
        assert [l for l, _ in a] == ['random(7)', 'random(8)']
        np.testing.assert_array_equal(a[0][1].values, b[0][1].values)
        assert not np.allclose(a[0][1].values, a[1][1].values)

    def test_union_multistart(self, union3):
        geom, mesh = union3
        cfg = OptimizerConfig(multistart=['constant', 'random'], random_seeds=2, max_iters=30, workers=2)
        result = multistart_minimize(geom, mesh, cfg, seed=1)
        assert len(result.results) == 3
        assert result.failures == []
        assert result.best.trace.final_J == pytest.approx(TARGET_S3, rel=5e-3)
        assert result.best.trace.final_J == min(r.trace.final_J for _, r in result.results)
        summary = result.summary()
        assert list(summary.columns) == ['start', 'J', 'iterations', 'termination', 'nodal']
        traces = result.traces()
        assert traces.columns[0] == 'start'
        assert set(traces['start']) == {'constant', 'random(1)', 'random(2)'}

    @pytest.mark.slow
    def test_sphere_multistart_respects_lower_bound(self):
        """𝕊³: 最优 J 在 [2^{2/3}μ₁, 1.05·2^{2/3}μ₁] 内，且全程无下界违例"""
        geom = make_sphere(3)
        mesh = Mesh.build(geom, 800, grading=2.0)
        cfg = OptimizerConfig(bubble_eps=[1e-3, 1e-4], random_seeds=2)
        result = multistart_minimize(geom, mesh, cfg, seed=42)
        J = result.best.trace.final_J
        round_J = objective(geom, mesh, Field.constant(mesh))
        assert J >= TARGET_S3 * (1 - 1e-3)
        assert J <= 1.05 * TARGET_S3, f"J = {J:.6g}"
        assert J < 0.5 * round_J
        for _, res in result.results:
            assert 'lower_bound_violation' not in res.trace.flags


# ═══════════════════════════════════════════════
# k = 1
# ═══════════════════════════════════════════════


class TestYamabe:
    """minimize_yamabe"""

    def test_product_sphere_constant_is_minimizer(self):
        """𝕊²×𝕊²: μ₁ = S·Vol^{1/2} = 16π"""
        geom = make_product_sphere(2, 2)
        mesh = Mesh.build(geom, 100)
        res = minimize_yamabe(geom, mesh, Field.constant(mesh))
        assert res.mu1 == pytest.approx(16 * math.pi, rel=1e-8)
        assert res.converged

    def test_product_sphere_from_perturbed_start(self):
        geom = make_product_sphere(2, 2)
        mesh = Mesh.build(geom, 100)
        u0 = Field.from_function(mesh, lambda i, t: 1.0 + 0.5 * np.cos(t))
        res = minimize_yamabe(geom, mesh, u0)
        assert res.mu1 == pytest.approx(16 * math.pi, rel=1e-2)
        assert res.mu1 >= 16 * math.pi * (1 - 1e-6)
        assert lower_bound(4, res.mu1) == pytest.approx(2 ** 0.5 * res.mu1)
