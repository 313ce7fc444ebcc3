"""
不等式验证套件单元测试

测试覆盖:
- estim: 对称性、α = 3 与 α = 4 的闭式常数
- 截断函数 F_l、G_l 的手算值与三条不等式
- 两项 Hölder
- 𝕊ⁿ 上的 Sobolev 与 μ₂ 锐不等式 (小网格)
- 坐标函数特征值与 (n+2)^{2/n}μ₁(𝕊ⁿ) 的比较
- run_suites 顺序与汇总表

运行测试:
    python -m pytest tests/test_inequalities.py -v
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from scripts.config import VerifyConfig
from scripts.discretize import Mesh
from scripts.errors import ConfigError, GeometryError
from scripts.geometry import make_disjoint_union, make_flat_band, make_sphere
from scripts.inequalities import (
    check_estim, check_munk_sphere, check_sharp_mu2_inequality, check_sobolev_S, check_truncation,
    check_two_term_holder, estim_constant, estim_ratio, munk_table, run_suites, summary_frame,
    truncation_F, truncation_F_prime, truncation_G, truncation_G_prime,
)


@pytest.fixture(scope='module')
def sphere3():
    geom = make_sphere(3)
    return geom, Mesh.build(geom, 100)


# ═══════════════════════════════════════════════
# estim
# ═══════════════════════════════════════════════


class TestEstim:
    """(a+b)^α ≤ a^α + b^α + C(a^{α−1}b + ab^{α−1})"""

    def test_ratio_symmetric(self):
        x = np.array([1e-4, 0.3, 2.0, 50.0])
        np.testing.assert_allclose(estim_ratio(x, 3.7), estim_ratio(1.0 / x, 3.7), rtol=1e-12)

    def test_alpha_three_constant(self):
        """α = 3: f ≡ 3"""
        np.testing.assert_allclose(estim_ratio(np.array([1e-3, 0.5, 1.0, 7.0]), 3.0), 3.0, rtol=1e-9)
        assert estim_constant(3.0) == pytest.approx(3.0, rel=1e-9)

    def test_alpha_four_constant(self):
        """α = 4: f = 4 + 6x/(1 + x²)，最大值 7 在 x = 1"""
        assert estim_constant(4.0) == pytest.approx(7.0, rel=1e-8)

    @pytest.mark.parametrize('alpha', [2.5, 3.0, 4.0, 6.0])
    def test_check_passes(self, alpha):
        rep = check_estim(alpha, samples=2000, seed=1)
        assert rep.passed, f"α={alpha}: 最差余量 {rep.worst_margin:.3e}"
        assert rep.samples == 2003
        assert rep.details['C'] >= alpha

    def test_alpha_at_most_two_rejected(self):
        with pytest.raises(ConfigError):
            estim_constant(2.0)


# ═══════════════════════════════════════════════
# 截断函数
# ═══════════════════════════════════════════════


class TestTruncation:
    """F_l、G_l 与 (F′)² ≤ qG′、F² ≥ xG、xG′ ≤ βG"""

    def test_hand_values_inside(self):
        """q = 2, l = 10, x = 5: (F′)² = 100，qG′ = 150"""
        x = np.array([5.0])
        assert truncation_F(x, 2.0, 10.0)[0] == pytest.approx(25.0)
        assert truncation_F_prime(x, 2.0, 10.0)[0] ** 2 == pytest.approx(100.0)
        assert truncation_G(x, 2.0, 10.0)[0] == pytest.approx(125.0)
        assert 2.0 * truncation_G_prime(x, 2.0, 10.0)[0] == pytest.approx(150.0)

    def test_linear_branch(self):
        """x ≥ l: F 线性延拓，(F′)² = qG′"""
        x = np.array([20.0])
        assert truncation_F(x, 2.0, 10.0)[0] == pytest.approx(2 * 10 * 20 - 100)
        assert truncation_F_prime(x, 2.0, 10.0)[0] ** 2 == pytest.approx(2.0 * truncation_G_prime(x, 2.0, 10.0)[0])

    def test_negative_half_line_zero(self):
        x = np.array([-3.0, -1e-9])
        for f in (truncation_F, truncation_F_prime, truncation_G, truncation_G_prime):
            np.testing.assert_array_equal(f(x, 1.5, 10.0), 0.0)

    @pytest.mark.parametrize('q', [1.25, 1.5, 3.0])
    def test_check_passes(self, q):
        rep = check_truncation(q, samples=800, seed=3)
        assert rep.passed, f"q={q}: 最差余量 {rep.worst_margin:.3e}"
        assert rep.details['continuity_error'] <= 1e-12
        assert rep.details['beta'] == pytest.approx(2 * q - 1)

    def test_q_at_most_one_rejected(self):
        with pytest.raises(ConfigError):
            check_truncation(1.0)


# ═══════════════════════════════════════════════
# Hölder
# ═══════════════════════════════════════════════


class TestHolder:
    """a + b ≤ 2^{2/N}(a^{N/(N−2)} + b^{N/(N−2)})^{(N−2)/N}"""

    @pytest.mark.parametrize('N', [6.0, 10 / 3, 4.0])
    def test_passes(self, N):
        rep = check_two_term_holder(N, samples=3000, seed=5)
        assert rep.passed

    def test_equality_at_a_equals_b(self):
        """a = b = 1 时等号成立，最差余量 ≈ 0"""
        rep = check_two_term_holder(6.0, samples=100)
        assert rep.worst_margin == pytest.approx(0.0, abs=1e-14)

    def test_invalid_N(self):
        with pytest.raises(ConfigError):
            check_two_term_holder(2.0)


# ═══════════════════════════════════════════════
# 𝕊ⁿ 上的函数不等式
# ═══════════════════════════════════════════════


class TestSphereInequalities:
    """check_sobolev_S / check_sharp_mu2_inequality"""

    def test_sobolev_passes(self, sphere3):
        geom, mesh = sphere3
        rep = check_sobolev_S(geom, mesh, samples=20, seed=11)
        assert rep.passed, f"最差余量 {rep.worst_margin:.3e}"
        assert rep.samples == 40
        assert rep.details['B0'] == pytest.approx(6.0)

    def test_sobolev_custom_B0(self, sphere3):
        """B₀ = n(n−1) 之外的常数同样给出下界检验"""
        geom, mesh = sphere3
        rep = check_sobolev_S(geom, mesh, B0=8.0, samples=10, seed=2)
        assert rep.passed
        assert rep.details['B0'] == pytest.approx(8.0)

    def test_sharp_mu2_passes(self, sphere3):
        geom, mesh = sphere3
        rep = check_sharp_mu2_inequality(geom, mesh, samples=10, seed=13)
        assert rep.passed, f"最差余量 {rep.worst_margin:.3e}"
        assert rep.details['bound'] == pytest.approx(2 ** (2 / 3) * 6 * (2 * math.pi ** 2) ** (2 / 3))
        assert math.isfinite(rep.details['witness'])
        assert rep.details['witness'] >= rep.details['bound'] * (1 - 1e-3)

    def test_sharp_mu2_sphere3_witness_reported_only(self, sphere3):
        """n = 3: 见证比只报告，不设门槛"""
        geom, mesh = sphere3
        rep = check_sharp_mu2_inequality(geom, mesh, samples=2, seed=13)
        assert rep.details['witness_gate'] is None
        assert rep.samples == 3

    def test_sharp_mu2_sphere5_witness_gated(self):
        """n = 5: ε = 1e−3 的双 bubble 见证值不超过 1.05·2^{2/5}μ₁(𝕊⁵)"""
        geom = make_sphere(5)
        mesh = Mesh.build(geom, 100)
        rep = check_sharp_mu2_inequality(geom, mesh, samples=5, seed=3)
        assert rep.details['witness_gate'] == pytest.approx(1.05)
        assert rep.samples == 7
        assert rep.details['witness_ratio'] <= 1.05
        assert rep.passed, f"最差余量 {rep.worst_margin:.3e}"

    def test_sharp_mu2_witness_gate_fails_suite(self):
        """见证比超过门槛时计为违例"""
        geom = make_sphere(5)
        mesh = Mesh.build(geom, 100)
        rep = check_sharp_mu2_inequality(geom, mesh, samples=1, seed=3, witness_eps=1e-1, witness_gate=1.0)
        assert rep.details['witness_ratio'] > 1.0 + 1e-3
        assert rep.violations == 1
        assert not rep.passed

    @pytest.mark.parametrize('make', [
        lambda: make_disjoint_union(make_sphere(3), make_sphere(3)),
        lambda: make_flat_band(3),
    ])
    def test_non_sphere_rejected(self, make):
        geom = make()
        mesh = Mesh.build(geom, 40)
        with pytest.raises(GeometryError):
            check_sobolev_S(geom, mesh, samples=1)
        with pytest.raises(GeometryError):
            check_sharp_mu2_inequality(geom, mesh, samples=1)


# ═══════════════════════════════════════════════
# 坐标函数比较
# ═══════════════════════════════════════════════


class TestMunk:
    """n(n−1)(n+2)/(n−2)·ω_n^{2/n} 与 (n+2)^{2/n}μ₁(𝕊ⁿ)"""

    def test_verdicts(self):
        """n ≤ 5 不成立，n = 6 相等，n ≥ 7 严格"""
        table = munk_table([3, 4, 5, 6, 7, 8, 12])
        assert list(table['verdict']) == ['fails', 'fails', 'fails', 'equal', 'strict', 'strict', 'strict']
        assert list(table.columns) == ['n', 'coordinate_eigenvalue', 'bound', 'target', 'relative_gap', 'verdict']

    def test_n3_coordinate_eigenvalue(self):
        """n = 3: 3·2·5/1 = 30"""
        table = munk_table([3])
        assert table['coordinate_eigenvalue'].iloc[0] == pytest.approx(30.0)

    def test_check_passes(self):
        rep = check_munk_sphere(range(3, 10), [3, 4], num_elements=400)
        assert rep.passed
        assert rep.details['verdict_mismatches'] == 0
        assert rep.details['discrete_l1'][3] == pytest.approx(30.0, rel=1e-3)
        assert rep.details['discrete_l1'][4] == pytest.approx(36.0, rel=1e-3)


# ═══════════════════════════════════════════════
# 批量运行
# ═══════════════════════════════════════════════


class TestRunSuites:
    """run_suites / summary_frame"""

    def test_order_and_summary(self):
        settings = VerifyConfig(suites=['holder', 'estim', 'munk'], estim_alphas=[3.0, 4.0],
                                estim_samples=500, holder_samples=500, munk_range=[5, 6, 7],
                                munk_discrete=[3], num_elements=200)
        reports = run_suites(settings, seed=9, workers=2)
        assert [r.suite for r in reports] == ['holder(N=6)', 'estim(alpha=3)', 'estim(alpha=4)', 'munk']
        assert all(r.passed for r in reports)
        df = summary_frame(reports)
        assert list(df.columns) == ['suite', 'samples', 'violations', 'worst_margin', 'tolerance', 'passed']
        assert df['passed'].all()

    def test_report_dict(self):
        rep = check_two_term_holder(6.0, samples=10, seed=4)
        d = rep.to_dict()
        assert d['suite'] == 'holder(N=6)'
        assert d['passed'] is True
        assert d['seed'] == 4

    def test_unknown_suite_rejected(self):
        with pytest.raises(ConfigError):
            VerifyConfig(suites=['nope'])
