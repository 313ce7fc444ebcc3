#!/usr/bin/env python3
"""
mu2lab — 第二 Yamabe 不变量数值实验室 v1.0

统一命令行入口，支持以下命令：

    mu2lab spectrum   给定共形因子的特征值、μ_k 估计与网格收敛表
    mu2lab mu2        多起点极小化 J(u) = λ₂(u)·Vol(u)^{2/n}
    mu2lab bubbles    bubble ε 扫描与范数标度律拟合
    mu2lab verify     不等式验证套件

使用示例:
    python mu2lab.py spectrum --config configs/sphere3.yaml
    python mu2lab.py mu2 --config configs/union3.yaml --seed 7
    python mu2lab.py bubbles --config configs/bubbles_n5.yaml bubbles.delta=0.4
    python mu2lab.py verify --config configs/verify.yaml verify.suites=[munk]

退出码: 0 通过；1 验证失败；2 配置/几何错误；3 数值/秩失败
"""

import argparse
import logging
import math
import sys
from pathlib import Path

# 确保可以导入 scripts
sys.path.insert(0, str(Path(__file__).parent))

logger = logging.getLogger('mu2lab')


def _setup(args, command: str):
    """加载配置、应用命令行覆盖，返回 (RunConfig, ResultWriter)"""
    from scripts.config import load_config
    from scripts.report import ResultWriter

    overrides = list(args.overrides or [])
    if args.out:
        overrides.append(f'output_dir={args.out}')
    if args.seed is not None:
        overrides.append(f'seed={args.seed}')
    if args.mesh is not None:
        overrides.append(f'mesh.num_elements={args.mesh}')
    cfg = load_config(args.config, overrides)
    cfg.command = command
    name = cfg.name or (Path(args.config).stem if args.config else command)
    writer = ResultWriter(Path(cfg.output_dir) / name / command, cfg)
    return cfg, writer


def _geometry_and_mesh(cfg, num_elements=None, grading=None):
    from scripts.discretize import Mesh
    from scripts.geometry import geometry_from_dict

    geom = geometry_from_dict(cfg.require_geometry())
    mesh = Mesh.build(
        geom,
        cfg.mesh.num_elements if num_elements is None else num_elements,
        cfg.mesh.quad_order,
        cfg.mesh.grading if grading is None else grading,
    )
    return geom, mesh


# ═══════════════════════════════════════════════
# spectrum
# ═══════════════════════════════════════════════

def _spectrum_factor(cfg, geom, mesh):
    """按 spectrum.u 构造共形因子"""
    from scripts.bubbles import BubbleParams, aubin_bubble
    from scripts.discretize import conformal_factor, read_field_csv
    from scripts.functionals import round_factor

    kind = cfg.spectrum.u
    if kind == 'constant':
        return round_factor(geom, mesh)
    if kind == 'file':
        return conformal_factor(geom, mesh, read_field_csv(cfg.spectrum.u_file, mesh))
    comp = geom.components[0]
    center = comp.poles[0] if comp.poles else 0.5 * comp.length
    v = aubin_bubble(geom, mesh, BubbleParams(cfg.spectrum.bubble_eps, cfg.bubbles.delta, 0, center))
    return conformal_factor(geom, mesh, v)


def cmd_spectrum(args):
    """特征值、μ_k 估计、收缩敏感性与网格收敛表"""
    import pandas as pd
    from scripts.discretize import assemble_forms, field_frame
    from scripts.functionals import mesh_convergence
    from scripts.pencil import deflation_sensitivity, residuals, solve_pencil
    from scripts.progress import print_banner, stage
    from scripts.report import print_table

    cfg, writer = _setup(args, 'spectrum')
    print_banner('mu2lab spectrum')
    geom, mesh = _geometry_and_mesh(cfg)
    k = cfg.spectrum.k
    print(f"[Spectrum] {geom.name}: n={geom.n}, {mesh!r}, u={cfg.spectrum.u}, k={k}")

    with stage('组装并求解矩阵束', quiet=args.quiet):
        u = _spectrum_factor(cfg, geom, mesh)
        forms = assemble_forms(geom, mesh, u)
        sol = solve_pencil(forms.A, forms.B, k, cfg.spectrum.deflation_tol, mesh.sizes)
    scale = forms.volume ** (2.0 / geom.n)
    res = residuals(forms.A, forms.B, sol)
    eig = pd.DataFrame({
        'index': range(1, k + 1),
        'lambda': sol.eigenvalues,
        'mu_estimate': sol.eigenvalues * scale,
        'residual': res,
        'deflated_rank': sol.deflated_rank,
    })
    vectors = field_frame(mesh, sol.vectors[:, 0], 'x1')
    for i in range(1, k):
        vectors[f'x{i + 1}'] = sol.vectors[:, i]

    with stage('收缩阈值敏感性', quiet=args.quiet):
        tols = sorted({1e-8, cfg.spectrum.deflation_tol, 1e-12}, reverse=True)
        sens = deflation_sensitivity(forms.A, forms.B, k, tols)
    with stage('网格收敛', quiet=args.quiet):
        conv = mesh_convergence(geom, cfg.spectrum.mesh_sizes, k, cfg.mesh.quad_order, cfg.mesh.grading)

    writer.write_csv('eigenvalues.csv', eig)
    writer.write_csv('eigenvectors.csv', vectors)
    writer.write_csv('deflation.csv', sens)
    writer.write_csv('convergence.csv', conv)
    print_table(eig, '特征值')
    print_table(conv, '网格收敛 (平凡质量)')
    print(f"\n[Spectrum] 输出目录: {writer.out_dir}")
    return 0


# ═══════════════════════════════════════════════
# mu2
# ═══════════════════════════════════════════════

def mu2_verdict(J: float, n: int, mu1: float | None, mu1_sphere: float, tol: float) -> dict:
    """最终 J 与下界 2^{2/n}μ₁、上界 (μ₁^{n/2}+μ₁(𝕊ⁿ)^{n/2})^{2/n} 及 μ₁(𝕊ⁿ) 阈值的比较"""
    from scripts.functionals import lower_bound, upper_target

    lb = lower_bound(n, mu1) if mu1 is not None and mu1 >= 0 else math.nan
    ub = upper_target(n, mu1, mu1_sphere) if mu1 is not None else math.nan
    lb_ok = math.isnan(lb) or J >= lb - tol * max(abs(lb), 1.0)
    ub_ok = math.isnan(ub) or J <= ub * (1.0 + tol)
    parts = [f"J = {J:.8g}"]
    if not math.isnan(lb):
        parts.append(f"下界 2^(2/n)μ₁ = {lb:.8g} ({'lower bound respected' if lb_ok else 'LOWER BOUND VIOLATED'})")
    if not math.isnan(ub):
        parts.append(f"上界 = {ub:.8g} ({'≤ upper bound' if ub_ok else 'above upper bound'})")
    below_sphere = J < mu1_sphere
    parts.append(f"μ₁(𝕊ⁿ) = {mu1_sphere:.8g} ({'J < μ₁(𝕊ⁿ)' if below_sphere else 'J ≥ μ₁(𝕊ⁿ)'})")
    return {
        'J': J, 'mu1': mu1, 'lower_bound': lb, 'upper_bound': ub,
        'lower_bound_respected': lb_ok, 'below_upper_bound': ub_ok,
        'below_mu1_sphere': below_sphere, 'line': '; '.join(parts),
    }


def cmd_mu2(args):
    """多起点极小化并写出轨迹、场、节点报告与结论"""
    from scripts.bubbles import yamabe_minimizer
    from scripts.discretize import field_frame
    from scripts.geometry import mu1_closed_form
    from scripts.errors import VerificationError
    from scripts.optimize import multistart_minimize, u_floor_sensitivity
    from scripts.progress import print_banner, stage
    from scripts.report import print_table

    cfg, writer = _setup(args, 'mu2')
    print_banner('mu2lab mu2')
    geom, mesh = _geometry_and_mesh(cfg)
    settings = cfg.optimizer
    print(f"[Mu2] {geom.name}: n={geom.n}, {mesh!r}, method={settings.method}")

    mu1 = mu1_closed_form(geom)
    if mu1 is None:
        with stage('Yamabe 极小化 (μ₁ 估计)', quiet=args.quiet):
            _, mu1 = yamabe_minimizer(geom, mesh)
    print(f"[Mu2] μ₁ 估计 = {mu1:.8g}")

    with stage('多起点极小化', quiet=args.quiet):
        result = multistart_minimize(geom, mesh, settings, cfg.seed, quiet=args.quiet, mu1=mu1)
    best = result.best
    verdict = mu2_verdict(best.trace.final_J, geom.n, mu1, geom.const.mu1_sphere, settings.monitor_tol)
    verdict.update({
        'best_start': result.best_label,
        'termination': best.trace.termination,
        'flags': best.trace.flags,
        'failed_starts': [{'start': s, 'error': e} for s, e in result.failures],
        'nodal_flag': best.nodal.flag,
    })

    writer.write_csv('trace.csv', result.traces())
    writer.write_csv('starts.csv', result.summary())
    writer.write_csv('u.csv', field_frame(mesh, best.u))
    writer.write_csv('w.csv', field_frame(mesh, best.trace.w_final))
    writer.write_json('nodal.json', best.nodal.to_dict())
    if settings.floor_sensitivity:
        with stage('u_floor 敏感性', quiet=args.quiet):
            writer.write_csv('u_floor.csv', u_floor_sensitivity(geom, mesh, best.u, settings))
    writer.write_json('verdict.json', verdict)

    print_table(result.summary(), '起点')
    print(f"\n[Mu2] {verdict['line']}")
    print(f"[Mu2] 节点结构: {best.nodal.flag}, 变号 {best.nodal.sign_changes}, "
          f"EL 残差 {best.nodal.el_residual:.3e}")
    if not verdict['lower_bound_respected'] or 'lower_bound_violation' in best.trace.flags:
        raise VerificationError("最终 J 或迭代轨迹低于下界监视值 2^(2/n)μ₁")
    return 0


# ═══════════════════════════════════════════════
# bubbles
# ═══════════════════════════════════════════════

def _center(value):
    return value if isinstance(value, str) else float(value)


def cmd_bubbles(args):
    """ε 扫描、斜率表与截断敏感性；μ₁ < 0 时运行发散演示"""
    import pandas as pd
    from scripts.bubbles import (
        bubble_sweep, c_eps_slope, cutoff_sensitivity, expected_norm_exponent, fit_window,
        negative_divergence_demo, norm_scaling_fit,
    )
    from scripts.errors import VerificationError
    from scripts.geometry import mu1_closed_form
    from scripts.progress import print_banner, stage
    from scripts.report import print_table

    cfg, writer = _setup(args, 'bubbles')
    print_banner('mu2lab bubbles')
    bc = cfg.bubbles
    geom, mesh = _geometry_and_mesh(cfg, bc.num_elements, bc.grading)
    n = geom.n
    grid = bc.grid()
    center = _center(bc.center)
    print(f"[Bubbles] {geom.name}: n={n}, {mesh!r}, {len(grid)} 个 ε ∈ [{min(grid):.3g}, {max(grid):.3g}], "
          f"拟合窗口 ε ≤ {bc.fit_eps_max:g}")

    mu1 = mu1_closed_form(geom)
    if mu1 is not None and mu1 < 0:
        with stage('负曲率发散演示', quiet=args.quiet):
            demo = negative_divergence_demo(geom, mesh, grid, 1, bc.delta, bc.component, center)
        writer.write_csv('divergence.csv', demo)
        print_table(demo, '发散演示')
        return 0

    with stage('ε 扫描', quiet=args.quiet):
        sweep = bubble_sweep(geom, mesh, grid, bc.delta, None, bc.component, center, quiet=args.quiet)

    powers = bc.fit_powers or [geom.const.N - 1, 1.0, n / (n - 2)]
    rows = []
    with stage('标度律拟合', quiet=args.quiet):
        for p in powers:
            _, regime = expected_norm_exponent(n, p)
            fit = norm_scaling_fit(geom, mesh, p, grid, bc.delta, bc.component, center,
                                   log_correction=bc.log_correction and regime == 'critical',
                                   fit_eps_max=bc.fit_eps_max)
            rows.append({'quantity': f'norm_p={p:.6g}', 'regime': fit.regime, 'slope': fit.slope,
                         'expected': fit.expected, 'residual': fit.residual,
                         'residual_plain': fit.residual_plain, 'log_shift': fit.log_shift,
                         'points': fit.points})
        slope = c_eps_slope(geom, mesh, grid, bc.delta, bc.component, center, bc.fit_eps_max)
        rows.append({'quantity': 'C_eps', 'regime': '', 'slope': slope, 'expected': (n - 2) / 4,
                     'residual': float('nan'), 'residual_plain': float('nan'), 'log_shift': 0.0,
                     'points': len(fit_window(grid, bc.fit_eps_max))})
    slopes = pd.DataFrame(rows)
    slopes['pass'] = (slopes['slope'] - slopes['expected']).abs() <= 0.05

    cut = cutoff_sensitivity(geom, mesh, float(min(grid)), bc.delta, bc.component, center)

    writer.write_csv('sweep.csv', sweep)
    writer.write_csv('slopes.csv', slopes)
    writer.write_json('cutoff.json', cut)
    print_table(sweep, 'ε 扫描')
    print_table(slopes, '斜率')
    failed = int((~slopes['pass']).sum())
    if failed:
        raise VerificationError(f"{failed} 个斜率超出期望值 ±0.05")
    return 0


# ═══════════════════════════════════════════════
# verify
# ═══════════════════════════════════════════════

def cmd_verify(args):
    """运行不等式套件；全部通过时退出码 0"""
    from scripts.errors import VerificationError
    from scripts.inequalities import munk_table, run_suites, summary_frame
    from scripts.progress import print_banner, stage
    from scripts.report import print_table

    cfg, writer = _setup(args, 'verify')
    print_banner('mu2lab verify')
    vc = cfg.verify
    print(f"[Verify] 套件: {', '.join(vc.suites)} (seed={cfg.seed})")

    with stage('运行套件', quiet=args.quiet):
        reports = run_suites(vc, cfg.seed, quiet=args.quiet)
    summary = summary_frame(reports)
    writer.write_csv('suites.csv', summary)
    writer.write_json('suites.json', {'reports': [r.to_dict() for r in reports]})
    print_table(summary, '套件汇总')
    if 'munk' in vc.suites:
        table = munk_table(vc.munk_range)
        writer.write_csv('munk.csv', table)
        print_table(table[['n', 'relative_gap', 'verdict']], 'μ_{n+2}(𝕊ⁿ) 上界')

    failed = [r for r in reports if not r.passed]
    if failed:
        worst = min(failed, key=lambda r: r.worst_margin)
        raise VerificationError(
            f"{len(failed)} 个套件失败; 最差余量 {worst.worst_margin:.3e} ({worst.suite})")
    print(f"[Verify] 全部 {len(reports)} 项通过")
    return 0


# ═══════════════════════════════════════════════
# 入口
# ═══════════════════════════════════════════════

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='mu2lab — 第二 Yamabe 不变量数值实验室 v1.0',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例:
  python mu2lab.py spectrum --config configs/sphere3.yaml     球面谱与收敛表
  python mu2lab.py mu2 --config configs/union3.yaml           μ₂ 极小化
  python mu2lab.py bubbles --config configs/bubbles_n5.yaml   bubble 标度律
  python mu2lab.py verify                                     不等式套件
        """
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='DEBUG 级日志')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='配置文件 (YAML/JSON)')
    common.add_argument('--out', help='输出根目录')
    common.add_argument('--seed', type=int, help='随机种子')
    common.add_argument('--mesh', type=int, help='每分量单元数')
    common.add_argument('-q', '--quiet', action='store_true', help='不显示进度')
    common.add_argument('overrides', nargs='*', help='点路径覆盖, 例如 optimizer.tau0=0.25')

    subparsers = parser.add_subparsers(dest='command', help='可用命令')
    subparsers.add_parser('spectrum', parents=[common], help='特征值与网格收敛')
    subparsers.add_parser('mu2', parents=[common], help='μ₂ 多起点极小化')
    subparsers.add_parser('bubbles', parents=[common], help='bubble ε 扫描')
    subparsers.add_parser('verify', parents=[common], help='不等式验证套件')
    return parser


def main(argv=None):
    from scripts.errors import Mu2LabError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    if args.command is None:
        parser.print_help()
        return 0

    commands = {
        'spectrum': cmd_spectrum,
        'mu2': cmd_mu2,
        'bubbles': cmd_bubbles,
        'verify': cmd_verify,
    }

    try:
        return commands[args.command](args)
    except Mu2LabError as e:
        print(f"错误: {e}", file=sys.stderr)
        logger.debug("异常详情", exc_info=True)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main() or 0)
