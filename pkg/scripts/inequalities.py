"""
不等式验证套件 — mu2lab

每个套件用独立的种子化生成器采样，返回 SuiteReport (样本数、违例数、最差余量)。
余量约定: margin = (右侧 − 左侧)/scale，违例当且仅当 margin < −tol。

套件:
    - estim: |a+b|^α ≤ a^α + b^α + C(a^{α−1}b + ab^{α−1})
    - truncation: 截断幂函数 F_l, G_l 的三条逐点不等式
    - holder: a + b ≤ 2^{2/N}(a^{N/(N−2)} + b^{N/(N−2)})^{(N−2)/N}
    - sobolev: 𝕊ⁿ 上带 B₀ = n(n−1) 的 Sobolev 不等式
    - sharp_mu2: 𝕊ⁿ 上 sup_{span} G(u, ·) ≥ 2^{2/n}μ₁(𝕊ⁿ)
    - munk: 坐标函数给出的 μ_{n+2}(𝕊ⁿ) 上界与 (n+2)^{2/n}μ₁(𝕊ⁿ) 的比较
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import optimize as sopt

from .bubbles import BubbleParams, antipodal_bubbles, aubin_bubble
from .config import VerifyConfig
from .discretize import Field, Mesh, assemble_mass, assemble_stiffness
from .errors import ConfigError, GeometryError, ResolutionError
from .functionals import lower_bound, round_factor, sobolev_quotient_G, sup_over_span, yamabe_Y
from .geometry import ModelGeometry, constants, make_sphere
from .pencil import solve_pencil
from .progress import track

logger = logging.getLogger(__name__)

LOG_RANGE = (-6.0, 6.0)
ZONAL_MODES = 10


@dataclass
class SuiteReport:
    """单个套件的结果；violations = 0 即通过"""
    suite: str
    samples: int
    violations: int
    worst_margin: float
    tolerance: float
    seed: int
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            'suite': self.suite,
            'samples': self.samples,
            'violations': self.violations,
            'worst_margin': self.worst_margin,
            'tolerance': self.tolerance,
            'seed': self.seed,
            'passed': self.passed,
            'details': self.details,
        }


def _report(suite: str, margins: np.ndarray, tol: float, seed: int, **details) -> SuiteReport:
    margins = np.asarray(margins, dtype=float)
    return SuiteReport(
        suite=suite,
        samples=int(margins.size),
        violations=int(np.count_nonzero(margins < -tol)),
        worst_margin=float(margins.min()) if margins.size else math.nan,
        tolerance=tol,
        seed=seed,
        details=details,
    )


def _log_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    return 10.0 ** rng.uniform(*LOG_RANGE, size=size)


# ═══════════════════════════════════════════════
# 标量不等式
# ═══════════════════════════════════════════════

def estim_ratio(x, alpha: float) -> np.ndarray:
    """
    f(x) = ((1+x)^α − 1 − x^α)/(x^{α−1} + x)。

    f(1/x) = f(x)，故只在 x ≤ 1 上用 expm1/log1p 计算，x > 1 取倒数。
    """
    x = np.asarray(x, dtype=float)
    y = np.where(x > 1.0, 1.0 / x, x)
    num = np.expm1(alpha * np.log1p(y)) - y ** alpha
    return num / (y ** (alpha - 1) + y)


def estim_constant(alpha: float, grid_points: int = 20001) -> float:
    """C(α) = max(对数网格上 f 的最大值 (局部加细), α)"""
    if alpha <= 2:
        raise ConfigError(f"estim 要求 α > 2, 得到 {alpha}")
    s = np.linspace(LOG_RANGE[0], 0.0, grid_points)
    f = estim_ratio(10.0 ** s, alpha)
    i = int(np.argmax(f))
    best = float(f[i])
    lo, hi = s[max(i - 1, 0)], s[min(i + 1, len(s) - 1)]
    if hi > lo:
        res = sopt.minimize_scalar(lambda z: -float(estim_ratio(10.0 ** z, alpha)),
                                   bounds=(lo, hi), method='bounded', options={'xatol': 1e-12})
        if res.success:
            best = max(best, -float(res.fun))
    return max(best, alpha)


def check_estim(alpha: float, samples: int = 10000, seed: int = 42, tol: float = 1e-9) -> SuiteReport:
    """随机 (a, b) 上验证，含 a = 0 与 a = b 边界"""
    C = estim_constant(alpha)
    rng = np.random.default_rng(seed)
    a = np.concatenate([_log_uniform(rng, samples), [0.0, 1.0, 2.0]])
    b = np.concatenate([_log_uniform(rng, samples), [1.0, 1.0, 2.0]])
    lhs = (a + b) ** alpha
    rhs = a ** alpha + b ** alpha + C * (a ** (alpha - 1) * b + a * b ** (alpha - 1))
    margins = (rhs - lhs) / rhs
    return _report(f'estim(alpha={alpha:g})', margins, tol, seed, alpha=alpha, C=C)


def truncation_F(x, q: float, l: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xp = np.clip(x, 0.0, None)
    inner = xp ** q
    outer = q * l ** (q - 1) * x - (q - 1) * l ** q
    return np.where(x < 0, 0.0, np.where(x < l, inner, outer))


def truncation_F_prime(x, q: float, l: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xp = np.clip(x, 0.0, None)
    return np.where(x < 0, 0.0, np.where(x < l, q * xp ** (q - 1), q * l ** (q - 1)))


def truncation_G(x, q: float, l: float) -> np.ndarray:
    beta = 2 * q - 1
    x = np.asarray(x, dtype=float)
    xp = np.clip(x, 0.0, None)
    outer = l ** (q - 1) * (q * l ** (q - 1) * x - (q - 1) * l ** q)
    return np.where(x < 0, 0.0, np.where(x < l, xp ** beta, outer))


def truncation_G_prime(x, q: float, l: float) -> np.ndarray:
    beta = 2 * q - 1
    x = np.asarray(x, dtype=float)
    xp = np.clip(x, 0.0, None)
    return np.where(x < 0, 0.0, np.where(x < l, beta * xp ** (beta - 1), q * l ** (2 * q - 2)))


def check_truncation(q: float, l: float = 10.0, samples: int = 2000, seed: int = 42,
                     tol: float = 1e-12) -> SuiteReport:
    """
    (F′)² ≤ q·G′，F² ≥ x·G，x·G′ ≤ β·G。

    样本覆盖 x < 0、[0, l)、x = l 与 x > l；另报告 F、G 在 l 处的连续性误差。
    """
    if q <= 1:
        raise ConfigError(f"truncation 要求 q > 1, 得到 {q}")
    beta = 2 * q - 1
    rng = np.random.default_rng(seed)
    x = np.concatenate([
        -rng.uniform(0.0, l, samples // 4),
        rng.uniform(0.0, l, samples // 4),
        l * (1.0 + _log_uniform(rng, samples - 2 * (samples // 4)) * 1e-3),
        [l, 0.0, -1.0],
    ])
    F, dF = truncation_F(x, q, l), truncation_F_prime(x, q, l)
    G, dG = truncation_G(x, q, l), truncation_G_prime(x, q, l)

    def rel(right, left):
        scale = np.maximum(np.maximum(np.abs(right), np.abs(left)), 1.0)
        return (right - left) / scale

    margins = np.concatenate([rel(q * dG, dF ** 2), rel(F ** 2, x * G), rel(beta * G, x * dG)])
    below = np.nextafter(l, 0.0)
    continuity = max(
        abs(float(truncation_F(below, q, l) - truncation_F(l, q, l))) / l ** q,
        abs(float(truncation_G(below, q, l) - truncation_G(l, q, l))) / l ** beta,
    )
    report = _report(f'truncation(q={q:g})', margins, tol, seed, q=q, l=l, beta=beta,
                     continuity_error=continuity)
    if continuity > 1e-12:
        report.violations += 1
    return report


def check_two_term_holder(N: float = 6.0, samples: int = 10000, seed: int = 42,
                          tol: float = 1e-12) -> SuiteReport:
    """a + b ≤ 2^{2/N}(a^{N/(N−2)} + b^{N/(N−2)})^{(N−2)/N}"""
    if N <= 2:
        raise ConfigError(f"holder 要求 N > 2, 得到 {N}")
    rng = np.random.default_rng(seed)
    a = np.concatenate([_log_uniform(rng, samples), [1.0, 1.0]])
    b = np.concatenate([_log_uniform(rng, samples), [1.0, 0.0]])
    r = N / (N - 2)
    rhs = 2.0 ** (2.0 / N) * (a ** r + b ** r) ** (1.0 / r)
    margins = (rhs - (a + b)) / rhs
    return _report(f'holder(N={N:g})', margins, tol, seed, N=N)


# ═══════════════════════════════════════════════
# 函数不等式 (𝕊ⁿ)
# ═══════════════════════════════════════════════

def random_zonal(mesh: Mesh, rng: np.random.Generator, modes: int = ZONAL_MODES) -> Field:
    """Σ_{l<modes} c_l cos(l t)，c_l ~ U[−1, 1]"""
    c = rng.uniform(-1.0, 1.0, modes)
    return Field.from_function(mesh, lambda i, t: np.cos(np.outer(t, np.arange(modes))) @ c)


def random_positive(mesh: Mesh, rng: np.random.Generator, modes: int = 4) -> Field:
    """exp(Σ a_k cos(k t))，a_k ~ N(0,1)/k"""
    a = rng.standard_normal(modes) / np.arange(1, modes + 1)
    return Field.from_function(mesh, lambda i, t: np.exp(np.cos(np.outer(t, np.arange(1, modes + 1))) @ a))


def _require_sphere(geom: ModelGeometry):
    if not geom.is_round_sphere_union() or len(geom.components) != 1:
        raise GeometryError(f"该套件只适用于单位球面, 得到 {geom.name}")


def check_sobolev_S(geom: ModelGeometry, mesh: Mesh, B0: float | None = None, samples: int = 500,
                    seed: int = 42) -> SuiteReport:
    """
    Y_{B₀}(v) ≥ μ₁(𝕊ⁿ) 与 G(u, v) ≥ μ₁(𝕊ⁿ) (Hölder) 对随机带状 v、随机正 u。

    容差 = 1e−4·μ₁ + |Y_{B₀}(1) − μ₁| (常数处的求积误差)。
    """
    _require_sphere(geom)
    n = geom.n
    B0 = float(n * (n - 1)) if B0 is None else float(B0)
    mu1 = geom.const.mu1_sphere
    A = assemble_stiffness(geom, mesh, curvature=B0)
    calib = abs(yamabe_Y(geom, mesh, Field.constant(mesh), A=A) - mu1)
    tol = 1e-4 * mu1 + calib

    rng = np.random.default_rng(seed)
    margins = []
    for _ in range(samples):
        v = random_zonal(mesh, rng)
        u = random_positive(mesh, rng)
        margins.append((yamabe_Y(geom, mesh, v, A=A) - mu1) / mu1)
        margins.append((sobolev_quotient_G(geom, mesh, u, v, B0) - mu1) / mu1)
    return _report('sobolev', np.array(margins), tol / mu1, seed, B0=B0, mu1=mu1,
                   calibration=calib)


def check_sharp_mu2_inequality(geom: ModelGeometry, mesh: Mesh, samples: int = 200, seed: int = 42,
                               witness_eps: float = 1e-3, witness_delta: float = 0.5,
                               witness_gate: float | None = None) -> SuiteReport:
    """
    sup_{v ∈ span(v₁, v₂)} G(u, v) ≥ 2^{2/n}μ₁(𝕊ⁿ)，随机 (u, v₁, v₂)，容差 1e−3·scale。

    另用对径双 bubble 构型 (加密网格) 给出接近下界的见证值。witness_gate 缺省时
    n ≥ 5 取 1.05：见证值超过 witness_gate·scale 计为违例。n = 3 时交叉项按 ε^{1/4}
    衰减，ε = 1e−3 处见证比约 1.38，只报告不计违例。
    """
    _require_sphere(geom)
    n = geom.n
    B0 = float(n * (n - 1))
    scale = lower_bound(n, geom.const.mu1_sphere)
    A = assemble_stiffness(geom, mesh, curvature=B0)
    rng = np.random.default_rng(seed)
    margins = []
    for _ in range(samples):
        u = random_positive(mesh, rng)
        v1, v2 = random_zonal(mesh, rng), random_zonal(mesh, rng)
        value = sup_over_span(geom, mesh, u, v1, v2, A=A)
        margins.append((value - scale) / scale)

    witness = math.nan
    try:
        fine = Mesh.build(geom, max(mesh.num_elements, 800), mesh.quad_order, grading=2.0)
        u = antipodal_bubbles(geom, fine, witness_eps, witness_delta)
        w1 = aubin_bubble(geom, fine, BubbleParams(witness_eps, witness_delta, 0, 'start'))
        w2 = aubin_bubble(geom, fine, BubbleParams(witness_eps, witness_delta, 0, 'end'))
        witness = sup_over_span(geom, fine, u, w1, w2, curvature=B0)
        margins.append((witness - scale) / scale)
    except ResolutionError as e:
        logger.warning("双 bubble 见证跳过: %s", e)
    if witness_gate is None and n >= 5:
        witness_gate = 1.05
    ratio = witness / scale
    if witness_gate is not None and math.isfinite(witness):
        margins.append((witness_gate * scale - witness) / scale)
    return _report('sharp_mu2', np.array(margins), 1e-3, seed, bound=scale, witness=witness,
                   witness_ratio=ratio, witness_gate=witness_gate, near_sharp=bool(ratio <= 1.05))


def munk_table(n_range: Sequence[int]) -> pd.DataFrame:
    """
    闭式比较: bound = n(n−1)(n+2)/(n−2)·ω_n^{2/n}，target = (n+2)^{2/n}μ₁(𝕊ⁿ)。

    相对差 ≤ 1e−12 记为 equal。
    """
    rows = []
    for n in n_range:
        c = constants(int(n))
        coord = n * (n - 1) * (n + 2) / (n - 2)
        bound = coord * c.omega_n ** (2.0 / n)
        target = (n + 2) ** (2.0 / n) * c.mu1_sphere
        rel = (bound - target) / target
        verdict = 'equal' if abs(rel) <= 1e-12 else ('strict' if rel < 0 else 'fails')
        rows.append({'n': int(n), 'coordinate_eigenvalue': coord, 'bound': bound, 'target': target,
                     'relative_gap': rel, 'verdict': verdict})
    return pd.DataFrame(rows)


def check_munk_sphere(n_range: Sequence[int] = tuple(range(3, 13)),
                      discrete_range: Sequence[int] = tuple(range(3, 9)),
                      num_elements: int = 400, rtol: float = 1e-3) -> SuiteReport:
    """
    strict 当且仅当 n ≥ 7；离散 l = 1 带状特征值与 n(n−1)(n+2)/(n−2) 相对误差 ≤ rtol。
    """
    table = munk_table(n_range)
    expected = np.where(table['n'] >= 7, 'strict', np.where(table['n'] == 6, 'equal', 'fails'))
    mismatches = int(np.count_nonzero(table['verdict'].to_numpy() != expected))

    margins = []
    discrete = {}
    for n in discrete_range:
        geom = make_sphere(int(n))
        mesh = Mesh.build(geom, num_elements)
        sol = solve_pencil(assemble_stiffness(geom, mesh), assemble_mass(geom, mesh), 2)
        coord = n * (n - 1) * (n + 2) / (n - 2)
        err = abs(float(sol.eigenvalues[1]) - coord) / coord
        discrete[int(n)] = float(sol.eigenvalues[1])
        margins.append(rtol - err)
    report = _report('munk', np.array(margins), 0.0, 0, table=table.to_dict(orient='records'),
                     discrete_l1=discrete, verdict_mismatches=mismatches)
    report.violations += mismatches
    return report


# ═══════════════════════════════════════════════
# 批量运行
# ═══════════════════════════════════════════════

def _suite_jobs(settings: VerifyConfig, seed: int) -> list[tuple[str, Callable[[], list[SuiteReport]]]]:
    n = settings.n
    qs = settings.truncation_qs or [1.25, 1.5, n / (n - 2)]

    def sphere_pair():
        geom = make_sphere(n)
        return geom, Mesh.build(geom, settings.num_elements)

    jobs = {
        'estim': lambda: [check_estim(a, settings.estim_samples, seed) for a in settings.estim_alphas],
        'truncation': lambda: [check_truncation(q, settings.truncation_l, settings.truncation_samples, seed)
                               for q in qs],
        'holder': lambda: [check_two_term_holder(settings.holder_N, settings.holder_samples, seed)],
        'sobolev': lambda: [check_sobolev_S(*sphere_pair(), samples=settings.sobolev_samples, seed=seed)],
        'sharp_mu2': lambda: [check_sharp_mu2_inequality(*sphere_pair(), samples=settings.sharp_samples,
                                                         seed=seed)],
        'munk': lambda: [check_munk_sphere(settings.munk_range, settings.munk_discrete, settings.num_elements)],
    }
    return [(name, jobs[name]) for name in settings.suites]


def run_suites(settings: VerifyConfig | None = None, seed: int = 42, quiet: bool = True,
               workers: int = 4) -> list[SuiteReport]:
    """并发运行所选套件，按配置顺序返回报告"""
    settings = settings or VerifyConfig()
    jobs = _suite_jobs(settings, seed)
    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(jobs)))) as pool:
        futures = [pool.submit(fn) for _, fn in jobs]
        reports = []
        for fut in track(futures, desc='verify', disable=quiet, total=len(futures)):
            reports.extend(fut.result())
    for r in reports:
        level = logging.INFO if r.passed else logging.WARNING
        logger.log(level, "%s: %d 样本, %d 违例, 最差余量 %.3e", r.suite, r.samples, r.violations, r.worst_margin)
    return reports


def summary_frame(reports: Sequence[SuiteReport]) -> pd.DataFrame:
    return pd.DataFrame([{
        'suite': r.suite, 'samples': r.samples, 'violations': r.violations,
        'worst_margin': r.worst_margin, 'tolerance': r.tolerance, 'passed': r.passed,
    } for r in reports])
