"""
多起点 μ₂ 极小化

起点集合: constant (Yamabe 因子)、bubbles (两个 bubble，每个 ε 一个)、
random (光滑随机正因子，每个种子一个)。各起点在线程池中独立运行，
结果按起点顺序合并，报告最小 J。
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

import numpy as np
import pandas as pd

from ..bubbles import BubbleParams, antipodal_bubbles, aubin_bubble
from ..config import OptimizerConfig
from ..discretize import Field, Mesh, normalize_volume
from ..errors import GeometryError, RankDeficiencyError, ResolutionError
from ..functionals import round_factor
from ..geometry import ModelGeometry
from ..progress import track
from .descent import minimize_gradient
from .fixed_point import minimize_fixed_point
from .trace import OptimizerResult

logger = logging.getLogger(__name__)

RANDOM_MODES = 4
BUBBLE_BASELINE = 1e-3       # 相对于 round 因子的底座，保持 B(u) 满秩


class MultistartResult(NamedTuple):
    """最优结果、全部结果 (按起点顺序) 与被跳过的起点"""
    best: OptimizerResult
    results: list[tuple[str, OptimizerResult]]
    failures: list[tuple[str, str]]

    @property
    def best_label(self) -> str:
        return self.best.trace.label

    def traces(self, full: bool = False) -> pd.DataFrame:
        """合并轨迹，附 start 列"""
        frames = []
        for label, res in self.results:
            df = res.trace.to_frame(full)
            df.insert(0, 'start', label)
            frames.append(df)
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()

    def summary(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'start': label,
            'J': res.trace.final_J,
            'iterations': res.trace.iterations,
            'termination': res.trace.termination,
            'nodal': res.nodal.flag,
        } for label, res in self.results])


# ═══════════════════════════════════════════════
# 起点
# ═══════════════════════════════════════════════

def _bubble_seed(geom: ModelGeometry, mesh: Mesh, eps: float, delta: float) -> np.ndarray:
    """两个 bubble：有两极时放在两极，否则放在 T/4 与 3T/4"""
    comp = geom.components[0]
    if len(comp.poles) == 2:
        values = antipodal_bubbles(geom, mesh, eps, delta).values
    else:
        T = comp.length
        values = sum(aubin_bubble(geom, mesh, BubbleParams(eps, delta, 0, c)).values
                     for c in (0.25 * T, 0.75 * T))
    base = round_factor(geom, mesh).values
    return normalize_volume(geom, mesh, values + BUBBLE_BASELINE * base).values


def _random_seed(mesh: Mesh, seed: int) -> Field:
    """exp(Σ_{k=1..4} a_k cos(kπt/T))，a_k ~ N(0,1)/k"""
    rng = np.random.default_rng(seed)
    parts = []
    for c in mesh.components:
        a = rng.standard_normal(RANDOM_MODES) / np.arange(1, RANDOM_MODES + 1)
        t = c.dof_coordinates
        T = c.nodes[-1] - c.nodes[0]
        k = np.arange(1, RANDOM_MODES + 1)[:, None]
        parts.append(np.exp(a @ np.cos(k * np.pi * t[None, :] / T)))
    return Field(np.concatenate(parts), mesh.sizes)


def initial_factors(geom: ModelGeometry, mesh: Mesh, settings: OptimizerConfig,
                    seed: int = 42) -> list[tuple[str, Field]]:
    """按配置生成 (标签, 初始因子) 列表；无法分辨的 bubble 起点被跳过"""
    starts: list[tuple[str, Field]] = []
    if 'constant' in settings.multistart:
        starts.append(('constant', round_factor(geom, mesh).field))
    if 'bubbles' in settings.multistart:
        for eps in settings.bubble_eps:
            label = f'bubbles(eps={eps:g})'
            try:
                starts.append((label, Field(_bubble_seed(geom, mesh, eps, settings.bubble_delta), mesh.sizes)))
            except (ResolutionError, GeometryError) as e:
                logger.warning("跳过起点 %s: %s", label, e)
    if 'random' in settings.multistart:
        for i in range(settings.random_seeds):
            starts.append((f'random({seed + i})', _random_seed(mesh, seed + i)))
    return starts


# ═══════════════════════════════════════════════
# 并发运行
# ═══════════════════════════════════════════════

def multistart_minimize(geom: ModelGeometry, mesh: Mesh, settings: OptimizerConfig | None = None,
                        seed: int = 42, quiet: bool = True, mu1: float | None = None) -> MultistartResult:
    """
    并发运行全部起点，返回最小 J 的结果。

    Raises:
        RankDeficiencyError: 所有起点都失败
    """
    settings = settings or OptimizerConfig()
    starts = initial_factors(geom, mesh, settings, seed)
    minimize = minimize_gradient if settings.method == 'gradient' else minimize_fixed_point

    def run(item: tuple[str, Field]):
        label, u0 = item
        try:
            return label, minimize(geom, mesh, u0, settings=settings, mu1=mu1, label=label), None
        except (ResolutionError, RankDeficiencyError) as e:
            return label, None, str(e)

    workers = max(1, min(settings.workers, len(starts)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(track(pool.map(run, starts), desc='multistart', disable=quiet, total=len(starts)))

    results, failures = [], []
    for label, res, err in outcomes:
        if res is None:
            logger.warning("起点 %s 失败: %s", label, err)
            failures.append((label, err))
        else:
            results.append((label, res))
    if not results:
        raise RankDeficiencyError(0, 2, detail='所有起点均失败')

    best = min((res for _, res in results), key=lambda r: r.trace.final_J)
    logger.info("多起点最优: %s, J = %.8g", best.trace.label, best.trace.final_J)
    return MultistartResult(best, results, failures)
