"""优化轨迹与节点报告"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd

from ..discretize import ConformalFactor, Field

TRACE_COLUMNS = ['iter', 'J', 'lambda1', 'lambda2', 'gap', 'tau', 'lower_bound', 'u_vs_absw']

TERMINATION_REASONS = ('converged', 'stalled', 'max_iters')


@dataclass
class NodalReport:
    """w 的符号结构与 Euler–Lagrange 残差"""
    sign_changes: int
    nodal_domains: dict[str, int]          # {'positive': 区间数, 'negative': 区间数}
    el_residual: float                     # ‖Aw − μ₂B(|w|)w‖ / ‖Aw‖
    u_vs_absw: float                       # ‖u − |w|‖_N / ‖u‖_N
    is_nodal: bool
    per_component: list[dict] = field(default_factory=list)

    @property
    def flag(self) -> str:
        return 'nodal' if self.is_nodal else 'not nodal'

    def to_dict(self) -> dict:
        return {
            'sign_changes': self.sign_changes,
            'nodal_domains': dict(self.nodal_domains),
            'el_residual': self.el_residual,
            'u_vs_absw': self.u_vs_absw,
            'is_nodal': self.is_nodal,
            'flag': self.flag,
            'per_component': list(self.per_component),
        }


class OptimizerTrace:
    """
    μ₂ 极小化的迭代历史。

    每个被接受的迭代一行；lower_bound = 2^{2/n}·μ₁ 估计，
    upper_target = (μ₁^{n/2} + μ₁(𝕊ⁿ)^{n/2})^{2/n}。
    """

    def __init__(self, method: str, lower_bound: float = math.nan, upper_target: float = math.nan,
                 label: str = '', snapshot_every: int = 10):
        self.method = method
        self.lower_bound = lower_bound
        self.upper_target = upper_target
        self.label = label
        self.snapshot_every = max(int(snapshot_every), 1)
        self.rows: list[dict] = []
        self.snapshots: list[tuple[int, np.ndarray]] = []
        self.flags: list[str] = []
        self.termination: str = ''
        self.w_final: Field | None = None

    def record(self, it: int, J: float, lambda1: float, lambda2: float, tau: float,
               u_vs_absw: float, u: np.ndarray | None = None, **extra):
        row = {
            'iter': it, 'J': J, 'lambda1': lambda1, 'lambda2': lambda2,
            'gap': lambda2 - lambda1, 'tau': tau, 'lower_bound': self.lower_bound,
            'u_vs_absw': u_vs_absw,
        }
        row.update(extra)
        self.rows.append(row)
        if u is not None and it % self.snapshot_every == 0:
            self.snapshots.append((it, np.array(u, copy=True)))

    def flag(self, name: str):
        if name not in self.flags:
            self.flags.append(name)

    def finish(self, reason: str):
        if reason not in TERMINATION_REASONS:
            raise ValueError(f"未知终止原因: {reason}")
        self.termination = reason

    @property
    def J(self) -> np.ndarray:
        return np.array([r['J'] for r in self.rows])

    @property
    def final_J(self) -> float:
        return float(self.rows[-1]['J']) if self.rows else math.nan

    @property
    def iterations(self) -> int:
        return int(self.rows[-1]['iter']) if self.rows else 0

    def to_frame(self, full: bool = False) -> pd.DataFrame:
        df = pd.DataFrame(self.rows)
        if df.empty:
            return pd.DataFrame(columns=TRACE_COLUMNS)
        return df if full else df[TRACE_COLUMNS]


class OptimizerResult(NamedTuple):
    """(u*, 轨迹, 节点报告)"""
    u: ConformalFactor
    trace: OptimizerTrace
    nodal: NodalReport


class YamabeResult(NamedTuple):
    """k = 1 极小化结果：v 满足 ∫v^N = 1"""
    v: Field
    mu1: float
    iterations: int
    converged: bool
