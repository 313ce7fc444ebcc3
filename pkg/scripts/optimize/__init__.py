"""
μ₂ 极小化包 (Conformal Eigenvalue Optimization)

在离散共形类上极小化 J(u) = λ₂(u)·Vol(u)^{2/n}，并分析极小元的节点结构。

模块结构:
    - objective: J(u) 求值、离散精确导数、近简并时的第二向量选择
    - fixed_point: Euler–Lagrange 不动点迭代 u ← |w|，k = 1 的 Yamabe 极小化
    - descent: 带 Armijo 回溯的投影梯度下降
    - nodal: 变号次数、节点域与 EL 残差
    - multistart: 多起点并发运行
    - trace: OptimizerTrace / NodalReport / 结果类型

用法示例:
    from scripts.optimize import multistart_minimize
    result = multistart_minimize(geom, mesh, settings, seed=42)
    print(result.best.trace.final_J, result.best.nodal.flag)
"""

# ═══════════════════════════════════════════════
# Trace 模块
# ═══════════════════════════════════════════════
from .trace import (
    NodalReport,
    OptimizerResult,
    OptimizerTrace,
    TRACE_COLUMNS,
    YamabeResult,
)

# ═══════════════════════════════════════════════
# Objective 模块
# ═══════════════════════════════════════════════
from .objective import (
    Evaluation,
    derivative_load,
    evaluate,
    gradient,
    objective,
    select_second_vector,
)

# ═══════════════════════════════════════════════
# Nodal 模块
# ═══════════════════════════════════════════════
from .nodal import count_domains, count_sign_changes, nodal_analysis, total_sign_changes

# ═══════════════════════════════════════════════
# 迭代器
# ═══════════════════════════════════════════════
from .fixed_point import minimize_fixed_point, minimize_yamabe, u_floor_sensitivity
from .descent import minimize_gradient, project
from .multistart import MultistartResult, initial_factors, multistart_minimize

__all__ = [
    'NodalReport', 'OptimizerResult', 'OptimizerTrace', 'TRACE_COLUMNS', 'YamabeResult',
    'Evaluation', 'derivative_load', 'evaluate', 'gradient', 'objective', 'select_second_vector',
    'count_domains', 'count_sign_changes', 'nodal_analysis', 'total_sign_changes',
    'minimize_fixed_point', 'minimize_yamabe', 'u_floor_sensitivity',
    'minimize_gradient', 'project',
    'MultistartResult', 'initial_factors', 'multistart_minimize',
]
