"""RunConfig — YAML/JSON 驱动的运行配置"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

VERSION = '1.0.0'

SUITES = ('estim', 'truncation', 'holder', 'sobolev', 'sharp_mu2', 'munk')


def _build(cls, d: dict | None, section: str):
    """按 dataclass 字段构造；未知键报错并给出键名"""
    d = d or {}
    if not isinstance(d, dict):
        raise ConfigError(f"配置节 {section} 必须是映射, 得到 {type(d).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"配置节 {section} 含未知字段: {', '.join(unknown)}。可用: {', '.join(sorted(known))}")
    try:
        return cls(**d)
    except TypeError as e:
        raise ConfigError(f"配置节 {section} 无效: {e}") from e


# ═══════════════════════════════════════════════
# 分节配置
# ═══════════════════════════════════════════════

@dataclass
class MeshConfig:
    """每分量单元数、求积阶数、加密指数"""
    num_elements: int = 400
    quad_order: int = 6
    grading: float = 1.0

    def __post_init__(self):
        if int(self.num_elements) < 8:
            raise ConfigError(f"mesh.num_elements 必须 ≥ 8, 得到 {self.num_elements}")
        if self.grading < 1.0:
            raise ConfigError(f"mesh.grading 必须 ≥ 1, 得到 {self.grading}")


@dataclass
class SpectrumConfig:
    """spectrum 子命令：共形因子来源 constant | file | bubble"""
    k: int = 2
    u: str = 'constant'
    u_file: str = ''
    bubble_eps: float = 1e-2
    mesh_sizes: list[int] = field(default_factory=lambda: [100, 200, 400])
    deflation_tol: float = 1e-10

    def __post_init__(self):
        if self.u not in ('constant', 'file', 'bubble'):
            raise ConfigError(f"spectrum.u 未知: {self.u}。可用: constant, file, bubble")
        if self.u == 'file' and not self.u_file:
            raise ConfigError("spectrum.u = file 时需要 spectrum.u_file")
        if self.k < 1:
            raise ConfigError(f"spectrum.k 必须 ≥ 1, 得到 {self.k}")


@dataclass
class OptimizerConfig:
    """μ₂ 极小化参数 (不动点与投影梯度共用)"""
    method: str = 'fixed_point'          # fixed_point | gradient
    tau0: float = 0.5
    tau_min: float = 1e-4
    u_floor: float = 1e-8                # 相对 mean(u)
    tol: float = 1e-9
    max_iters: int = 200
    gap_tol: float = 1e-6
    tie_tol: float = 1e-3
    step0: float = 0.1
    armijo_c: float = 1e-4
    monitor_tol: float = 1e-6
    snapshot_every: int = 10
    deflation_tol: float = 1e-10
    workers: int = 4
    multistart: list[str] = field(default_factory=lambda: ['constant', 'bubbles', 'random'])
    bubble_eps: list[float] = field(default_factory=lambda: [1e-1, 3e-2, 1e-2])
    bubble_delta: float = 0.5
    random_seeds: int = 3
    rebalance: bool = True               # 多分量时逐分量重标度
    floor_sensitivity: bool = False

    def __post_init__(self):
        if self.method not in ('fixed_point', 'gradient'):
            raise ConfigError(f"optimizer.method 未知: {self.method}")
        if not 0 < self.tau0 <= 1:
            raise ConfigError(f"optimizer.tau0 必须在 (0, 1] 内, 得到 {self.tau0}")
        if not 0 < self.tau_min <= self.tau0:
            raise ConfigError(f"optimizer.tau_min 必须在 (0, tau0] 内, 得到 {self.tau_min}")
        if self.tol <= 0 or self.u_floor < 0 or self.max_iters < 1:
            raise ConfigError("optimizer.tol > 0, u_floor ≥ 0, max_iters ≥ 1")
        unknown = set(self.multistart) - {'constant', 'bubbles', 'random'}
        if unknown:
            raise ConfigError(f"optimizer.multistart 含未知起点: {', '.join(sorted(unknown))}")


@dataclass
class BubbleConfig:
    """bubbles 子命令：ε 网格与拟合指数"""
    eps_count: int = 12
    eps_low: float = 1e-4
    eps_high: float = 1e-1
    eps_grid: list[float] | None = None
    delta: float = 0.5
    grading: float = 2.0
    num_elements: int = 400
    fit_powers: list[float] | None = None   # 默认 {N−1, 1, n/(n−2)}
    log_correction: bool = True
    fit_eps_max: float = 1e-2            # 斜率只在 ε ≤ fit_eps_max 的小 ε 端拟合
    component: int = 0
    center: str | float = 'start'

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError(f"bubbles.delta 必须为正, 得到 {self.delta}")
        if self.eps_grid is None and not 0 < self.eps_low < self.eps_high:
            raise ConfigError("bubbles 需要 0 < eps_low < eps_high")
        if not self.fit_eps_max > 0:
            raise ConfigError(f"bubbles.fit_eps_max 必须为正, 得到 {self.fit_eps_max}")

    def grid(self) -> list[float]:
        if self.eps_grid is not None:
            return [float(e) for e in self.eps_grid]
        from .bubbles import default_eps_grid
        return [float(e) for e in default_eps_grid(self.eps_count, self.eps_low, self.eps_high)]


@dataclass
class VerifyConfig:
    """verify 子命令：套件与采样数"""
    suites: list[str] = field(default_factory=lambda: list(SUITES))
    n: int = 3
    num_elements: int = 400
    estim_alphas: list[float] = field(default_factory=lambda: [2.5, 3.0, 10 / 3, 4.0, 6.0])
    estim_samples: int = 10000
    truncation_qs: list[float] | None = None   # 默认 {1.25, 1.5, n/(n−2)}
    truncation_l: float = 10.0
    truncation_samples: int = 2000
    holder_N: float = 6.0
    holder_samples: int = 10000
    sobolev_samples: int = 500
    sharp_samples: int = 200
    munk_range: list[int] = field(default_factory=lambda: list(range(3, 13)))
    munk_discrete: list[int] = field(default_factory=lambda: list(range(3, 9)))

    def __post_init__(self):
        unknown = [s for s in self.suites if s not in SUITES]
        if unknown:
            raise ConfigError(f"未知套件: {', '.join(unknown)}。可用: {', '.join(SUITES)}")


# ═══════════════════════════════════════════════
# 顶层配置
# ═══════════════════════════════════════════════

@dataclass
class RunConfig:
    """一次运行的完整配置，回显到每个输出文件"""
    command: str = ''
    geometry: dict | None = None
    mesh: MeshConfig = field(default_factory=MeshConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    bubbles: BubbleConfig = field(default_factory=BubbleConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    seed: int = 42
    output_dir: str = 'results'
    name: str = ''

    @classmethod
    def from_dict(cls, d: dict | None) -> 'RunConfig':
        """从字典构造，缺省字段取默认值"""
        d = dict(d or {})
        sections = {
            'mesh': MeshConfig, 'spectrum': SpectrumConfig, 'optimizer': OptimizerConfig,
            'bubbles': BubbleConfig, 'verify': VerifyConfig,
        }
        for key, sub in sections.items():
            d[key] = _build(sub, d.get(key), key)
        cfg = _build(cls, d, 'root')
        if cfg.geometry is not None and not isinstance(cfg.geometry, dict):
            raise ConfigError("geometry 必须是映射 (例如 {kind: sphere, n: 3})")
        return cfg

    def require_geometry(self) -> dict:
        if not self.geometry:
            raise ConfigError(f"命令 {self.command or '?'} 缺少必填字段: geometry")
        return self.geometry

    def to_dict(self) -> dict:
        return asdict(self)

    def echo(self) -> str:
        """紧凑 JSON 回显 (键排序，保证可复现)"""
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, separators=(',', ':'))


# ═══════════════════════════════════════════════
# 加载与覆盖
# ═══════════════════════════════════════════════

def load_raw(path: str | Path | None) -> dict:
    """读取 YAML/JSON (YAML 是 JSON 超集)"""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"配置文件不存在: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"配置文件解析失败: {path}: {e}") from e
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"配置文件顶层必须是映射: {path}")
    return raw


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """点路径覆盖: optimizer.tau0=0.25 (值按 YAML 解析)"""
    out = json.loads(json.dumps(raw))
    for item in overrides or []:
        if '=' not in item:
            raise ConfigError(f"覆盖项需要 key=value 形式, 得到: {item}")
        key, value = item.split('=', 1)
        parts = [p for p in key.strip().split('.') if p]
        if not parts:
            raise ConfigError(f"覆盖项键为空: {item}")
        try:
            parsed: Any = yaml.safe_load(value)
        except yaml.YAMLError as e:
            raise ConfigError(f"覆盖值无法解析: {item}") from e
        node = out
        for p in parts[:-1]:
            child = node.get(p)
            if child is None:
                child = node[p] = {}
            elif not isinstance(child, dict):
                raise ConfigError(f"覆盖路径 {key} 穿过非映射字段 {p}")
            node = child
        node[parts[-1]] = parsed
    return out


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    """加载配置文件并应用覆盖"""
    return RunConfig.from_dict(apply_overrides(load_raw(path), overrides or []))
