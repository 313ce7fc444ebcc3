"""
维数常数与对称约化模型流形 — mu2lab

一个 ModelGeometry 由若干分量组成，每个分量是区间 [0, T] 上的剖面：
密度 ρ(t)、常数量曲率 S、端点条件（密度消失的极点 / 周期）。
所有变分公式只依赖 (ρ, S, n)，因此合成剖面也允许使用。

使用示例:
    >>> from scripts.geometry import constants, make_sphere, make_disjoint_union
    >>> constants(3).mu1_sphere
    43.82...
    >>> make_disjoint_union(make_sphere(3), make_sphere(3)).volume
    39.47...
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, NamedTuple

import numpy as np
from scipy import integrate, special

from .errors import GeometryError

END_CONDITIONS = ('pole', 'periodic')
DENSITY_TAGS = ('constant', 'sine_power', 'radial_power')


# ═══════════════════════════════════════════════
# 维数常数
# ═══════════════════════════════════════════════

class DimensionConstants(NamedTuple):
    """Yamabe 问题的维数常数"""
    n: int
    c_n: float          # 4(n−1)/(n−2)
    N: float            # 临界指数 2n/(n−2)
    omega_n: float      # 单位球面 𝕊ⁿ 体积
    mu1_sphere: float   # n(n−1)·ω_n^{2/n}


def sphere_volume(m: int) -> float:
    """单位球面 𝕊^m 的体积 2π^{(m+1)/2}/Γ((m+1)/2)"""
    if m < 0:
        raise GeometryError(f"球面维数必须 ≥ 0, 得到 {m}")
    return 2.0 * math.pi ** ((m + 1) / 2) / special.gamma((m + 1) / 2)


@lru_cache(maxsize=None)
def constants(n: int) -> DimensionConstants:
    """n 维常数；n < 3 时指数退化"""
    if int(n) != n or n < 3:
        raise GeometryError(f"维数必须是 ≥ 3 的整数, 得到 {n}")
    n = int(n)
    omega = sphere_volume(n)
    return DimensionConstants(
        n=n,
        c_n=4.0 * (n - 1) / (n - 2),
        N=2.0 * n / (n - 2),
        omega_n=omega,
        mu1_sphere=n * (n - 1) * omega ** (2.0 / n),
    )


# ═══════════════════════════════════════════════
# 剖面密度
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class DensityProfile:
    """
    闭式剖面密度。

    - constant:      ρ = scale
    - sine_power:    ρ = scale·sin(πt/T)^power
    - radial_power:  ρ = scale·t^power
    """
    tag: str
    scale: float = 1.0
    power: float = 0.0

    def __post_init__(self):
        if self.tag not in DENSITY_TAGS:
            raise GeometryError(f"未知密度类型: {self.tag}。可用: {', '.join(DENSITY_TAGS)}")
        if not self.scale > 0:
            raise GeometryError(f"密度系数必须为正, 得到 {self.scale}")
        if self.tag != 'constant' and self.power <= -1:
            raise GeometryError(f"密度 {self.tag} 指数 {self.power} ≤ −1: 不可积 (non-integrable density)")

    def __call__(self, t, length: float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.tag == 'constant':
            return np.full_like(t, self.scale)
        if self.tag == 'sine_power':
            s = np.clip(np.sin(np.pi * t / length), 0.0, None)
            return self.scale * s ** self.power
        return self.scale * np.clip(t, 0.0, None) ** self.power

    def integral(self, length: float) -> float:
        """∫₀^T ρ dt (闭式)"""
        if self.tag == 'constant':
            return self.scale * length
        p = self.power
        if self.tag == 'sine_power':
            wallis = math.sqrt(math.pi) * special.gamma((p + 1) / 2) / special.gamma(p / 2 + 1)
            return self.scale * length / math.pi * wallis
        return self.scale * length ** (p + 1) / (p + 1)

    def vanishes_at(self, end: str) -> bool:
        if self.tag == 'constant' or self.power <= 0:
            return False
        return self.tag == 'sine_power' or end == 'start'

    def to_dict(self) -> dict:
        return {'tag': self.tag, 'scale': self.scale, 'power': self.power}

    @classmethod
    def from_dict(cls, d: dict) -> 'DensityProfile':
        return cls(tag=d.get('tag', 'constant'),
                   scale=float(d.get('scale', 1.0)),
                   power=float(d.get('power', 0.0)))


# ═══════════════════════════════════════════════
# 分量与几何
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class Component:
    """区间 [0, T] 上的一个剖面分量"""
    length: float
    density: DensityProfile
    scalar_curvature: float
    end_condition: str = 'pole'
    label: str = ''
    # (p, a): 剖面沿半径 a 的 𝕊^p 余纬度, 带闭式带谐谱
    zonal: tuple[int, float] | None = None

    def __post_init__(self):
        if not self.length > 0:
            raise GeometryError(f"区间长度必须为正, 得到 {self.length}")
        if self.end_condition not in END_CONDITIONS:
            raise GeometryError(f"未知端点条件: {self.end_condition}。可用: {', '.join(END_CONDITIONS)}")
        mid = float(self.density(0.5 * self.length, self.length))
        if not mid > 0:
            raise GeometryError("密度在开区间内必须为正")
        rho0 = float(self.density(0.0, self.length))
        rhoT = float(self.density(self.length, self.length))
        if self.end_condition == 'periodic':
            if abs(rho0 - rhoT) > 1e-12 * max(abs(rho0), abs(rhoT), 1.0) or rho0 <= 0:
                raise GeometryError(f"周期分量要求 ρ(0) = ρ(T) > 0, 得到 {rho0:.6g} 与 {rhoT:.6g}")
        elif not self.density.vanishes_at('start'):
            raise GeometryError("极点分量要求 ρ(0) = 0 (density-vanishing end)")

    @property
    def periodic(self) -> bool:
        return self.end_condition == 'periodic'

    @property
    def poles(self) -> tuple[str, ...]:
        """密度消失的端点"""
        if self.periodic:
            return ()
        return tuple(e for e in ('start', 'end') if self.density.vanishes_at(e))

    @property
    def volume(self) -> float:
        return self.density.integral(self.length)

    def rho(self, t) -> np.ndarray:
        return self.density(t, self.length)

    def to_dict(self) -> dict:
        d = {
            'T': self.length,
            'density': self.density.to_dict(),
            'S': self.scalar_curvature,
            'end_condition': self.end_condition,
            'label': self.label,
        }
        if self.zonal is not None:
            d['zonal'] = list(self.zonal)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> 'Component':
        zonal = d.get('zonal')
        return cls(
            length=float(d['T']),
            density=DensityProfile.from_dict(d.get('density', {})),
            scalar_curvature=float(d.get('S', 0.0)),
            end_condition=d.get('end_condition', 'pole'),
            label=d.get('label', ''),
            zonal=(int(zonal[0]), float(zonal[1])) if zonal else None,
        )


@dataclass(frozen=True)
class ModelGeometry:
    """对称约化模型流形：维数 n 与有序分量列表"""
    n: int
    components: tuple[Component, ...]
    name: str = field(default='', compare=False)

    def __post_init__(self):
        constants(self.n)
        if not self.components:
            raise GeometryError("几何至少需要一个分量")
        object.__setattr__(self, 'components', tuple(self.components))

    @property
    def const(self) -> DimensionConstants:
        return constants(self.n)

    @property
    def volume(self) -> float:
        return sum(c.volume for c in self.components)

    def volume_by_quadrature(self) -> float:
        """自适应求积得到的体积（闭式体积的独立核对）"""
        total = 0.0
        for c in self.components:
            val, _ = integrate.quad(lambda t: float(c.rho(t)), 0.0, c.length,
                                    epsabs=0.0, epsrel=1e-13, limit=200)
            total += val
        return total

    def is_round_sphere_union(self) -> bool:
        """每个分量都是单位（或缩放）的 n 维圆球面"""
        n = self.n
        for c in self.components:
            if c.zonal is None or c.zonal[0] != n:
                return False
            a = c.zonal[1]
            if abs(c.scalar_curvature - n * (n - 1) / a ** 2) > 1e-12 * n * n:
                return False
            if abs(c.density.scale - sphere_volume(n - 1) * a ** (n - 1)) > 1e-12 * c.density.scale:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            'kind': 'components',
            'n': self.n,
            'name': self.name,
            'components': [c.to_dict() for c in self.components],
        }


# ═══════════════════════════════════════════════
# 目录构造
# ═══════════════════════════════════════════════

def make_sphere(n: int, radius_one: bool = True, radius: float = 1.0) -> ModelGeometry:
    """圆球面 𝕊ⁿ：T = πa, ρ = ω_{n−1}a^{n−1}sin^{n−1}(t/a), S = n(n−1)/a²"""
    constants(n)
    a = 1.0 if radius_one else float(radius)
    if not a > 0:
        raise GeometryError(f"球面半径必须为正, 得到 {a}")
    comp = Component(
        length=math.pi * a,
        density=DensityProfile('sine_power', sphere_volume(n - 1) * a ** (n - 1), n - 1),
        scalar_curvature=n * (n - 1) / a ** 2,
        end_condition='pole',
        label=f'S{n}',
        zonal=(n, a),
    )
    return ModelGeometry(n=n, components=(comp,), name=f'S{n}')


def make_disjoint_union(g1: ModelGeometry, g2: ModelGeometry) -> ModelGeometry:
    """不交并：分量列表拼接，体积可加"""
    if g1.n != g2.n:
        raise GeometryError(f"维数不一致: {g1.n} ≠ {g2.n}")
    name = f'{g1.name}+{g2.name}' if g1.name and g2.name else ''
    return ModelGeometry(n=g1.n, components=g1.components + g2.components, name=name)


def make_product_sphere(p: int, q: int, radius_ratio: float = 1.0) -> ModelGeometry:
    """𝕊^p × 𝕊^q_r，函数只沿 𝕊^p 余纬度变化"""
    if p < 2:
        raise GeometryError(f"p={p} < 2: 约化会隐藏端点条件不同的圆因子")
    if q < 2 or p + q < 3:
        raise GeometryError(f"需要 q ≥ 2, 得到 q={q}")
    r = float(radius_ratio)
    if not r > 0:
        raise GeometryError(f"半径比必须为正, 得到 {r}")
    fibre = sphere_volume(q) * r ** q
    comp = Component(
        length=math.pi,
        density=DensityProfile('sine_power', fibre * sphere_volume(p - 1), p - 1),
        scalar_curvature=p * (p - 1) + q * (q - 1) / r ** 2,
        end_condition='pole',
        label=f'S{p}xS{q}',
        zonal=(p, 1.0),
    )
    return ModelGeometry(n=p + q, components=(comp,), name=f'S{p}xS{q}(r={r:g})')


def make_synthetic(n: int, T: float, density_tag: str | DensityProfile, S: float,
                   end_condition: str, scale: float = 1.0, power: float = 0.0,
                   label: str = 'synthetic') -> ModelGeometry:
    """合成剖面；不声明可等距实现"""
    if isinstance(density_tag, DensityProfile):
        density = density_tag
    else:
        density = DensityProfile(density_tag, scale, power)
    comp = Component(length=float(T), density=density, scalar_curvature=float(S),
                     end_condition=end_condition, label=label)
    return ModelGeometry(n=n, components=(comp,), name=label)


def make_flat_band(n: int, T: float = 2 * math.pi, V0: float = 1.0) -> ModelGeometry:
    """平坦环带 (S = 0, 周期)"""
    return make_synthetic(n, T, 'constant', 0.0, 'periodic', scale=V0, label='flat_band')


def make_negative_pole(n: int = 3, S: float | None = None) -> ModelGeometry:
    """
    负曲率极点剖面：球面形密度 ω_{n−1}sin^{n−1}t，曲率 S = −n(n−1)。
    点状 bubble 可置于极点。
    """
    curv = -n * (n - 1) if S is None else S
    return make_synthetic(n, math.pi, 'sine_power', curv, 'pole',
                          scale=sphere_volume(n - 1), power=n - 1, label='negative_pole')


def make_flat_ball(n: int, R: float = 1.0) -> ModelGeometry:
    """平坦球 B_R (S = 0)：t=0 处为极点，外端为自然边界"""
    return make_synthetic(n, R, 'radial_power', 0.0, 'pole',
                          scale=sphere_volume(n - 1), power=n - 1, label='flat_ball')


# ═══════════════════════════════════════════════
# 闭式谱与 μ₁
# ═══════════════════════════════════════════════

def zonal_eigenvalues(geom: ModelGeometry, count: int) -> np.ndarray | None:
    """
    L_g 在带谐函数上的前 count 个特征值 (平凡质量)。

    分量 (p, a): c_n·l(l+p−1)/a² + S；任何分量无闭式时返回 None。
    """
    c_n = geom.const.c_n
    values = []
    for c in geom.components:
        if c.zonal is None:
            return None
        p, a = c.zonal
        ls = np.arange(count)
        values.append(c_n * ls * (ls + p - 1) / a ** 2 + c.scalar_curvature)
    return np.sort(np.concatenate(values))[:count]


def mu1_closed_form(geom: ModelGeometry) -> float | None:
    """
    目录几何上 μ₁ 的闭式值。

    - 圆球面（及其不交并）：μ₁(𝕊ⁿ)
    - 单分量 S ≤ 0：S·Vol^{2/n}（常数为极小元）
    - 全部分量 S = 0：0
    其它情况返回 None。
    """
    n = geom.n
    if geom.is_round_sphere_union():
        return geom.const.mu1_sphere
    curvatures = [c.scalar_curvature for c in geom.components]
    if all(s == 0.0 for s in curvatures):
        return 0.0
    if len(geom.components) == 1 and curvatures[0] < 0:
        return curvatures[0] * geom.volume ** (2.0 / n)
    return None


# ═══════════════════════════════════════════════
# JSON 兼容文档
# ═══════════════════════════════════════════════

GEOMETRY_KINDS = ('sphere', 'disjoint_union', 'product', 'synthetic',
                  'flat_band', 'negative_pole', 'flat_ball', 'components')


def geometry_from_dict(doc: dict[str, Any]) -> ModelGeometry:
    """
    由文档构造几何:
        {"kind": "sphere", "n": 3}
        {"kind": "disjoint_union", "parts": [{...}, {...}]}
        {"kind": "product", "p": 2, "q": 2, "radius_ratio": 1.0}
        {"kind": "synthetic", "n": 3, "T": 6.28, "density": {"tag": "constant", "scale": 1.0},
         "S": -6, "end_condition": "periodic"}
    """
    if not isinstance(doc, dict):
        raise GeometryError(f"几何文档必须是映射, 得到 {type(doc).__name__}")
    kind = doc.get('kind')
    try:
        if kind == 'sphere':
            radius = float(doc.get('radius', 1.0))
            return make_sphere(int(doc['n']), radius_one=radius == 1.0, radius=radius)
        if kind == 'disjoint_union':
            parts = [geometry_from_dict(p) for p in doc['parts']]
            if len(parts) < 2:
                raise GeometryError("disjoint_union 至少需要两个部分")
            geom = parts[0]
            for p in parts[1:]:
                geom = make_disjoint_union(geom, p)
            return geom
        if kind == 'product':
            return make_product_sphere(int(doc['p']), int(doc['q']), float(doc.get('radius_ratio', 1.0)))
        if kind == 'synthetic':
            density = DensityProfile.from_dict(doc.get('density', {}))
            return make_synthetic(int(doc['n']), float(doc['T']), density, float(doc.get('S', 0.0)),
                                  doc.get('end_condition', 'periodic'), label=doc.get('label', 'synthetic'))
        if kind == 'flat_band':
            return make_flat_band(int(doc['n']), float(doc.get('T', 2 * math.pi)), float(doc.get('V0', 1.0)))
        if kind == 'negative_pole':
            S = doc.get('S')
            return make_negative_pole(int(doc.get('n', 3)), None if S is None else float(S))
        if kind == 'flat_ball':
            return make_flat_ball(int(doc['n']), float(doc.get('R', 1.0)))
        if kind == 'components':
            comps = tuple(Component.from_dict(c) for c in doc['components'])
            return ModelGeometry(n=int(doc['n']), components=comps, name=doc.get('name', ''))
    except KeyError as e:
        raise GeometryError(f"几何文档 kind={kind} 缺少字段: {e.args[0]}") from e
    raise GeometryError(f"未知几何类型: {kind}。可用: {', '.join(GEOMETRY_KINDS)}")
