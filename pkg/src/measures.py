"""
驱动测度模块
表示 Λ 与 ν(dx) = x^-2 Λ(dx)，计算矩、合并速率、μ*，判定发散并划分行为区间 A-D

三种表示:
- beta: Λ 为 β(2-α, α) 分布，α ∈ (0, 2]；α = 2 按约定映射为 Kingman 原子 δ_0
- atoms: 有限个原子 (位置 ∈ [0,1), 质量 > 0)
- density: 分段多项式密度，系数按 x 的升幂给出

约定 0^0 = 1：原子位于 0 时只对 k = 2 的合并有贡献。
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize, special, stats

from src.config import (
    DEFAULT_TOL,
    DIVERGENCE_DEPTH,
    MU_STAR_DECAY_RATIO,
    MU_STAR_FLAT_RATIO,
    MU_STAR_I_MAX,
    RATIO_MARGIN,
    TAIL_BLOCKS,
    get_preset,
)

logger = logging.getLogger(__name__)

KINDS = ("beta", "atoms", "density")


class InconclusiveError(RuntimeError):
    """数值尾部判定与指数判定不一致，无法给出有限/无穷结论"""


class DegenerateMeasureError(ValueError):
    """测度为零，μ* 无定义"""


# ============================================================================
# 测度表示
# ============================================================================

@dataclass(frozen=True)
class MeasureSpec:
    """
    驱动测度 Λ 的不可变表示（可哈希，用作速率缓存的键）

    使用 MeasureSpec.beta / from_atoms / from_density 构造，不要直接调用。
    """
    kind: str
    alpha: Optional[float] = None
    atoms: Tuple[Tuple[float, float], ...] = ()
    breakpoints: Tuple[float, ...] = ()
    coeffs: Tuple[Tuple[float, ...], ...] = ()
    total_mass: float = field(default=0.0, compare=False)

    # ---------- 构造 ----------

    @classmethod
    def beta(cls, alpha: float) -> "MeasureSpec":
        """β(2-α, α) 测度；α = 2 返回 Kingman 原子"""
        alpha = float(alpha)
        if not 0.0 < alpha <= 2.0:
            raise ValueError(f"beta 参数需满足 0 < alpha <= 2，实际 {alpha}")
        if alpha == 2.0:
            return cls.from_atoms([(0.0, 1.0)])
        return cls(kind="beta", alpha=alpha, total_mass=1.0)

    @classmethod
    def from_atoms(cls, atoms: Sequence[Tuple[float, float]]) -> "MeasureSpec":
        """原子测度；相同位置的原子合并质量"""
        merged: Dict[float, float] = {}
        for loc, mass in atoms:
            loc, mass = float(loc), float(mass)
            if not 0.0 <= loc < 1.0:
                raise ValueError(f"原子位置需在 [0, 1) 内（Λ({{1}}) = 0），实际 {loc}")
            if not mass > 0.0 or not math.isfinite(mass):
                raise ValueError(f"原子质量需为正有限数，实际 {mass}")
            merged[loc] = merged.get(loc, 0.0) + mass
        ordered = tuple(sorted(merged.items()))
        return cls(kind="atoms", atoms=ordered, total_mass=math.fsum(m for _, m in ordered))

    @classmethod
    def from_density(
        cls,
        breakpoints: Sequence[float],
        coeffs: Sequence[Sequence[float]],
    ) -> "MeasureSpec":
        """
        分段多项式密度

        Args:
            breakpoints: 严格递增的分段点，位于 [0, 1]
            coeffs: 每段的多项式系数（x 的升幂），段数 = 分段点数 - 1
        """
        bps = tuple(float(b) for b in breakpoints)
        polys = tuple(tuple(float(c) for c in piece) for piece in coeffs)

        if len(bps) < 2:
            raise ValueError("density 至少需要两个分段点")
        if bps[0] < 0.0 or bps[-1] > 1.0:
            raise ValueError("分段点需位于 [0, 1]")
        if any(b >= a for b, a in zip(bps, bps[1:])):
            raise ValueError("分段点需严格递增")
        if len(polys) != len(bps) - 1:
            raise ValueError(f"需要 {len(bps) - 1} 段系数，实际 {len(polys)}")
        if any(len(piece) == 0 for piece in polys):
            raise ValueError("每段至少一个系数")

        # 非负性：在每段的网格上检查
        for (lo, hi), piece in zip(zip(bps, bps[1:]), polys):
            grid = np.linspace(lo, hi, 129)
            values = np.polynomial.polynomial.polyval(grid, piece)
            if np.min(values) < -1e-12:
                raise ValueError(f"密度在 [{lo}, {hi}] 上取负值")

        spec = cls(kind="density", breakpoints=bps, coeffs=polys)
        total = _density_power_integral(spec, 0, 0.0, 1.0)
        object.__setattr__(spec, "total_mass", total)
        return spec

    # ---------- 描述 ----------

    @property
    def pieces(self) -> List[Tuple[float, float, Tuple[float, ...]]]:
        return [(lo, hi, piece) for (lo, hi), piece in
                zip(zip(self.breakpoints, self.breakpoints[1:]), self.coeffs)]

    @property
    def is_kingman(self) -> bool:
        return self.kind == "atoms" and self.atoms == ((0.0, 1.0),)

    @property
    def atom_at_zero(self) -> float:
        """位于 0 的原子质量（Kingman 分量）"""
        if self.kind != "atoms":
            return 0.0
        return sum(m for loc, m in self.atoms if loc == 0.0)

    def describe(self) -> str:
        """简短文本标识，用于报告头部"""
        if self.kind == "beta":
            return f"beta({self.alpha:.17g})"
        if self.kind == "atoms":
            body = ",".join(f"{loc:.17g}:{m:.17g}" for loc, m in self.atoms)
            return f"atoms({body})"
        body = ";".join(
            f"{lo:.17g}:{hi:.17g}:" + ",".join(f"{c:.17g}" for c in piece)
            for lo, hi, piece in self.pieces
        )
        return f"density({body})"

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "spec": self.describe(), "total_mass": self.total_mass}


def parse_measure(kind: str, text: str) -> MeasureSpec:
    """
    从配置文件文本解析测度

    格式:
        beta    -> "0.5"
        atoms   -> "0:1,0.5:0.2"            (位置:质量)
        density -> "0:1:0,0,1;..."          (lo:hi:c0,c1,... 每段以 ; 分隔)
    """
    try:
        if kind == "beta":
            return MeasureSpec.beta(float(text))
        if kind == "atoms":
            atoms = []
            for item in text.split(","):
                loc, mass = item.split(":")
                atoms.append((float(loc), float(mass)))
            return MeasureSpec.from_atoms(atoms)
        if kind == "density":
            breakpoints: List[float] = []
            coeffs = []
            for chunk in text.split(";"):
                lo, hi, body = chunk.split(":")
                if breakpoints and float(lo) != breakpoints[-1]:
                    raise ValueError(f"分段不连续: {chunk}")
                if not breakpoints:
                    breakpoints.append(float(lo))
                breakpoints.append(float(hi))
                coeffs.append([float(c) for c in body.split(",")])
            return MeasureSpec.from_density(breakpoints, coeffs)
    except (TypeError, ValueError) as e:
        raise ValueError(f"无法解析 {kind} 测度 {text!r}: {e}")
    raise ValueError(f"未知测度类型: {kind}，可选: {', '.join(KINDS)}")


def preset(name: str) -> MeasureSpec:
    """按预设名称构造测度（kingman / uniform / x2 / beta-<alpha>）"""
    entry = get_preset(name)
    if "beta" in entry:
        return MeasureSpec.beta(entry["beta"])
    breakpoints, coeffs = entry["density"]
    return MeasureSpec.from_density(breakpoints, coeffs)


# ============================================================================
# 扩展实数与行为标签
# ============================================================================

@dataclass
class ExtendedReal:
    """非负实数或 +∞，附带判定依据"""
    value: float
    infinite: bool = False
    diagnostics: Dict = field(default_factory=dict)

    @classmethod
    def inf(cls, **diagnostics) -> "ExtendedReal":
        return cls(value=math.inf, infinite=True, diagnostics=diagnostics)

    @property
    def is_finite(self) -> bool:
        return not self.infinite

    def __float__(self) -> float:
        return math.inf if self.infinite else self.value

    def __str__(self) -> str:
        return "inf" if self.infinite else f"{self.value:.17g}"


BEHAVIOURS = {
    "A": "有 dust，原子块有限多 (μ^-2 < ∞)",
    "B": "有 dust，原子块无穷多 (μ^-2 = ∞, μ^-1 < ∞)",
    "C": "无 dust，不从无穷降下 (μ^-1 = ∞, μ* = ∞)",
    "D": "从无穷降下，块数有限 (μ* < ∞)",
}


@dataclass
class Behaviour:
    """行为区间标签及判定谓词"""
    label: str
    mu_minus1_finite: bool
    mu_minus2_finite: bool
    mu_star_finite: bool
    diagnostics: Dict[str, ExtendedReal] = field(default_factory=dict)

    @property
    def description(self) -> str:
        return BEHAVIOURS[self.label]

    @property
    def predicates(self) -> Tuple[bool, bool, bool]:
        return (self.mu_minus1_finite, self.mu_minus2_finite, self.mu_star_finite)


# ============================================================================
# 积分工具
# ============================================================================

def _power_integral(q: float, lo: float, hi: float) -> float:
    """∫_lo^hi x^q dx（lo = 0 且 q <= -1 时为 inf）"""
    if hi <= lo:
        return 0.0
    if q == -1:
        return math.inf if lo == 0.0 else math.log(hi) - math.log(lo)
    if q < -1 and lo == 0.0:
        return math.inf
    if lo == 0.0:
        return hi ** (q + 1) / (q + 1)
    return (hi ** (q + 1) - lo ** (q + 1)) / (q + 1)


def _density_power_integral(m: MeasureSpec, p: float, lo: float, hi: float) -> float:
    """分段密度的 ∫_lo^hi x^p f(x) dx，逐项解析求积"""
    total = 0.0
    for a, b, piece in m.pieces:
        a2, b2 = max(a, lo), min(b, hi)
        if b2 <= a2:
            continue
        terms = [(d, c) for d, c in enumerate(piece) if c != 0.0]
        if not terms:
            continue
        # 最低次项主导 0 附近的行为，密度非负保证其系数为正
        if a2 == 0.0 and p + terms[0][0] <= -1:
            return math.inf
        total += math.fsum(c * _power_integral(p + d, a2, b2) for d, c in terms)
    return total


def _beta_log_norm(alpha: float) -> float:
    return special.betaln(2.0 - alpha, alpha)


def _beta_power_block(alpha: float, p: float, lo: float, hi: float, tol: float) -> float:
    """β 测度在 (lo, hi] 上的 ∫ x^p Λ(dx)，lo > 0"""
    norm = math.exp(_beta_log_norm(alpha))
    if hi == 1.0:
        value, _ = integrate.quad(
            lambda x: x ** (p + 1.0 - alpha), lo, 1.0,
            weight="alg", wvar=(0.0, alpha - 1.0), epsabs=0.0, epsrel=tol,
        )
    else:
        value, _ = integrate.quad(
            lambda x: x ** (p + 1.0 - alpha) * (1.0 - x) ** (alpha - 1.0), lo, hi,
            epsabs=0.0, epsrel=tol,
        )
    return value / norm


def _block_integral(m: MeasureSpec, p: float, lo: float, hi: float, tol: float) -> float:
    """∫_(lo,hi] x^p Λ(dx)，lo > 0"""
    if m.kind == "beta":
        return _beta_power_block(m.alpha, p, lo, hi, tol)
    if m.kind == "atoms":
        return math.fsum(mass * loc ** p for loc, mass in m.atoms if lo < loc <= hi)
    return _density_power_integral(m, p, lo, hi)


def _tail_ratio(blocks: Sequence[float]) -> float:
    """尾部相邻分块比值的最大值；全零尾部返回 0"""
    tail = list(blocks[-(TAIL_BLOCKS + 1):])
    ratios = []
    for prev, cur in zip(tail, tail[1:]):
        if prev > 0.0:
            ratios.append(cur / prev)
        elif cur > 0.0:
            ratios.append(math.inf)
    return max(ratios) if ratios else 0.0


# ============================================================================
# 矩与速率
# ============================================================================

def _moment_exponent_test(m: MeasureSpec, n: int) -> bool:
    """负矩的解析收敛判定（True = 收敛）"""
    if m.kind == "beta":
        return n + 2.0 - m.alpha > 0.0
    if m.kind == "atoms":
        return m.atom_at_zero == 0.0
    for lo, _, piece in m.pieces:
        if lo > 0.0:
            return True
        degrees = [d for d, c in enumerate(piece) if c != 0.0]
        return not degrees or n + degrees[0] > -1
    return True


def _moment_closed_form(m: MeasureSpec, n: int) -> float:
    if m.kind == "beta":
        a = n + 2.0 - m.alpha
        if a <= 0.0:
            return math.inf
        return math.exp(special.betaln(a, m.alpha) - _beta_log_norm(m.alpha))
    if m.kind == "atoms":
        if n < 0 and m.atom_at_zero > 0.0:
            return math.inf
        return math.fsum(mass * loc ** n for loc, mass in m.atoms)
    return _density_power_integral(m, n, 0.0, 1.0)


def moment(m: MeasureSpec, n: int, tol: float = DEFAULT_TOL) -> ExtendedReal:
    """
    计算 μ^n = ∫_0^1 x^n Λ(dx)

    负矩（n = -1, -2）同时做两种判定：二进分块 (2^-(j+1), 2^-j] 的尾部比值，
    以及按测度类型的解析指数判定；两者不一致时抛出 InconclusiveError。

    Args:
        m: 测度
        n: 阶数，n >= -2
        tol: 求积相对误差

    Returns:
        ExtendedReal，diagnostics 含分块积分序列与尾部比值
    """
    if int(n) != n or n < -2:
        raise ValueError(f"只支持整数阶 n >= -2，实际 {n}")
    if not tol > 0:
        raise ValueError("tol 必须为正")
    n = int(n)

    if n >= 0:
        return ExtendedReal(value=_moment_closed_form(m, n), diagnostics={"method": "closed-form"})

    if m.atom_at_zero > 0.0:
        return ExtendedReal.inf(method="atom-at-zero")

    blocks = [
        _block_integral(m, n, 2.0 ** -(j + 1), 2.0 ** -j, tol)
        for j in range(DIVERGENCE_DEPTH)
    ]
    ratio = _tail_ratio(blocks)
    numeric_convergent = ratio < 1.0 - RATIO_MARGIN
    exponent_convergent = _moment_exponent_test(m, n)
    diagnostics = {"blocks": blocks, "tail_ratio": ratio, "method": "dyadic+exponent"}

    if numeric_convergent != exponent_convergent:
        raise InconclusiveError(
            f"μ^{n} 判定不一致: 尾部比值 {ratio:.6g}，解析判定 "
            f"{'收敛' if exponent_convergent else '发散'} ({m.describe()})"
        )

    if not exponent_convergent:
        return ExtendedReal.inf(**diagnostics)

    value = _moment_closed_form(m, n)
    if not math.isfinite(value):
        # 无闭式时按几何尾部外推
        last = blocks[-1]
        value = math.fsum(blocks) + (last * ratio / (1.0 - ratio) if ratio > 0 else 0.0)
        diagnostics["method"] = "dyadic-extrapolation"
    return ExtendedReal(value=value, diagnostics=diagnostics)


def _check_ik(i: int, k: int) -> None:
    if int(i) != i or int(k) != k or not 2 <= k <= i:
        raise ValueError(f"需要整数 2 <= k <= i，实际 i={i}, k={k}")


def _density_beta_integral(m: MeasureSpec, a_shift: float, b: np.ndarray) -> np.ndarray:
    """
    分段密度 f 的 ∫ x^a_shift (1-x)^(b-1) f(x) dx，对 b 向量化

    每项写成 B(a, b) * (I_hi(a,b) - I_lo(a,b))，接近 1 时改用互补函数避免相消。
    """
    b = np.asarray(b, dtype=float)
    total = np.zeros_like(b)
    for lo, hi, piece in m.pieces:
        for d, c in enumerate(piece):
            if c == 0.0:
                continue
            a = a_shift + d + 1.0
            upper = special.betainc(a, b, hi)
            lower = special.betainc(a, b, lo)
            diff = np.where(
                lower > 0.5,
                special.betaincc(a, b, lo) - special.betaincc(a, b, hi),
                upper - lower,
            )
            total += c * np.exp(special.betaln(a, b)) * diff
    return total


def merger_rate(m: MeasureSpec, i: int, k: int) -> float:
    """
    λ_{i,k} = ∫ x^(k-2) (1-x)^(i-k) Λ(dx)

    Args:
        m: 测度
        i: 当前块数
        k: 参与合并的块数

    Returns:
        非负速率
    """
    _check_ik(i, k)
    if m.kind == "beta":
        a = m.alpha
        return math.exp(special.betaln(k - a, i - k + a) - _beta_log_norm(a))
    if m.kind == "atoms":
        return math.fsum(mass * loc ** (k - 2) * (1.0 - loc) ** (i - k) for loc, mass in m.atoms)
    return float(_density_beta_integral(m, k - 2.0, np.array([i - k + 1.0]))[0])


@lru_cache(maxsize=4096)
def _event_rates_cached(m: MeasureSpec, i: int) -> np.ndarray:
    ks = np.arange(2, i + 1)
    if m.kind == "beta":
        a = m.alpha
        log_rates = (
            special.gammaln(i + 1.0) - special.gammaln(ks + 1.0) - special.gammaln(i - ks + 1.0)
            + special.betaln(ks - a, i - ks + a) - _beta_log_norm(a)
        )
        rates = np.exp(log_rates)
    elif m.kind == "atoms":
        rates = np.zeros(len(ks))
        for loc, mass in m.atoms:
            if loc == 0.0:
                rates[0] += mass * special.comb(i, 2)
            else:
                rates += mass * stats.binom.pmf(ks, i, loc) / loc ** 2
    else:
        rates = np.array([
            special.comb(i, k) * float(_density_beta_integral(m, k - 2.0, np.array([i - k + 1.0]))[0])
            for k in ks
        ])
    rates.setflags(write=False)
    return rates


def event_rates(m: MeasureSpec, i: int) -> np.ndarray:
    """
    i 个块时各合并规模的速率 C(i,k) λ_{i,k}，下标 0 对应 k = 2

    结果按 (测度, i) 缓存，数组只读。
    """
    if int(i) != i or i < 2:
        raise ValueError(f"需要 i >= 2，实际 {i}")
    return _event_rates_cached(m, int(i))


def total_rate(m: MeasureSpec, i: int) -> float:
    """i 个块时的总事件速率 R_i"""
    return float(math.fsum(event_rates(m, i)))


# ============================================================================
# ν 的截断尾部
# ============================================================================

def _check_eps(eps: float) -> None:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps 需在 (0, 1) 内，实际 {eps}")


def _beta_y(x: float) -> float:
    """代换 y = (1-x)/x；在 y 上 ν 的密度为 y^(α-1) / B(2-α, α)"""
    return (1.0 - x) / x


def nu_interval_mass(m: MeasureSpec, lo: float, hi: float = 1.0) -> float:
    """ν((lo, hi]) = ∫_(lo,hi] x^-2 Λ(dx)，0 < lo < hi <= 1"""
    _check_eps(lo)
    if not lo < hi <= 1.0:
        raise ValueError(f"需要 lo < hi <= 1，实际 lo={lo}, hi={hi}")
    if m.kind == "beta":
        a = m.alpha
        upper = math.exp(a * math.log(_beta_y(lo)))
        lower = math.exp(a * math.log(_beta_y(hi))) if hi < 1.0 else 0.0
        return (upper - lower) / (a * math.exp(_beta_log_norm(a)))
    if m.kind == "atoms":
        return math.fsum(mass / loc ** 2 for loc, mass in m.atoms if lo < loc <= hi)
    return _density_power_integral(m, -2, lo, hi)


def nu_tail_mass(m: MeasureSpec, eps: float) -> float:
    """ν((eps, 1]) = ∫_eps^1 x^-2 Λ(dx)"""
    _check_eps(eps)
    return nu_interval_mass(m, eps, 1.0)


def nu_mean_tail(m: MeasureSpec, eps: float, tol: float = DEFAULT_TOL) -> float:
    """∫_eps^1 x ν(dx) = ∫_eps^1 x^-1 Λ(dx)，即 dust 均值的 Campbell 指数"""
    _check_eps(eps)
    if m.kind == "beta":
        a = m.alpha
        value, _ = integrate.quad(
            lambda x: x ** (-a), eps, 1.0,
            weight="alg", wvar=(0.0, a - 1.0), epsabs=0.0, epsrel=tol,
        )
        return value / math.exp(_beta_log_norm(a))
    if m.kind == "atoms":
        return math.fsum(mass / loc for loc, mass in m.atoms if loc > eps)
    return _density_power_integral(m, -1, eps, 1.0)


def sample_nu_interval(
    m: MeasureSpec,
    lo: float,
    hi: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
):
    """
    从归一化的 ν|(lo,hi] 抽样

    beta 用代换后的精确逆 CDF；atoms 按权重 m/a^2 的离散逆 CDF；
    density 对解析 CDF 用 brentq 数值求逆。

    Args:
        m: 测度
        lo, hi: 区间端点，0 < lo < hi <= 1
        rng: 随机流
        size: None 返回单个 float，否则返回长度为 size 的数组
    """
    mass = nu_interval_mass(m, lo, hi)
    if not mass > 0.0:
        raise ValueError(f"ν((lo,hi]) = 0，无法抽样 (lo={lo}, hi={hi}, {m.describe()})")

    count = 1 if size is None else int(size)
    u = rng.random(count)

    if m.kind == "beta":
        a = m.alpha
        lower = _beta_y(hi) ** a if hi < 1.0 else 0.0
        upper = _beta_y(lo) ** a
        y = (lower + u * (upper - lower)) ** (1.0 / a)
        draws = 1.0 / (1.0 + y)
    elif m.kind == "atoms":
        chosen = [(loc, w) for loc, w in m.atoms if lo < loc <= hi]
        locs = np.array([loc for loc, _ in chosen])
        weights = np.array([w / loc ** 2 for loc, w in chosen])
        cdf = np.cumsum(weights) / weights.sum()
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(locs) - 1)
        draws = locs[idx]
    else:
        draws = np.array([
            optimize.brentq(
                lambda y, target=target: _density_power_integral(m, -2, lo, y) - target,
                lo, hi, xtol=1e-14, rtol=1e-12,
            )
            for target in u * mass
        ])

    # 端点概率为零，出现时夹回 (lo, min(hi, 1))
    draws = np.clip(draws, np.nextafter(lo, 1.0), min(hi, np.nextafter(1.0, 0.0)))
    return float(draws[0]) if size is None else draws


def sample_nu_truncated(
    m: MeasureSpec,
    eps: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
):
    """从归一化的 ν|(eps,1) 抽样，抽样结果总在 (eps, 1) 内"""
    _check_eps(eps)
    return sample_nu_interval(m, eps, 1.0, rng, size)


# ============================================================================
# μ* 与分类
# ============================================================================

def _coalescence_increments(m: MeasureSpec, j_max: int) -> np.ndarray:
    """c_j = ∫ (1-x)^j Λ(dx)，j = 0..j_max-1"""
    js = np.arange(j_max, dtype=float)
    if m.kind == "beta":
        a = m.alpha
        return np.exp(special.betaln(2.0 - a, a + js) - _beta_log_norm(a))
    if m.kind == "atoms":
        total = np.zeros(j_max)
        for loc, mass in m.atoms:
            total += mass * (1.0 - loc) ** js
        return total
    return _density_beta_integral(m, 0.0, js + 1.0)


def coalescence_sums(m: MeasureSpec, i_max: int) -> np.ndarray:
    """
    γ_i = Σ_k (k-1) C(i,k) λ_{i,k}，i = 2..i_max

    用精确递推 γ_2 = c_0, γ_{i+1} = γ_i + Σ_{j<i} c_j，全部为正项，无相消。
    """
    if i_max < 2:
        raise ValueError("i_max 需 >= 2")
    c = _coalescence_increments(m, i_max)
    prefix = np.cumsum(c)                  # prefix[i-1] = Σ_{j<i} c_j
    gammas = np.empty(i_max - 1)
    gammas[0] = c[0]
    # i = 3..i_max: γ_i = c_0 + Σ_{l=1}^{i-2} prefix[l]
    gammas[1:] = c[0] + np.cumsum(prefix[1:i_max - 1])
    return gammas


def _mu_star_exponent_test(m: MeasureSpec) -> bool:
    """μ* 的解析有限性判定（True = 有限）"""
    if m.kind == "beta":
        return m.alpha > 1.0
    if m.kind == "atoms":
        return m.atom_at_zero > 0.0
    return False


def mu_star(m: MeasureSpec, tol: float = DEFAULT_TOL, i_max: int = MU_STAR_I_MAX) -> ExtendedReal:
    """
    μ* = Σ_{i>=2} 1/γ_i

    按二进下标块 [2^j, 2^(j+1)) 求块和，尾部比值 <= 0.9 视为几何衰减，
    >= 0.98 视为不衰减，居中时以解析判定为准；两者冲突抛出 InconclusiveError。
    有限时附加 Euler-Maclaurin 尾部外推。

    Args:
        m: 测度
        tol: 保留参数（外推结果的报告精度）
        i_max: 截断位置，>= 10

    Returns:
        ExtendedReal，diagnostics 含部分和、块比值、外推尾部
    """
    if int(i_max) != i_max or i_max < 10:
        raise ValueError(f"i_max 需 >= 10，实际 {i_max}")
    if not tol > 0:
        raise ValueError("tol 必须为正")
    i_max = int(i_max)

    gammas = coalescence_sums(m, i_max)
    if np.any(gammas <= 0.0):
        raise DegenerateMeasureError(f"测度为零，γ_i = 0 ({m.describe()})")

    terms = 1.0 / gammas                    # terms[i-2] = 1/γ_i
    partial = math.fsum(terms)

    blocks = []
    j = 1
    while 2 ** (j + 1) - 1 <= i_max:
        blocks.append(math.fsum(terms[2 ** j - 2: 2 ** (j + 1) - 2]))
        j += 1
    ratio = _tail_ratio(blocks)
    last_ratio = blocks[-1] / blocks[-2] if len(blocks) >= 2 and blocks[-2] > 0 else ratio

    exponent_finite = _mu_star_exponent_test(m)
    if ratio <= MU_STAR_DECAY_RATIO:
        numeric = True
    elif ratio >= MU_STAR_FLAT_RATIO:
        numeric = False
    else:
        numeric = None

    diagnostics = {
        "partial_sum": partial,
        "i_max": i_max,
        "block_sums": blocks,
        "tail_ratio": ratio,
    }

    if numeric is not None and numeric != exponent_finite:
        raise InconclusiveError(
            f"μ* 判定不一致: 块比值 {ratio:.6g}，解析判定 "
            f"{'有限' if exponent_finite else '无穷'} ({m.describe()})"
        )
    if not exponent_finite:
        return ExtendedReal.inf(**diagnostics)

    # τ_N ~ C N^-p，块比值 2^(1-p)
    p = 1.0 - math.log2(last_ratio)
    tau_n = float(terms[-1])
    tail = tau_n * i_max / (p - 1.0) - tau_n / 2.0 if p > 1.0 else 0.0
    diagnostics["tail_estimate"] = tail
    diagnostics["decay_exponent"] = p
    return ExtendedReal(value=partial + tail, diagnostics=diagnostics)


def classify(m: MeasureSpec) -> Behaviour:
    """
    划分行为区间

    A: μ^-2 < ∞；B: μ^-2 = ∞ 且 μ^-1 < ∞；
    C: μ^-1 = ∞ 且 μ* = ∞；D: μ* < ∞。
    μ^-1 < ∞ 蕴含 μ* = ∞，此时不计算 μ*。
    """
    mu_m2 = moment(m, -2)
    if mu_m2.is_finite:
        return Behaviour("A", True, True, False, {"mu^-2": mu_m2})

    mu_m1 = moment(m, -1)
    if mu_m1.is_finite:
        return Behaviour("B", True, False, False, {"mu^-2": mu_m2, "mu^-1": mu_m1})

    star = mu_star(m)
    label = "D" if star.is_finite else "C"
    return Behaviour(label, False, False, star.is_finite,
                     {"mu^-2": mu_m2, "mu^-1": mu_m1, "mu*": star})
