"""
桥流构造模块
按强度 dt ⊗ ν(dx) 抽取截断 Poisson 点，按时间顺序复合简单桥得到 B^(eps)，
并在逐级细化的截断水平之间跟踪洞与 dust。

每个点在抽样时同时携带简单桥的位置 u，细化时旧点（连同其 u）原样保留，
因此不同截断水平的桥在同一概率空间上耦合。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.bridge import (
    BoundaryCollisionError,
    FiniteBridge,
    compose_tracked,
    dust_remap,
    paintbox_from_uniforms,
)
from src.config import KAHAN_THRESHOLD, SUBSTREAM_PAINTBOX
from src.measures import MeasureSpec, nu_interval_mass, nu_mean_tail, sample_nu_interval
from src.partition import Partition
from src.rng import substream_of

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 64


@dataclass(frozen=True)
class PoissonPointSet:
    """(0, t] × (eps, 1) 上的 Poisson 点，按时间排序；us 为各点简单桥的位置"""
    t: float
    eps: float
    times: np.ndarray
    xs: np.ndarray
    us: np.ndarray

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.times.tolist(), self.xs.tolist()))


@dataclass(frozen=True)
class EventRecord:
    """一次复合的记录"""
    time: float
    x: float
    u: float
    case: str
    child_map: Tuple[int, ...]
    prefix_dust: float
    remap: float                 # dust_remap(前缀桥, u)
    hole_index: int              # case A 新洞 / case B 被吸收洞在结果中的编号


@dataclass
class FlowResult:
    """一条耦合路径在各截断水平上的结果（最细一级的桥与事件）"""
    bridge: FiniteBridge
    dust_by_level: List[Tuple[float, float]] = field(default_factory=list)
    hole_census: List[Tuple[float, int]] = field(default_factory=list)
    point_count_by_level: List[Tuple[float, int]] = field(default_factory=list)
    hole_count_by_level: List[Tuple[float, int]] = field(default_factory=list)
    case_a_by_level: List[Tuple[float, int]] = field(default_factory=list)
    census_by_level: List[Tuple[float, List[Tuple[float, int]]]] = field(default_factory=list)
    events: List[EventRecord] = field(default_factory=list)
    partitions: List[Tuple[float, Partition]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        """JSON 记录（不含桥和事件）"""
        return {
            "dust_by_level": [[e, d] for e, d in self.dust_by_level],
            "hole_census": [[h, c] for h, c in self.hole_census],
            "point_count_by_level": [[e, c] for e, c in self.point_count_by_level],
            "hole_count_by_level": [[e, c] for e, c in self.hole_count_by_level],
            "case_a_by_level": [[e, c] for e, c in self.case_a_by_level],
        }


# ============================================================================
# Poisson 点
# ============================================================================

def _draw_layer(
    m: MeasureSpec,
    t: float,
    lo: float,
    hi: float,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    mass = nu_interval_mass(m, lo, hi) if lo < hi else 0.0
    count = int(rng.poisson(t * mass)) if mass > 0.0 else 0
    if count == 0:
        empty = np.array([], dtype=float)
        return empty, empty, empty
    times = t * (1.0 - rng.random(count))          # (0, t]
    xs = sample_nu_interval(m, lo, hi, rng, size=count)
    us = rng.random(count)
    return times, xs, us


def _sorted_set(t, eps, times, xs, us, rng) -> PoissonPointSet:
    order = np.argsort(times, kind="stable")
    times, xs, us = times[order], xs[order], us[order]
    # 时间坐标必须互不相同（概率为零的重合时重抽）
    while times.size > 1 and np.any(np.diff(times) == 0.0):
        dup = np.concatenate(([False], np.diff(times) == 0.0))
        logger.warning(f"{int(dup.sum())} 个 Poisson 点时间重合，重新抽取")
        times = times.copy()
        times[dup] = t * (1.0 - rng.random(int(dup.sum())))
        order = np.argsort(times, kind="stable")
        times, xs, us = times[order], xs[order], us[order]
    for arr in (times, xs, us):
        arr.setflags(write=False)
    return PoissonPointSet(t=t, eps=eps, times=times, xs=xs, us=us)


def sample_points(
    m: MeasureSpec,
    t: float,
    eps: float,
    rng: np.random.Generator,
) -> PoissonPointSet:
    """
    N ~ Poisson(t ν((eps,1]))，时间 i.i.d. U(0,t]，标记 i.i.d. 来自归一化 ν|(eps,1)

    Args:
        m: 测度
        t: 时间区间长度
        eps: 截断水平
        rng: 随机流
    """
    if not t > 0.0:
        raise ValueError(f"t 需 > 0，实际 {t}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps 需在 (0, 1) 内，实际 {eps}")
    times, xs, us = _draw_layer(m, t, eps, 1.0, rng)
    return _sorted_set(t, eps, times, xs, us, rng)


def refine_points(
    p: PoissonPointSet,
    m: MeasureSpec,
    eps_new: float,
    rng: np.random.Generator,
) -> PoissonPointSet:
    """保留 p 的全部点，叠加 (0,t] × (eps_new, eps] 上独立的一层"""
    if not 0.0 < eps_new < p.eps:
        raise ValueError(f"需要 0 < eps_new < {p.eps}，实际 {eps_new}")
    times, xs, us = _draw_layer(m, p.t, eps_new, p.eps, rng)
    return _sorted_set(
        p.t, eps_new,
        np.concatenate((p.times, times)),
        np.concatenate((p.xs, xs)),
        np.concatenate((p.us, us)),
        rng,
    )


# ============================================================================
# 桥的构造
# ============================================================================

def product_of_complements(xs: Sequence[float]) -> float:
    """Π (1 - x_i)；因子很多时改用 log1p 的补偿求和"""
    xs = list(xs)
    if len(xs) > KAHAN_THRESHOLD:
        return math.exp(math.fsum(math.log1p(-x) for x in xs))
    return math.prod(1.0 - x for x in xs)


def build_flow_bridge(
    p: PoissonPointSet,
    rng: np.random.Generator,
    track: bool = True,
) -> Tuple[FiniteBridge, List[EventRecord]]:
    """
    按时间顺序复合简单桥 b_{x_1} ∘ ... ∘ b_{x_N}

    Args:
        p: Poisson 点集
        rng: 位置重抽用的随机流（仅在边界碰撞时使用）
        track: 是否保留事件记录

    Returns:
        (最终桥, 事件记录列表)；track=False 时列表为空
    """
    bridge = FiniteBridge.identity()
    events: List[EventRecord] = []

    for time, x, u in zip(p.times.tolist(), p.xs.tolist(), p.us.tolist()):
        for attempt in range(MAX_RESAMPLES):
            try:
                step = compose_tracked(bridge, x, u)
                break
            except BoundaryCollisionError:
                logger.warning(f"t={time:.6g} 的位置 u={u!r} 落在洞边界上，重新抽取")
                u = float(rng.random())
        else:
            raise RuntimeError(f"位置连续 {MAX_RESAMPLES} 次落在洞边界上")

        if track:
            if step.case == "A":
                hole_index = int(np.searchsorted(step.result.hole_lo, step.new_hole.lo))
            else:
                hole_index = step.child_map[step.absorbed]
            events.append(EventRecord(
                time=time,
                x=x,
                u=u,
                case=step.case,
                child_map=step.child_map,
                prefix_dust=bridge.dust(),
                remap=dust_remap(bridge, u),
                hole_index=hole_index,
            ))
        bridge = step.result

    return bridge, events


def hole_census(f, thresholds: Sequence[float]) -> List[Tuple[float, int]]:
    """
    各阈值下大小 >= 阈值的洞的个数

    Args:
        f: FlowResult 或 FiniteBridge
        thresholds: 阈值列表
    """
    bridge = f.bridge if isinstance(f, FlowResult) else f
    sizes = np.sort(bridge.hole_sizes())
    return [
        (float(h), int(sizes.size - np.searchsorted(sizes, h, side="left")))
        for h in thresholds
    ]


def lower_bound_check(
    bridge: FiniteBridge,
    events: Sequence[EventRecord],
    levels: Sequence[int],
) -> List[Dict]:
    """
    洞数下界：大小 >= D/j 的洞数不少于标记 >= 1/j 的 case A 事件数（D 为最终 dust）

    每个 case A 事件新建的洞，其后代大小至少为 x 乘以此后各因子 (1-x')，不小于 x·D，
    且子代映射是单射，因此下界对每条路径精确成立。
    """
    final_dust = bridge.dust()
    sizes = bridge.hole_sizes()
    rows = []
    for j in levels:
        if int(j) != j or j < 1:
            raise ValueError(f"水平 j 需为正整数，实际 {j}")
        cutoff = final_dust / j * (1.0 - 1e-9)
        holes = int(np.count_nonzero(sizes >= cutoff))
        bound = sum(1 for e in events if e.case == "A" and e.x >= 1.0 / j)
        remap_bound = sum(1 for e in events if e.case == "A" and e.remap < e.prefix_dust and e.x >= 1.0 / j)
        rows.append({
            "j": int(j),
            "holes": holes,
            "bound": bound,
            "remap_bound": remap_bound,
            "ok": holes >= bound,
        })
    return rows


def campbell_dust_mean(m: MeasureSpec, t: float, eps: float) -> float:
    """E[dust(B^(eps))] = exp(-t ∫_eps^1 x ν(dx))"""
    return math.exp(-t * nu_mean_tail(m, eps))


# ============================================================================
# 耦合细化路径
# ============================================================================

def run_flow(
    m: MeasureSpec,
    t: float,
    eps_grid: Sequence[float],
    thresholds: Sequence[float],
    rng_points: np.random.Generator,
    rng_locations: np.random.Generator,
    uniforms: Optional[np.ndarray] = None,
    track: bool = True,
) -> FlowResult:
    """
    沿严格递减的 eps 网格逐级细化同一组 Poisson 点并重建桥

    Args:
        m: 测度
        t: 时间区间长度
        eps_grid: 严格递减的截断水平
        thresholds: 洞普查阈值
        rng_points: 点与位置的随机流
        rng_locations: 边界碰撞时重抽位置的随机流
        uniforms: 可选的 paintbox V 序列，各水平共享
        track: 是否生成并保留事件记录；不跟踪时 case A 数取洞数（每个 case A 事件恰好新建一个洞）

    Returns:
        FlowResult
    """
    grid = [float(e) for e in eps_grid]
    if not grid:
        raise ValueError("eps 网格不能为空")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"eps 网格需严格递减: {grid}")

    points: Optional[PoissonPointSet] = None
    bridge = FiniteBridge.identity()
    events: List[EventRecord] = []
    result = FlowResult(bridge=bridge)

    for eps in grid:
        points = sample_points(m, t, eps, rng_points) if points is None else \
            refine_points(points, m, eps, rng_points)
        bridge, events = build_flow_bridge(points, rng_locations, track=track)

        result.dust_by_level.append((eps, bridge.dust()))
        result.point_count_by_level.append((eps, len(points)))
        result.hole_count_by_level.append((eps, bridge.jump_count))
        case_a = sum(1 for e in events if e.case == "A") if track else bridge.jump_count
        result.case_a_by_level.append((eps, case_a))
        result.census_by_level.append((eps, hole_census(bridge, thresholds)))
        if uniforms is not None:
            result.partitions.append((eps, paintbox_from_uniforms(bridge, uniforms)))

    result.bridge = bridge
    result.hole_census = hole_census(bridge, thresholds)
    result.events = events
    return result


def flow_partition(
    m: MeasureSpec,
    t: float,
    eps: float,
    n: int,
    rng: np.random.Generator,
    v_rng: Optional[np.random.Generator] = None,
) -> Partition:
    """
    π^(eps)_t = paintbox(B^(eps), n)

    Args:
        m: 测度
        t: 时间
        eps: 截断水平
        n: 样本数
        rng: 点与位置的随机流
        v_rng: V 序列的随机流，默认取 rng 的 paintbox 子流，各截断水平共用
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n 需 >= 1，实际 {n}")
    if v_rng is None:
        v_rng = substream_of(rng, SUBSTREAM_PAINTBOX)
    points = sample_points(m, t, eps, rng)
    bridge, _ = build_flow_bridge(points, rng, track=False)
    uniforms = v_rng.random(int(n))
    return paintbox_from_uniforms(bridge, uniforms)
