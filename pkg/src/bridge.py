"""
有限桥模块
桥以结构形式存储（dust 斜率 + 按位置排序的跳跃列表），洞、逆、复合均由跳跃记录精确导出，
不对曲线做浮点扫描。

复合约定：compose(first, second)(y) = second(first(y))，即"先 first 后 second"，
调用方总是按时间递增顺序传入。
"""
import logging
import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.config import BOUNDARY_ATOL, CONSERVATION_TOL, FLOAT_FORMAT
from src.partition import Partition

logger = logging.getLogger(__name__)


class BoundaryCollisionError(ValueError):
    """简单桥位置落在洞边界上（概率为零，调用方重新抽样）"""


@dataclass(frozen=True)
class Hole:
    """值轴上的半开区间 [lo, hi)；size 取自跳跃记录，不由 hi - lo 相减得到"""
    lo: float
    hi: float
    size: float


def _normalize_jumps(locs: np.ndarray, sizes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """按位置排序，丢弃非正跳跃，合并重合位置"""
    keep = sizes > 0.0
    locs, sizes = locs[keep], sizes[keep]
    order = np.argsort(locs, kind="stable")
    locs, sizes = locs[order], sizes[order]

    if locs.size > 1:
        dup = np.diff(locs) == 0.0
        if np.any(dup):
            logger.warning(f"合并 {int(dup.sum())} 个重合的跳跃位置")
            unique_locs, start = np.unique(locs, return_index=True)
            sizes = np.add.reduceat(sizes, start)
            locs = unique_locs
    return locs, sizes


class FiniteBridge:
    """b(y) = slope * y + Σ_{u_j <= y} s_j 的不可变结构表示"""

    def __init__(self, slope: float, jumps: Iterable[Tuple[float, float]] = ()):
        """
        Args:
            slope: dust 系数 s_0 ∈ [0, 1]
            jumps: (位置 u ∈ [0,1), 大小 s > 0) 列表，顺序任意
        """
        pairs = list(jumps)
        locs = np.array([float(u) for u, _ in pairs], dtype=float)
        sizes = np.array([float(s) for _, s in pairs], dtype=float)
        self._init(float(slope), locs, sizes)

    @classmethod
    def _from_arrays(cls, slope: float, locs: np.ndarray, sizes: np.ndarray) -> "FiniteBridge":
        bridge = cls.__new__(cls)
        bridge._init(slope, locs, sizes)
        return bridge

    def _init(self, slope: float, locs: np.ndarray, sizes: np.ndarray) -> None:
        if not 0.0 <= slope <= 1.0:
            raise ValueError(f"slope 需在 [0, 1] 内，实际 {slope}")
        if locs.size and (locs.min() < 0.0 or locs.max() >= 1.0):
            raise ValueError("跳跃位置需在 [0, 1) 内")
        locs, sizes = _normalize_jumps(locs, sizes)

        total = math.fsum(sizes.tolist()) + slope
        if abs(total - 1.0) > CONSERVATION_TOL:
            raise ValueError(f"slope + Σ sizes = {total!r}，偏离 1")

        self.slope = slope
        self.locs = locs
        self.sizes = sizes
        # cum[k] = 前 k 个跳跃之和
        self._cum = np.concatenate(([0.0], np.cumsum(sizes)))
        self.hole_lo = slope * locs + self._cum[:-1]
        self.hole_hi = self.hole_lo + sizes
        for arr in (self.locs, self.sizes, self._cum, self.hole_lo, self.hole_hi):
            arr.setflags(write=False)

    @classmethod
    def identity(cls) -> "FiniteBridge":
        return cls(1.0)

    # ---------- 基本量 ----------

    @property
    def jump_count(self) -> int:
        return int(self.locs.size)

    @property
    def jumps(self) -> List[Tuple[float, float]]:
        return list(zip(self.locs.tolist(), self.sizes.tolist()))

    def dust(self) -> float:
        """dust = 下 Lipschitz 常数 = slope"""
        return self.slope

    def holes(self) -> List[Hole]:
        """每个跳跃对应一个洞 [b(u-), b(u-) + s)，按 lo 排序"""
        return [Hole(lo, hi, s) for lo, hi, s in
                zip(self.hole_lo.tolist(), self.hole_hi.tolist(), self.sizes.tolist())]

    def hole_sizes(self) -> np.ndarray:
        return self.sizes

    # ---------- 求值与逆 ----------

    def evaluate(self, y):
        """b(y)，右连续"""
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.locs, y, side="right")
        out = self.slope * y + self._cum[idx]
        return float(out) if out.ndim == 0 else out

    def evaluate_left(self, y):
        """b(y-)"""
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.locs, y, side="left")
        out = self.slope * y + self._cum[idx]
        return float(out) if out.ndim == 0 else out

    def locate(self, v):
        """v 所在洞的编号；不在任何半开洞内时为 -1"""
        v = np.asarray(v, dtype=float)
        idx = np.searchsorted(self.hole_lo, v, side="right") - 1
        safe = np.clip(idx, 0, None)
        inside = (idx >= 0) & (v < self.hole_hi[safe] if self.jump_count else False)
        out = np.where(inside, idx, -1)
        return int(out) if out.ndim == 0 else out

    def inverse(self, v):
        """
        右连续逆 b^-1(v) = inf{z : b(z) > v}

        v 落在洞 j 内时返回 u_j；落在 dust 部分时按斜率线性反解；v = 1 返回 1。
        """
        v = np.asarray(v, dtype=float)
        hole = self.locate(v)
        hole = np.asarray(hole)
        below = np.searchsorted(self.hole_lo, v, side="right")
        if self.slope > 0.0:
            linear = np.clip((v - self._cum[below]) / self.slope, 0.0, 1.0)
        else:
            # 无 dust 时值域只有洞边界，取下一个跳跃位置
            padded = np.concatenate((self.locs, [1.0]))
            linear = padded[below]
        safe = np.clip(hole, 0, None)
        hole_loc = self.locs[safe] if self.jump_count else np.zeros_like(v)
        out = np.where(hole >= 0, hole_loc, linear)
        out = np.where(v >= 1.0, 1.0, out)
        return float(out) if out.ndim == 0 else out

    # ---------- 序列化 ----------

    def to_text(self) -> str:
        """"slope;u1:s1,u2:s2,..." 17 位有效数字"""
        body = ",".join(f"{FLOAT_FORMAT.format(u)}:{FLOAT_FORMAT.format(s)}" for u, s in self.jumps)
        return f"{FLOAT_FORMAT.format(self.slope)};{body}"

    @classmethod
    def from_text(cls, text: str) -> "FiniteBridge":
        try:
            slope_text, body = text.strip().split(";", 1)
            jumps = []
            if body:
                for item in body.split(","):
                    u, s = item.split(":")
                    jumps.append((float(u), float(s)))
            return cls(float(slope_text), jumps)
        except ValueError as e:
            raise ValueError(f"无法解析桥: {text!r} ({e})")

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteBridge):
            return NotImplemented
        return (self.slope == other.slope
                and np.array_equal(self.locs, other.locs)
                and np.array_equal(self.sizes, other.sizes))

    def __hash__(self) -> int:
        return hash((self.slope, self.locs.tobytes(), self.sizes.tobytes()))

    def __repr__(self) -> str:
        return f"FiniteBridge({self.to_text()!r})"


# ============================================================================
# 构造与复合
# ============================================================================

def simple_bridge(x: float, u: float) -> FiniteBridge:
    """b_x(y) = (1-x) y + x 1{u <= y}"""
    if not 0.0 < x < 1.0:
        raise ValueError(f"简单桥需要 0 < x < 1，实际 {x}")
    if not 0.0 <= u < 1.0:
        raise ValueError(f"简单桥位置需在 [0, 1) 内，实际 {u}")
    return FiniteBridge._from_arrays(1.0 - x, np.array([u]), np.array([x]))


def compose(first: FiniteBridge, second: FiniteBridge) -> FiniteBridge:
    """
    结构复合：result(y) = second(first(y))

    first 的每个跳跃 (u, s) 展开为 second 在对应洞上的增量；
    second 落在 first 值域 dust 部分的跳跃 w 放到 first^-1(w) 处。

    Args:
        first: 先作用的桥
        second: 后作用的桥

    Returns:
        复合桥，slope = first.slope * second.slope
    """
    g_locs, g_sizes = second.locs, second.sizes
    slope = first.slope * second.slope

    if first.slope > 0.0:
        # second 的跳跃落在闭洞 [lo, hi] 内则被吸收
        idx = np.searchsorted(first.hole_lo, g_locs, side="right") - 1
        safe = np.clip(idx, 0, None)
        if first.jump_count:
            absorbed = (idx >= 0) & (g_locs <= first.hole_hi[safe])
        else:
            absorbed = np.zeros(g_locs.size, dtype=bool)
        extra = np.zeros(first.jump_count)
        np.add.at(extra, idx[absorbed], g_sizes[absorbed])

        jump_sizes = second.slope * first.sizes + extra
        free_locs = np.array([])
        if np.any(~absorbed):
            free_locs = np.minimum(np.atleast_1d(first.inverse(g_locs[~absorbed])), np.nextafter(1.0, 0.0))
        locs = np.concatenate((first.locs, free_locs))
        sizes = np.concatenate((jump_sizes, g_sizes[~absorbed]))
        return FiniteBridge._from_arrays(slope, locs, sizes)

    # first 无 dust：洞铺满 [0, 1)，复合结果是阶梯函数
    # 洞 j 吸收 second 在 (lo_j, hi_j] 中的跳跃，w = 0 归入位置 0
    idx = np.searchsorted(first.hole_hi, g_locs, side="left")
    idx = np.minimum(idx, first.jump_count - 1)
    at_zero = g_locs == 0.0
    extra = np.zeros(first.jump_count)
    np.add.at(extra, idx[~at_zero], g_sizes[~at_zero])
    zero_mass = math.fsum(g_sizes[at_zero].tolist())

    sizes = second.slope * first.sizes + extra
    locs = first.locs.copy()
    if zero_mass > 0.0:
        if first.locs[0] == 0.0:
            sizes[0] += zero_mass
        else:
            locs = np.concatenate(([0.0], locs))
            sizes = np.concatenate(([zero_mass], sizes))
    return FiniteBridge._from_arrays(slope, locs, sizes)


def compose_all(bridges: Sequence[FiniteBridge]) -> FiniteBridge:
    """按给定（时间）顺序依次复合"""
    return reduce(compose, bridges, FiniteBridge.identity())


@dataclass(frozen=True)
class TrackedComposition:
    """compose_tracked 的结果"""
    result: FiniteBridge
    case: str                          # "A": 新增一个洞；"B": 落入已有洞
    child_map: Tuple[int, ...]         # 旧洞编号 -> 新洞编号
    new_hole: Optional[Hole]
    absorbed: Optional[int]            # case B 中被吸收的旧洞编号


def compose_tracked(first: FiniteBridge, x: float, u: float) -> TrackedComposition:
    """
    在 first 之后复合简单桥 b_x(·; u)，并记录洞的子代关系

    Case A：u 不在任何洞内，新增一个大小为 x 的洞；
    Case B：u 落在洞 k 内，洞数不变，洞 k 的子代大小为 (1-x) S(H_k) + x。
    其余洞的子代大小为 (1-x) S(H)。

    Raises:
        BoundaryCollisionError: u 与某个洞边界的距离 <= BOUNDARY_ATOL
    """
    if first.jump_count:
        distance = np.minimum(np.abs(first.hole_lo - u), np.abs(first.hole_hi - u))
        if np.min(distance) <= BOUNDARY_ATOL:
            raise BoundaryCollisionError(f"位置 u={u!r} 落在洞边界上")

    result = compose(first, simple_bridge(x, u))
    hole = first.locate(u)
    child_map = tuple(int(i) for i in np.searchsorted(result.locs, first.locs))

    if hole >= 0:
        return TrackedComposition(result, "B", child_map, None, int(hole))

    z = first.inverse(u)
    new_index = int(np.searchsorted(result.locs, z))
    return TrackedComposition(result, "A", child_map, result.holes()[new_index], None)


# ============================================================================
# dust 重排与 paintbox
# ============================================================================

def dust_remap(b: FiniteBridge, v: float) -> float:
    """
    保测度的分段线性重排：dust 段依次堆到 [0, dust)，洞依次堆在其后

    f(v) < dust(b) 当且仅当 v 不在任何洞内。
    """
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"v 需在 [0, 1] 内，实际 {v}")
    hole = b.locate(v)
    if hole >= 0:
        return b.slope + float(b._cum[hole]) + (v - float(b.hole_lo[hole]))
    below = int(np.searchsorted(b.hole_lo, v, side="right"))
    return min(v - float(b._cum[below]), b.slope)


def paintbox(b: FiniteBridge, n: int, rng: np.random.Generator) -> Partition:
    """
    用 V_1..V_n ~ U[0,1] 的逆像水平集构造可交换划分

    同一个洞内的样本归为一块；dust 中的样本各自成为单点块（几乎必然互不相同）。
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n 需 >= 1，实际 {n}")
    v = rng.random(int(n))
    return paintbox_from_uniforms(b, v)


def paintbox_from_uniforms(b: FiniteBridge, v: np.ndarray) -> Partition:
    """给定 V 序列的 paintbox（多个截断水平共享同一 V 序列时使用）"""
    hole = np.atleast_1d(b.locate(np.asarray(v, dtype=float)))
    labels = np.where(hole >= 0, hole, b.jump_count + np.arange(hole.size))
    return Partition(labels)
