"""
有限划分模块
{1..n} 的划分以规范标签数组存储：块按最小元素排序编号 0, 1, 2, ...
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, List, Sequence, Tuple

import numpy as np


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """按首次出现顺序重新编号"""
    if labels.size == 0:
        return labels.astype(np.int64)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    return rank[inverse].astype(np.int64)


class Partition:
    """{1..n} 的不可变划分"""

    def __init__(self, labels: Sequence[int]):
        """
        Args:
            labels: 长度为 n 的块编号序列，labels[e-1] 为元素 e 所在块；任意编号，内部规范化
        """
        arr = np.asarray(labels, dtype=np.int64).ravel()
        if arr.size == 0:
            raise ValueError("划分的基集不能为空 (n >= 1)")
        canonical = _canonical_labels(arr)
        canonical.setflags(write=False)
        self._labels = canonical

    # ---------- 构造 ----------

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        if n < 1:
            raise ValueError(f"n 需 >= 1，实际 {n}")
        return cls(np.arange(n))

    @classmethod
    def one_block(cls, n: int) -> "Partition":
        if n < 1:
            raise ValueError(f"n 需 >= 1，实际 {n}")
        return cls(np.zeros(n, dtype=np.int64))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]]) -> "Partition":
        """从块列表构造，元素编号从 1 开始，需恰好覆盖 {1..n}"""
        blocks = [list(b) for b in blocks]
        elements = sorted(e for b in blocks for e in b)
        n = len(elements)
        if any(len(b) == 0 for b in blocks):
            raise ValueError("块不能为空")
        if elements != list(range(1, n + 1)):
            raise ValueError("块必须互不相交且恰好覆盖 {1..n}")
        labels = np.empty(n, dtype=np.int64)
        for j, block in enumerate(blocks):
            labels[np.asarray(block) - 1] = j
        return cls(labels)

    @classmethod
    def parse(cls, text: str) -> "Partition":
        """解析文本形式，如 "1,2|3" """
        try:
            blocks = [[int(e) for e in chunk.split(",")] for chunk in text.strip().split("|")]
        except ValueError:
            raise ValueError(f"无法解析划分: {text!r}")
        return cls.from_blocks(blocks)

    # ---------- 访问 ----------

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def n(self) -> int:
        return int(self._labels.size)

    @cached_property
    def blocks(self) -> Tuple[Tuple[int, ...], ...]:
        """块元组（按最小元素排序，块内递增，元素从 1 开始）"""
        order = np.argsort(self._labels, kind="stable")
        sizes = np.bincount(self._labels)
        chunks = np.split(order + 1, np.cumsum(sizes)[:-1])
        return tuple(tuple(int(e) for e in chunk) for chunk in chunks)

    @cached_property
    def block_sizes(self) -> np.ndarray:
        sizes = np.bincount(self._labels)
        sizes.setflags(write=False)
        return sizes

    def __len__(self) -> int:
        return int(self._labels.max()) + 1

    def block_of(self, element: int) -> int:
        """元素（从 1 开始）所在块的编号"""
        return int(self._labels[element - 1])

    def singleton_count(self) -> int:
        """N^s 代理：单点块个数"""
        return int(np.count_nonzero(self.block_sizes == 1))

    def atomic_count(self) -> int:
        """N^a 代理：非单点块个数"""
        return int(np.count_nonzero(self.block_sizes > 1))

    def to_text(self) -> str:
        return "|".join(",".join(str(e) for e in block) for block in self.blocks)

    def __str__(self) -> str:
        return self.to_text()

    def __repr__(self) -> str:
        return f"Partition({self.to_text()!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self._labels, other._labels))

    def __hash__(self) -> int:
        return hash((self.n, self._labels.tobytes()))


def restrict(p: Partition, m: int) -> Partition:
    """限制到 {1..m}，空块自然消失"""
    if int(m) != m or not 1 <= m <= p.n:
        raise ValueError(f"需要 1 <= m <= {p.n}，实际 {m}")
    if m == p.n:
        return p
    return Partition(p.labels[:m])


def merge(p: Partition, which: Iterable[int]) -> Partition:
    """
    合并指定编号的块

    Args:
        p: 划分
        which: 块编号集合（规范顺序下的编号），至少两个

    Returns:
        新划分，块数减少 |which| - 1
    """
    which = sorted(set(int(w) for w in which))
    if len(which) < 2:
        raise ValueError("至少需要合并两个块")
    if which[0] < 0 or which[-1] >= len(p):
        raise ValueError(f"块编号越界: {which}（共 {len(p)} 块）")
    labels = p.labels.copy()
    labels[np.isin(labels, which)] = which[0]
    return Partition(labels)


# ============================================================================
# 频率摘要
# ============================================================================

@dataclass(frozen=True)
class FrequencySummary:
    """有限 n 的频率估计：大块频率（降序）与 dust"""
    n: int
    block_counts: Tuple[int, ...]
    dust_count: int

    @property
    def sorted_freqs(self) -> Tuple[float, ...]:
        return tuple(c / self.n for c in self.block_counts)

    @property
    def dust(self) -> float:
        return self.dust_count / self.n

    def exact_freqs(self) -> Tuple[Fraction, ...]:
        return tuple(Fraction(c, self.n) for c in self.block_counts)

    def exact_dust(self) -> Fraction:
        return Fraction(self.dust_count, self.n)

    def exact_total(self) -> Fraction:
        """频率与 dust 之和的精确值（恒为 1）"""
        return sum(self.exact_freqs(), Fraction(0)) + self.exact_dust()


def summarize(p: Partition, singleton_rule: int = 1) -> FrequencySummary:
    """
    大小 > singleton_rule 的块计入频率 |b|/n，其余元素计入 dust

    Args:
        p: 划分
        singleton_rule: 阈值，默认 1（只把单点块视为 dust）
    """
    if int(singleton_rule) != singleton_rule or singleton_rule < 1:
        raise ValueError(f"singleton_rule 需为 >= 1 的整数，实际 {singleton_rule}")
    sizes = p.block_sizes
    large = sizes[sizes > singleton_rule]
    counts = tuple(int(c) for c in sorted(large.tolist(), reverse=True))
    dust_count = int(sizes[sizes <= singleton_rule].sum())
    return FrequencySummary(n=p.n, block_counts=counts, dust_count=dust_count)


# ============================================================================
# 枚举
# ============================================================================

def _restricted_growth(n: int) -> Iterator[List[int]]:
    word = [0] * n
    maxima = [0] * n

    while True:
        yield list(word)
        # 从末位向前找可以递增的位置
        i = n - 1
        while i > 0 and word[i] == maxima[i - 1] + 1:
            i -= 1
        if i == 0:
            return
        word[i] += 1
        maxima[i] = max(maxima[i - 1], word[i])
        for j in range(i + 1, n):
            word[j] = 0
            maxima[j] = maxima[i]


def enumerate_partitions(n: int) -> List[Partition]:
    """按限制增长串的字典序列出 {1..n} 的全部划分（共 Bell(n) 个）"""
    if n < 1:
        raise ValueError(f"n 需 >= 1，实际 {n}")
    return [Partition(word) for word in _restricted_growth(n)]
