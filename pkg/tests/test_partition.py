"""
有限划分：规范形式、限制、合并、频率摘要、枚举
"""
from fractions import Fraction
from itertools import combinations

import pytest

from src.partition import (
    Partition,
    enumerate_partitions,
    merge,
    restrict,
    summarize,
)


def test_labels_are_canonical():
    p = Partition([5, 5, 2, 9, 2])
    assert p.labels.tolist() == [0, 0, 1, 2, 1]
    assert p == Partition.parse("1,2|3,5|4")
    assert hash(p) == hash(Partition.parse("1,2|3,5|4"))


def test_blocks_and_counts():
    p = Partition.parse("1,2,3|4|5")
    assert p.blocks == ((1, 2, 3), (4,), (5,))
    assert len(p) == 3
    assert p.n == 5
    assert p.block_of(4) == 1
    assert p.singleton_count() == 2
    assert p.atomic_count() == 1
    assert p.to_text() == "1,2,3|4|5"


def test_from_blocks_validation():
    with pytest.raises(ValueError):
        Partition.from_blocks([[1, 2], [2, 3]])
    with pytest.raises(ValueError):
        Partition.from_blocks([[1], [3]])
    with pytest.raises(ValueError):
        Partition.parse("1,a|2")
    with pytest.raises(ValueError):
        Partition([])


def test_restrict_drops_elements():
    p = Partition.parse("1,3|2,4")
    assert restrict(p, 3) == Partition.parse("1,3|2")
    assert restrict(p, 2) == Partition.singletons(2)
    assert restrict(p, 4) is p
    with pytest.raises(ValueError):
        restrict(p, 5)


def test_restriction_is_consistent():
    p = Partition.parse("1,4,6|2|3,5")
    assert restrict(restrict(p, 5), 3) == restrict(p, 3)


def test_restrict_example():
    p = Partition.parse("1,2,6|3,5|4")
    assert restrict(p, 3) == Partition.parse("1,2|3")


def test_restriction_tower_is_exhaustive():
    for n in range(1, 7):
        for p in enumerate_partitions(n):
            for m in range(1, n + 1):
                inner = restrict(p, m)
                for k in range(1, m + 1):
                    assert restrict(inner, k) == restrict(p, k)


def test_merge_commutes_with_restriction():
    for p in enumerate_partitions(5):
        blocks = len(p)
        for size in range(2, blocks + 1):
            for which in combinations(range(blocks), size):
                merged = merge(p, which)
                for m in range(1, 6):
                    r = restrict(p, m)
                    # 规范编号下，限制后保留的块恰好是编号最小的 len(r) 个
                    surviving = [j for j in which if j < len(r)]
                    expected = merge(r, surviving) if len(surviving) >= 2 else r
                    assert restrict(merged, m) == expected


def test_merge_blocks():
    p = merge(Partition.singletons(3), [0, 2])
    assert p == Partition.parse("1,3|2")
    q = merge(Partition.singletons(4), {1, 2, 3})
    assert q == Partition.parse("1|2,3,4")
    with pytest.raises(ValueError):
        merge(p, [0])
    with pytest.raises(ValueError):
        merge(p, [0, 5])


def test_summarize_frequencies():
    summary = summarize(Partition.parse("1,2,3|4|5"))
    assert summary.sorted_freqs == (0.6,)
    assert summary.dust == pytest.approx(0.4)
    assert summary.exact_freqs() == (Fraction(3, 5),)
    assert summary.exact_total() == 1


def test_summarize_singleton_rule():
    p = Partition.parse("1,2|3,4,5,6|7")
    summary = summarize(p, singleton_rule=2)
    assert summary.block_counts == (4,)
    assert summary.dust_count == 3
    with pytest.raises(ValueError):
        summarize(p, singleton_rule=0)


def test_enumeration_matches_bell_numbers():
    bell = [1, 2, 5, 15, 52, 203, 877]
    for n, expected in enumerate(bell, start=1):
        states = enumerate_partitions(n)
        assert len(states) == expected
        assert len(set(states)) == expected


def test_enumeration_contains_extremes():
    states = enumerate_partitions(4)
    assert Partition.singletons(4) in states
    assert Partition.one_block(4) in states
