"""
嵌入过程：代表元、诱导事件、分层速率检验
"""
import math

import numpy as np
import pytest

from src.chain import ChainEvent, ChainTrajectory, median_first_event_time, simulate_chain
from src.embed import (
    _size_chisquare,
    embed,
    first_induced_event,
    induced_block_counts,
    induced_rate_test,
)
from src.measures import MeasureSpec
from src.partition import Partition
from src.rng import split

ALPHA = 0.001


@pytest.fixture
def four_path():
    """1,2 在 0.5 合并；{3},{4} 在 0.7 合并；剩下两块在 1.5 合并"""
    return ChainTrajectory(
        n=4,
        t_end=math.inf,
        events=[
            ChainEvent(time=0.5, k=2, merged=(0, 1), blocks_after=3),
            ChainEvent(time=0.7, k=2, merged=(1, 2), blocks_after=2),
            ChainEvent(time=1.5, k=2, merged=(0, 1), blocks_after=1),
        ],
        snapshots={1.0: Partition.parse("1,2|3,4")},
    )


@pytest.fixture
def six_path():
    return ChainTrajectory(
        n=6,
        t_end=math.inf,
        events=[
            ChainEvent(time=0.5, k=2, merged=(0, 1), blocks_after=5),
            ChainEvent(time=0.6, k=2, merged=(1, 2), blocks_after=4),
            ChainEvent(time=1.2, k=2, merged=(2, 3), blocks_after=3),
            ChainEvent(time=1.4, k=2, merged=(0, 1), blocks_after=2),
        ],
    )


# ---------- 诱导事件 ----------

def test_non_singleton_representatives(four_path):
    ep = embed(four_path, 1.0)
    assert ep.representatives == (1, 3)
    assert len(ep.induced_events) == 1
    event = ep.induced_events[0]
    assert event.time == 1.5
    assert event.merged == (1, 3)
    assert event.blocks_before == 2
    assert ep.induced_partition_at(1.2) == Partition.singletons(2)
    assert ep.induced_partition_at(2.0) == Partition.one_block(2)


def test_all_selector(four_path):
    ep = embed(four_path, 0.6, selector="all")
    assert ep.representatives == (1, 3, 4)
    assert [e.merged for e in ep.induced_events] == [(3, 4), (1, 3)]
    assert [e.blocks_before for e in ep.induced_events] == [3, 2]
    assert induced_block_counts(ep, [0.6, 0.8, 2.0]) == [3, 2, 1]
    assert ep.induced_partition_at(0.8) == Partition.parse("1|2,3")


def test_too_few_selected_blocks(four_path):
    with pytest.raises(ValueError):
        embed(four_path, 0.6)
    with pytest.raises(ValueError):
        embed(four_path, 0.1)
    assert first_induced_event(four_path, 0.6) is None


def test_unknown_selector(four_path):
    with pytest.raises(ValueError):
        embed(four_path, 1.0, selector="largest")


def test_events_between_unselected_blocks_are_dropped(six_path):
    ep = embed(six_path, 1.0)
    assert ep.representatives == (1, 3)
    assert [e.time for e in ep.induced_events] == [1.4]
    assert induced_block_counts(ep, [1.3, 1.5]) == [2, 1]


def test_first_induced_event(six_path):
    l, wait, k = first_induced_event(six_path, 1.0)
    assert (l, k) == (2, 2)
    assert wait == pytest.approx(0.4)


def test_state_replay_when_not_a_snapshot(four_path):
    assert embed(four_path, 1.2).representatives == embed(four_path, 1.0).representatives


def test_induced_events_are_base_events(uniform):
    for r in range(20):
        traj = simulate_chain(uniform, 7, math.inf, snapshot_times=[0.2], rng=split(2, r))
        try:
            ep = embed(traj, 0.2, selector="all")
        except ValueError:
            continue
        base_times = {e.time for e in traj.events}
        assert all(e.time in base_times for e in ep.induced_events)
        counts = induced_block_counts(ep, [math.inf])
        assert counts == [1]


# ---------- 规模卡方 ----------

def test_size_chisquare_single_category():
    assert _size_chisquare([2, 2, 2], np.array([1.0, 0.0])) == (0.0, 1.0)


def test_size_chisquare_impossible_size():
    statistic, p_value = _size_chisquare([2, 3], np.array([1.0, 0.0]))
    assert statistic == math.inf
    assert p_value == 0.0


# ---------- 统计检验 ----------

@pytest.mark.statistical
def test_kingman_induced_rates(kingman):
    T = median_first_event_time(kingman, 6)
    report = induced_rate_test(kingman, 6, T, 4000, split(21), selector="all")
    assert report.strata
    assert {s["l"] for s in report.strata} >= {5, 6}
    assert report.passed(ALPHA), report.strata


@pytest.mark.statistical
def test_kingman_induced_rates_non_singleton(kingman):
    T = median_first_event_time(kingman, 6)
    report = induced_rate_test(kingman, 6, T, 20_000, split(25))
    strata = {s["l"]: s for s in report.strata}
    assert 2 in strata
    assert strata[2]["samples"] >= 1000
    assert report.passed(ALPHA), report.strata


@pytest.mark.statistical
def test_beta_induced_rates():
    m = MeasureSpec.beta(1.0)
    report = induced_rate_test(m, 5, 0.3, 3000, split(22), selector="all")
    assert report.strata
    assert report.passed(ALPHA), report.strata


def test_induced_rate_test_validation(uniform, rng):
    with pytest.raises(ValueError):
        induced_rate_test(uniform, 8, 0.1, 10, rng)
    with pytest.raises(ValueError):
        induced_rate_test(uniform, 4, -1.0, 10, rng)
    report = induced_rate_test(uniform, 4, 0.1, 5, rng, min_samples=50)
    assert report.strata == []
    assert all(s["samples"] < 50 for s in report.skipped)


def test_identity_embedding(uniform, rng):
    traj = simulate_chain(uniform, 5, math.inf, snapshot_times=[0.0], rng=rng)
    ep = embed(traj, 0.0, selector="all")
    assert ep.representatives == (1, 2, 3, 4, 5)
    assert [e.time for e in ep.induced_events] == [e.time for e in traj.events]
    assert [e.blocks_before for e in ep.induced_events] == [5] + [e.blocks_after for e in traj.events[:-1]]
