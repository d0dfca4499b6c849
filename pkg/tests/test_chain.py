"""
有限限制链：Gillespie 模拟与生成元矩阵预言
"""
import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from src.chain import (
    generator_matrix,
    median_first_event_time,
    rate_matrix,
    simulate_chain,
    trajectory_records,
    transition_probabilities,
    uniformized_probabilities,
)
from src.harness import pooled_chisquare
from src.measures import MeasureSpec, event_rates, total_rate
from src.partition import Partition, restrict
from src.rng import split

ALPHA = 0.001


# ---------- 轨迹结构 ----------

def test_trajectory_is_consistent(uniform, rng):
    traj = simulate_chain(uniform, 8, math.inf, rng=rng)
    times = [e.time for e in traj.events]
    assert times == sorted(times)
    blocks = [8] + [e.blocks_after for e in traj.events]
    for before, after, event in zip(blocks, blocks[1:], traj.events):
        assert after == before - event.k + 1
    assert blocks[-1] == 1
    assert traj.state_at(math.inf) == Partition.one_block(8)
    assert traj.block_count_at(0.0) == 8


def test_snapshots_match_replay(uniform, rng):
    traj = simulate_chain(uniform, 6, 2.0, snapshot_times=[0.0, 0.5, 2.0], rng=rng)
    assert sorted(traj.snapshots) == [0.0, 0.5, 2.0]
    for s, state in traj.snapshots.items():
        assert state == traj.state_at(s)
        assert len(state) == traj.block_count_at(s)
    assert all(e.time <= 2.0 for e in traj.events)


def test_same_stream_same_trajectory(uniform):
    a = simulate_chain(uniform, 10, 3.0, rng=split(7, 3))
    b = simulate_chain(uniform, 10, 3.0, rng=split(7, 3))
    assert trajectory_records(a) == trajectory_records(b)


def test_null_measure_freezes(rng):
    null = MeasureSpec.from_density([0.0, 1.0], [[0.0]])
    traj = simulate_chain(null, 4, math.inf, rng=rng)
    assert traj.frozen
    assert traj.events == []


def test_kingman_merges_pairs_only(kingman, rng):
    traj = simulate_chain(kingman, 12, math.inf, rng=rng)
    assert {e.k for e in traj.events} == {2}
    assert len(traj.events) == 11


@pytest.mark.parametrize("kwargs", [
    {"n": 1, "t_end": 1.0},
    {"n": 2.5, "t_end": 1.0},
    {"n": 4, "t_end": -1.0},
    {"n": 4, "t_end": 1.0, "snapshot_times": [2.0]},
    {"n": 4, "t_end": math.inf, "snapshot_times": [math.inf]},
])
def test_invalid_arguments(uniform, rng, kwargs):
    with pytest.raises(ValueError):
        simulate_chain(uniform, rng=rng, **kwargs)


def test_missing_rng_is_rejected(uniform):
    with pytest.raises(ValueError):
        simulate_chain(uniform, 4, 1.0)


def test_trajectory_records(uniform, rng):
    traj = simulate_chain(uniform, 5, math.inf, rng=rng)
    records = trajectory_records(traj)
    assert len(records) == len(traj.events)
    assert set(records[0]) == {"time", "k", "merged", "blocks"}


# ---------- 生成元矩阵 ----------

def test_generator_rows_sum_to_zero():
    for m in (MeasureSpec.beta(0.5), MeasureSpec.beta(1.0), MeasureSpec.beta(2.0)):
        for n in range(1, 6):
            _, q = generator_matrix(m, n)
            np.testing.assert_allclose(q.sum(axis=1), 0.0, atol=1e-12)


def test_kingman_generator(kingman):
    rates = rate_matrix(kingman, 3)
    start = Partition.singletons(3)
    assert rates[(start, start)] == pytest.approx(-3.0)
    assert rates[(start, Partition.parse("1,2|3"))] == pytest.approx(1.0)
    assert (start, Partition.one_block(3)) not in rates


def test_oracle_size_limit(uniform):
    with pytest.raises(ValueError):
        generator_matrix(uniform, 8)


def test_transition_probabilities_at_zero(uniform):
    probs = transition_probabilities(uniform, 4, 0.0)
    assert probs[Partition.singletons(4)] == pytest.approx(1.0)
    assert sum(probs.values()) == pytest.approx(1.0)


def test_kingman_unmerged_probability(kingman):
    probs = transition_probabilities(kingman, 4, 0.3)
    assert probs[Partition.singletons(4)] == pytest.approx(math.exp(-6 * 0.3), rel=1e-10)


@pytest.mark.parametrize("n, t", [(3, 0.4), (4, 1.0), (5, 0.25)])
def test_expm_matches_uniformization(n, t):
    m = MeasureSpec.beta(1.3)
    direct = transition_probabilities(m, n, t)
    uniformized = uniformized_probabilities(m, n, t)
    for p, value in direct.items():
        assert uniformized[p] == pytest.approx(value, abs=1e-9)


def test_median_first_event_time(kingman, uniform):
    assert median_first_event_time(kingman, 4) == pytest.approx(math.log(2.0) / 6.0)
    assert median_first_event_time(uniform, 5) == pytest.approx(math.log(2.0) / 4.0)


# ---------- 统计检验 ----------

@pytest.mark.statistical
def test_unmerged_probability(uniform):
    replicates = 20_000
    unmerged = 0
    for r in range(replicates):
        traj = simulate_chain(uniform, 2, 1.0, rng=split(11, r))
        unmerged += not traj.events
    p_hat = unmerged / replicates
    se = math.sqrt(p_hat * (1.0 - p_hat) / replicates)
    assert abs(p_hat - math.exp(-1.0)) <= 3 * se


@pytest.mark.statistical
def test_partition_distribution_matches_generator():
    m = MeasureSpec.beta(1.5)
    t = 0.6
    counts = Counter()
    for r in range(10_000):
        traj = simulate_chain(m, 3, t, snapshot_times=[t], rng=split(5, r))
        counts[traj.snapshots[t].to_text()] += 1
    probs = {p.to_text(): v for p, v in transition_probabilities(m, 3, t).items()}
    _, p_value = pooled_chisquare(dict(counts), probs)
    assert p_value > ALPHA, f"chi-square p={p_value:.4g}"


@pytest.mark.statistical
def test_first_merger_size_distribution(uniform):
    n = 5
    sizes = Counter()
    waits = []
    for r in range(10_000):
        traj = simulate_chain(uniform, n, math.inf, rng=split(9, r))
        sizes[traj.events[0].k] += 1
        waits.append(traj.events[0].time)

    rates = event_rates(uniform, n)
    expected = rates / rates.sum() * 10_000
    observed = [sizes[k] for k in range(2, n + 1)]
    _, p_value = stats.chisquare(observed, expected)
    assert p_value > ALPHA, f"chi-square p={p_value:.4g}"

    _, p_value = stats.kstest(waits, "expon", args=(0.0, 1.0 / total_rate(uniform, n)))
    assert p_value > ALPHA, f"KS p={p_value:.4g}"


# ---------- 随机流 ----------

def test_split_streams_are_reproducible_and_distinct():
    a = split(1, 0, 0).random(5)
    np.testing.assert_array_equal(a, split(1, 0, 0).random(5))
    assert not np.array_equal(a, split(1, 0, 1).random(5))
    assert not np.array_equal(a, split(1, 1, 0).random(5))
    with pytest.raises(ValueError):
        split(-1)


def test_zero_horizon_snapshot(uniform, rng):
    traj = simulate_chain(uniform, 4, 0.0, snapshot_times=[0.0], rng=rng)
    assert traj.events == []
    assert traj.snapshots[0.0] == Partition.singletons(4)


def test_uniform_generator_three_elements(uniform):
    rates = rate_matrix(uniform, 3)
    start = Partition.singletons(3)
    assert rates[(start, Partition.parse("1|2,3"))] == pytest.approx(0.5)
    assert rates[(start, Partition.one_block(3))] == pytest.approx(0.5)


def test_long_horizon_concentrates_on_one_block(uniform):
    probs = transition_probabilities(uniform, 4, 50.0)
    assert probs[Partition.one_block(4)] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.statistical
def test_restriction_consistency(uniform):
    replicates = 20_000
    unmerged = 0
    for r in range(replicates):
        traj = simulate_chain(uniform, 3, 1.0, snapshot_times=[1.0], rng=split(13, r))
        unmerged += restrict(traj.snapshots[1.0], 2) == Partition.singletons(2)
    p_hat = unmerged / replicates
    se = math.sqrt(p_hat * (1.0 - p_hat) / replicates)
    assert abs(p_hat - math.exp(-1.0)) <= 3 * se
