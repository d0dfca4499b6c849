"""
有限限制链模块
{1..n} 上 Λ-合并过程的精确连续时间 Markov 链（Gillespie），以及小 n 的生成元矩阵预言
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from src.config import MAX_ORACLE_N
from src.measures import MeasureSpec, event_rates, merger_rate, total_rate
from src.partition import Partition, enumerate_partitions, merge

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainEvent:
    """一次合并：时刻、规模、被合并块的编号（合并前的规范编号）、合并后的块数"""
    time: float
    k: int
    merged: Tuple[int, ...]
    blocks_after: int


@dataclass
class ChainTrajectory:
    """链的一条轨迹"""
    n: int
    t_end: float
    events: List[ChainEvent] = field(default_factory=list)
    snapshots: Dict[float, Partition] = field(default_factory=dict)
    frozen: bool = False

    def state_at(self, t: float) -> Partition:
        """回放 time <= t 的事件得到 t 时刻的划分"""
        state = Partition.singletons(self.n)
        for event in self.events:
            if event.time > t:
                break
            state = merge(state, event.merged)
        return state

    def block_count_at(self, t: float) -> int:
        count = self.n
        for event in self.events:
            if event.time > t:
                break
            count = event.blocks_after
        return count


def _sample_subset(i: int, k: int, rng: np.random.Generator) -> Tuple[int, ...]:
    """部分 Fisher-Yates：从 i 个块中均匀取 k 个"""
    pool = list(range(i))
    for j in range(k):
        r = j + int(rng.integers(i - j))
        pool[j], pool[r] = pool[r], pool[j]
    return tuple(sorted(pool[:k]))


def simulate_chain(
    m: MeasureSpec,
    n: int,
    t_end: float,
    snapshot_times: Sequence[float] = (),
    rng: np.random.Generator = None,
) -> ChainTrajectory:
    """
    模拟 Π^(n)

    i 个块时等待时间 ~ Exp(R_i)，合并规模 k 的概率为 C(i,k) λ_{i,k} / R_i，
    参与合并的 k 个块均匀选取。

    Args:
        m: 测度
        n: 基集大小，>= 2
        t_end: 终止时刻，可为 inf（合并到一个块或链冻结时停止）
        snapshot_times: 需要记录划分的时刻，须 <= t_end 且有限
        rng: 随机流

    Returns:
        ChainTrajectory
    """
    if int(n) != n or n < 2:
        raise ValueError(f"n 需为 >= 2 的整数，实际 {n}")
    if not t_end >= 0.0:
        raise ValueError(f"t_end 需 >= 0，实际 {t_end}")
    times = sorted(float(s) for s in snapshot_times)
    if times and (times[0] < 0.0 or times[-1] > t_end or not math.isfinite(times[-1])):
        raise ValueError(f"快照时刻需在 [0, t_end] 内且有限: {times}")
    if rng is None:
        raise ValueError("需要随机流 rng")

    n = int(n)
    traj = ChainTrajectory(n=n, t_end=float(t_end))
    state = Partition.singletons(n)
    t = 0.0
    pending = list(times)

    while True:
        i = len(state)
        if i < 2:
            break
        rate = total_rate(m, i)
        if rate <= 0.0:
            logger.info(f"总速率为零，链在 {i} 个块处冻结 ({m.describe()})")
            traj.frozen = True
            break

        t_next = t + rng.exponential(1.0 / rate)
        while pending and pending[0] < t_next:
            traj.snapshots[pending.pop(0)] = state
        if t_next > t_end:
            break

        rates = event_rates(m, i)
        k = 2 + int(np.searchsorted(np.cumsum(rates), rng.random() * rates.sum(), side="right"))
        k = min(k, i)
        merged = _sample_subset(i, k, rng)
        state = merge(state, merged)
        t = t_next
        traj.events.append(ChainEvent(time=t, k=k, merged=merged, blocks_after=i - k + 1))

    for s in pending:
        traj.snapshots[s] = state
    return traj


def trajectory_records(traj: ChainTrajectory) -> List[Dict]:
    """逐行导出：时刻、规模、合并的块编号、合并后的块数"""
    return [
        {"time": e.time, "k": e.k, "merged": list(e.merged), "blocks": e.blocks_after}
        for e in traj.events
    ]


# ============================================================================
# 生成元矩阵预言（n <= 7）
# ============================================================================

def _check_oracle_n(n: int) -> None:
    if int(n) != n or not 1 <= n <= MAX_ORACLE_N:
        raise ValueError(f"生成元矩阵只支持 1 <= n <= {MAX_ORACLE_N}，实际 {n}")


def generator_matrix(m: MeasureSpec, n: int) -> Tuple[List[Partition], np.ndarray]:
    """
    枚举 P_n 并构造稠密生成元

    Returns:
        (状态列表, Q)，Q[a, b] 为 a -> b 的速率，对角线为负行和
    """
    _check_oracle_n(n)
    states = enumerate_partitions(n)
    index = {p: j for j, p in enumerate(states)}
    q = np.zeros((len(states), len(states)))

    for a, p in enumerate(states):
        i = len(p)
        for k in range(2, i + 1):
            rate = merger_rate(m, i, k)
            if rate == 0.0:
                continue
            for subset in itertools.combinations(range(i), k):
                q[a, index[merge(p, subset)]] += rate
        q[a, a] = -q[a].sum()
    return states, q


def rate_matrix(m: MeasureSpec, n: int) -> Dict[Tuple[Partition, Partition], float]:
    """生成元的字典形式（只含非零项，包括对角线）"""
    states, q = generator_matrix(m, n)
    rows, cols = np.nonzero(q)
    return {(states[a], states[b]): float(q[a, b]) for a, b in zip(rows, cols)}


def transition_probabilities(m: MeasureSpec, n: int, t: float) -> Dict[Partition, float]:
    """从全单点划分出发，t 时刻的分布（expm 的对应行）"""
    if not t >= 0.0:
        raise ValueError(f"t 需 >= 0，实际 {t}")
    states, q = generator_matrix(m, n)
    row = linalg.expm(q * t)[states.index(Partition.singletons(n))]
    return {p: float(max(row[j], 0.0)) for j, p in enumerate(states)}


def uniformized_probabilities(
    m: MeasureSpec,
    n: int,
    t: float,
    tol: float = 1e-12,
) -> Dict[Partition, float]:
    """
    一致化交叉检验：P(t) = Σ_j Poisson(j; q t) (I + Q/q)^j，截断到剩余质量 < tol
    """
    if not t >= 0.0:
        raise ValueError(f"t 需 >= 0，实际 {t}")
    states, q = generator_matrix(m, n)
    rate = float(-np.min(np.diag(q)))
    vector = np.zeros(len(states))
    vector[states.index(Partition.singletons(n))] = 1.0
    if rate == 0.0 or t == 0.0:
        return {p: float(vector[j]) for j, p in enumerate(states)}

    step = np.eye(len(states)) + q / rate
    mean = rate * t
    last = int(stats.poisson.ppf(1.0 - tol, mean)) + 1
    weights = stats.poisson.pmf(np.arange(last + 1), mean)

    result = np.zeros(len(states))
    for weight in weights:
        result += weight * vector
        vector = vector @ step
    return {p: float(result[j]) for j, p in enumerate(states)}


def median_first_event_time(m: MeasureSpec, n: int) -> float:
    """n 个块时首次合并时刻的中位数 ln 2 / R_n"""
    rate = total_rate(m, n)
    if rate <= 0.0:
        raise ValueError("总速率为零，首次合并时刻无中位数")
    return math.log(2.0) / rate
