"""
嵌入过程模块
在参考时刻 T 从每个选中块取一个代表元（最小元素），由基础轨迹在 T 之后的事件导出诱导过程，
并检验诱导过程的首次事件律与新的 l 块 Λ-合并过程一致
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src.chain import ChainTrajectory, median_first_event_time, simulate_chain
from src.config import MAX_ORACLE_N, MIN_EXPECTED_COUNT, MIN_STRATUM_SAMPLES
from src.measures import MeasureSpec, event_rates, total_rate
from src.partition import Partition, merge

logger = logging.getLogger(__name__)

SELECTORS = ("non-singleton", "all")

__all__ = [
    "InducedEvent",
    "EmbeddedProcess",
    "embed",
    "induced_block_counts",
    "first_induced_event",
    "induced_rate_test",
    "stratified_tests",
    "median_first_event_time",
]


@dataclass(frozen=True)
class InducedEvent:
    """诱导事件：时刻、参与合并的诱导块（以其最小代表元标识）、事件前的诱导块数"""
    time: float
    merged: Tuple[int, ...]
    blocks_before: int


@dataclass
class EmbeddedProcess:
    base_trajectory: ChainTrajectory
    T: float
    selector: str
    representatives: Tuple[int, ...]
    induced_events: List[InducedEvent] = field(default_factory=list)

    def induced_partition_at(self, t: float) -> Partition:
        """t 时刻诱导划分，元素为代表元的序号 1..l"""
        index = {r: j for j, r in enumerate(self.representatives)}
        state = Partition.singletons(len(self.representatives))
        for event in self.induced_events:
            if event.time > t:
                break
            which = {state.block_of(index[r] + 1) for r in event.merged}
            state = merge(state, which)
        return state


def _select_blocks(state: Partition, selector: str) -> List[Tuple[int, ...]]:
    if selector == "non-singleton":
        return [b for b in state.blocks if len(b) > 1]
    if selector == "all":
        return list(state.blocks)
    raise ValueError(f"未知选择器: {selector}，可选: {', '.join(SELECTORS)}")


def embed(traj: ChainTrajectory, T: float, selector: str = "non-singleton") -> EmbeddedProcess:
    """
    构造诱导过程

    Args:
        traj: 基础轨迹
        T: 参考时刻（优先取轨迹中的快照，否则回放事件）
        selector: "non-singleton"（默认）或 "all"

    Returns:
        EmbeddedProcess
    """
    state = traj.snapshots.get(T)
    if state is None:
        state = traj.state_at(T)
    blocks = _select_blocks(state, selector)
    if len(blocks) < 2:
        raise ValueError(f"T={T} 时选中的块少于 2 个（{len(blocks)}），没有诱导动力学")

    reps = tuple(sorted(b[0] for b in blocks))
    rep_arr = np.array(reps) - 1
    process = EmbeddedProcess(base_trajectory=traj, T=T, selector=selector, representatives=reps)

    induced_count = len(reps)
    for event in traj.events:
        if event.time <= T:
            continue
        owner = state.labels[rep_arr]
        touched = np.isin(owner, event.merged)
        groups = {}
        for r, o in zip(np.array(reps)[touched].tolist(), owner[touched].tolist()):
            groups.setdefault(o, r)
        state = merge(state, event.merged)
        if len(groups) < 2:
            logger.debug(f"t={event.time:.6g} 的事件不涉及两个代表元块，丢弃")
            continue
        merged = tuple(sorted(groups.values()))
        process.induced_events.append(InducedEvent(event.time, merged, induced_count))
        induced_count -= len(merged) - 1

    return process


def induced_block_counts(ep: EmbeddedProcess, times: Sequence[float]) -> List[int]:
    """各时刻含代表元的基础块个数"""
    counts = []
    for t in times:
        count = len(ep.representatives)
        for event in ep.induced_events:
            if event.time > t:
                break
            count -= len(event.merged) - 1
        counts.append(count)
    return counts


def first_induced_event(
    traj: ChainTrajectory,
    T: float,
    selector: str = "non-singleton",
) -> Optional[Tuple[int, float, int]]:
    """
    首次诱导事件 (l, 等待时间, 规模)；选中块少于 2 个或此后没有诱导事件时返回 None
    """
    state = traj.snapshots.get(T)
    if state is None:
        state = traj.state_at(T)
    if len(_select_blocks(state, selector)) < 2:
        return None
    ep = embed(traj, T, selector)
    if not ep.induced_events:
        return None
    first = ep.induced_events[0]
    return len(ep.representatives), first.time - T, len(first.merged)


# ============================================================================
# 诱导速率检验
# ============================================================================

def _size_chisquare(sizes: List[int], probs: np.ndarray) -> Tuple[float, float]:
    """
    合并规模的卡方检验；期望频数过小的类别并入尾部，只剩一个类别时退化处理

    Returns:
        (统计量, p 值)
    """
    ks = np.arange(2, 2 + probs.size)
    counts = np.array([sizes.count(int(k)) for k in ks], dtype=float)
    if len(sizes) != counts.sum() or np.any(counts[probs == 0.0] > 0):
        return float("inf"), 0.0

    support = probs > 0.0
    observed, expected = counts[support], probs[support] * len(sizes)

    # 从尾部合并期望频数 < MIN_EXPECTED_COUNT 的类别
    while expected.size > 1 and expected[-1] < MIN_EXPECTED_COUNT:
        observed = np.concatenate((observed[:-2], [observed[-2] + observed[-1]]))
        expected = np.concatenate((expected[:-2], [expected[-2] + expected[-1]]))
    if expected.size <= 1:
        return 0.0, 1.0

    expected *= observed.sum() / expected.sum()
    result = stats.chisquare(observed, expected)
    return float(result.statistic), float(result.pvalue)


@dataclass
class InducedRateReport:
    """诱导首次事件律的分层检验结果"""
    n: int
    T: float
    replicates: int
    strata: List[Dict] = field(default_factory=list)
    skipped: List[Dict] = field(default_factory=list)

    def passed(self, alpha: float) -> bool:
        return all(s["ks_pvalue"] > alpha and s["chi2_pvalue"] > alpha for s in self.strata)


def induced_rate_test(
    m: MeasureSpec,
    n: int,
    T: float,
    replicates: int,
    rng: np.random.Generator,
    selector: str = "non-singleton",
    min_samples: int = MIN_STRATUM_SAMPLES,
) -> InducedRateReport:
    """
    按 T 时刻选中块数 l 分层，检验 (首次诱导事件时刻 - T, 规模) 的分布

    时刻与 Exp(R_l) 做 KS 检验，规模与 C(l,k) λ_{l,k} / R_l 做卡方检验。
    样本不足 min_samples 的分层跳过并记录。
    """
    if int(n) != n or not 2 <= n <= MAX_ORACLE_N:
        raise ValueError(f"诱导速率检验需要 2 <= n <= {MAX_ORACLE_N}，实际 {n}")
    if int(replicates) != replicates or replicates < 1:
        raise ValueError(f"replicates 需 >= 1，实际 {replicates}")
    if not T >= 0.0:
        raise ValueError(f"T 需 >= 0，实际 {T}")

    samples: Dict[int, List[Tuple[float, int]]] = {}
    for _ in range(int(replicates)):
        traj = simulate_chain(m, n, float("inf"), [T], rng)
        first = first_induced_event(traj, T, selector)
        if first is not None:
            l, wait, k = first
            samples.setdefault(l, []).append((wait, k))

    report = InducedRateReport(n=int(n), T=float(T), replicates=int(replicates))
    report.strata, report.skipped = stratified_tests(m, samples, min_samples)
    return report


def stratified_tests(
    m: MeasureSpec,
    samples: Dict[int, List[Tuple[float, int]]],
    min_samples: int = MIN_STRATUM_SAMPLES,
) -> Tuple[List[Dict], List[Dict]]:
    """
    对每个分层 l 的 (等待时间, 规模) 样本做 KS 与卡方检验

    Returns:
        (已检验分层, 跳过的分层)
    """
    strata, skipped = [], []
    for l in sorted(samples):
        rows = samples[l]
        if len(rows) < min_samples:
            skipped.append({"l": l, "samples": len(rows)})
            logger.info(f"l={l} 分层只有 {len(rows)} 个样本，跳过")
            continue
        rate = total_rate(m, l)
        waits = np.array([w for w, _ in rows])
        ks = stats.kstest(waits, "expon", args=(0.0, 1.0 / rate))
        probs = np.asarray(event_rates(m, l)) / rate
        chi2, chi2_p = _size_chisquare([k for _, k in rows], probs)
        strata.append({
            "l": l,
            "samples": len(rows),
            "rate": rate,
            "mean_wait": float(waits.mean()),
            "ks_statistic": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue),
            "chi2_statistic": chi2,
            "chi2_pvalue": chi2_p,
        })
    return strata, skipped
