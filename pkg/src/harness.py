"""
Monte Carlo 实验模块
管理副本与随机流，汇总均值/标准误，执行预言对照与二分法证据实验

副本之间互相独立，汇总器按副本编号合并，因此任意并行度得到的报告逐字节相同。
"""
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from functools import reduce
from multiprocessing import Pool
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src import __version__, rng
from src.chain import median_first_event_time, simulate_chain, transition_probabilities
from src.config import (
    DEFAULT_EPS_GRID,
    DEFAULT_THRESHOLDS,
    MAX_ORACLE_N,
    MIN_EXPECTED_COUNT,
    MIN_STRATUM_SAMPLES,
    MONOTONE_FRACTION,
    SE_BAND,
    SIGNIFICANCE,
    STABILIZE_BELOW,
    SUBSTREAM_EVENTS,
    SUBSTREAM_LOCATIONS,
    SUBSTREAM_PAINTBOX,
)
from src.embed import SELECTORS, first_induced_event, stratified_tests
from src.flow import campbell_dust_mean, lower_bound_check, product_of_complements, run_flow
from src.measures import (
    InconclusiveError,
    MeasureSpec,
    classify,
    moment,
    nu_interval_mass,
    total_rate,
)

logger = logging.getLogger(__name__)

MODES = ("chain", "flow", "embed")
LOWER_BOUND_LEVELS = (1, 2, 5, 10, 100)


def stable_json(obj) -> str:
    """键排序、无空白的 JSON，用于哈希与逐字节可复现的输出"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def level_key(value: float) -> str:
    """统计量名里的数值后缀"""
    return repr(float(value))


# ============================================================================
# 实验配置
# ============================================================================

@dataclass(frozen=True)
class ExperimentConfig:
    """一次 Monte Carlo 实验的完整配置（workers 不影响结果，不计入哈希）"""
    measure: MeasureSpec
    mode: str = "flow"
    n: int = 2
    t: float = 1.0
    eps_grid: Tuple[float, ...] = DEFAULT_EPS_GRID
    thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS
    replicates: int = 1000
    seed: int = 0
    snapshot_times: Tuple[float, ...] = ()
    selector: str = "non-singleton"
    oracle: bool = True
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"未知模式: {self.mode}，可选: {', '.join(MODES)}")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ValueError(f"replicates 需 >= 1，实际 {self.replicates}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed 需为非负整数，实际 {self.seed}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValueError(f"workers 需 >= 1，实际 {self.workers}")
        if not (self.t > 0.0 and math.isfinite(self.t)):
            raise ValueError(f"t 需为正有限数，实际 {self.t}")
        if self.mode == "flow":
            self._check_flow()
        else:
            if int(self.n) != self.n or self.n < 2:
                raise ValueError(f"{self.mode} 模式需要 n >= 2，实际 {self.n}")
            if any(not 0.0 <= s <= self.t for s in self.snapshot_times):
                raise ValueError(f"快照时刻需在 [0, t] 内: {self.snapshot_times}")
        if self.selector not in SELECTORS:
            raise ValueError(f"未知选择器: {self.selector}")

    def _check_flow(self) -> None:
        grid = self.eps_grid
        if not grid:
            raise ValueError("eps 网格不能为空")
        if any(not 0.0 < e < 1.0 for e in grid):
            raise ValueError(f"eps 需在 (0, 1) 内: {grid}")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ValueError(f"eps 网格需严格递减: {grid}")
        if any(not 0.0 <= h <= 1.0 for h in self.thresholds):
            raise ValueError(f"阈值需在 [0, 1] 内: {self.thresholds}")
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"flow 模式的 paintbox 样本数需 >= 0，实际 {self.n}")

    @property
    def snapshots(self) -> Tuple[float, ...]:
        """chain 模式的快照时刻，默认只取 t"""
        return tuple(sorted(set(self.snapshot_times))) or (float(self.t),)

    def to_dict(self) -> Dict:
        return {
            "measure": self.measure.to_dict(),
            "mode": self.mode,
            "n": int(self.n),
            "t": float(self.t),
            "eps_grid": [float(e) for e in self.eps_grid],
            "thresholds": [float(h) for h in self.thresholds],
            "replicates": int(self.replicates),
            "seed": int(self.seed),
            "snapshot_times": [float(s) for s in self.snapshot_times],
            "selector": self.selector,
            "oracle": bool(self.oracle),
        }

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(stable_json(self.to_dict()).encode("utf-8")).hexdigest()


# ============================================================================
# 单个副本
# ============================================================================

def _chain_replicate(config: ExperimentConfig, index: int) -> Dict:
    stream = rng.split(config.seed, index, SUBSTREAM_EVENTS)
    snapshots = config.snapshots
    traj = simulate_chain(config.measure, config.n, config.t, snapshots, stream)
    values, labels = {"events": float(len(traj.events))}, {}
    for s in snapshots:
        state = traj.snapshots[s]
        key = level_key(s)
        values[f"blocks@{key}"] = float(len(state))
        values[f"singletons@{key}"] = float(state.singleton_count())
        values[f"nonsingletons@{key}"] = float(state.atomic_count())
        values[f"unmerged@{key}"] = float(len(state) == config.n)
        labels[f"partition@{key}"] = state.to_text()
    return {"values": values, "labels": labels}


def _flow_replicate(config: ExperimentConfig, index: int) -> Dict:
    uniforms = None
    if config.n > 0:
        uniforms = rng.split(config.seed, index, SUBSTREAM_PAINTBOX).random(int(config.n))
    result = run_flow(
        config.measure,
        config.t,
        config.eps_grid,
        config.thresholds,
        rng.split(config.seed, index, SUBSTREAM_EVENTS),
        rng.split(config.seed, index, SUBSTREAM_LOCATIONS),
        uniforms=uniforms,
    )

    values = {}
    for (eps, dust), (_, points), (_, holes), (_, case_a), (_, census) in zip(
        result.dust_by_level,
        result.point_count_by_level,
        result.hole_count_by_level,
        result.case_a_by_level,
        result.census_by_level,
    ):
        key = level_key(eps)
        values[f"dust@{key}"] = dust
        values[f"points@{key}"] = float(points)
        values[f"holes@{key}"] = float(holes)
        values[f"case_a@{key}"] = float(case_a)
        for h, count in census:
            values[f"holes>={level_key(h)}@{key}"] = float(count)
    for eps, partition in result.partitions:
        key = level_key(eps)
        values[f"blocks@{key}"] = float(len(partition))
        values[f"singletons@{key}"] = float(partition.singleton_count())
        values[f"nonsingletons@{key}"] = float(partition.atomic_count())

    counts = [c for _, c in result.hole_count_by_level]
    values["monotone"] = float(all(b >= a for a, b in zip(counts, counts[1:])))
    values["bounded"] = float(all(
        h <= p for (_, h), (_, p) in zip(result.hole_count_by_level, result.point_count_by_level)
    ))
    product = product_of_complements(e.x for e in result.events)
    values["dust_product_error"] = abs(result.bridge.dust() - product)
    rows = lower_bound_check(result.bridge, result.events, LOWER_BOUND_LEVELS)
    values["lower_bound"] = float(all(r["ok"] for r in rows))
    return {"values": values, "labels": {}}


def _embed_replicate(config: ExperimentConfig, index: int) -> Dict:
    stream = rng.split(config.seed, index, SUBSTREAM_EVENTS)
    T = _embed_time(config)
    traj = simulate_chain(config.measure, config.n, float("inf"), [T], stream)
    first = first_induced_event(traj, T, config.selector)
    if first is None:
        return {"values": {"embedded": 0.0}, "labels": {}}
    l, wait, k = first
    return {
        "values": {"embedded": 1.0, "l": float(l), "wait": wait, "k": float(k)},
        "labels": {"stratum": str(l)},
    }


def _embed_time(config: ExperimentConfig) -> float:
    if config.snapshot_times:
        return float(config.snapshot_times[0])
    return median_first_event_time(config.measure, config.n)


REPLICATE_RUNNERS = {
    "chain": _chain_replicate,
    "flow": _flow_replicate,
    "embed": _embed_replicate,
}


# ============================================================================
# 汇总
# ============================================================================

@dataclass(frozen=True)
class McStatistic:
    name: str
    mean: float
    se: float
    count: int


@dataclass
class McReport:
    """实验报告；运行时间只写日志，不进入报告"""
    version: str
    config: Dict
    config_hash: str
    seed: int
    behaviour: str
    statistics: List[McStatistic] = field(default_factory=list)
    distributions: Dict[str, Dict[str, int]] = field(default_factory=dict)
    oracles: List[Dict] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    records: List[Dict] = field(default_factory=list)

    def statistic(self, name: str) -> McStatistic:
        for s in self.statistics:
            if s.name == name:
                return s
        raise KeyError(name)

    def passed(self) -> bool:
        return all(o["passed"] for o in self.oracles)

    def header(self) -> Dict:
        return {
            "version": self.version,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "rng": rng.describe(),
            "behaviour": self.behaviour,
            "config": self.config,
        }


def _mean_se(values: Sequence[float]) -> Tuple[float, float]:
    """样本均值与标准误 sample-std / sqrt(count)"""
    count = len(values)
    mean = math.fsum(values) / count
    if count < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (count - 1)
    return mean, math.sqrt(var / count)


@dataclass
class Accumulator:
    """按副本编号存放的记录；合并是不相交并集，因而满足结合律与交换律"""
    records: Dict[int, Dict] = field(default_factory=dict)

    def add(self, index: int, record: Dict) -> None:
        if index in self.records:
            raise ValueError(f"副本 {index} 重复")
        self.records[index] = record

    def merge(self, other: "Accumulator") -> "Accumulator":
        overlap = self.records.keys() & other.records.keys()
        if overlap:
            raise ValueError(f"副本区间重叠: {sorted(overlap)[:5]}")
        merged = Accumulator(dict(self.records))
        merged.records.update(other.records)
        return merged

    __add__ = merge

    def __len__(self) -> int:
        return len(self.records)

    def finalize(self, config: ExperimentConfig) -> McReport:
        """按副本编号顺序计算统计量，结果与合并顺序无关"""
        ordered = [self.records[i] for i in sorted(self.records)]
        report = McReport(
            version=__version__,
            config=config.to_dict(),
            config_hash=config.config_hash,
            seed=int(config.seed),
            behaviour="?",
        )

        names = sorted({name for r in ordered for name in r["values"]})
        for name in names:
            values = [r["values"][name] for r in ordered if name in r["values"]]
            mean, se = _mean_se(values)
            report.statistics.append(McStatistic(name, mean, se, len(values)))

        for name in sorted({name for r in ordered for name in r["labels"]}):
            counts: Dict[str, int] = {}
            for r in ordered:
                if name in r["labels"]:
                    label = r["labels"][name]
                    counts[label] = counts.get(label, 0) + 1
            report.distributions[name] = dict(sorted(counts.items()))

        report.records = [
            {"index": i, **self.records[i]} for i in sorted(self.records)
        ]
        return report


def run_partial(config: ExperimentConfig, indices: Iterable[int]) -> Accumulator:
    """执行给定编号的副本"""
    runner = REPLICATE_RUNNERS[config.mode]
    acc = Accumulator()
    for index in indices:
        acc.add(int(index), runner(config, int(index)))
    return acc


def _run_chunk(args: Tuple[ExperimentConfig, List[int]]) -> Accumulator:
    config, indices = args
    return run_partial(config, indices)


def run(config: ExperimentConfig) -> McReport:
    """
    执行全部副本并汇总

    Args:
        config: 实验配置

    Returns:
        McReport；测度分类不确定时在 warnings 中记录横幅，不中断
    """
    start = time.perf_counter()
    indices = list(range(int(config.replicates)))
    workers = min(int(config.workers), len(indices))

    if workers > 1:
        chunks = [indices[w::workers] for w in range(workers)]
        with Pool(workers) as pool:
            parts = pool.map(_run_chunk, [(config, chunk) for chunk in chunks])
        acc = reduce(Accumulator.merge, parts, Accumulator())
    else:
        acc = run_partial(config, indices)

    report = acc.finalize(config)
    try:
        report.behaviour = classify(config.measure).label
    except InconclusiveError as e:
        report.warnings.append(f"警告：测度分类不确定 ({e})")
        logger.warning(f"测度分类不确定: {e}")

    if config.oracle:
        report.oracles = ORACLES[config.mode](config, report)

    logger.info(
        f"{config.mode} 实验完成: {config.replicates} 个副本, "
        f"{workers} 个进程, 用时 {time.perf_counter() - start:.2f}s"
    )
    return report


# ============================================================================
# 预言对照
# ============================================================================

def _se_band(name: str, stat: McStatistic, expected: float) -> Dict:
    """均值落在 expected ± SE_BAND·SE 内"""
    diff = abs(stat.mean - expected)
    if stat.se > 0.0:
        passed = diff <= SE_BAND * stat.se
    else:
        passed = diff <= 1e-12 * max(1.0, abs(expected))
    return {
        "name": name,
        "kind": "se_band",
        "expected": expected,
        "observed": stat.mean,
        "statistic": diff / stat.se if stat.se > 0.0 else None,
        "pvalue": None,
        "passed": bool(passed),
    }


def pooled_chisquare(counts: Dict[str, int], probs: Dict[str, float]) -> Tuple[float, float]:
    """
    分类计数的卡方检验；期望频数过小的类别合并成一个类别

    出现了概率为零的类别时直接拒绝。
    """
    total = sum(counts.values())
    if any(probs.get(label, 0.0) <= 0.0 for label in counts):
        return float("inf"), 0.0

    labels = sorted(probs, key=lambda s: (-probs[s], s))
    observed = np.array([counts.get(s, 0) for s in labels], dtype=float)
    expected = np.array([probs[s] for s in labels]) * total

    big = expected >= MIN_EXPECTED_COUNT
    if not big.all():
        observed = np.append(observed[big], observed[~big].sum())
        expected = np.append(expected[big], expected[~big].sum())
    if expected.size <= 1:
        return 0.0, 1.0
    expected *= observed.sum() / expected.sum()
    result = stats.chisquare(observed, expected)
    return float(result.statistic), float(result.pvalue)


def _chain_oracles(config: ExperimentConfig, report: McReport) -> List[Dict]:
    rows = []
    rate = total_rate(config.measure, config.n)
    for s in config.snapshots:
        key = level_key(s)
        rows.append(_se_band(f"unmerged@{key}", report.statistic(f"unmerged@{key}"), math.exp(-rate * s)))
        if config.n > MAX_ORACLE_N:
            continue
        probs = {p.to_text(): v for p, v in transition_probabilities(config.measure, config.n, s).items()}
        chi2, pvalue = pooled_chisquare(report.distributions[f"partition@{key}"], probs)
        rows.append({
            "name": f"partition@{key}",
            "kind": "chisquare",
            "expected": None,
            "observed": None,
            "statistic": chi2,
            "pvalue": pvalue,
            "passed": pvalue > SIGNIFICANCE,
        })
    return rows


def _flow_oracles(config: ExperimentConfig, report: McReport) -> List[Dict]:
    rows = []
    for eps in config.eps_grid:
        key = level_key(eps)
        expected = campbell_dust_mean(config.measure, config.t, eps)
        rows.append(_se_band(f"dust@{key}", report.statistic(f"dust@{key}"), expected))
        mean_points = config.t * nu_interval_mass(config.measure, eps)
        rows.append(_se_band(f"points@{key}", report.statistic(f"points@{key}"), mean_points))
    for name in ("bounded", "lower_bound"):
        stat = report.statistic(name)
        rows.append({
            "name": name,
            "kind": "exact",
            "expected": 1.0,
            "observed": stat.mean,
            "statistic": None,
            "pvalue": None,
            "passed": stat.mean == 1.0,
        })
    return rows


def _embed_oracles(config: ExperimentConfig, report: McReport) -> List[Dict]:
    samples: Dict[int, List[Tuple[float, int]]] = {}
    for r in report.records:
        v = r["values"]
        if v.get("embedded"):
            samples.setdefault(int(v["l"]), []).append((v["wait"], int(v["k"])))
    strata, skipped = stratified_tests(config.measure, samples, MIN_STRATUM_SAMPLES)
    rows = []
    for s in strata:
        for kind, p_key, stat_key in (("ks", "ks_pvalue", "ks_statistic"),
                                      ("chisquare", "chi2_pvalue", "chi2_statistic")):
            rows.append({
                "name": f"first_induced@l={s['l']}",
                "kind": kind,
                "expected": 1.0 / s["rate"] if kind == "ks" else None,
                "observed": s["mean_wait"] if kind == "ks" else None,
                "statistic": s[stat_key],
                "pvalue": s[p_key],
                "passed": s[p_key] > SIGNIFICANCE,
            })
    for s in skipped:
        report.warnings.append(f"l={s['l']} 分层只有 {s['samples']} 个样本，未检验")
    return rows


ORACLES = {
    "chain": _chain_oracles,
    "flow": _flow_oracles,
    "embed": _embed_oracles,
}


# ============================================================================
# 二分法证据
# ============================================================================

@dataclass
class EvidenceTable:
    """
    沿 eps 网格的趋势证据；"无穷"只以趋势和下界计数呈现，不作布尔断言
    """
    measure: str
    behaviour: str
    t: float
    rows: List[Dict] = field(default_factory=list)
    checks: Dict[str, object] = field(default_factory=dict)
    verdict: bool = False
    verdict_text: str = ""
    report: Optional[McReport] = None


def _nondecreasing(values: Sequence[float]) -> bool:
    return all(b >= a for a, b in zip(values, values[1:]))


def dichotomy_evidence(
    measure: MeasureSpec,
    t: float,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    replicates: int = 200,
    seed: int = 0,
    monotone_fraction: float = MONOTONE_FRACTION,
    stabilize_below: float = STABILIZE_BELOW,
    workers: int = 1,
) -> EvidenceTable:
    """
    在耦合的 eps 网格上收集洞数与 dust 的证据

    B 区间：洞数在细化中单调的路径比例 >= monotone_fraction，平均洞数不减，
    最细一级的平均 dust 不低于极限 exp(-t μ^-1) 的一半。
    A 区间：每条路径洞数 <= 点数；eps < stabilize_below 之后平均洞数的增量
    不超过新增点数的期望（加 SE_BAND 个标准误）。

    Args:
        measure: 测度，须属于 A 或 B
        t: 时间
        eps_grid: 严格递减的截断水平
        thresholds: 洞普查阈值
        replicates: 耦合路径数
        seed: 根种子
        monotone_fraction: 单调路径比例的验收门槛
        stabilize_below: A 区间判断稳定的 eps 上界
        workers: 进程数

    Returns:
        EvidenceTable
    """
    grid = tuple(float(e) for e in eps_grid)
    if not grid:
        raise ValueError("eps 网格不能为空")
    if not t > 0.0:
        raise ValueError(f"t 需 > 0，实际 {t}")

    behaviour = classify(measure)
    if behaviour.label not in ("A", "B"):
        raise ValueError(
            f"测度属于 {behaviour.label} 区间，二分法证据只适用于 A/B；"
            f"C/D 区间请使用 μ* 计算 (classify)"
        )

    config = ExperimentConfig(
        measure=measure,
        mode="flow",
        n=0,
        t=float(t),
        eps_grid=grid,
        thresholds=tuple(float(h) for h in thresholds),
        replicates=int(replicates),
        seed=int(seed),
        workers=int(workers),
    )
    report = run(config)
    table = EvidenceTable(measure=measure.describe(), behaviour=behaviour.label, t=float(t), report=report)

    for eps in grid:
        key = level_key(eps)
        holes = report.statistic(f"holes@{key}")
        row = {
            "eps": eps,
            "holes": holes.mean,
            "holes_se": holes.se,
            "dust": report.statistic(f"dust@{key}").mean,
            "dust_se": report.statistic(f"dust@{key}").se,
            "campbell_dust": campbell_dust_mean(measure, t, eps),
            "points": report.statistic(f"points@{key}").mean,
            "case_a": report.statistic(f"case_a@{key}").mean,
        }
        for h in config.thresholds:
            row[f"holes>={level_key(h)}"] = report.statistic(f"holes>={level_key(h)}@{key}").mean
        table.rows.append(row)

    means = [row["holes"] for row in table.rows]
    table.checks["monotone_fraction"] = report.statistic("monotone").mean
    table.checks["bounded"] = report.statistic("bounded").mean == 1.0
    table.checks["lower_bound"] = report.statistic("lower_bound").mean == 1.0
    table.checks["mean_holes_nondecreasing"] = _nondecreasing(means)
    # 只报告，不参与判定
    for h in config.thresholds:
        if h > 0.0:
            column = [row[f"holes>={level_key(h)}"] for row in table.rows]
            table.checks[f"holes>={level_key(h)}_increasing"] = column[-1] > column[0]

    if behaviour.label == "B":
        limit = math.exp(-t * float(moment(measure, -1)))
        table.checks["dust_limit"] = limit
        table.checks["dust_bounded_below"] = table.rows[-1]["dust"] >= 0.5 * limit
        table.verdict = (
            table.checks["monotone_fraction"] >= monotone_fraction
            and table.checks["mean_holes_nondecreasing"]
            and table.checks["dust_bounded_below"]
            and table.checks["lower_bound"]
        )
        table.verdict_text = (
            f"B: 单调路径比例 {table.checks['monotone_fraction']:.3f} (门槛 {monotone_fraction}), "
            f"平均洞数 {means[0]:.2f} -> {means[-1]:.2f}, "
            f"最细一级 dust {table.rows[-1]['dust']:.4f} (极限 {limit:.4f})"
        )
    else:
        fine = [i for i, e in enumerate(grid) if e < stabilize_below]
        if len(fine) < 2:
            table.checks["stable"] = None
            table.verdict = False
            table.verdict_text = f"A: eps < {stabilize_below} 的水平少于 2 个，无法判断稳定性"
        else:
            first, last = fine[0], fine[-1]
            growth = means[last] - means[first]
            allowance = t * nu_interval_mass(measure, grid[last], grid[first])
            se = table.rows[first]["holes_se"] + table.rows[last]["holes_se"]
            table.checks["hole_growth"] = growth
            table.checks["growth_allowance"] = allowance
            table.checks["stable"] = growth <= allowance + SE_BAND * se
            table.verdict = bool(table.checks["stable"] and table.checks["bounded"])
            table.verdict_text = (
                f"A: eps < {stabilize_below} 后平均洞数增加 {growth:.3f}"
                f" (新增点数期望 {allowance:.3f})，洞数 <= 点数: {table.checks['bounded']}"
            )

    logger.info(table.verdict_text)
    return table
