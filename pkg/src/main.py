#!/usr/bin/env python3
"""
Λ-合并过程工具主入口
子命令: classify / simulate-chain / simulate-flow / verify / render

产物（CSV / JSON / SVG）写到 stdout 或 --output，横幅、步骤和种子提示写到 stderr，
因此相同的参数和种子得到逐字节相同的产物。
"""
import argparse
import hashlib
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

# 添加项目根目录到 Python 路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src import __version__, rng
from src.bridge import FiniteBridge
from src.chain import simulate_chain
from src.config import (
    DEFAULT_EPS_GRID,
    DEFAULT_PRESET,
    DEFAULT_THRESHOLDS,
    LOG_LEVEL,
    MAX_ORACLE_N,
    SUBSTREAM_EVENTS,
    SUBSTREAM_LOCATIONS,
    ConfigError,
    load_config_file,
)
from src.flow import build_flow_bridge, sample_points
from src.harness import ExperimentConfig, McReport, dichotomy_evidence, level_key, run, stable_json
from src.measures import InconclusiveError, MeasureSpec, classify, parse_measure, preset
from src.partition import Partition, merge
from src.reporter import (
    REPORT_COLUMNS,
    ReportWriter,
    evidence_rows,
    format_report,
    report_rows,
)
from src.svg_generator import SVGGenerator

logger = logging.getLogger(__name__)

RANDOMIZED = ("simulate-chain", "simulate-flow", "verify", "render")
MEASURE_KEYS = ("preset", "beta", "atoms", "density")


def _float_list(text: str) -> List[float]:
    return [float(s) for s in str(text).split(",") if s.strip()]


OPTION_TYPES: Dict[str, Callable] = {
    "preset": str,
    "beta": float,
    "atoms": str,
    "density": str,
    "n": int,
    "t": float,
    "eps": _float_list,
    "thresholds": _float_list,
    "snapshots": _float_list,
    "replicates": int,
    "seed": int,
    "workers": int,
    "format": str,
    "output": str,
    "jsonl": str,
    "selector": str,
    "bridge": str,
}

DEFAULTS: Dict[str, Dict] = {
    "classify": {"format": "text"},
    "simulate-chain": {"n": 10, "t": 1.0, "replicates": 1, "snapshots": [], "format": "csv"},
    "simulate-flow": {"n": 0, "t": 1.0, "eps": list(DEFAULT_EPS_GRID),
                      "thresholds": list(DEFAULT_THRESHOLDS), "replicates": 1, "format": "csv"},
    "verify": {"n": 3, "t": 1.0, "eps": list(DEFAULT_EPS_GRID),
               "thresholds": list(DEFAULT_THRESHOLDS), "replicates": 2000, "format": "csv"},
    "render": {"t": 1.0, "eps": [0.01], "format": "svg"},
}


def print_banner():
    """打印程序横幅（stderr）"""
    banner = f"""
╔════════════════════════════════════════════════════════════╗
║                                                              ║
║   lcoal {__version__:<8} Λ-合并过程模拟与分析                       ║
║                                                              ║
║   测度分类 · 精确链模拟 · 桥流构造 · 嵌入过程检验            ║
║                                                              ║
╚════════════════════════════════════════════════════════════╝
"""
    print(banner, file=sys.stderr)


def step(i: int, total: int, text: str) -> None:
    print(f"[步骤 {i}/{total}] {text}", file=sys.stderr)


# ============================================================================
# 参数解析
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    measure = common.add_mutually_exclusive_group()
    measure.add_argument("--beta", type=float, metavar="ALPHA", help="Beta(2-α, α) 测度")
    measure.add_argument("--kingman", dest="preset", action="store_const", const="kingman",
                         help="Λ = δ_0")
    measure.add_argument("--uniform", dest="preset", action="store_const", const="uniform",
                         help="Λ = [0,1] 上的 Lebesgue 测度")
    measure.add_argument("--x2", dest="preset", action="store_const", const="x2",
                         help="Λ(dx) = x^2 dx")
    measure.add_argument("--preset", dest="preset", help="预设名 (kingman/uniform/x2/beta-<alpha>)")
    measure.add_argument("--atoms", help="原子测度 \"位置:质量,...\"")
    measure.add_argument("--density", help="分段多项式密度 \"lo:hi:c0,c1;...\"")
    common.add_argument("--config", help="key=value 格式的配置文件，行内参数优先")
    common.add_argument("--seed", type=int, help="根种子，缺省时生成并打印")
    common.add_argument("--output", help="输出文件，缺省写 stdout")
    common.add_argument("--format", choices=("text", "csv", "json", "svg"), help="输出格式")
    common.add_argument("--workers", type=int, help="并行进程数")

    parser = argparse.ArgumentParser(prog="lcoal", description="Λ-合并过程模拟与分析")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("classify", parents=[common], help="输出行为区间 A/B/C/D 与判据")

    p = sub.add_parser("simulate-chain", parents=[common], help="模拟 {1..n} 上的限制链")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--snapshots", type=_float_list, help="快照时刻，逗号分隔")
    p.add_argument("--replicates", type=int)
    p.add_argument("--jsonl", help="逐副本记录输出文件")

    p = sub.add_parser("simulate-flow", parents=[common], help="构造截断桥流")
    p.add_argument("--n", type=int, help="paintbox 样本数 (0 表示不抽样)")
    p.add_argument("--t", type=float)
    p.add_argument("--eps", type=_float_list, help="严格递减的截断水平，逗号分隔")
    p.add_argument("--thresholds", type=_float_list)
    p.add_argument("--replicates", type=int)
    p.add_argument("--jsonl", help="逐副本记录输出文件")

    p = sub.add_parser("verify", parents=[common], help="运行预言对照与二分法证据")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--eps", type=_float_list)
    p.add_argument("--thresholds", type=_float_list)
    p.add_argument("--replicates", type=int)

    p = sub.add_parser("render", parents=[common], help="把桥画成 SVG")
    p.add_argument("--bridge", help="桥的文本形式 \"slope;u:s,...\"，缺省时按测度模拟")
    p.add_argument("--t", type=float)
    p.add_argument("--eps", type=_float_list)
    return parser


def resolve_options(args: argparse.Namespace) -> Dict:
    """合并配置文件与行内参数，填入默认值"""
    options = {k: v for k, v in vars(args).items() if k in OPTION_TYPES and v is not None}
    inline_measure = any(k in options for k in MEASURE_KEYS)

    if args.config:
        for key, text in load_config_file(args.config).items():
            dest = key.replace("-", "_")
            if dest in ("kingman", "uniform", "x2"):
                if text.lower() in ("1", "true", "yes") and not inline_measure:
                    options.setdefault("preset", dest)
                continue
            if dest not in OPTION_TYPES:
                raise ConfigError(f"{args.config}: 未知配置项 {key}")
            if dest in MEASURE_KEYS and inline_measure:
                continue
            if dest not in options:
                try:
                    options[dest] = OPTION_TYPES[dest](text)
                except ValueError as e:
                    raise ConfigError(f"{args.config}: {key}={text!r} 无法解析: {e}")

    if sum(k in options for k in MEASURE_KEYS) > 1:
        raise ConfigError(f"测度只能指定一种: {[k for k in MEASURE_KEYS if k in options]}")
    for key, value in DEFAULTS[args.command].items():
        options.setdefault(key, value)
    options.setdefault("workers", 1)
    return options


def build_measure(options: Dict) -> MeasureSpec:
    if "beta" in options:
        return MeasureSpec.beta(options["beta"])
    if "atoms" in options:
        return parse_measure("atoms", options["atoms"])
    if "density" in options:
        return parse_measure("density", options["density"])
    return preset(options.get("preset", DEFAULT_PRESET))


def make_header(command: str, options: Dict, m: MeasureSpec, seed: Optional[int]) -> Dict:
    """输出头部：版本、完整配置、配置哈希、种子"""
    config = {k: v for k, v in options.items() if k not in ("output", "jsonl", "workers", "format")}
    config["command"] = command
    config["measure"] = m.to_dict()
    config["seed"] = seed
    return {
        "version": __version__,
        "config": config,
        "config_hash": hashlib.sha256(stable_json(config).encode("utf-8")).hexdigest(),
        "seed": seed,
        "rng": rng.describe(),
    }


# ============================================================================
# 子命令
# ============================================================================

def cmd_classify(m: MeasureSpec, options: Dict, header: Dict) -> str:
    step(1, 1, f"分类 {m.describe()} ...")
    behaviour = classify(m)
    mu_m1, mu_m2, mu_star_ok = behaviour.predicates
    rows = [
        {"name": "label", "value": behaviour.label},
        {"name": "mu^-1 finite", "value": mu_m1},
        {"name": "mu^-2 finite", "value": mu_m2},
        {"name": "mu* finite", "value": mu_star_ok},
    ]
    for key, value in behaviour.diagnostics.items():
        rows.append({"name": key, "value": str(value)})

    if options["format"] == "text":
        lines = [behaviour.label, behaviour.description]
        lines += [f"{r['name']}: {str(r['value']).lower()}" for r in rows[1:4]]
        lines += [f"{r['name']} = {r['value']}" for r in rows[4:]]
        return ReportWriter(header).to_text(lines)
    return ReportWriter(header).render(options["format"], ["name", "value"], rows)


def _experiment(m: MeasureSpec, options: Dict, seed: int, mode: str, **overrides) -> ExperimentConfig:
    fields = {
        "measure": m,
        "mode": mode,
        "n": options.get("n", 2),
        "t": options["t"],
        "replicates": options["replicates"],
        "seed": seed,
        "workers": options["workers"],
    }
    if mode == "flow":
        fields["eps_grid"] = tuple(options["eps"])
        fields["thresholds"] = tuple(options["thresholds"])
    if mode == "chain":
        fields["snapshot_times"] = tuple(options.get("snapshots") or ())
    fields.update(overrides)
    return ExperimentConfig(**fields)


def _write_jsonl(report: McReport, header: Dict, path: Optional[str]) -> None:
    if path:
        written = ReportWriter(header).write(ReportWriter(header).to_jsonl(report.records), path)
        print(f"   逐副本记录: {written}", file=sys.stderr)


def cmd_simulate_chain(m: MeasureSpec, options: Dict, header: Dict, seed: int) -> str:
    if options["replicates"] > 1:
        step(1, 1, f"运行 {options['replicates']} 个副本 ...")
        report = run(_experiment(m, options, seed, "chain", oracle=False))
        _write_jsonl(report, header, options.get("jsonl"))
        return format_report(report, options["format"])

    step(1, 1, f"模拟 n={options['n']} 的链到 t={options['t']} ...")
    snapshots = sorted(set(options["snapshots"]))
    traj = simulate_chain(m, options["n"], options["t"], snapshots,
                          rng.split(seed, 0, SUBSTREAM_EVENTS))

    rows = []
    state = Partition.singletons(traj.n)
    for event in traj.events:
        state = merge(state, event.merged)
        rows.append({
            "kind": "event",
            "time": event.time,
            "k": event.k,
            "merged": " ".join(str(i) for i in event.merged),
            "blocks": event.blocks_after,
            "partition": state.to_text(),
        })
    for s in snapshots:
        snap = traj.snapshots[s]
        rows.append({"kind": "snapshot", "time": s, "blocks": len(snap), "partition": snap.to_text()})
    if traj.frozen:
        rows.append({"kind": "frozen", "blocks": traj.block_count_at(traj.t_end)})
    columns = ["kind", "time", "k", "merged", "blocks", "partition"]
    return ReportWriter(header).render(options["format"], columns, rows)


def cmd_simulate_flow(m: MeasureSpec, options: Dict, header: Dict, seed: int) -> str:
    config = _experiment(m, options, seed, "flow", oracle=options["replicates"] > 1)
    step(1, 1, f"构造 {len(config.eps_grid)} 级截断桥流, {config.replicates} 个副本 ...")
    report = run(config)
    _write_jsonl(report, header, options.get("jsonl"))
    if config.replicates > 1:
        return format_report(report, options["format"])

    values = report.records[0]["values"]
    names = ["points", "holes", "case_a", "dust"]
    names += [f"holes>={level_key(h)}" for h in config.thresholds]
    if config.n > 0:
        names += ["blocks", "singletons", "nonsingletons"]
    rows = []
    for eps in config.eps_grid:
        row = {"eps": eps}
        for name in names:
            value = values[f"{name}@{level_key(eps)}"]
            row[name] = value if name == "dust" else int(value)
        rows.append(row)
    return ReportWriter(header).render(options["format"], ["eps"] + names, rows)


def cmd_verify(m: MeasureSpec, options: Dict, header: Dict, seed: int) -> str:
    total = 5
    rows: List[Dict] = []

    step(1, total, "测度分类 ...")
    try:
        behaviour = classify(m)
        rows.append({"section": "classify", "name": "label", "expected": None,
                     "mean": None, "passed": True, "statistic": behaviour.label})
        label = behaviour.label
    except InconclusiveError as e:
        rows.append({"section": "warning", "name": f"测度分类不确定 ({e})"})
        label = "?"

    n = min(int(options["n"]), MAX_ORACLE_N)
    step(2, total, f"链 vs 矩阵指数 (n={n}) ...")
    report = run(_experiment(m, options, seed, "chain", n=max(n, 2)))
    rows += [dict(r, section=f"chain:{r['section']}") for r in report_rows(report) if r["section"] != "statistic"]

    step(3, total, "dust 的 Campbell 对照 ...")
    report = run(_experiment(m, options, seed, "flow", n=0))
    rows += [dict(r, section=f"flow:{r['section']}") for r in report_rows(report) if r["section"] != "statistic"]

    step(4, total, "嵌入过程首次事件律 ...")
    report = run(_experiment(m, options, seed, "embed", n=max(n, 2), selector="all"))
    rows += [dict(r, section=f"embed:{r['section']}") for r in report_rows(report) if r["section"] != "statistic"]

    step(5, total, "二分法证据 ...")
    if label in ("A", "B"):
        table = dichotomy_evidence(
            m, options["t"], options["eps"], options["thresholds"],
            replicates=options["replicates"], seed=seed, workers=options["workers"],
        )
        for row in evidence_rows(table):
            rows.append({"section": "evidence", "name": f"holes@{level_key(row['eps'])}",
                         "mean": row["holes"], "se": row["holes_se"]})
        for name, value in table.checks.items():
            rows.append({"section": "evidence", "name": f"check:{name}", "statistic": value})
        rows.append({"section": "evidence", "name": "verdict", "statistic": table.verdict_text,
                     "passed": table.verdict})
    else:
        print(f"   {label} 区间不适用二分法证据，跳过", file=sys.stderr)

    failed = [r for r in rows if r.get("passed") is False]
    print(f"   {len(failed)} 项未通过", file=sys.stderr)
    return ReportWriter(header).render(options["format"], REPORT_COLUMNS, rows)


def cmd_render(m: MeasureSpec, options: Dict, header: Dict, seed: Optional[int]) -> str:
    if options["format"] not in ("svg", "json"):
        raise ValueError(f"render 只支持 svg / json 格式，实际 {options['format']}")
    step(1, 1, "生成 SVG ...")
    if options.get("bridge"):
        bridge = FiniteBridge.from_text(options["bridge"])
    else:
        eps = options["eps"][-1]
        points = sample_points(m, options["t"], eps, rng.split(seed, 0, SUBSTREAM_EVENTS))
        bridge, _ = build_flow_bridge(points, rng.split(seed, 0, SUBSTREAM_LOCATIONS), track=False)

    if options["format"] == "json":
        holes = [{"lo": h.lo, "hi": h.hi, "size": h.size} for h in bridge.holes()]
        return ReportWriter(header).to_json({"bridge": bridge.to_text(), "dust": bridge.dust(), "holes": holes})
    meta = {"version": header["version"], "config_hash": header["config_hash"], "seed": header["seed"]}
    return SVGGenerator().render(bridge, meta=meta)


COMMANDS = {
    "classify": cmd_classify,
    "simulate-chain": cmd_simulate_chain,
    "simulate-flow": cmd_simulate_flow,
    "verify": cmd_verify,
    "render": cmd_render,
}


def main(argv: Sequence[str] = None) -> int:
    """主函数，返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s [%(name)s] %(levelname)s %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        level=LOG_LEVEL,
        stream=sys.stderr,
    )
    print_banner()

    try:
        options = resolve_options(args)
        m = build_measure(options)

        seed = options.get("seed")
        needs_seed = args.command in RANDOMIZED and not (args.command == "render" and options.get("bridge"))
        if needs_seed and seed is None:
            seed = rng.new_seed()
            print(f"   未指定 --seed，使用生成的种子: {seed}", file=sys.stderr)
        header = make_header(args.command, options, m, seed)

        handler = COMMANDS[args.command]
        if args.command == "classify":
            text = handler(m, options, header)
        else:
            text = handler(m, options, header, seed)

        if options.get("output"):
            path = ReportWriter(header).write(text, options["output"])
            print(f"   已写入: {path}", file=sys.stderr)
        else:
            sys.stdout.write(text)
        return 0

    except KeyboardInterrupt:
        print("\n⚠️ 用户中断", file=sys.stderr)
        return 130

    except (ValueError, OSError) as e:
        print(f"\n[错误] {e}", file=sys.stderr)
        return 2

    except InconclusiveError as e:
        print(f"\n[错误] 无法判定: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
