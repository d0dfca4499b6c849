"""
报告输出模块
把实验结果写成 CSV / JSON / JSONL；每个文件头部都带版本、配置哈希和种子
"""
import csv
import io
import json
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

from src.config import FLOAT_FORMAT, OUTPUT_DIR
from src.harness import EvidenceTable, McReport

FORMATS = ("csv", "json")

REPORT_COLUMNS = ["section", "name", "mean", "se", "count", "expected", "statistic", "pvalue", "passed"]


def _cell(value: Any) -> str:
    """CSV 单元格：实数统一 17 位有效数字，None 为空"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return FLOAT_FORMAT.format(value)
    return str(value)


def _plain(value: Any) -> Any:
    """JSON 不支持的值（inf / nan / numpy 标量 / 元组）转成普通类型"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class ReportWriter:
    """结果文本生成器；相同输入得到逐字节相同的文本"""

    def __init__(self, header: Dict[str, Any], output_dir: str = None):
        self.header = header
        self.output_dir = Path(output_dir or OUTPUT_DIR)

    def header_lines(self) -> str:
        """头部的 "# key: value" 行，键按字母序"""
        lines = []
        for key in sorted(self.header):
            value = self.header[key]
            text = json.dumps(_plain(value), sort_keys=True, separators=(",", ":"), ensure_ascii=False) \
                if isinstance(value, (dict, list)) else _cell(value)
            lines.append(f"# {key}: {text}\n")
        return "".join(lines)

    def to_text(self, lines: Iterable[str]) -> str:
        """纯文本：头部之后逐行输出"""
        return self.header_lines() + "".join(f"{line}\n" for line in lines)

    def to_csv(self, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> str:
        """
        CSV 文本：先是 "# key: value" 形式的头部，再是列名和数据行

        Args:
            columns: 列名
            rows: 每行一个字典，缺失的列为空
        """
        buffer = io.StringIO()
        buffer.write(self.header_lines())
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
        return buffer.getvalue()

    def to_json(self, body: Dict[str, Any]) -> str:
        document = {"header": self.header, **body}
        return json.dumps(_plain(document), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def to_jsonl(self, records: Iterable[Dict[str, Any]]) -> str:
        """首行为头部，其后每行一条副本记录"""
        lines = [json.dumps(_plain({"header": self.header}), sort_keys=True, ensure_ascii=False)]
        lines.extend(json.dumps(_plain(r), sort_keys=True, ensure_ascii=False) for r in records)
        return "\n".join(lines) + "\n"

    def render(self, fmt: str, columns: Sequence[str], rows: List[Dict[str, Any]]) -> str:
        if fmt == "csv":
            return self.to_csv(columns, rows)
        if fmt == "json":
            return self.to_json({"columns": list(columns), "rows": rows})
        raise ValueError(f"未知格式: {fmt}，可选: {', '.join(FORMATS)}")

    def write(self, text: str, filename: str) -> str:
        """写入输出目录（filename 为绝对路径时直接使用），返回路径"""
        filepath = Path(filename)
        if not filepath.is_absolute() and filepath.parent == Path("."):
            filepath = self.output_dir / filepath
        filepath.parent.mkdir(parents=True, exist_ok=True)
        filepath.write_text(text, encoding="utf-8")
        return str(filepath)


# ============================================================================
# 报告 -> 行
# ============================================================================

def report_rows(report: McReport) -> List[Dict[str, Any]]:
    """统计量、预言对照、警告依次排成一张表"""
    rows = [
        {"section": "statistic", "name": s.name, "mean": s.mean, "se": s.se, "count": s.count}
        for s in report.statistics
    ]
    for o in report.oracles:
        rows.append({
            "section": f"oracle:{o['kind']}",
            "name": o["name"],
            "mean": o["observed"],
            "expected": o["expected"],
            "statistic": o["statistic"],
            "pvalue": o["pvalue"],
            "passed": o["passed"],
        })
    for w in report.warnings:
        rows.append({"section": "warning", "name": w})
    return rows


def evidence_rows(table: EvidenceTable) -> List[Dict[str, Any]]:
    return [dict(row) for row in table.rows]


def format_report(report: McReport, fmt: str = "csv") -> str:
    """便捷函数：把 McReport 渲染成文本"""
    writer = ReportWriter(report.header())
    if fmt == "json":
        return writer.to_json({
            "statistics": [asdict(s) for s in report.statistics],
            "distributions": report.distributions,
            "oracles": report.oracles,
            "warnings": report.warnings,
        })
    return writer.render(fmt, REPORT_COLUMNS, report_rows(report))
