"""
SVG 生成模块
把有限桥画成函数图像，洞在值轴方向以色带标出
"""
from pathlib import Path
from typing import Dict, List

from src.bridge import FiniteBridge
from src.config import OUTPUT_DIR, SVG_STYLE


class SVGGenerator:
    """桥的 SVG 图生成器（相同输入输出逐字节相同）"""

    def __init__(self, output_dir: str = None, style: Dict = None):
        self.output_dir = Path(output_dir or OUTPUT_DIR)
        self.style = style or SVG_STYLE
        self.size = self.style["size"]
        self.margin = self.style["margin"]

    def _px(self, y: float) -> str:
        return f"{self.margin + y * self.size:.6f}"

    def _py(self, v: float) -> str:
        return f"{self.margin + (1.0 - v) * self.size:.6f}"

    def render(self, b: FiniteBridge, title: str = None, meta: Dict = None) -> str:
        """
        生成 SVG 文本

        Args:
            b: 桥
            title: 图标题，默认使用桥的文本序列化
            meta: 写入 <desc> 的键值（版本、配置哈希、种子）

        Returns:
            SVG 文档
        """
        style = self.style
        total = self.size + 2 * self.margin
        title = title if title is not None else b.to_text()

        desc = "; ".join(f"{k}={v}" for k, v in sorted((meta or {}).items()))
        bands = self._build_hole_bands(b)
        curve = self._build_curve(b)

        return f"""<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">
  <title>{self._escape(title)}</title>
  <desc>{self._escape(desc)}</desc>
  <rect x="0" y="0" width="{total}" height="{total}" fill="{style['background']}"/>
  <g class="holes" fill="{style['hole_fill']}" fill-opacity="{style['hole_opacity']}">
{bands}  </g>
  <g class="axes" stroke="{style['axis']}" stroke-width="1" fill="none">
    <line x1="{self._px(0)}" y1="{self._py(0)}" x2="{self._px(1)}" y2="{self._py(0)}"/>
    <line x1="{self._px(0)}" y1="{self._py(0)}" x2="{self._px(0)}" y2="{self._py(1)}"/>
  </g>
  <g class="labels" font-family="{style['font']}" font-size="11" fill="{style['axis']}">
    <text x="{self._px(1)}" y="{self._py(0)}" dy="16" text-anchor="end">y</text>
    <text x="{self._px(0)}" y="{self._py(1)}" dx="-8" text-anchor="end">b(y)</text>
    <text x="{self._px(0)}" y="{self._py(0)}" dy="28">dust={b.dust():.6f} holes={b.jump_count}</text>
  </g>
  <g class="curve" stroke="{style['curve']}" stroke-width="2" fill="none">
{curve}  </g>
</svg>
"""

    def _build_hole_bands(self, b: FiniteBridge) -> str:
        lines: List[str] = []
        for hole in b.holes():
            height = hole.size * self.size
            lines.append(
                f'    <rect x="{self._px(0)}" y="{self._py(hole.hi)}" '
                f'width="{self.size:.6f}" height="{height:.6f}"/>\n'
            )
        return "".join(lines)

    def _build_curve(self, b: FiniteBridge) -> str:
        """连续段画实线，跳跃处画虚线"""
        lines: List[str] = []
        start_y, start_v = 0.0, b.evaluate(0.0)
        for u, s in b.jumps:
            left = b.evaluate_left(u)
            if u > start_y:
                lines.append(
                    f'    <line x1="{self._px(start_y)}" y1="{self._py(start_v)}" '
                    f'x2="{self._px(u)}" y2="{self._py(left)}"/>\n'
                )
            lines.append(
                f'    <line x1="{self._px(u)}" y1="{self._py(left)}" '
                f'x2="{self._px(u)}" y2="{self._py(left + s)}" stroke-dasharray="3,3"/>\n'
            )
            start_y, start_v = u, left + s
        lines.append(
            f'    <line x1="{self._px(start_y)}" y1="{self._py(start_v)}" '
            f'x2="{self._px(1.0)}" y2="{self._py(1.0)}"/>\n'
        )
        return "".join(lines)

    def _escape(self, text: str) -> str:
        """转义 XML 特殊字符"""
        return (text
                .replace('&', '&amp;')
                .replace('<', '&lt;')
                .replace('>', '&gt;')
                .replace('"', '&quot;'))

    def write(self, b: FiniteBridge, filename: str = "bridge.svg", meta: Dict = None) -> str:
        """写入 SVG 文件，返回路径"""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        filepath = self.output_dir / filename
        filepath.write_text(self.render(b, meta=meta), encoding="utf-8")
        return str(filepath)


def render_svg(b: FiniteBridge) -> str:
    """便捷函数：生成桥的 SVG 文本"""
    return SVGGenerator().render(b)
