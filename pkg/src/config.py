"""
配置模块 - 包含数值容差、随机数、预设测度和输出配置
所有常量都可以通过环境变量覆盖
"""
import os
from pathlib import Path
from typing import Dict


class ConfigError(ValueError):
    """配置文件格式错误"""


def _get_env_int(key: str, default: int) -> int:
    """获取整数环境变量，处理空字符串情况"""
    value = os.getenv(key)
    if value is None or value == "":
        return default
    return int(value)


def _get_env_float(key: str, default: float) -> float:
    """获取浮点环境变量，处理空字符串情况"""
    value = os.getenv(key)
    if value is None or value == "":
        return default
    return float(value)


# ============================================================================
# 输出配置
# ============================================================================
OUTPUT_DIR = os.getenv("LCOAL_OUTPUT_DIR", "output")
LOG_LEVEL = os.getenv("LCOAL_LOG_LEVEL", "WARNING")

# 所有实数按 17 位有效数字序列化
FLOAT_FORMAT = "{:.17g}"

# ============================================================================
# 数值积分与发散判定
# ============================================================================
DEFAULT_TOL = _get_env_float("LCOAL_TOL", 1e-10)

# 二进分块 (2^-(j+1), 2^-j] 的最大深度
DIVERGENCE_DEPTH = _get_env_int("LCOAL_DIVERGENCE_DEPTH", 60)

# 相邻分块比值 >= 1 - RATIO_MARGIN 视为不衰减
RATIO_MARGIN = _get_env_float("LCOAL_RATIO_MARGIN", 1e-3)

# 用于估计比值的尾部分块数
TAIL_BLOCKS = 8

# μ* 截断位置与判定阈值
MU_STAR_I_MAX = _get_env_int("LCOAL_MU_STAR_I_MAX", 10_000)
MU_STAR_DECAY_RATIO = 0.9   # 分块比值 <= 该值：几何衰减
MU_STAR_FLAT_RATIO = 0.98   # 分块比值 >= 该值：不衰减

# ============================================================================
# 桥的结构容差
# ============================================================================
CONSERVATION_TOL = 1e-10    # slope + Σ sizes 与 1 的偏差上限（构造时校验）
BOUNDARY_ATOL = 1e-14       # 判定简单桥位置落在洞边界上的距离
KAHAN_THRESHOLD = 10_000    # 超过该因子数的乘积改用对数补偿求和

# ============================================================================
# Monte Carlo 与统计检验
# ============================================================================
SIGNIFICANCE = _get_env_float("LCOAL_SIGNIFICANCE", 0.001)
SE_BAND = 3.0
MIN_STRATUM_SAMPLES = _get_env_int("LCOAL_MIN_STRATUM_SAMPLES", 50)
MIN_EXPECTED_COUNT = 5.0
MAX_ORACLE_N = 7

DEFAULT_EPS_GRID = tuple(2.0 ** -j for j in range(2, 9))
DEFAULT_THRESHOLDS = (0.0, 0.01, 0.05)
MONOTONE_FRACTION = 0.95
STABILIZE_BELOW = 0.05

# ============================================================================
# 随机数
# ============================================================================
RNG_ALGORITHM = "philox4x64-10"
SUBSTREAM_EVENTS = 0       # Poisson 点 / 链事件
SUBSTREAM_LOCATIONS = 1    # 简单桥位置与重采样
SUBSTREAM_PAINTBOX = 2     # paintbox 的 V 序列

# ============================================================================
# 预设测度
# ============================================================================
PRESETS = {
    "kingman": {
        "name": "Kingman",
        "description": "Λ = δ_0，只有两两合并",
        "beta": 2.0,
    },
    "uniform": {
        "name": "Bolthausen-Sznitman",
        "description": "Λ 为 [0,1] 上的均匀分布 (β-coalescent, α=1)",
        "beta": 1.0,
    },
    "x2": {
        "name": "x^2 dx",
        "description": "Λ(dx) = x^2 dx，有限总速率",
        "density": ((0.0, 1.0), ((0.0, 0.0, 1.0),)),
    },
}

DEFAULT_PRESET = "uniform"

# ============================================================================
# SVG 配色
# ============================================================================
SVG_STYLE = {
    "size": 400,
    "margin": 40,
    "background": "#FFFFFF",
    "axis": "#263238",
    "curve": "#1565C0",
    "hole_fill": "#FFA726",
    "hole_opacity": "0.35",
    "font": "monospace",
}


def get_preset(name: str) -> Dict:
    """获取预设测度配置；支持 beta-<alpha> 形式"""
    if name in PRESETS:
        return PRESETS[name]
    if name.startswith("beta-"):
        try:
            alpha = float(name[len("beta-"):])
        except ValueError:
            raise ConfigError(f"预设名称无法解析: {name}")
        return {
            "name": f"beta({alpha:g})",
            "description": f"β(2-α, α) 分布, α={alpha:g}",
            "beta": alpha,
        }
    raise ConfigError(f"未知预设: {name}，可选: {', '.join(sorted(PRESETS))} 或 beta-<alpha>")


def load_config_file(path: str) -> Dict[str, str]:
    """
    读取 key=value 格式的配置文件

    Args:
        path: 配置文件路径

    Returns:
        键值字典（值保持为字符串，由调用方转换）
    """
    values: Dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: 缺少 '=': {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("_", "-")
        if not key:
            raise ConfigError(f"{path}:{lineno}: 键为空")
        values[key] = value.strip()

    return values
