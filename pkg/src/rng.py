"""
随机数流模块
基于 Philox4x64-10 计数器型生成器，按 (根种子, 副本编号, 子流) 派生互不重叠的流
"""
import numpy as np

from src.config import RNG_ALGORITHM

MASK64 = (1 << 64) - 1


def split(root_seed: int, replicate_index: int = 0, substream: int = 0) -> np.random.Generator:
    """
    派生一个独立随机流

    key = (root_seed, replicate_index)，计数器最高字 = substream，
    因此不同子流占据不相交的计数器区间，结果与平台无关。

    Args:
        root_seed: 根种子（非负整数）
        replicate_index: 副本编号
        substream: 子流编号

    Returns:
        numpy Generator
    """
    if root_seed < 0 or replicate_index < 0 or substream < 0:
        raise ValueError("root_seed, replicate_index, substream 必须非负")

    key = np.array([root_seed & MASK64, replicate_index & MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, substream & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def new_seed() -> int:
    """从系统熵生成一个 63 位种子（未指定 --seed 时使用）"""
    return int(np.random.SeedSequence().entropy) & ((1 << 63) - 1)


def describe() -> str:
    """算法标识，写入所有输出头部"""
    return f"{RNG_ALGORITHM} split(key=(root,replicate), counter[3]=substream)"


def substream_of(generator: np.random.Generator, substream: int) -> np.random.Generator:
    """
    同一 (根种子, 副本编号) 下的另一个子流

    只读取 Philox 的 key，与 generator 已经消耗了多少随机数无关，
    所以 substream_of(split(r, i, a), b) 与 split(r, i, b) 是同一条流。
    """
    bit_generator = generator.bit_generator
    if not isinstance(bit_generator, np.random.Philox):
        raise ValueError(f"只能从 split 派生的 Philox 流取子流，实际 {type(bit_generator).__name__}")
    if substream < 0:
        raise ValueError("substream 必须非负")
    key = np.asarray(bit_generator.state["state"]["key"], dtype=np.uint64)
    counter = np.array([0, 0, 0, substream & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
