"""
lcoal - Λ-合并过程模拟与分析工具
测度分类、精确限制链、截断桥流、嵌入过程检验与 Monte Carlo 实验
"""

__version__ = "0.1.0"
__author__ = "lcoal"
