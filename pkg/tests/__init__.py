"""
测试包
~~~~~

引擎各模块的单元测试，以及命令行入口的集成测试。验收规模的长时间用例标记为 slow。
"""

__all__ = []
