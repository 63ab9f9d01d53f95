"""
epifilm: 外延应变薄膜与位错数值实验

周期薄膜轮廓、失配应变与刃型位错的弹性能计算、交替极小化，
以及角点奇异指数与内置校验。
"""

__version__ = "1.0.0"
__author__ = "epifilm"
