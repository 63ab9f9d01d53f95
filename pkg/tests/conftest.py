"""
测试公共配置
"""

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 细网格或多次求解的慢速测试（-m 'not slow' 跳过）")


@pytest.fixture(autouse=True)
def _clear_elastic_cache():
    """每个测试前后清空弹性问题缓存"""
    from src.core.elasticity import clear_problem_cache
    clear_problem_cache()
    yield
    clear_problem_cache()
