#!/usr/bin/env python3
"""
epifilm 主程序入口

等同于安装后的 epifilm 命令:
    python main.py <mode> --config <path> [--out <dir>] [--refine <n>]
"""

import sys
import os

# 添加src目录到Python路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))


def main() -> int:
    """主函数"""
    from src.main import main as cli_main
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
