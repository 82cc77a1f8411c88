#!/usr/bin/env python3
"""
实验室启动脚本
~~~~~~~~~~~~~

从 .env 读取工作线程数与日志配置，再把命令行参数交给 app.main。
"""

import os
import sys

from dotenv import load_dotenv


def main():
    """主函数"""
    # 加载环境变量
    load_dotenv(override=True)

    # 读取配置
    engine_workers = int(os.getenv("ENGINE_WORKERS", "2"))
    log_type = os.getenv("LOG_TYPE", "logging")
    output_dir = os.getenv("LAB_OUTPUT_DIR", "reports")

    print("横截缺陷实验室启动配置:", file=sys.stderr)
    print(f"   - 引擎并发数: {engine_workers}", file=sys.stderr)
    print(f"   - 日志后端: {log_type}", file=sys.stderr)
    print(f"   - 报告目录: {output_dir}", file=sys.stderr)

    from app.main import main as run
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
