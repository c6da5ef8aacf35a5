"""
fieldint 命令行工具入口
"""
import argparse
import os
import sys
import time

from fieldint.cli.commands import COMMANDS
from fieldint.cli.config import load_config
from fieldint.cli.report import write_manifest
from fieldint.utils.cleanup import cleanup_temp_files, cleanup_workspace_temp
from fieldint.utils.errors import ConfigError, FieldIntError
from fieldint.utils.file_utils import (
    create_temp_directory,
    discard_directory,
    get_output_path,
    publish_directory,
)
from fieldint.utils.logger import attach_log_file, detach_log_file, get_logger, set_verbose

# 获取日志记录器
logger = get_logger("cli")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def run_subcommand(name, config_path=None, output_dir=".", workers=None, seed=None):
    """
    运行一个校验子命令：解析配置 -> 在暂存目录中计算 -> 写清单 -> 发布

    Returns:
        (exit_code, message)
    """
    try:
        cfg = load_config(config_path, seed=seed, workers=workers)
    except ConfigError as e:
        logger.error(f"配置错误: {e}")
        return EXIT_CONFIG_ERROR, str(e)

    fn, _ = COMMANDS[name]
    staging = create_temp_directory()
    start_time = time.time()
    try:
        passed, message, checks = fn(cfg, staging)
        outputs = sorted(os.listdir(staging))
        write_manifest(get_output_path(staging, name, ".manifest.json"), {
            "subcommand": name,
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "passed": passed,
            "checks": checks,
            "config": cfg.resolved(),
            "outputs": outputs,
        })
        publish_directory(staging, output_dir)
    except ConfigError as e:
        discard_directory(staging)
        logger.error(f"配置错误: {e}")
        return EXIT_CONFIG_ERROR, str(e)
    except FieldIntError as e:
        discard_directory(staging)
        logger.error(f"{name} 运行失败 ({type(e).__name__}): {e}")
        return EXIT_RUNTIME_ERROR, str(e)
    except Exception as e:
        discard_directory(staging)
        logger.error(f"{name} 运行时发生错误: {e}")
        return EXIT_RUNTIME_ERROR, str(e)

    elapsed_time = time.time() - start_time
    if passed:
        logger.info(f"{name} 完成 ({elapsed_time:.2f}秒): {message}")
        return EXIT_OK, message
    logger.error(f"{name} 完成 ({elapsed_time:.2f}秒)，但有检验未通过: {message}")
    return EXIT_CHECK_FAILED, message


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI 配置文件路径（缺省时使用内置默认值）")
    common.add_argument("--out", default=".", help="输出目录 (默认: 当前目录)")
    common.add_argument("--workers", type=int, help="线程数（覆盖配置中的 [run] workers）")
    common.add_argument("--seed", type=int, help="随机种子（覆盖配置中的 [run] seed 与 [mc] seed）")
    common.add_argument("--log-file", nargs="?", const="", default=None,
                        help="同时写入日志文件（不带路径时使用系统默认日志目录）")
    common.add_argument("-v", "--verbose", action="store_true", help="显示详细日志")
    return common


def main(argv=None):
    """命令行工具主函数，返回退出码"""
    parser = argparse.ArgumentParser(description="fieldint - 泛函积分数值校验工具")
    subparsers = parser.add_subparsers(dest="command", help="命令")

    common = _common_parser()
    for name, (_, help_text) in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=help_text)

    clean_parser = subparsers.add_parser("clean", help="清理残留的暂存目录与半成品文件")
    clean_parser.add_argument("directory", nargs="?", help="要扫描的目录 (默认: 当前目录)")
    clean_parser.add_argument("-v", "--verbose", action="store_true", help="显示详细日志")

    args = parser.parse_args(argv)

    # 如果没有指定命令，显示帮助信息
    if not args.command:
        parser.print_help()
        return EXIT_OK

    set_verbose(args.verbose)

    if args.command == "clean":
        removed = cleanup_temp_files(args.directory)
        logger.info(f"清理完成: 删除 {removed} 个文件")
        return EXIT_OK

    removed = cleanup_workspace_temp()
    if removed:
        logger.info(f"已清理上次中断留下的 {removed} 个暂存文件")

    handler = None
    if args.log_file is not None:
        path, handler = attach_log_file(args.log_file)
        logger.debug(f"日志文件: {path}")
    try:
        code, _ = run_subcommand(args.command, args.config, args.out, args.workers, args.seed)
    finally:
        if handler is not None:
            detach_log_file(handler)
    return code


if __name__ == "__main__":
    sys.exit(main())
