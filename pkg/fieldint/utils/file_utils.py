"""
文件处理工具模块 - 输出目录、暂存目录与产物发布
"""
import os
import shutil
import uuid

from .logger import get_logger

logger = get_logger("file_utils")


def ensure_dir_exists(directory):
    """
    确保目录存在，如果不存在则创建

    Args:
        directory: 目录路径

    Returns:
        创建的目录路径
    """
    if not os.path.exists(directory):
        os.makedirs(directory, exist_ok=True)
    return directory


def get_output_path(output_dir, subcommand, suffix):
    """
    根据子命令生成产物文件路径，例如 normcheck.csv / normcheck.manifest.json

    Args:
        output_dir: 输出目录
        subcommand: 子命令名称
        suffix: 文件后缀（含点号）

    Returns:
        产物文件的完整路径
    """
    return os.path.join(output_dir, f"{subcommand}{suffix}")


def get_project_root():
    return os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))


def get_project_tmp_dir():
    """暂存目录的根：环境变量 FIELDINT_TMP_DIR，默认项目 tmp/"""
    tmp_dir = os.environ.get("FIELDINT_TMP_DIR") or os.path.join(get_project_root(), "tmp")
    os.makedirs(tmp_dir, exist_ok=True)
    return tmp_dir


def create_temp_directory(prefix="run_", base=None):
    base = base or get_project_tmp_dir()
    name = f"{prefix}{uuid.uuid4().hex}"
    path = os.path.join(base, name)
    os.makedirs(path, exist_ok=True)
    return path


def publish_directory(staging_dir, output_dir):
    """
    把暂存目录中的产物移动到输出目录，然后删除暂存目录

    只有在子命令完整结束后才调用，保证输出目录中不会出现半成品。

    Args:
        staging_dir: 暂存目录
        output_dir: 最终输出目录

    Returns:
        已发布文件路径列表
    """
    ensure_dir_exists(output_dir)
    published = []
    for name in sorted(os.listdir(staging_dir)):
        src = os.path.join(staging_dir, name)
        dst = os.path.join(output_dir, name)
        # os.replace 在同一文件系统上是原子的
        try:
            os.replace(src, dst)
        except OSError:
            shutil.move(src, dst)
        published.append(dst)
    shutil.rmtree(staging_dir, ignore_errors=True)
    logger.debug(f"已发布 {len(published)} 个产物到 {output_dir}")
    return published


def discard_directory(staging_dir):
    """丢弃暂存目录（出错时调用）"""
    if staging_dir and os.path.isdir(staging_dir):
        shutil.rmtree(staging_dir, ignore_errors=True)
        logger.debug(f"已丢弃暂存目录: {staging_dir}")
