"""
临时文件清理 - 删除中断运行留下的暂存目录与半成品文件
"""
import os
import shutil

from .logger import get_logger
from .file_utils import get_project_tmp_dir

logger = get_logger("cleanup")

STAGING_PREFIX = "run_"


def _is_temp_filename(name):
    temp_suffixes = (".tmp", ".temp", ".partial")
    if name.endswith(temp_suffixes):
        return True
    for ext in (".csv", ".json"):
        if name.endswith(ext + ".tmp") or name.endswith(ext + ".partial"):
            return True
    return False


def _remove_file(path):
    try:
        os.remove(path)
        return 1
    except Exception as e:
        logger.error(f"删除 {path} 时出错: {e}")
        return 0


def _count_files(dir_path):
    file_count = 0
    for _r, _d, _f in os.walk(dir_path):
        file_count += len(_f)
    return file_count


def _remove_staging_dirs(base):
    removed = 0
    try:
        for name in os.listdir(base):
            dir_path = os.path.join(base, name)
            if name.startswith(STAGING_PREFIX) and os.path.isdir(dir_path):
                removed += _count_files(dir_path)
                shutil.rmtree(dir_path, ignore_errors=True)
                logger.info(f"已删除暂存目录: {dir_path}")
    except Exception as e:
        logger.error(f"删除暂存目录时出错: {e}")
    return removed


def cleanup_workspace_temp(base=None):
    """删除项目 tmp/ 下所有残留的暂存目录，返回删除的文件数"""
    return _remove_staging_dirs(base or get_project_tmp_dir())


def cleanup_temp_files(directory=None, base=None):
    """
    清理输出目录中的半成品文件以及项目暂存目录

    Args:
        directory: 要扫描的目录，默认当前目录
        base: 暂存目录的根，默认项目 tmp/

    Returns:
        删除的文件数
    """
    if directory is None:
        directory = os.getcwd()
    if not os.path.isdir(directory):
        logger.error(f"错误: {directory} 不是一个有效的目录")
        return 0

    removed = 0
    for root, _, files in os.walk(directory):
        for fname in files:
            if _is_temp_filename(fname):
                fpath = os.path.join(root, fname)
                removed += _remove_file(fpath)
                logger.info(f"已删除: {os.path.relpath(fpath, directory)}")

    removed += cleanup_workspace_temp(base)
    return removed
