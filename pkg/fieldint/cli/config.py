"""
运行配置 - INI 文件（configparser），每个子命令都有完整的内置默认值

优先级：内置默认值 < 配置文件 < 命令行 --seed / --workers。
所有被引用的段在计算开始前解析校验，出错抛出 ConfigError。
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from fieldint.core.spaces import Boundary, GridSpec
from fieldint.utils.errors import ConfigError
from fieldint.utils.logger import get_logger

logger = get_logger("config")

DEFAULTS: dict[str, dict[str, str]] = {
    "run": {"workers": "1", "seed": "20240101", "block_size": "4096"},
    "grid": {"dims": "4", "spacing": "1.0", "boundary": "dirichlet"},
    "quadform": {"mass": "1.0", "stiffness": "1.0"},
    "integrator": {"kind": "gaussian", "s": "1", "n": "0", "max_order": "12"},
    "comb": {"points": "", "count": "5", "rank": "2", "scale": "1.0", "instances": "20"},
    "localization": {"rows": "unit:0", "W": "0.5,1,3", "random": "5", "max_n": "8", "ortho_max": "6"},
    "mc": {"samples": "1000000", "seed": "", "band": "3.0", "min_coverage": "0.99"},
    "cov": {"instances": "10", "perturbation": "0.3"},
    "sd": {"m": "2", "forms": "10", "degree": "4", "order": "24"},
    "effective": {"lambda": "0.1", "uprime_max": "1.0", "uprime_points": "41", "order": "0"},
    "develop": {"steps": "50,100,200,400,10000", "field": "rotation", "params": "",
                "drift": "", "tolerance": "1e-6"},
    "lattice": {"spatial_sites": "8", "spatial_spacing": "1.0", "time_steps": "7", "s": "1.0",
                "spatial_boundary": "dirichlet", "mass": "1.0",
                "pairs": "0-0,3-10,7-21,14-15,20-27,35-35,5-30,12-13,8-8,17-34", "seeds": "50"},
}


@dataclass(frozen=True)
class RunConfig:
    """完全解析后的配置（段 -> 键 -> 字符串值）"""

    sections: dict
    source: Optional[str] = None

    def get(self, section: str, key: str) -> str:
        try:
            return self.sections[section][key]
        except KeyError:
            raise ConfigError(f"配置缺少 [{section}] {key}") from None

    def resolved(self) -> dict:
        return {sec: dict(sorted(keys.items())) for sec, keys in sorted(self.sections.items())}

    def config_hash(self) -> str:
        canonical = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    # --- 类型化读取 ---------------------------------------------------------

    def get_int(self, section: str, key: str, minimum: Optional[int] = None) -> int:
        raw = self.get(section, key)
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} 不是整数: {raw!r}") from None
        if minimum is not None and value < minimum:
            raise ConfigError(f"[{section}] {key} = {value} 小于下限 {minimum}")
        return value

    def get_float(self, section: str, key: str, positive: bool = False) -> float:
        raw = self.get(section, key)
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} 不是实数: {raw!r}") from None
        if not np.isfinite(value) or (positive and not value > 0):
            raise ConfigError(f"[{section}] {key} = {raw} 必须是{'正的' if positive else ''}有限数")
        return value

    def get_complex(self, section: str, key: str) -> complex:
        raw = self.get(section, key).replace(" ", "")
        try:
            return complex(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} 不是复数: {raw!r}") from None

    def get_float_list(self, section: str, key: str) -> list[float]:
        raw = self.get(section, key)
        try:
            return [float(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"[{section}] {key} 不是逗号分隔的实数列表: {raw!r}") from None

    def get_int_list(self, section: str, key: str) -> list[int]:
        raw = self.get(section, key)
        try:
            return [int(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"[{section}] {key} 不是逗号分隔的整数列表: {raw!r}") from None

    # --- 公共参数 -----------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.get_int("run", "seed", minimum=0)

    @property
    def mc_seed(self) -> int:
        raw = self.get("mc", "seed").strip()
        return self.get_int("mc", "seed", minimum=0) if raw else self.seed

    @property
    def workers(self) -> int:
        return self.get_int("run", "workers", minimum=1)

    @property
    def block_size(self) -> int:
        return self.get_int("run", "block_size", minimum=1)

    @property
    def samples(self) -> int:
        return self.get_int("mc", "samples", minimum=1)

    def grid_spec(self) -> GridSpec:
        dims = self.get_int_list("grid", "dims")
        if not dims:
            raise ConfigError("[grid] dims 不能为空")
        spacing = self.get_float_list("grid", "spacing")
        if len(spacing) not in (1, len(dims)):
            raise ConfigError(f"[grid] spacing 个数 {len(spacing)} 与轴数 {len(dims)} 不一致")
        boundary = tuple(Boundary.parse(b) for b in self.get("grid", "boundary").split(","))
        return GridSpec(
            extent=tuple(dims),
            spacing=tuple(spacing) if len(spacing) > 1 else spacing[0],
            boundary=boundary,
        )


def _parse_override(sections: dict, seed: Optional[int], workers: Optional[int]) -> None:
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"--seed 必须非负: {seed}")
        sections["run"]["seed"] = str(seed)
        sections["mc"]["seed"] = ""
    if workers is not None:
        if workers < 1:
            raise ConfigError(f"--workers 必须为正: {workers}")
        sections["run"]["workers"] = str(workers)


def load_config(path: Optional[str] = None, seed: Optional[int] = None,
                workers: Optional[int] = None) -> RunConfig:
    """
    读取 INI 配置并与默认值合并

    Args:
        path: 配置文件路径，None 表示只用默认值
        seed: 命令行种子覆盖
        workers: 命令行线程数覆盖

    Returns:
        RunConfig
    """
    sections = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"配置文件不存在: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as e:
            raise ConfigError(f"无法解析配置文件 {path}: {e}") from e
        for sec in parser.sections():
            if sec not in sections:
                raise ConfigError(f"未知的配置段 [{sec}]")
            for key, value in parser.items(sec):
                if key not in sections[sec]:
                    raise ConfigError(f"[{sec}] 中未知的键 {key!r}")
                sections[sec][key] = value.strip()
        logger.info(f"已读取配置文件: {path}")
    _parse_override(sections, seed, workers)
    return RunConfig(sections=sections, source=path)
