"""扁平 key = value 配置文件的解析。

格式示例：

    # 时钟极限，λ 扫描
    task = sweep
    model = clock
    N = 3
    L = 64
    g_grid = 0
    lam_grid = 0.4:1.2:17          # start:stop:num，等价于 linspace
    static_charges = 3:up:1, 7:up:-1
    observables = energy, order_parameter
    dmrg.max_bond = 200
    dmrg.schedule = 32:1e-4, 64:1e-5, 200:0   # m:noise[:tol]
    rg.lower = 0.2

值在此只做结构拆分（列表、网格、电荷、阶段），数值类型交给 pydantic 转换。
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from errors import ConfigError
from models import DmrgParams, RgThresholds, RunConfig

logger = logging.getLogger(__name__)

GRID_KEYS = {"g_grid", "lam_grid"}
LIST_KEYS = {"observables"}
NESTED = {"dmrg": DmrgParams, "rg": RgThresholds}
NONE_WORDS = {"none", "null", ""}


# ---------- 文本层 ----------


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    """逐行拆出 key = value；# 之后为注释。重复键视为错误。"""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"{source}:{lineno} 缺少 '='")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("", f"{source}:{lineno} 键名为空")
        if key in out:
            raise ConfigError(key, f"{source}:{lineno} 重复定义")
        out[key] = value
    return out


def parse_file(path: str | Path) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise ConfigError("config", f"文件不存在: {p}")
    return parse_lines(p.read_text(encoding="utf-8").splitlines(), str(p))


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    """--set key=value 列表，后出现的覆盖先出现的。"""
    out: dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(item, "--set 需要 key=value 形式")
        key, value = (part.strip() for part in item.split("=", 1))
        out[key] = value
    return out


# ---------- 值层 ----------


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_grid(key: str, value: str) -> list[float]:
    """start:stop:num 或逗号分隔的显式列表。"""
    if ":" in value:
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(key, f"网格应为 start:stop:num，收到 {value!r}")
        try:
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(key, f"无法解析网格 {value!r}") from None
        if num < 1:
            raise ConfigError(key, "网格点数至少为 1")
        return [float(x) for x in np.linspace(start, stop, num)]
    try:
        return [float(v) for v in _split_list(value)]
    except ValueError:
        raise ConfigError(key, f"无法解析数值列表 {value!r}") from None


def parse_charges(key: str, value: str) -> list[dict[str, Any]]:
    """r:leg:q 列表，例如 3:up:1, 7:up:-1。"""
    out = []
    for item in _split_list(value):
        parts = item.split(":")
        if len(parts) != 3:
            raise ConfigError(key, f"静态电荷应为 r:leg:q，收到 {item!r}")
        r, leg, q = parts
        out.append({"r": r, "leg": leg, "q": q})
    return out


def parse_schedule(key: str, value: str) -> list[dict[str, Any]]:
    """m:noise[:tol] 列表。"""
    out = []
    for item in _split_list(value):
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(key, f"sweep 阶段应为 m:noise[:tol]，收到 {item!r}")
        stage = {"m": parts[0], "noise": parts[1]}
        if len(parts) == 3:
            stage["tol"] = parts[2]
        out.append(stage)
    return out


def _convert(key: str, value: str) -> Any:
    if key in GRID_KEYS:
        return parse_grid(key, value)
    if key in LIST_KEYS:
        return _split_list(value)
    if key == "static_charges":
        return parse_charges(key, value)
    if key == "dmrg.schedule":
        return parse_schedule(key, value)
    if value.lower() in NONE_WORDS:
        return None
    return value


# ---------- 组装 ----------


def _check_key(key: str) -> None:
    if "." in key:
        group, field = key.split(".", 1)
        model = NESTED.get(group)
        if model is None or field not in model.model_fields:
            raise ConfigError(key, "未知配置项")
    elif key not in RunConfig.model_fields or key in NESTED:
        raise ConfigError(key, "未知配置项")


def build_config(raw: dict[str, str]) -> RunConfig:
    """把字符串键值组装成 RunConfig。pydantic 校验失败时转为 ConfigError，键名取首个出错位置。"""
    data: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {g: {} for g in NESTED}
    for key, value in raw.items():
        _check_key(key)
        converted = _convert(key, value)
        if "." in key:
            group, field = key.split(".", 1)
            if converted is not None:
                nested[group][field] = converted
        elif converted is not None:
            data[key] = converted
    for group, fields in nested.items():
        if fields:
            data[group] = fields
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        loc = ".".join(str(p) for p in err["loc"]) or "config"
        raise ConfigError(loc, err["msg"]) from e


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, str] | None = None,
) -> RunConfig:
    """配置文件与命令行覆盖合并后校验。"""
    raw = parse_file(path) if path is not None else {}
    if overrides:
        for key, value in overrides.items():
            if key in raw:
                logger.debug("命令行覆盖 %s: %s -> %s", key, raw[key], value)
            raw[key] = value
    return build_config(raw)
