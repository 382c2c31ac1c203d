# src/smi_sim/services/preset_service.py
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import yaml

from smi_sim.config import settings
from smi_sim.core.exceptions import PresetNotFoundError
from smi_sim.domain.schemas import RunConfig
from smi_sim.utils.logging import get_logger

logger = get_logger(__name__)

PRESET_SUFFIX = ".yaml"


def preset_dir() -> Path:
    return Path(settings.preset_dir)


def list_presets() -> List[str]:
    root = preset_dir()
    if not root.is_dir():
        return []
    return sorted(p.stem for p in root.glob(f"*{PRESET_SUFFIX}"))


def load_config_file(path: Path) -> Dict[str, Any]:
    """Read a flat YAML file of dotted keys."""
    with open(path, "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path} must hold a mapping of dotted keys")
    return data


def load_preset(name: str) -> Dict[str, Any]:
    path = preset_dir() / f"{name}{PRESET_SUFFIX}"
    if not path.is_file():
        known = ", ".join(list_presets()) or "none"
        raise PresetNotFoundError(f"unknown preset '{name}' (available: {known})")
    flat = load_config_file(path)
    flat.setdefault("name", name)
    logger.debug(f"Loaded preset '{name}' from {path}")
    return flat


def parse_override(text: str) -> Tuple[str, Any]:
    """'protocol.k=12' -> ('protocol.k', 12); the value is parsed as YAML."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ValueError(f"override must look like key=value, got '{text}'")
    return key, yaml.safe_load(raw) if raw.strip() else None


def unflatten(flat: Mapping[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for dotted, value in flat.items():
        parts = str(dotted).split(".")
        cursor = nested
        for part in parts[:-1]:
            child = cursor.setdefault(part, {})
            if not isinstance(child, dict):
                raise ValueError(f"key '{dotted}' conflicts with scalar '{part}'")
            cursor = child
        leaf = cursor.get(parts[-1])
        if isinstance(leaf, dict) and isinstance(value, dict):
            leaf.update(value)
        else:
            cursor[parts[-1]] = value
    return nested


def build_run_config(
    flat: Mapping[str, Any],
    overrides: Iterable[Tuple[str, Any]] = (),
) -> RunConfig:
    """Merge dotted overrides over a flat config and validate it."""
    merged = dict(flat)
    for key, value in overrides:
        merged[key] = value
    return RunConfig.model_validate(unflatten(merged))


def resolve_config(
    preset: Optional[str] = None,
    config_path: Optional[Path] = None,
    overrides: Iterable[Tuple[str, Any]] = (),
) -> RunConfig:
    """Preset first, then a config file on top, then --set overrides."""
    flat: Dict[str, Any] = {}
    if preset:
        flat.update(load_preset(preset))
    if config_path is not None:
        flat.update(load_config_file(config_path))
    return build_run_config(flat, overrides)
