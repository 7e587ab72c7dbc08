"""Scenario config files and dotted key=value overrides."""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from pydantic import ValidationError

from app.core.errors import ConfigError
from app.logger import get_logger
from app.schemas.scenario import ScenarioConfig

logger = get_logger(__name__)


def parse_value(raw: str) -> Any:
    """JSON literal when it parses, the raw string otherwise."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(tree: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Set dotted keys in a raw config tree, e.g. ``net.mode=Broadcast``."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(item, "override must have the form key=value")
        parts = key.split(".")
        node: Any = tree
        for depth, part in enumerate(parts[:-1]):
            path = ".".join(parts[: depth + 1])
            if isinstance(node, list):
                node = _list_item(node, part, path)
            elif isinstance(node, dict):
                node = node.setdefault(part, {})
            else:
                raise ConfigError(path, "cannot descend into a scalar value")
        last = parts[-1]
        if isinstance(node, list):
            _list_item(node, last, key)
            node[int(last)] = parse_value(raw)
        elif isinstance(node, dict):
            node[last] = parse_value(raw)
        else:
            raise ConfigError(key, "cannot descend into a scalar value")
    return tree


def _list_item(items: list, part: str, path: str) -> Any:
    if not part.isdigit() or int(part) >= len(items):
        raise ConfigError(path, f"no list entry '{part}'")
    return items[int(part)]


def validate_config(tree: Dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(tree)
    except ValidationError as e:
        error = e.errors()[0]
        path = ".".join(str(p) for p in error["loc"]) or "<root>"
        raise ConfigError(path, error["msg"]) from e


def load_config(
    path: str | Path,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
) -> ScenarioConfig:
    """Read a JSON scenario file, apply overrides, then validate.

    A relative ``spec`` path is resolved against the config file's directory
    when it exists there.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("<root>", f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(tree, dict):
        raise ConfigError("<root>", "scenario config must be a JSON object")

    tree = apply_overrides(tree, overrides)
    if seed is not None:
        tree["seed"] = seed
    spec = tree.get("spec")
    if isinstance(spec, str) and not Path(spec).is_absolute():
        candidate = path.parent / spec
        if candidate.exists():
            tree["spec"] = str(candidate)
    cfg = validate_config(tree)
    logger.debug(f"Loaded scenario '{cfg.scenario}' from {path}")
    return cfg
