"""
CF-Safe - Settings
Tool-wide settings and the --config file layer
"""

import json
from pathlib import Path
from typing import Any, Dict, Literal, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.model.errors import UsageError

Settings = TypeVar("Settings", bound=BaseModel)


class ToolSettings(BaseModel):
    """Knobs shared by every command"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    state_limit: int = Field(5_000_000, ge=1)
    numeric: Literal["auto", "exact", "float"] = "auto"
    tolerance: float = Field(1e-12, gt=0)
    max_sweeps: int = Field(1_000_000, ge=1)
    elimination_budget_bytes: int = Field(2 * 1024 ** 3, ge=0)
    strict: bool = False
    passes: int = Field(1, ge=1)
    fallback_baseline: bool = False
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "WARNING"


def normalize_keys(data: Dict[str, Any]) -> Dict[str, Any]:
    """Config keys may use dashes like the long flags"""
    return {str(key).replace("-", "_"): value for key, value in data.items()}


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    except UnicodeDecodeError as exc:
        raise UsageError(f"config file {path} is not valid UTF-8 (byte {exc.start})") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must contain a JSON object")
    return normalize_keys(data)


def validated(model: Type[Settings], data: Dict[str, Any]) -> Settings:
    """Build a settings model, turning validation failures into usage errors"""
    try:
        return model(**data)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise UsageError(f"invalid configuration: {problems}") from None
