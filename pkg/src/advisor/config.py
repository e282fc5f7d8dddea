"""
CF-Safe - Advisor Configuration
"""

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

ADVISOR_KINDS = ("llm-description", "llm-prism", "baseline", "scripted")
LLM_KINDS = ("llm-description", "llm-prism")

# report column headers
METHOD_NAMES = {
    "llm-description": "LLM Desc.",
    "llm-prism": "LLM PRISM",
    "baseline": "Baseline",
    "scripted": "Scripted",
}

# command-line spellings
KIND_ALIASES = {
    "llm-desc": "llm-description",
    "llm-description": "llm-description",
    "llm-prism": "llm-prism",
    "baseline": "baseline",
    "scripted": "scripted",
}

DEFAULT_API_KEY_ENV = "CF_SAFE_API_KEY"


class AdvisorConfig(BaseModel):
    """How counterfactual advice is produced for a frontier"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["llm-description", "llm-prism", "baseline", "scripted"]
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    description_path: Optional[Path] = None
    script_path: Optional[Path] = None
    cache_dir: Optional[Path] = None
    timeout: float = Field(60.0, gt=0)
    max_retries: int = Field(3, ge=0)
    excerpt_budget: int = Field(8000, ge=512)

    @model_validator(mode="after")
    def check_requirements(self) -> "AdvisorConfig":
        if self.kind in LLM_KINDS:
            missing = [name for name in ("endpoint", "model", "api_key_env") if not getattr(self, name)]
            if missing:
                raise ValueError(f"{self.kind} advisor needs {', '.join(missing)}")
        if self.kind == "llm-description" and self.description_path is None:
            raise ValueError("llm-description advisor needs a description file")
        if self.kind == "scripted" and self.script_path is None:
            raise ValueError("scripted advisor needs a script file")
        return self

    @property
    def method_name(self) -> str:
        return METHOD_NAMES[self.kind]

    @property
    def is_llm(self) -> bool:
        return self.kind in LLM_KINDS
