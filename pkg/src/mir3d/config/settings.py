"""Application settings using pydantic-settings."""

import os
import re
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import AliasChoices, Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..errors import FormatError
from ..utils.files import read_text_file


class Settings(BaseSettings):
    """Engine and benchmark configuration.

    Settings can be configured via environment variables with MIR3D_ prefix.
    Example: MIR3D_N_PER_SLICE=40
    The thread cap is also read from the bare THREADS variable.
    """

    model_config = SettingsConfigDict(
        env_prefix="MIR3D_",
        env_file=".env",
        extra="ignore",
        populate_by_name=True,
    )

    # Paths given on the command line are resolved against this directory
    workdir: Path = Path(".")

    # Internal parallelism cap (per-slice searches, per-query evaluation)
    threads: int = Field(
        default=1,
        ge=1,
        validation_alias=AliasChoices("THREADS", "MIR3D_THREADS", "threads"),
    )

    # Slice retrieval
    n_per_slice: int = Field(default=20, ge=1)
    caption_n: int = Field(default=20, ge=1)

    # Lesion pipeline
    connectivity: Literal[6, 26] = 26

    # Evaluation
    k_list: list[int] = Field(default_factory=lambda: [3, 5, 10])
    default_k: int = Field(default=10, ge=1)
    ensemble_first: Literal["caption", "slice_freq"] = "caption"
    ap_depth: int | None = None  # None ranks the whole train index
    hist_bin_width_cm: float = Field(default=1.0, gt=0)


def _expand_env_vars(value: str) -> str:
    """Expand ${VAR} references in string values."""
    pattern = r"\$\{([^}]+)\}"

    def replacer(match: re.Match[str]) -> str:
        return os.environ.get(match.group(1), match.group(0))

    return re.sub(pattern, replacer, value)


def _process_config_dict(config: dict[str, Any]) -> dict[str, Any]:
    """Recursively expand env vars in a loaded config mapping."""
    result: dict[str, Any] = {}
    for key, value in config.items():
        if isinstance(value, str):
            result[key] = _expand_env_vars(value)
        elif isinstance(value, dict):
            result[key] = _process_config_dict(value)
        else:
            result[key] = value
    return result


def load_settings(config_path: Path | None = None, **overrides: Any) -> Settings:
    """Build settings from environment, an optional YAML file and explicit overrides.

    Precedence (lowest first): defaults, environment, YAML file, overrides.
    Overrides whose value is None are ignored so unset CLI flags fall through.

    Raises:
        FormatError: The YAML file is unreadable or not a mapping
    """
    base = Settings()
    data: dict[str, Any] = {}

    if config_path is not None and config_path.exists():
        try:
            loaded = yaml.safe_load(read_text_file(config_path))
        except yaml.YAMLError as e:
            raise FormatError(f"{config_path}: malformed settings file: {e}") from e
        if loaded is not None and not isinstance(loaded, dict):
            raise FormatError(f"{config_path}: settings file must be a mapping")
        data = _process_config_dict(loaded or {})

    data.update({key: value for key, value in overrides.items() if value is not None})
    if not data:
        return base
    return Settings.model_validate({**base.model_dump(), **data})


# Singleton instance
settings = Settings()


def configure(config_path: Path | None = None, **overrides: Any) -> Settings:
    """Load settings and install them into the process-wide singleton."""
    loaded = load_settings(config_path, **overrides)
    for name in Settings.model_fields:
        setattr(settings, name, getattr(loaded, name))
    return settings
