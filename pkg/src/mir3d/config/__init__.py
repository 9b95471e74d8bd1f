"""Configuration module."""

from .settings import Settings, configure, load_settings, settings

__all__ = ["Settings", "configure", "load_settings", "settings"]
