"""Configuration management with Pydantic Settings."""

from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .models import DedupMode, TriggerConfig


LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class Settings(BaseSettings):
    """Pipeline settings loaded from environment variables or an env-style config file."""

    model_config = SettingsConfigDict(env_prefix="XMAPS_", env_file=".env", env_file_encoding="utf-8", extra="ignore")

    # Input files
    calibration_path: Path | None = Field(default=None, description="Calibration key = value file")
    time_map_path: Path | None = Field(default=None, description="Projector time map (map binary)")
    xmap_path: Path | None = Field(default=None, description="Projector X-map (map binary)")
    events_path: Path | None = Field(default=None, description="Event file (binary or CSV)")
    rect_map_path: Path | None = Field(default=None, description="Precomputed camera rectification map")

    # Frame triggers
    max_gap_us: int = Field(default=40, gt=0, description="Largest gap between consecutive events in a frame")
    min_span_us: int = Field(default=8000, gt=0, description="Shortest accepted frame")
    batch_span_us: int = Field(default=16667, gt=0, description="Minimum span of an analysed batch")

    # Depth estimation
    dedup_mode: DedupMode = Field(default=DedupMode.KEEP_FIRST, description="Duplicate coordinate handling")
    max_disparity: int = Field(default=128, gt=0, description="Disparity search range of the oracle")
    time_columns: int | None = Field(default=None, gt=0, description="X-map time columns (default: projector width)")
    seed: int = Field(default=0, description="Seed for the simulator")
    workers: int = Field(default=1, ge=1, description="Threads used for per-frame depth")
    log_level: LogLevel = Field(default="WARNING", description="Root log level")

    # Cache Configuration
    cache_enabled: bool = Field(default=True, description="Cache built X-maps on disk")
    cache_ttl_seconds: int = Field(default=7 * 24 * 3600, description="Cache TTL in seconds")
    cache_dir: Path = Field(default=Path.home() / ".xmaps-depth" / "cache", description="Cache directory")

    @field_validator("log_level", mode="before")
    @classmethod
    def _upper_log_level(cls, value: object) -> object:
        return value.upper() if isinstance(value, str) else value

    @model_validator(mode="after")
    def _check_trigger_thresholds(self) -> "Settings":
        if not self.max_gap_us < self.min_span_us < self.batch_span_us:
            raise ValueError("expected max_gap_us < min_span_us < batch_span_us")
        return self

    def to_trigger_config(self) -> TriggerConfig:
        """Build the frame trigger thresholds."""
        return TriggerConfig(
            max_intra_frame_gap=self.max_gap_us,
            min_frame_span=self.min_span_us,
            batch_span=self.batch_span_us,
        )


_settings: Settings | None = None


def get_settings() -> Settings:
    """Get singleton settings instance."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def load_settings(config_file: Path | None = None, **overrides: object) -> Settings:
    """Build settings from an explicit config file and install them as the singleton."""
    global _settings
    if config_file is not None:
        _settings = Settings(_env_file=config_file, **overrides)  # type: ignore[call-arg]
    else:
        _settings = Settings(**overrides)  # type: ignore[arg-type]
    return _settings
