"""
Environment configuration manager
"""
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from components.errors import ConfigurationError

PROJECT_ROOT = Path(__file__).resolve().parent.parent

load_dotenv(PROJECT_ROOT / ".env")

LOG_FORMAT = "%(asctime)s [%(levelname)8s] %(name)s: %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class EngineSettings(BaseModel):
    """Coalition engine knobs"""

    chunk_rows: int = Field(8192, gt=0)
    max_exact_features: int = Field(15, ge=1)
    threads: int = Field(1, ge=1)
    label_threshold: float = Field(0.5, gt=0.0, lt=1.0)


class FittingSettings(BaseModel):
    tol: float = Field(1e-8, gt=0.0)
    max_iter: int = Field(100, ge=1)
    rank_tol: float = Field(1e-10, gt=0.0)


class WlsSettings(BaseModel):
    rank_tol: float = Field(1e-10, gt=0.0)
    sampling: Literal["uniform", "kernel"] = "uniform"


class LoggingSettings(BaseModel):
    level: str = "INFO"
    format: str = LOG_FORMAT
    datefmt: str = LOG_DATE_FORMAT


class DataSettings(BaseModel):
    output_dir: str = "reports/studies"


class Settings(BaseModel):
    """Validated view of one ``data/environments/<env>.json`` file"""

    engine: EngineSettings = Field(default_factory=EngineSettings)
    fitting: FittingSettings = Field(default_factory=FittingSettings)
    wls: WlsSettings = Field(default_factory=WlsSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)
    data_config: DataSettings = Field(default_factory=DataSettings)
    studies: Dict[str, Dict[str, Any]] = Field(default_factory=dict)


class EnvironmentConfig:
    """Manage environment-specific configurations"""

    def __init__(self, environment: Optional[str] = None):
        self.environment = environment or os.getenv("XPER_ENV", "dev")
        self.config = self._load_config()
        try:
            self.settings = Settings.model_validate(self.config)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"])
            raise ConfigurationError(
                f"Invalid setting '{location}' in environment '{self.environment}': {first['msg']}"
            ) from e

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration for current environment"""
        config_file = PROJECT_ROOT / "data" / "environments" / f"{self.environment}.json"

        try:
            with open(config_file, "r", encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError:
            raise FileNotFoundError(f"Configuration file not found: {config_file}")
        except json.JSONDecodeError as e:
            raise ValueError(f"Invalid JSON in configuration file {config_file}: {e}")

    @property
    def engine(self) -> EngineSettings:
        return self.settings.engine

    @property
    def fitting(self) -> FittingSettings:
        return self.settings.fitting

    @property
    def wls(self) -> WlsSettings:
        return self.settings.wls

    @property
    def chunk_rows(self) -> int:
        """Hybrid rows per predict call"""
        return self.engine.chunk_rows

    @property
    def max_exact_features(self) -> int:
        """Largest q accepted by the exact estimator without override"""
        return self.engine.max_exact_features

    @property
    def label_threshold(self) -> float:
        return self.engine.label_threshold

    @property
    def threads(self) -> int:
        """Worker count; XPER_THREADS overrides the file value"""
        raw = os.getenv("XPER_THREADS")
        if raw is None or raw.strip() == "":
            return self.engine.threads
        try:
            value = int(raw)
        except ValueError:
            raise ConfigurationError(f"XPER_THREADS must be an integer, got '{raw}'")
        if value < 1:
            raise ConfigurationError(f"XPER_THREADS must be at least 1, got {value}")
        return value

    @property
    def log_settings(self) -> LoggingSettings:
        return self.settings.logging

    @property
    def output_dir(self) -> Path:
        """Directory receiving study artifacts"""
        path = Path(self.settings.data_config.output_dir)
        return path if path.is_absolute() else PROJECT_ROOT / path

    @property
    def scenarios(self) -> List[str]:
        return sorted(self.settings.studies)

    def get_study_defaults(self, scenario: str) -> Dict[str, Any]:
        """Get the default parameters of one study scenario"""
        studies = self.settings.studies
        if scenario not in studies:
            raise ConfigurationError(
                f"Scenario '{scenario}' not found in configuration (known: {', '.join(sorted(studies))})"
            )
        return dict(studies[scenario])

    def is_development(self) -> bool:
        return self.environment == "dev"


def configure_logging(level: Optional[str] = None, settings: Optional[LoggingSettings] = None) -> None:
    """Send log records to stderr in the shared format; stdout stays free for reports."""
    settings = settings or config.log_settings
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_xper_handler", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(settings.format, settings.datefmt))
    handler._xper_handler = True
    root.addHandler(handler)
    root.setLevel((level or settings.level).upper())


# Global configuration instance
config = EnvironmentConfig()


# Utility functions
def get_config(environment: Optional[str] = None) -> EnvironmentConfig:
    """Get configuration instance for specific environment"""
    if environment is None or environment == config.environment:
        return config
    return EnvironmentConfig(environment)


def get_threads() -> int:
    return config.threads


def get_study_defaults(scenario: str) -> Dict[str, Any]:
    """Get study defaults for current environment"""
    return config.get_study_defaults(scenario)
