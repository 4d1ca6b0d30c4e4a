"""Configuration management for ConfKeyBench"""
from pathlib import Path
from typing import Literal, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

from app.constants import (
    DEFAULT_BLOCK_LENGTH,
    DEFAULT_LIFT_SIZE,
    DEFAULT_MAX_BP_ITERATIONS,
    TEST_BLOCK_LENGTH,
)

DATA_DIR = Path(__file__).resolve().parent / "data"


class Settings(BaseSettings):
    """Process settings with environment variable support (prefix CKA_)"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="CKA_",
        case_sensitive=False,
        extra="ignore"
    )

    # Environment
    environment: Literal["dev", "prod"] = "dev"

    # Logging
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    log_json: bool = True

    # Reproducibility
    default_seed: int = 20200101

    # Work pool
    max_workers: int = 4

    # Output
    output_dir: Path = Path("./output")
    report_timing: bool = False

    # LDPC
    ldpc_block_length: int = DEFAULT_BLOCK_LENGTH
    ldpc_test_block_length: int = TEST_BLOCK_LENGTH
    ldpc_max_iterations: int = DEFAULT_MAX_BP_ITERATIONS
    ldpc_lift_size: int = DEFAULT_LIFT_SIZE
    ldpc_code_seed: int = 64800
    rate_thresholds_path: Path = DATA_DIR / "rate_thresholds.json"
    code_cache_dir: Optional[Path] = None

    @property
    def is_development(self) -> bool:
        """Check if running in development mode"""
        return self.environment == "dev"

    @property
    def is_production(self) -> bool:
        """Check if running in production mode"""
        return self.environment == "prod"


# Global settings instance
settings = Settings()
