"""
Application configuration settings
Loads environment variables and provides typed runtime configuration
"""
from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables (prefix DWLAB_)"""

    # Application Info
    APP_NAME: str = "DampWave Lab"
    APP_VERSION: str = "1.0.0"
    ENVIRONMENT: str = "development"
    DEBUG: bool = False

    # Logging
    LOG_LEVEL: str = "INFO"

    # Execution
    JOBS: int = 1
    OUTPUT_DIR: str = "runs"

    @property
    def log_level_name(self) -> str:
        """Normalized logging level name"""
        return "DEBUG" if self.DEBUG else self.LOG_LEVEL.strip().upper()

    class Config:
        env_file = ".env"
        env_prefix = "DWLAB_"
        case_sensitive = True


# Create global settings instance
settings = Settings()


def resolve_jobs(cli_jobs: Optional[int] = None) -> int:
    """
    Resolve the worker count

    Precedence: command line flag, then DWLAB_JOBS, then the default of 1.

    Args:
        cli_jobs: Value of --jobs if given

    Returns:
        int: Number of worker threads (at least 1)
    """
    jobs = cli_jobs if cli_jobs is not None else settings.JOBS
    return max(1, int(jobs))
