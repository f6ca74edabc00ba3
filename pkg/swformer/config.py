"""
Configuration & environment variables for the SWformer toolkit.
"""

from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Toolkit settings loaded from environment variables (.env file)
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
        case_sensitive=True,
    )

    # Worker parallelism (0 = torch default)
    SWF_THREADS: int = 0

    # Paths
    SWF_OUTPUT_DIR: str = "runs"
    SWF_DATA_DIR: str = "data"
    SWF_MNIST_DIR: Optional[str] = None

    SWF_LOG_LEVEL: str = "INFO"

    # Energy constants (pJ per operation, 45 nm convention)
    SWF_E_MAC_PJ: float = 4.6
    SWF_E_AC_PJ: float = 0.9

    # Desk-scale training checks are opt-in
    SWF_RUN_SLOW: bool = False

    def get_output_dir(self, base_dir: Path) -> Path:
        """Resolve the default run output root relative to base_dir."""
        return base_dir / self.SWF_OUTPUT_DIR

    def get_data_path(self, path: str) -> Path:
        """Resolve a dataset path; relative paths live under SWF_DATA_DIR."""
        p = Path(path)
        if p.is_absolute():
            return p
        return Path(self.SWF_DATA_DIR) / p

    def apply_thread_cap(self) -> None:
        """Cap torch intra-op threads when SWF_THREADS is set."""
        if self.SWF_THREADS > 0:
            import torch

            torch.set_num_threads(self.SWF_THREADS)


# Global settings instance (singleton)
settings = Settings()
