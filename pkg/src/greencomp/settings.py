from functools import lru_cache
from typing import Literal, Optional, Tuple

from pydantic import Field
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict


class Settings(BaseSettings):
    """Solver defaults; every option object in the package draws from here."""

    model_config = SettingsConfigDict(env_file=".env", env_prefix="GREENCOMP_", extra="ignore")

    PSD_TOL: float = 1e-9
    RANK_ONE_TOL: float = 1e-6
    SIGN_PATTERN_CAP: int = 16

    SDP_BACKEND: Literal["ipm", "cvxpy"] = "ipm"
    IPM_MAX_ITER: int = 200
    IPM_TOL: float = 1e-8
    IPM_INFEAS_TOL: float = 1e-7

    BUNDLE_MAX_ITER: int = 500
    BUNDLE_MAX_CUTS: int = Field(50, ge=2)
    BUNDLE_THETA: float = 0.5
    BUNDLE_RHO0: float = 1.0
    BUNDLE_RHO_MIN: float = 1e-3
    BUNDLE_RHO_MAX: float = 1e3

    DUAL_MAX_ITER: int = 1000
    STEPSIZE: Literal["constant", "diminishing"] = "constant"
    STEP_MU: float = 0.05
    STEP_A: float = 0.5
    TOL_GAP: float = 1e-3
    TOL_G: float = 1e-2
    PROJECT_MULTIPLIERS: bool = True

    ROUNDING_SAMPLES: int = 1000
    THREADS: int = 1
    OUTPUT_DIR: str = "artifacts"

    LOG_LEVEL: str = "INFO"
    ENV: str = "dev"


class ExplicitSettings(Settings):
    """Defaults plus constructor values only; neither ``.env`` nor the environment is read."""

    model_config = SettingsConfigDict(extra="forbid")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings,)


_active: Optional[Settings] = None


@lru_cache(maxsize=1)
def _from_environment() -> Settings:
    return Settings()


def get_settings() -> Settings:
    return _active if _active is not None else _from_environment()


def use_settings(settings: Optional[Settings]) -> None:
    """Make ``settings`` what :func:`get_settings` returns; ``None`` restores the environment."""
    global _active
    _active = settings
