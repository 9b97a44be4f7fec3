"""Runtime configuration read from the environment.

Uses Pydantic BaseSettings to read environment variables with the
`AW_` prefix.

Example:
    export AW_WORKERS=4
"""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from adapted_wasserstein.core.constants import DEFAULT_LP_MAX_VARIABLES, OUTPUT_FPATH


class Settings(BaseSettings):
    """Settings read from environment variables.

    Attributes:
        workers (int): Worker processes for sweeps and verifier suites.
            1 runs everything inline.
        lp_max_variables (int): Largest LP the simplex solver accepts.
        output_dir (Path): Default directory for generated artifacts.
    """

    model_config = SettingsConfigDict(env_prefix="AW_")

    workers: int = Field(default=1, ge=1)
    lp_max_variables: int = Field(default=DEFAULT_LP_MAX_VARIABLES, ge=1)
    output_dir: Path = OUTPUT_FPATH


settings = Settings()
