from functools import cache

from pydantic import model_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    YamlConfigSettingsSource
)


class Settings(BaseSettings):
    """ Process-wide settings, read from a config.yaml file
        or from the environment, with environment variables prepended
        with "qbl_" (case insensitive). The environment variables can
        be passed in the environment or in a .env file.
        Per-experiment parameters live in the run config (see config.py).
    """

    log_level: str = 'INFO'

    # Upper bound on worker threads for every pool (QBL_THREADS)
    threads: int = 1

    # Maximum number of M(λ) factorizations kept in the LRU cache
    factorization_cache_size: int = 8

    # Default directory for reports and CSV files
    output_dir: str = 'results'

    model_config = SettingsConfigDict(
        yaml_file="config.yaml",
        env_file='.env',
        env_prefix='qbl_',
        env_nested_delimiter="__",
        env_file_encoding='utf-8'
    )

    @classmethod
    def settings_customise_sources(  # noqa: PLR0913
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            YamlConfigSettingsSource(settings_cls),
            file_secret_settings,
        )

    @model_validator(mode='after')
    def clamp_threads(self):
        if self.threads < 1:
            self.threads = 1
        if self.factorization_cache_size < 1:
            self.factorization_cache_size = 1
        return self


@cache
def get_settings():
    return Settings()
