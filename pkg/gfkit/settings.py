from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", env_prefix="GFKIT_", extra="ignore")

    # --- Run control. ---

    # Overrides the scenario seed when set (GFKIT_SEED).
    SEED: int | None = None

    # Logfire
    LOGFIRE_TOKEN: str | None = None
    LOGFIRE_CONSOLE: bool = True

    # --- Numerical defaults, tweak with care. ---

    # Kernel moments
    KERNEL_QUAD_RTOL: float = 1e-10
    ALPHA_PROBE_REFINEMENTS: int = 4

    # Perron eigensolver
    PERRON_TOL: float = 1e-9
    PERRON_MAX_ITER: int = 500

    # Evolution
    BLOWUP_THRESHOLD: float = 1e12
    TAIL_TOLERANCE: float = 1e-6
    MAX_SNAPSHOTS: int = 512

    # Diagnostics
    OSCILLATION_THRESHOLD: float = 0.9

    # Concurrency
    PARTICLE_WORKERS: int = 4
    SWEEP_JOBS: int = 1


settings = Settings()
