"""
Config - all the settings in one place.

Reads from environment variables or .env file.
Change stuff here or set env vars to override (ZEF_ prefix not needed,
e.g. LOG_LEVEL=DEBUG or RANGE_BITS=16).
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Loads config from env vars / .env file."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # protocol limits
    max_uid_length: int = 8
    range_bits: int = 32  # coin values live in [0, 2^range_bits - 1]
    max_frame_bytes: int = 8 * 1024 * 1024
    udp_max_frame_bytes: int = 1400  # bigger frames must go over TCP

    # quorum driver (wallet side)
    request_timeout_seconds: float = 5.0
    max_retries: int = 5
    backoff_base_seconds: float = 0.05
    backoff_max_seconds: float = 2.0
    quorum_linger_seconds: float = 0.05  # let in-flight confirmations finish after a quorum acked
    max_sync_rounds: int = 3  # replay rounds per operation before giving up

    # cross-shard delivery between shard processes
    cross_shard_retry_seconds: float = 0.2
    cross_shard_max_backoff_seconds: float = 5.0

    # snapshots
    snapshot_enabled: bool = False
    snapshot_dir: str = "data/snapshots"

    # verified-certificate cache
    enable_cache: bool = True
    cache_max_size: int = 10000

    # logging
    log_level: str = "INFO"
    log_to_file: bool = False
    log_file_path: str = "logs/zef.log"
    log_max_bytes: int = 10485760  # 10MB
    log_backup_count: int = 5

    # admin / metrics api
    api_host: str = "127.0.0.1"
    metrics_port: int = 0  # 0 = metrics endpoint disabled

    # simulator
    sim_default_seed: int = 7
    sim_schedule_count: int = 10000
    sim_max_steps: int = 200000
    sim_trace_dir: str = "sim_traces"

    # benchmarks
    bench_runs: int = 3
    bench_microbench_iterations: int = 100
    bench_out_dir: str = "bench_results"

    def quorum_driver_limits(self) -> dict:
        """Timeout/backoff knobs as one dict (handy for logging)."""
        return {
            "timeout": self.request_timeout_seconds,
            "retries": self.max_retries,
            "backoff_base": self.backoff_base_seconds,
            "backoff_max": self.backoff_max_seconds,
        }


settings = Settings()
