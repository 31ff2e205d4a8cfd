from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Logging
    log_level: str = Field(default="INFO", description="Root log level for the CLI and scripts")
    log_format: str = Field(
        default="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        description="Log record format"
    )

    # Workload generation
    default_seed: int = Field(default=7, description="Seed used when a generator is called without one")
    insert_bias: float = Field(default=0.5, description="Probability that a random step is an insertion")
    vertex_rate: float = Field(default=0.05, description="Share of vertex operations in vertex-mix streams")
    sliding_window: int = Field(default=256, description="Live-edge window for sliding-window streams")

    # Amortized-bound constants
    adjustment_constant: int = Field(default=10, description="c in total adjustments <= c*(K+n)")
    refresh_work_constant: int = Field(default=32, description="c in degree-refresh work <= c*(edge updates)")
    class_change_work_constant: int = Field(default=64, description="c in class-change work <= c*(edge updates)")
    update_ops_constant: int = Field(default=64, description="c in per-update and per-epoch ops bounds")
    delta_work_constant: int = Field(default=32, description="c in delta-engine ops <= c*K*Delta")
    sim_constant: int = Field(default=64, description="c in per-update simulator rounds/messages bounds")
    payload_bits_constant: int = Field(default=4, description="c in message payload <= c*log2(n) bits")
    registry_slack: int = Field(default=8, description="Slack factor for High/MedHigh registry size bounds")
    sim_neighbor_slack: int = Field(default=8, description="UpdateNeighbors messages above slack*t_high break the protocol")
    sim_two_hop_slack: int = Field(default=24, description="UpdateTwoHopNeighbors messages above slack*t_high break the protocol")

    # Engine behaviour
    strict_invariants: bool = Field(
        default=False,
        description="Raise on core-shape violations instead of only recording them"
    )
    drain_guard_factor: int = Field(default=4, description="Removal-queue drains abort after factor*(n+1) steps")

    # Verification
    verify_max_n: int = Field(default=300, description="Above this n, --verify warns that audits are O(n+m) per update")

    # Simulator
    parallel_rounds: bool = Field(default=False, description="Step nodes of a round on a thread pool")
    sim_workers: int = Field(default=4, description="Thread pool size for the parallel round executor")

    class Config:
        env_prefix = "MIS_"
        env_file = ".env"
        env_file_encoding = "utf-8"


# Global settings instance
settings = Settings()
