"""Training configuration dataclasses and their validation."""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace

from .errors import ConfigError

TABULAR_FUZZINESS = 1.05
TEXT_FUZZINESS = 1.025


@dataclass(frozen=True)
class KmeansConfig:
    k: int
    batch_size: int = 512
    init_sample_factor: int = 5
    n_init: int = 5
    max_epochs: int = 1000
    seed: int = 0

    def init_pool_size(self, n: int) -> int:
        return min(n, self.init_sample_factor * self.batch_size)


@dataclass
class TrainConfig:
    """Hyperparameters of the two-phase training procedure.

    Defaults follow the reference recipe: Adam at lr 0.002 with plateau decay,
    batch 512, a 400-epoch warmup, 100 tempering epochs per gate bank, and
    1000 total epochs (1100 when pairwise gates are enabled, to make room for
    the extra tempering phase).
    """

    k: int = 2
    c: int = 1  # single-feature shape functions
    p: int = 0  # pairwise shape functions
    d: int | None = None  # interpretable feature count, bound from the dataset
    b: int = 64  # basis outputs per backbone
    hidden_dim: int = 256  # width of each of the two hidden layers
    m: float = TABULAR_FUZZINESS
    gamma: float = 1.0
    alpha_entmax: float = 1.5
    lr: float = 0.002
    batch: int = 512
    warmup_epochs: int = 400
    temper_epochs: int = 100  # per gate bank
    total_epochs: int | None = None  # default: 1000, or 1100 when p > 0
    t_final: float = 1e-3
    epsilon: float | None = None  # explicit anneal factor; derived from schedule if None
    hard_switch_tol: float = 1e-9
    plateau_patience: int = 100
    plateau_factor: float = 0.5
    min_lr: float = 1e-6
    ablation: str = "full"  # full | no_cl | no_kl
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    checkpoint_every: int = 100
    kmeans: KmeansConfig | None = None

    def resolved_total(self) -> int:
        if self.total_epochs is not None:
            return self.total_epochs
        return 1100 if self.p > 0 else 1000

    def resolved_kmeans(self, seed: int = 0) -> KmeansConfig:
        if self.kmeans is not None:
            return self.kmeans
        return KmeansConfig(k=self.k, seed=seed)

    def effective_gamma(self) -> float:
        return 0.0 if self.ablation == "no_kl" else self.gamma

    def validate(self) -> "TrainConfig":
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.c < 0 or self.p < 0 or self.c + self.p < 1:
            raise ConfigError("need c >= 0, p >= 0 and c + p >= 1")
        if self.m < 1.0:
            raise ConfigError("fuzziness m must be >= 1.0")
        if self.gamma < 0.0:
            raise ConfigError("gamma must be >= 0")
        if self.batch < 1:
            raise ConfigError("batch size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.alpha_entmax <= 1.0:
            raise ConfigError("entmax alpha must be > 1")
        if self.ablation not in ("full", "no_cl", "no_kl"):
            raise ConfigError(f"unknown ablation mode {self.ablation!r}")
        banks = (1 if self.c else 0) + (1 if self.p else 0)
        span = self.warmup_epochs + banks * self.temper_epochs
        total = self.resolved_total()
        if total < self.warmup_epochs:
            raise ConfigError(f"total epochs ({total}) below warmup ({self.warmup_epochs})")
        # total == warmup is the pure-warmup edge: tempering never starts
        if total > self.warmup_epochs and span > total:
            raise ConfigError(
                f"warmup ({self.warmup_epochs}) plus tempering ({banks} x "
                f"{self.temper_epochs}) exceeds total epochs ({total})"
            )
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("kmeans") is not None:
            d["kmeans"] = KmeansConfig(**d["kmeans"])
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)

    def with_ablation(self, mode: str) -> "TrainConfig":
        if mode not in ("full", "no_cl", "no_kl"):
            raise ConfigError(f"unknown ablation mode {mode!r}")
        return replace(self, ablation=mode)
