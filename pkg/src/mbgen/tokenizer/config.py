from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass
class TokenizerConfig:
    """Settings shared by the semantic-ID quantizer, k-means and the baselines.

    ``max_epochs``/``rel_tol``/``plateau_epochs`` define "trained to
    convergence": stop once the epoch loss improved by less than ``rel_tol``
    (relative) across the last ``plateau_epochs`` epochs.
    """

    n_digits: int = 3
    codebook_size: int = 16
    beta: float = 0.25
    latent_dim: int = 32
    hidden: tuple[int, ...] = (128, 64)
    ema_decay: float = 0.99
    dead_patience: int = 1
    kmeans_iters: int = 100
    kmeans_tol: float = 1e-6
    lr: float = 0.01
    batch_size: int = 256
    max_epochs: int = 500
    plateau_epochs: int = 10
    rel_tol: float = 1e-5
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.codebook_size < 2:
            raise ValueError("codebook_size (K) must be >= 2")
        if self.n_digits < 2:
            raise ValueError("n_digits (m) must be >= 2")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0 < self.ema_decay < 1:
            raise ValueError("ema_decay must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TokenizerConfig":
        return cls(**d)
