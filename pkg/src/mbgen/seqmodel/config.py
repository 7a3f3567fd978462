from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields


@dataclass
class ModelConfig:
    """Shape of the encoder-decoder.

    Attention width is ``heads * head_dim`` and need not equal ``d_model``.
    The first ``n_bi`` encoder and decoder layers get behavior-injected FFNs;
    every decoder FFN is a position-routed sparse layer with ``experts``
    experts (``experts=1`` makes it dense).
    """

    d_model: int = 64
    d_inner: int = 128
    heads: int = 4
    head_dim: int = 16
    enc_layers: int = 2
    dec_layers: int = 2
    experts: int = 5
    n_bi: int = 2
    d_beh: int = 16
    dropout: float = 0.1
    max_items: int = 50
    n_users: int = 2000
    n_behaviors: int = 4
    codebook_size: int = 16
    n_digits: int = 3
    dtype: str = "float32"
    init_scale: float = 0.02
    seed: int = 0

    def __post_init__(self):
        for name in ("d_model", "d_inner", "heads", "head_dim", "enc_layers", "dec_layers", "experts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.n_bi <= min(self.enc_layers, self.dec_layers):
            raise ValueError(f"n_bi={self.n_bi} must lie in [0, min(enc_layers, dec_layers)]")
        if self.n_bi > 0 and self.d_beh < 1:
            raise ValueError("behavior injection needs d_beh >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def attn_dim(self) -> int:
        return self.heads * self.head_dim

    @property
    def max_enc_len(self) -> int:
        return 1 + (self.n_digits + 1) * self.max_items + 1

    @property
    def dec_len(self) -> int:
        return self.n_digits + 2  # [BOS, b, c1..cm]

    @property
    def vocab_size(self) -> int:
        return 3 + self.n_users + self.n_behaviors + self.n_digits * self.codebook_size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ModelConfig fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))


def full_preset(**overrides) -> ModelConfig:
    """Full-size shape: 256-wide model, 4 dense encoder and 4 sparse decoder layers."""
    base = dict(d_model=256, d_inner=512, heads=6, head_dim=64, enc_layers=4, dec_layers=4,
                experts=5, n_bi=2, d_beh=64, dropout=0.1, codebook_size=64)
    base.update(overrides)
    return ModelConfig(**base)


def desk_preset(**overrides) -> ModelConfig:
    return ModelConfig(**overrides)


@dataclass
class TrainConfig:
    """Optimization schedule. Learning rate is constant after an optional linear warmup."""

    steps: int = 3000
    batch_size: int = 64
    lr: float = 2e-3
    warmup: int = 100
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.98)
    clip_norm: float = 1.0
    eval_every: int = 500
    sliding_window: bool = False
    diverge_factor: float = 10.0
    diverge_patience: int = 3
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("steps >= 0, batch_size >= 1 and lr > 0 required")

    def lr_at(self, step: int) -> float:
        if self.warmup > 0 and step < self.warmup:
            return self.lr * (step + 1) / self.warmup
        return self.lr

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)
