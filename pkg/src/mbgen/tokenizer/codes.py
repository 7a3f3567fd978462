"""Item code tables and the three tokenizers that produce them."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np

from ..numerics.checkpoint import atomic_write_text, load_checkpoint, save_checkpoint
from .config import TokenizerConfig
from .kmeans import kmeans
from .quantizer import QuantizedAutoencoder

log = logging.getLogger(__name__)


class CapacityError(ValueError):
    pass


@dataclass
class CodeAssignment:
    """``codes[v]`` is the digit tuple of item ``v``; the map must be injective."""

    codes: np.ndarray
    codebook_size: int
    kind: str = "sid"
    _lookup: dict = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.codes.ndim != 2:
            raise ValueError("codes must be a [n_items, n_digits] array")

    @property
    def n_items(self) -> int:
        return self.codes.shape[0]

    @property
    def n_digits(self) -> int:
        return self.codes.shape[1]

    def is_injective(self) -> bool:
        return len({tuple(c) for c in self.codes.tolist()}) == self.n_items

    def item_of(self, code) -> int | None:
        if self._lookup is None:
            self._lookup = {tuple(c): i for i, c in enumerate(self.codes.tolist())}
        return self._lookup.get(tuple(int(c) for c in code))

    def to_text(self, item_ids=None) -> str:
        buf = io.StringIO()
        buf.write("item," + ",".join(f"c{j + 1}" for j in range(self.n_digits)) + "\n")
        for v, c in enumerate(self.codes.tolist()):
            name = item_ids[v] if item_ids is not None else str(v)
            buf.write(f"{name}," + ",".join(map(str, c)) + "\n")
        return buf.getvalue()

    def export(self, path, item_ids=None) -> None:
        atomic_write_text(path, self.to_text(item_ids))


@dataclass
class ItemTokenizer:
    """A fitted tokenizer: its codes plus whatever state produced them."""

    assignment: CodeAssignment
    config: TokenizerConfig
    state: dict[str, np.ndarray] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def codes(self) -> np.ndarray:
        return self.assignment.codes

    @property
    def kind(self) -> str:
        return self.assignment.kind

    def save(self, path) -> str:
        arrays = {"codes": self.assignment.codes, **self.state}
        meta = {"kind": self.kind, "codebook_size": self.assignment.codebook_size,
                "tokenizer": self.config.to_dict(), "info": self.info}
        return save_checkpoint(path, arrays, meta, kind="tokenizer")

    @classmethod
    def load(cls, path) -> "ItemTokenizer":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "tokenizer":
            raise ValueError(f"{path} holds a {meta.get('kind')!r} checkpoint, not a tokenizer")
        cfgd = meta["config"]
        codes = arrays.pop("codes")
        return cls(CodeAssignment(codes, cfgd["codebook_size"], cfgd["kind"]),
                   TokenizerConfig.from_dict(cfgd["tokenizer"]), arrays, cfgd.get("info", {}))


# --- balanced semantic IDs -------------------------------------------------

def fit_level1(features: np.ndarray, cfg: TokenizerConfig):
    """Train the quantized auto-encoder; return it, first digits and residuals."""
    ae = QuantizedAutoencoder(features.shape[1], cfg, n_levels=1).fit_ema(np.asarray(features, float))
    z = ae.encode(features)
    codes, resid = ae.quantize(z)
    return ae, codes[:, 0], resid


@dataclass
class Level2Result:
    digits: np.ndarray
    centers: dict[int, np.ndarray]
    fitted_on: dict[int, np.ndarray]


def fit_level2(residuals: np.ndarray, first: np.ndarray, cfg: TokenizerConfig) -> Level2Result:
    """Independent k-means per first digit; each model sees only its own group."""
    K = cfg.codebook_size
    digits = np.zeros(len(first), dtype=np.int64)
    centers, fitted_on = {}, {}
    for j in range(K):
        members = np.nonzero(first == j)[0]
        if len(members) == 0:
            continue
        k = min(K, len(members))
        res = kmeans(residuals[members], k, np.random.default_rng([cfg.seed, 20, j]),
                     max_iter=cfg.kmeans_iters, tol=cfg.kmeans_tol)
        digits[members] = res.labels
        centers[j] = res.centers
        fitted_on[j] = members
    return Level2Result(digits, centers, fitted_on)


def assign_level3(first: np.ndarray, second: np.ndarray, cfg: TokenizerConfig) -> np.ndarray:
    """Seeded random permutation inside each (first, second) group."""
    K = cfg.codebook_size
    third = np.zeros(len(first), dtype=np.int64)
    rng = np.random.default_rng([cfg.seed, 30])
    keys = first * K + second
    for key in np.unique(keys):
        members = np.nonzero(keys == key)[0]
        if len(members) > K:
            raise CapacityError(
                f"group (c1={key // K}, c2={key % K}) holds {len(members)} items but only K={K} third "
                f"digits exist; raise the codebook size or the number of digits")
        third[members] = rng.permutation(len(members))
    return third


def fit_sid(features: np.ndarray, cfg: TokenizerConfig | None = None) -> ItemTokenizer:
    """Balanced semantic IDs: quantized auto-encoder, per-prefix k-means, random tail digit."""
    cfg = cfg or TokenizerConfig()
    if cfg.n_digits != 3:
        raise ValueError("balanced semantic IDs are defined for 3 digits")
    ae, first, resid = fit_level1(features, cfg)
    l2 = fit_level2(resid, first, cfg)
    third = assign_level3(first, l2.digits, cfg)
    codes = np.stack([first, l2.digits, third], axis=1)
    state = ae.state_arrays()
    for j, c in l2.centers.items():
        state[f"level2.centers.{j}"] = c
    info = {"epochs": len(ae.history), "final_loss": ae.history[-1] if ae.history else None,
            "reseeds": ae.reseeds, "in_dim": int(features.shape[1])}
    return ItemTokenizer(CodeAssignment(codes, cfg.codebook_size, "sid"), cfg, state, info)


# --- balanced chunked IDs --------------------------------------------------

def int_to_digits(i: int, k: int, m: int) -> list[int]:
    """Base-``k`` digits of ``i``, least significant first.

    Leading with the fastest-varying digit keeps every prefix level balanced
    when the integers are a contiguous range.
    """
    if i < 0 or i >= k ** m:
        raise CapacityError(f"{i} does not fit in {m} base-{k} digits")
    out = []
    for _ in range(m):
        i, d = divmod(i, k)
        out.append(d)
    return out


def digits_to_int(digits, k: int) -> int:
    return sum(int(d) * k ** j for j, d in enumerate(digits))


def build_cid(n_items: int, k: int, m: int = 3, seed: int = 0) -> ItemTokenizer:
    """Chunked IDs: remap items to a seeded permutation of ``0..n-1`` and write it in base ``k``."""
    if k ** m < n_items:
        raise CapacityError(f"{m} base-{k} digits address {k ** m} items, catalog has {n_items}")
    perm = np.random.default_rng([seed, 40]).permutation(n_items)
    codes = np.array([int_to_digits(int(p), k, m) for p in perm], dtype=np.int64).reshape(n_items, m)
    cfg = TokenizerConfig(n_digits=m, codebook_size=k, seed=seed)
    return ItemTokenizer(CodeAssignment(codes, k, "cid"), cfg, {"remap": perm})


# --- residual-quantization baseline ---------------------------------------

@dataclass
class RQReport:
    histograms: list[np.ndarray]
    collisions: int


def fit_rqvae_baseline(features: np.ndarray, cfg: TokenizerConfig | None = None,
                       levels: int = 3) -> tuple[ItemTokenizer, RQReport]:
    """Plain residual quantization with one shared codebook per level.

    Items that agree on all ``levels`` digits get an extra enumerating digit.
    """
    from .stats import code_distribution_stats, prefix_histogram

    cfg = cfg or TokenizerConfig()
    if levels < 2:
        raise ValueError("the baseline needs at least 2 levels")
    features = np.asarray(features, dtype=float)
    n = len(features)
    if n == 1:
        base = np.zeros((1, levels), dtype=np.int64)
        ae = None
    else:
        ae = QuantizedAutoencoder(features.shape[1], cfg, n_levels=levels).fit_residual(features)
        base, _ = ae.quantize(ae.encode(features))
    extra = np.zeros(n, dtype=np.int64)
    seen: dict[tuple, int] = {}
    for v, c in enumerate(map(tuple, base.tolist())):
        extra[v] = seen.get(c, 0)
        seen[c] = extra[v] + 1
    codes = np.concatenate([base, extra[:, None]], axis=1)
    stats = code_distribution_stats(base, cfg.codebook_size)
    hists = [prefix_histogram(base, cfg.codebook_size, lvl) for lvl in range(1, levels + 1)]
    state = ae.state_arrays() if ae is not None else {}
    tok = ItemTokenizer(CodeAssignment(codes, cfg.codebook_size, "rqvae"), cfg, state,
                        {"levels": levels, "collisions": stats.collisions})
    return tok, RQReport(hists, stats.collisions)
