"""Encoder-decoder transformer with position-routed sparse FFNs and behavior injection.

Both stacks are pre-LayerNorm: ``x + Attn(LN(x))`` then ``x + FFN(LN(x))``.
Token embeddings are shared by encoder and decoder, positions are learned
per stack (encoder positions count back from the end of the history), and a
separate projection (with bias) produces the logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Tensor, ops
from ..numerics.checkpoint import load_checkpoint, save_checkpoint
from ..tokenizer.vocab import PAD, Vocabulary
from .config import ModelConfig
from .routing import behavior_context, position_route

NEG_INF = -1e9


class LengthError(ValueError):
    pass


def encoder_positions(enc: np.ndarray) -> np.ndarray:
    """Position ids counted back from the last real token (EOS is 0, the item before it 1, ...).

    Anchoring at the end keeps the most recent interactions at fixed
    positions whatever the history length; trailing PAD gets position 0 and
    is masked out of attention anyway.
    """
    lengths = (enc != PAD).sum(axis=1, keepdims=True)
    return np.maximum(lengths - 1 - np.arange(enc.shape[1])[None], 0)


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ops.matmul(x, w) + b


@dataclass
class Encoded:
    """Encoder output plus the cross-attention keys/values of every decoder layer."""

    memory: np.ndarray          # [B, S, d]
    key_mask: np.ndarray        # [B, 1, 1, S] additive
    cross_kv: list[tuple[np.ndarray, np.ndarray]]


class Seq2SeqModel:
    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor] | None = None):
        self.cfg = cfg
        self.vocab = Vocabulary(cfg.n_users, cfg.n_behaviors, cfg.codebook_size, cfg.n_digits)
        self.dtype = np.dtype(cfg.dtype)
        self.params = params if params is not None else self._init_params()
        self._roles = self.vocab.roles

    # ---- parameters -------------------------------------------------------
    def _init_params(self) -> dict[str, Tensor]:
        cfg = self.cfg
        rng = np.random.default_rng([cfg.seed, 100])
        d, A, di, V = cfg.d_model, cfg.attn_dim, cfg.d_inner, cfg.vocab_size
        s = cfg.init_scale
        p: dict[str, np.ndarray] = {}

        def normal(name, shape, std):
            p[name] = rng.normal(scale=std, size=shape)

        def zeros(name, shape):
            p[name] = np.zeros(shape)

        def ones(name, shape):
            p[name] = np.ones(shape)

        def attn(pre):
            for k in ("q", "k", "v"):
                normal(f"{pre}.w{k}", (d, A), s)
                zeros(f"{pre}.b{k}", (A,))
            normal(f"{pre}.wo", (A, d), s)
            zeros(f"{pre}.bo", (d,))

        def ffn(pre, din):
            normal(f"{pre}.w1", (din, di), s)
            zeros(f"{pre}.b1", (di,))
            normal(f"{pre}.w2", (di, d), s)
            zeros(f"{pre}.b2", (d,))

        def ln(pre):
            ones(f"{pre}.g", (d,))
            zeros(f"{pre}.b", (d,))

        normal("tok_emb", (V, d), s)
        normal("enc_pos", (cfg.max_enc_len, d), s)
        normal("dec_pos", (cfg.dec_len, d), s)
        if cfg.n_bi > 0:
            normal("beh_emb", (cfg.n_behaviors + 1, cfg.d_beh), s)
            p["beh_emb"][0] = 0.0
        for l in range(cfg.enc_layers):
            ln(f"enc.{l}.ln1")
            attn(f"enc.{l}.attn")
            ln(f"enc.{l}.ln2")
            ffn(f"enc.{l}.ffn", d + (cfg.d_beh if l < cfg.n_bi else 0))
        for l in range(cfg.dec_layers):
            ln(f"dec.{l}.ln1")
            attn(f"dec.{l}.self")
            ln(f"dec.{l}.ln2")
            attn(f"dec.{l}.cross")
            ln(f"dec.{l}.ln3")
            for e in range(cfg.experts):
                ffn(f"dec.{l}.ffn.{e}", d + (cfg.d_beh if l < cfg.n_bi else 0))
        ln("enc_ln")
        ln("dec_ln")
        normal("out.w", (d, V), s)
        zeros("out.b", (V,))
        return {k: Tensor(v.astype(self.dtype), requires_grad=True, name=k) for k, v in p.items()}

    def n_params(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    # ---- building blocks ----------------------------------------------------
    def _ln(self, pre: str, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.params[f"{pre}.g"], self.params[f"{pre}.b"])

    def _kv(self, pre: str, src: Tensor) -> tuple[Tensor, Tensor]:
        P, H, dh = self.params, self.cfg.heads, self.cfg.head_dim
        B, S, _ = src.shape
        k = ops.transpose(ops.reshape(_linear(src, P[f"{pre}.wk"], P[f"{pre}.bk"]), (B, S, H, dh)), (0, 2, 3, 1))
        v = ops.transpose(ops.reshape(_linear(src, P[f"{pre}.wv"], P[f"{pre}.bv"]), (B, S, H, dh)), (0, 2, 1, 3))
        return k, v

    def _attend(self, pre: str, xq: Tensor, k: Tensor, v: Tensor, mask: np.ndarray) -> Tensor:
        """Multi-head attention of ``xq`` over keys ``k`` [B,H,dh,S] and values ``v`` [B,H,S,dh]."""
        P, H, dh = self.params, self.cfg.heads, self.cfg.head_dim
        B, T, _ = xq.shape
        q = ops.transpose(ops.reshape(_linear(xq, P[f"{pre}.wq"], P[f"{pre}.bq"]), (B, T, H, dh)), (0, 2, 1, 3))
        scores = ops.matmul(q, k) * (1.0 / np.sqrt(dh)) + mask
        o = ops.matmul(ops.softmax(scores, axis=-1), v)
        o = ops.reshape(ops.transpose(o, (0, 2, 1, 3)), (B, T, H * dh))
        return _linear(o, P[f"{pre}.wo"], P[f"{pre}.bo"])

    def _ffn_in(self, h: Tensor, layer: int, bctx: np.ndarray) -> Tensor:
        if layer < self.cfg.n_bi:
            return ops.concat([h, ops.embedding(self.params["beh_emb"], bctx)], axis=-1)
        return h

    def _ffn(self, pre: str, h: Tensor) -> Tensor:
        P = self.params
        return _linear(ops.relu(_linear(h, P[f"{pre}.w1"], P[f"{pre}.b1"])), P[f"{pre}.w2"], P[f"{pre}.b2"])

    def _sparse_ffn(self, pre: str, h: Tensor, route: np.ndarray) -> Tensor:
        """Each token runs through exactly one expert, picked by ``route``."""
        B, T, din = h.shape
        flat = ops.reshape(h, (B * T, din))
        route = route.reshape(-1)
        parts, idxs = [], []
        for e in range(self.cfg.experts):
            idx = np.nonzero(route == e)[0]
            if len(idx) == 0:
                continue
            parts.append(self._ffn(f"{pre}.{e}", ops.take_rows(flat, idx)))
            idxs.append(idx)
        return ops.reshape(ops.merge_rows(parts, idxs, B * T), (B, T, self.cfg.d_model))

    def _drop(self, x: Tensor, rng) -> Tensor:
        return ops.dropout(x, self.cfg.dropout, rng)

    # ---- stacks -----------------------------------------------------------
    def _check(self, tokens: np.ndarray, limit: int, what: str) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim == 1:
            tokens = tokens[None]
        if tokens.shape[1] > limit:
            raise LengthError(f"{what} length {tokens.shape[1]} exceeds the configured limit {limit}")
        if tokens.min() < 0 or tokens.max() >= self.cfg.vocab_size:
            raise ValueError(f"{what} tokens outside [0, {self.cfg.vocab_size})")
        return tokens

    def encoder_states(self, enc_tokens, rng=None) -> tuple[Tensor, np.ndarray]:
        enc = self._check(enc_tokens, self.cfg.max_enc_len, "encoder input")
        B, S = enc.shape
        P = self.params
        mask = np.where(enc == PAD, NEG_INF, 0.0).astype(self.dtype)[:, None, None, :]
        bctx = behavior_context(self.vocab, enc)
        x = ops.embedding(P["tok_emb"], enc) + ops.embedding(P["enc_pos"], encoder_positions(enc))
        x = self._drop(x, rng)
        for l in range(self.cfg.enc_layers):
            pre = f"enc.{l}"
            h = self._ln(f"{pre}.ln1", x)
            k, v = self._kv(f"{pre}.attn", h)
            x = x + self._drop(self._attend(f"{pre}.attn", h, k, v, mask), rng)
            h = self._ffn_in(self._ln(f"{pre}.ln2", x), l, bctx)
            x = x + self._drop(self._ffn(f"{pre}.ffn", h), rng)
        return self._ln("enc_ln", x), mask

    def decoder_logits(self, dec_tokens, memory_kv: list[tuple[Tensor, Tensor]], key_mask: np.ndarray,
                       rng=None) -> Tensor:
        dec = self._check(dec_tokens, self.cfg.dec_len, "decoder input")
        B, T = dec.shape
        P = self.params
        causal = np.triu(np.full((T, T), NEG_INF), k=1)
        self_mask = (causal[None, None] + np.where(dec == PAD, NEG_INF, 0.0)[:, None, None, :]).astype(self.dtype)
        roles = self._roles[dec]
        route = position_route(roles, self.cfg.n_digits, self.cfg.experts)
        bctx = behavior_context(self.vocab, dec)
        x = ops.embedding(P["tok_emb"], dec) + ops.embedding(P["dec_pos"], np.arange(T))
        x = self._drop(x, rng)
        for l in range(self.cfg.dec_layers):
            pre = f"dec.{l}"
            h = self._ln(f"{pre}.ln1", x)
            k, v = self._kv(f"{pre}.self", h)
            x = x + self._drop(self._attend(f"{pre}.self", h, k, v, self_mask), rng)
            h = self._ln(f"{pre}.ln2", x)
            ck, cv = memory_kv[l]
            x = x + self._drop(self._attend(f"{pre}.cross", h, ck, cv, key_mask), rng)
            h = self._ffn_in(self._ln(f"{pre}.ln3", x), l, bctx)
            x = x + self._drop(self._sparse_ffn(f"{pre}.ffn", h, route), rng)
        return _linear(self._ln("dec_ln", x), P["out.w"], P["out.b"])

    def forward(self, enc_tokens, dec_tokens, rng=None) -> Tensor:
        """Logits ``[B, T, V]`` for every decoder input position."""
        mem, mask = self.encoder_states(enc_tokens, rng)
        kv = [self._kv(f"dec.{l}.cross", mem) for l in range(self.cfg.dec_layers)]
        return self.decoder_logits(dec_tokens, kv, mask, rng)

    __call__ = forward

    def loss(self, enc_tokens, dec_in, dec_tgt, rng=None) -> Tensor:
        logits = self.forward(enc_tokens, dec_in, rng)
        B, T, V = logits.shape
        return ops.softmax_cross_entropy(ops.reshape(logits, (B * T, V)), np.asarray(dec_tgt).reshape(-1),
                                         ignore_index=PAD)

    # ---- inference helpers -------------------------------------------------
    def encode(self, enc_tokens) -> Encoded:
        mem, mask = self.encoder_states(enc_tokens)
        kv = [self._kv(f"dec.{l}.cross", mem) for l in range(self.cfg.dec_layers)]
        return Encoded(mem.data, mask, [(k.data, v.data) for k, v in kv])

    def next_log_probs(self, encoded: Encoded, dec_tokens, rows=None) -> np.ndarray:
        """Full-vocabulary log-probabilities of the token after ``dec_tokens``.

        ``rows[i]`` says which encoded sequence decoder row ``i`` belongs to.
        """
        dec = np.asarray(dec_tokens, dtype=np.int64)
        if dec.ndim == 1:
            dec = dec[None]
        rows = np.arange(len(dec)) if rows is None else np.asarray(rows, dtype=np.int64)
        kv = [(Tensor(k[rows]), Tensor(v[rows])) for k, v in encoded.cross_kv]
        logits = self.decoder_logits(dec, kv, encoded.key_mask[rows])
        last = logits.data[:, -1, :].astype(np.float64)
        return ops.log_softmax(Tensor(last), axis=-1).data

    # ---- persistence ----------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def save(self, path, extra: dict | None = None) -> str:
        return save_checkpoint(path, self.state_dict(), {"model": self.cfg.to_dict(), **(extra or {})},
                               kind="model")

    @classmethod
    def load(cls, path) -> tuple["Seq2SeqModel", dict]:
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "model":
            raise ValueError(f"{path} holds a {meta.get('kind')!r} checkpoint, not a model")
        cfg = ModelConfig.from_dict(meta["config"]["model"])
        model = cls(cfg)
        missing = set(model.params) - set(arrays)
        if missing:
            raise ValueError(f"checkpoint {path} lacks parameters {sorted(missing)[:5]}")
        for k, t in model.params.items():
            if arrays[k].shape != t.shape:
                raise ValueError(f"parameter {k}: checkpoint shape {arrays[k].shape} != model {t.shape}")
            t.data = arrays[k]
        return model, meta

    def astype(self, dtype: str) -> "Seq2SeqModel":
        cfg = ModelConfig.from_dict({**self.cfg.to_dict(), "dtype": dtype})
        return Seq2SeqModel(cfg, {k: Tensor(v.data.astype(dtype), requires_grad=True, name=k)
                                  for k, v in self.params.items()})


def count_params_flops(cfg: ModelConfig, enc_len: int | None = None, dec_len: int | None = None) -> dict:
    """Closed-form parameter count and multiply-accumulates of one forward call.

    Sparse layers hold every expert's weights but run one expert per token.
    MACs cover all matrix products (projections, attention scores and
    weighted sums, FFNs, output head) for a single sequence pair.
    """
    d, A, di, V, H, dh = cfg.d_model, cfg.attn_dim, cfg.d_inner, cfg.vocab_size, cfg.heads, cfg.head_dim
    S = cfg.max_enc_len if enc_len is None else enc_len
    T = cfg.dec_len if dec_len is None else dec_len
    ln = 2 * d
    attn_p = 4 * d * A + 3 * A + d

    def ffn_p(l):
        din = d + (cfg.d_beh if l < cfg.n_bi else 0)
        return din * di + di + di * d + d

    enc_p = sum(2 * ln + attn_p + ffn_p(l) for l in range(cfg.enc_layers))
    dec_expert_p = sum(ffn_p(l) for l in range(cfg.dec_layers))
    dec_p = sum(3 * ln + 2 * attn_p for _ in range(cfg.dec_layers)) + cfg.experts * dec_expert_p
    emb_p = V * d + cfg.max_enc_len * d + cfg.dec_len * d
    beh_p = (cfg.n_behaviors + 1) * cfg.d_beh if cfg.n_bi > 0 else 0
    head_p = 2 * ln + d * V + V
    params = emb_p + beh_p + enc_p + dec_p + head_p

    def ffn_m(l, n):
        din = d + (cfg.d_beh if l < cfg.n_bi else 0)
        return n * (din * di + di * d)

    enc_m = sum(4 * S * d * A + 2 * H * S * S * dh + ffn_m(l, S) for l in range(cfg.enc_layers))
    dec_m = sum(4 * T * d * A + 2 * H * T * T * dh           # self-attention
                + 2 * T * d * A + 2 * S * d * A + 2 * H * T * S * dh  # cross-attention
                + ffn_m(l, T) for l in range(cfg.dec_layers))
    head_m = T * d * V
    return {"params": int(params), "sparse_ffn_params": int(cfg.experts * dec_expert_p),
            "macs": int(enc_m + dec_m + head_m), "enc_len": S, "dec_len": T}
