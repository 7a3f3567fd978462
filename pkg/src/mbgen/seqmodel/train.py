"""Training examples and the next-token training loop."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..data.dataset import InteractionDataset
from ..numerics import AdamW, GradientTape, NonFiniteGradientError
from ..numerics.checkpoint import atomic_write_text
from ..numerics.optim import clip_grad_norm, collect_grads, zero_grads
from ..tokenizer.vocab import PAD, Vocabulary, build_model_sequence
from .config import TrainConfig
from .model import Seq2SeqModel

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass
class Examples:
    """Padded (encoder, decoder input, decoder target) triples."""

    enc: np.ndarray
    enc_len: np.ndarray
    dec_in: np.ndarray
    dec_tgt: np.ndarray
    users: np.ndarray

    def __len__(self) -> int:
        return len(self.enc)

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        width = int(self.enc_len[idx].max())
        return self.enc[idx, :width], self.dec_in[idx], self.dec_tgt[idx]

    def subset(self, idx) -> "Examples":
        return Examples(self.enc[idx], self.enc_len[idx], self.dec_in[idx], self.dec_tgt[idx], self.users[idx])


def pad_sequences(seqs, pad: int = PAD) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


def build_examples(dataset: InteractionDataset, codes: np.ndarray, vocab: Vocabulary,
                   sliding_window: bool = False, max_items: int = 50,
                   users=None) -> Examples:
    """Training pairs from each user's training region.

    By default one pair per user (all earlier training interactions -> the
    last training interaction); with ``sliding_window`` every training
    position after the first becomes a target.
    """
    encs, dins, dtgts, owners = [], [], [], []
    for u in (range(dataset.n_users) if users is None else users):
        items, behs = dataset.train_region(u)
        if len(items) < 2:
            continue
        raw = dataset.users[u].raw_id
        targets = range(1, len(items)) if sliding_window else [len(items) - 1]
        for t in targets:
            enc, din, dtgt = build_model_sequence(vocab, raw, items[:t], behs[:t], codes,
                                                  target=(items[t], behs[t]), max_items=max_items)
            encs.append(enc)
            dins.append(din)
            dtgts.append(dtgt)
            owners.append(u)
    if not encs:
        raise ValueError("no training examples: every user's training region has fewer than 2 interactions")
    return Examples(pad_sequences(encs), np.array([len(e) for e in encs]), np.array(dins), np.array(dtgts),
                    np.array(owners))


@dataclass
class TrainResult:
    log_rows: list[dict] = field(default_factory=list)
    best_step: int | None = None
    best_val: float | None = None
    initial_loss: float | None = None
    final_loss: float | None = None
    seconds: float = 0.0

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["step", "loss", "val_ndcg10", "lr", "grad_norm", "seconds"])
        w.writeheader()
        for row in self.log_rows:
            w.writerow(row)
        return buf.getvalue()


def train(model: Seq2SeqModel, examples: Examples, tcfg: TrainConfig,
          val_fn: Callable[[Seq2SeqModel], float] | None = None,
          log_path=None, checkpoint_path=None, checkpoint_extra: dict | None = None) -> TrainResult:
    """Minimize decoder cross-entropy with AdamW.

    Every ``eval_every`` steps the mean training loss is logged and, when
    ``val_fn`` is given, the validation NDCG@10 it returns; the parameters
    with the best validation score are restored at the end (and written to
    ``checkpoint_path``). Training aborts with :class:`DivergenceError` once
    the logged loss exceeds ``diverge_factor`` x the initial loss for
    ``diverge_patience`` consecutive evaluations.
    """
    rng = np.random.default_rng([tcfg.seed, 7])
    drop_rng = np.random.default_rng([tcfg.seed, 8]) if model.cfg.dropout > 0 else None
    opt = AdamW(model.params, lr=tcfg.lr, betas=tcfg.betas, weight_decay=tcfg.weight_decay)
    res = TrainResult()
    n = len(examples)
    order = rng.permutation(n)
    cursor = 0
    window: list[float] = []
    bad_evals = 0
    best_params = None
    last_norm = 0.0
    t0 = time.perf_counter()

    def evaluate(step: int) -> None:
        nonlocal bad_evals, best_params
        mean_loss = float(np.mean(window)) if window else float("nan")
        window.clear()
        val = float(val_fn(model)) if val_fn is not None else None
        row = {"step": step, "loss": round(mean_loss, 6), "val_ndcg10": "" if val is None else round(val, 6),
               "lr": tcfg.lr_at(max(step - 1, 0)), "grad_norm": round(last_norm, 6),
               "seconds": round(time.perf_counter() - t0, 2)}
        res.log_rows.append(row)
        log.info("step %d loss %.4f val %s", step, mean_loss, row["val_ndcg10"])
        if log_path is not None:
            atomic_write_text(log_path, res.log_csv())
        if val is not None and (res.best_val is None or val > res.best_val):
            res.best_val, res.best_step = val, step
            best_params = {k: v.data.copy() for k, v in model.params.items()}
        if res.initial_loss is not None and mean_loss > tcfg.diverge_factor * res.initial_loss:
            bad_evals += 1
            if bad_evals >= tcfg.diverge_patience:
                raise DivergenceError(
                    f"loss {mean_loss:.4g} exceeded {tcfg.diverge_factor}x the initial {res.initial_loss:.4g} "
                    f"for {bad_evals} evaluations (step {step}, lr {tcfg.lr_at(step)}, last grad norm "
                    f"{last_norm:.4g}); lower the learning rate or raise warmup")
        else:
            bad_evals = 0

    if val_fn is not None:
        evaluate(0)
    for step in range(tcfg.steps):
        if cursor + tcfg.batch_size > n:
            order, cursor = rng.permutation(n), 0
        idx = order[cursor:cursor + tcfg.batch_size]
        cursor += len(idx)
        enc, din, dtgt = examples.batch(idx)
        zero_grads(model.params)
        with GradientTape() as tape:
            loss = model.loss(enc, din, dtgt, rng=drop_rng)
        tape.backward(loss)
        grads = collect_grads(model.params)
        last_norm = clip_grad_norm(grads, tcfg.clip_norm)
        value = float(loss.data)
        if res.initial_loss is None:
            res.initial_loss = value
        try:
            opt.step(grads, lr=tcfg.lr_at(step))
        except NonFiniteGradientError as exc:
            raise DivergenceError(f"non-finite gradient in {exc.param_name} at step {step}") from exc
        window.append(value)
        res.final_loss = value
        if (step + 1) % tcfg.eval_every == 0 or step + 1 == tcfg.steps:
            evaluate(step + 1)
    if best_params is not None:
        for k, v in best_params.items():
            model.params[k].data = v
    res.seconds = time.perf_counter() - t0
    if checkpoint_path is not None:
        model.save(checkpoint_path, {"train": tcfg.to_dict(), "best_step": res.best_step,
                                     "best_val_ndcg10": res.best_val, **(checkpoint_extra or {})})
    return res
