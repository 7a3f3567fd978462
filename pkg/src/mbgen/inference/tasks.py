"""The three prediction tasks and behavior-aware sampling over a batch of queries."""

from __future__ import annotations

import csv
import io
from typing import Sequence

import numpy as np

from ..data.dataset import Query
from ..numerics.checkpoint import atomic_write_text
from ..seqmodel.train import pad_sequences
from ..tokenizer.vocab import BOS, Vocabulary, build_model_sequence
from .beam import RankedPrediction, beam_search
from .trie import CodeTrie

TASKS = ("target", "behavior-specific", "behavior-item", "behavior-aware")


def allocate_slots(p, N: int) -> np.ndarray:
    """Largest-remainder split of ``N`` slots in proportion to ``p``.

    Leftover slots go to the largest fractional parts; ties prefer the larger
    probability, then the lower index.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or len(p) == 0 or np.any(p < 0) or p.sum() <= 0:
        raise ValueError("p must be a non-empty, non-negative, non-zero vector")
    if N < 0:
        raise ValueError("N must be >= 0")
    share = np.round(p / p.sum() * N, 9)    # absorb float noise such as 0.3 * 10 = 3.0000000000000004
    base = np.floor(share).astype(np.int64)
    rem = share - base
    left = N - int(base.sum())
    order = np.lexsort((np.arange(len(p)), -p, -rem))
    base[order[:left]] += 1
    return base


class Predictor:
    """Runs the prediction tasks for a scorer over dataset queries, in chunks."""

    def __init__(self, scorer, codes: np.ndarray, vocab: Vocabulary, max_items: int = 50, chunk: int = 64):
        self.scorer = scorer
        self.codes = np.asarray(codes)
        self.vocab = vocab
        self.trie = CodeTrie(self.codes, vocab.codebook_size)
        self.max_items = max_items
        self.chunk = chunk

    def _encode(self, queries: Sequence[Query]):
        enc = [build_model_sequence(self.vocab, q.raw_user, q.items, q.behaviors, self.codes,
                                    max_items=self.max_items) for q in queries]
        return self.scorer.encode(pad_sequences(enc))

    def _chunks(self, queries):
        for s in range(0, len(queries), self.chunk):
            yield s, queries[s:s + self.chunk]

    def first_step_log_probs(self, queries: Sequence[Query]) -> np.ndarray:
        """``log p(b | history)`` of each behavior token under the full-vocabulary softmax."""
        out = []
        lo, B = self.vocab.behavior_offset, self.vocab.n_behaviors
        for _, qs in self._chunks(queries):
            state = self._encode(qs)
            out.append(self.scorer.next_log_probs(state, np.full((len(qs), 1), BOS), np.arange(len(qs)))[:, lo:lo + B])
        return np.concatenate(out) if out else np.zeros((0, B))

    def behavior_log_probs(self, queries: Sequence[Query]) -> np.ndarray:
        """First-step behavior log-probabilities renormalized over the behavior tokens."""
        lp = self.first_step_log_probs(queries)
        if len(lp) == 0:
            return lp
        mx = lp.max(axis=1, keepdims=True)
        return lp - (mx + np.log(np.exp(lp - mx).sum(axis=1, keepdims=True)))

    def conditional(self, queries: Sequence[Query], behaviors, n_beams: int = 50, N: int = 10):
        """Beam search under prompt ``[BOS, b_q]`` for each query."""
        behaviors = np.broadcast_to(np.asarray(behaviors, dtype=np.int64), (len(queries),))
        out: list[RankedPrediction] = []
        for s, qs in self._chunks(queries):
            state = self._encode(qs)
            toks = [self.vocab.behavior_token(int(b)) for b in behaviors[s:s + len(qs)]]
            prompts = np.stack([np.full(len(qs), BOS), toks], axis=1)
            out.extend(beam_search(self.scorer, state, prompts, n_beams, self.trie, self.vocab, N))
        return out

    def joint(self, queries: Sequence[Query], n_beams: int = 50, N: int = 10):
        """Behavior and item decoded together from prompt ``[BOS]``."""
        out: list[RankedPrediction] = []
        for _, qs in self._chunks(queries):
            state = self._encode(qs)
            out.extend(beam_search(self.scorer, state, np.full((len(qs), 1), BOS), n_beams, self.trie,
                                   self.vocab, N))
        return out

    def behavior_aware(self, queries: Sequence[Query], n_beams: int = 10, N: int = 10, behavior_probs=None):
        """Split ``N`` slots across behaviors by their predicted probability, then fill each
        behavior's share with its conditional beam search.

        Entries carry the same joint scores ``log p(b) + log p(item | b)`` as plain joint
        decoding and are ranked by them; allocation uses ``p(b)`` renormalized over behaviors.
        ``behavior_probs`` (a fixed distribution, e.g. corpus frequencies) overrides the
        model's first-step distribution when given.
        """
        B = self.vocab.n_behaviors
        logpb = self.first_step_log_probs(queries)
        if behavior_probs is not None:
            fixed = np.asarray(behavior_probs, dtype=np.float64)
            alloc_p = np.broadcast_to(fixed / fixed.sum(), (len(queries), B))
        else:
            mx = logpb.max(axis=1, keepdims=True) if len(logpb) else 0.0
            alloc_p = np.exp(logpb - mx)
        alloc = np.stack([allocate_slots(row, N) for row in alloc_p]) if len(queries) else np.zeros((0, B), int)
        width = max(n_beams, int(alloc.max()) if alloc.size else 0)
        per_b = [self.conditional(queries, b, n_beams=width, N=min(width, max(int(alloc[:, b].max()), 1)))
                 if alloc.size and alloc[:, b].max() > 0 else None for b in range(B)]
        out = []
        for qi in range(len(queries)):
            beh, items, scores, codes = [], [], [], []
            for b in range(B):
                k = int(alloc[qi, b])
                if k == 0:
                    continue
                r = per_b[b][qi]
                beh.append(r.behaviors[:k])
                items.append(r.items[:k])
                scores.append(r.scores[:k] + logpb[qi, b])
                codes.append(r.codes[:k])
            beh, items, scores, codes = (np.concatenate(x) for x in (beh, items, scores, codes))
            order = np.lexsort(tuple(codes[:, j] for j in range(codes.shape[1] - 1, -1, -1)) + (beh, -scores))
            out.append(RankedPrediction(beh[order], items[order], scores[order], codes[order]))
        return out

    def predict(self, queries: Sequence[Query], task: str, n_beams: int = 50, N: int = 10,
                target_behavior: int | None = None, behavior_probs=None):
        if task == "target":
            if target_behavior is None:
                raise ValueError("target task needs target_behavior")
            return self.conditional(queries, target_behavior, n_beams, N)
        if task == "behavior-specific":
            return self.conditional(queries, [q.target_behavior for q in queries], n_beams, N)
        if task == "behavior-item":
            return self.joint(queries, n_beams, N)
        if task == "behavior-aware":
            return self.behavior_aware(queries, n_beams, N, behavior_probs)
        raise ValueError(f"unknown task {task!r}; choose from {TASKS}")


def predictions_csv(queries: Sequence[Query], preds: Sequence[RankedPrediction], behavior_names=None,
                    item_ids=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["query", "user", "rank", "behavior", "item", "score"])
    for qi, (q, r) in enumerate(zip(queries, preds)):
        for rank, (b, v, s) in enumerate(zip(r.behaviors.tolist(), r.items.tolist(), r.scores.tolist()), 1):
            w.writerow([qi, q.raw_user, rank, behavior_names[b] if behavior_names else b,
                        item_ids[v] if item_ids is not None else v, f"{s:.6f}"])
    return buf.getvalue()


def dump_predictions(path, queries, preds, behavior_names=None, item_ids=None) -> None:
    atomic_write_text(path, predictions_csv(queries, preds, behavior_names, item_ids))
