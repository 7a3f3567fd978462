"""Fixed-length constrained beam search over (behavior, digit...) tuples.

The scorer is anything with ``encode(enc_tokens) -> state`` and
``next_log_probs(state, dec_tokens, rows) -> [rows, V]``; log-probabilities
come from the unconstrained softmax and the grammar only restricts which
tokens may be picked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tokenizer.vocab import Vocabulary
from .trie import CodeTrie


@dataclass
class RankedPrediction:
    behaviors: np.ndarray
    items: np.ndarray
    scores: np.ndarray
    codes: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.items)

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.behaviors.tolist(), self.items.tolist()))


def beam_search(scorer, state, prompts, n_beams: int, trie: CodeTrie, vocab: Vocabulary, N: int,
                rows=None) -> list[RankedPrediction]:
    """Decode every query of a batch; ``prompts`` is ``[Q, 1]`` ([BOS]) or ``[Q, 2]`` ([BOS, b]).

    ``rows[q]`` is the encoded sequence (in ``state``) that query ``q`` reads.
    Candidates are ordered by score, then token id, then parent beam index;
    finished tuples by score, then lexicographic token order.
    """
    if n_beams < N:
        raise ValueError(f"n_beams={n_beams} must be >= N={N}")
    if len(trie) == 0:
        raise ValueError("empty trie")
    prompts = np.asarray(prompts, dtype=np.int64)
    if prompts.ndim != 2 or prompts.shape[1] not in (1, 2):
        raise ValueError("prompts must be [Q, 1] or [Q, 2]")
    Q, p = prompts.shape
    rows = np.arange(Q) if rows is None else np.asarray(rows, dtype=np.int64)
    K, m = vocab.codebook_size, vocab.n_digits
    steps = (["behavior"] if p == 1 else []) + list(range(m))

    prefix = prompts[:, None, :]                       # [Q, nb, t]
    score = np.zeros((Q, 1))
    key = np.zeros((Q, 1), dtype=np.int64)
    for step in steps:
        nb = prefix.shape[1]
        alive = np.isfinite(score).reshape(-1)
        flat = prefix.reshape(Q * nb, -1)
        if step == "behavior":
            lo, C = vocab.behavior_offset, vocab.n_behaviors
        else:
            lo, C = vocab.digit_offset + step * K, K
        sub = np.full((Q * nb, C), -np.inf)
        if alive.any():
            lp = scorer.next_log_probs(state, flat[alive], np.repeat(rows, nb)[alive])
            sub[alive] = lp[:, lo:lo + C]
        if step != "behavior":
            ok = trie.allowed[step][key.reshape(-1)]
            sub = np.where(ok, sub, -np.inf)
        total = (score[:, :, None] + sub.reshape(Q, nb, C)).reshape(Q, nb * C)
        beam_of = np.repeat(np.arange(nb), C)[None].repeat(Q, 0)
        tok_of = np.tile(np.arange(C), nb)[None].repeat(Q, 0)
        order = np.lexsort((beam_of, tok_of, -total), axis=-1)[:, :min(n_beams, nb * C)]
        sel_beam = np.take_along_axis(beam_of, order, 1)
        sel_tok = np.take_along_axis(tok_of, order, 1)
        score = np.take_along_axis(total, order, 1)
        prefix = np.concatenate([np.take_along_axis(prefix, sel_beam[:, :, None], 1),
                                 (lo + sel_tok)[:, :, None]], axis=2)
        parent_key = np.take_along_axis(key, sel_beam, 1)
        key = parent_key if step == "behavior" else parent_key * K + sel_tok

    out = []
    body = prefix[:, :, 1:]                            # [b, c1..cm] tokens
    for q in range(Q):
        live = np.nonzero(np.isfinite(score[q]))[0]
        toks = body[q, live]
        sort_keys = [toks[:, j] for j in range(toks.shape[1] - 1, -1, -1)] + [-score[q, live]]
        rank = live[np.lexsort(sort_keys)][:N]
        items = trie.items_of_keys(key[q, rank])
        beh = body[q, rank, 0] - vocab.behavior_offset
        codes = body[q, rank, 1:] - (vocab.digit_offset + K * np.arange(m))
        out.append(RankedPrediction(beh, items, score[q, rank], codes))
    return out


def exhaustive_ranking(scorer, state, prompt, trie: CodeTrie, vocab: Vocabulary, row: int = 0):
    """Score every valid completion of ``prompt`` by teacher forcing; a brute-force reference."""
    prompt = list(prompt)
    behaviors = range(vocab.n_behaviors) if len(prompt) == 1 else [vocab.token_behavior(prompt[1])]
    K, m = vocab.codebook_size, vocab.n_digits
    results = []
    for b in behaviors:
        for code in trie.paths():
            toks = [vocab.behavior_token(b)] + [vocab.digit_token(j, int(c)) for j, c in enumerate(code)]
            s = 0.0
            for t in range(len(prompt) - 1, len(toks)):
                seq = [prompt[0]] + toks[:t]
                s += float(scorer.next_log_probs(state, np.array([seq]), np.array([row]))[0, toks[t]])
            results.append((s, tuple(toks), b, code))
    results.sort(key=lambda r: (-r[0], r[1]))
    return results
