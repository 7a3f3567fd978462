"""A scorer that reads the planted generator's true conditional distributions.

It plugs into the same beam search as the trained model, so decoding
choices (beam width, behavior-aware sampling) can be judged separately
from how well a model has learned the data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.synthetic import SyntheticSpec
from ..tokenizer.vocab import EOS, PAD, Vocabulary


@dataclass
class _History:
    last_behavior: np.ndarray
    last_cluster: np.ndarray


class GeneratorScorer:
    def __init__(self, spec: SyntheticSpec, codes: np.ndarray, vocab: Vocabulary):
        self.spec = spec
        self.codes = np.asarray(codes, dtype=np.int64)
        self.vocab = vocab
        K = vocab.codebook_size
        self._key = np.zeros(len(self.codes), dtype=np.int64)
        for j in range(self.codes.shape[1]):
            self._key = self._key * K + self.codes[:, j]
        self._item_of = {int(k): i for i, k in enumerate(self._key)}
        # kernels[b, c] is the next-item law given behavior b and previous cluster c
        B, C = spec.n_behaviors, spec.n_clusters
        self._kernels = np.stack([[spec.item_kernel(b, c) for c in range(C)] for b in range(B)])

    def encode(self, enc_tokens) -> _History:
        enc = np.asarray(enc_tokens, dtype=np.int64)
        v, m, K = self.vocab, self.vocab.n_digits, self.vocab.codebook_size
        lengths = (enc != PAD).sum(axis=1)
        last_b = np.zeros(len(enc), dtype=np.int64)
        last_c = np.zeros(len(enc), dtype=np.int64)
        for i, n in enumerate(lengths):
            if enc[i, n - 1] != EOS:
                raise ValueError("encoder sequence must end with EOS")
            tup = enc[i, n - 2 - m:n - 1]
            last_b[i] = v.token_behavior(int(tup[0]))
            key = 0
            for j, t in enumerate(tup[1:]):
                key = key * K + v.token_digit(int(t))[1]
            last_c[i] = self.spec.item_cluster[self._item_of[key]]
        return _History(last_b, last_c)

    def next_log_probs(self, state: _History, dec_tokens, rows) -> np.ndarray:
        dec = np.asarray(dec_tokens, dtype=np.int64)
        rows = np.asarray(rows, dtype=np.int64)
        v, K = self.vocab, self.vocab.codebook_size
        out = np.full((len(dec), v.size), -np.inf)
        t = dec.shape[1]
        with np.errstate(divide="ignore"):
            if t == 1:
                probs = self.spec.transition[state.last_behavior[rows]]
                out[:, v.behavior_offset:v.digit_offset] = np.log(probs)
                return out
            j = t - 2                                   # digit position being predicted
            for r in range(len(dec)):
                b = v.token_behavior(int(dec[r, 1]))
                w = self._kernels[b, state.last_cluster[rows[r]]]
                match = np.ones(len(self.codes), dtype=bool)
                for k in range(j):
                    match &= self.codes[:, k] == v.token_digit(int(dec[r, 2 + k]))[1]
                mass = np.bincount(self.codes[match, j], weights=w[match], minlength=K)
                total = mass.sum()
                lo = v.digit_offset + j * K
                out[r, lo:lo + K] = np.log(mass / total) if total > 0 else -np.inf
        return out
