from __future__ import annotations

import numpy as np


class CodeTrie:
    """Prefix tables over the item codes.

    ``allowed[j][key]`` is a boolean row of length ``K`` telling which digit
    may follow the ``j``-digit prefix whose base-``K`` value is ``key``.
    Full codes map back to items through a sorted key table.
    """

    def __init__(self, codes: np.ndarray, codebook_size: int):
        codes = np.asarray(codes, dtype=np.int64)
        if codes.ndim != 2 or len(codes) == 0:
            raise ValueError("cannot build a trie over an empty code table")
        if codes.min() < 0 or codes.max() >= codebook_size:
            raise ValueError(f"code digits outside [0, {codebook_size})")
        self.K = codebook_size
        self.m = codes.shape[1]
        self.allowed: list[np.ndarray] = []
        key = np.zeros(len(codes), dtype=np.int64)
        for j in range(self.m):
            table = np.zeros((self.K ** j, self.K), dtype=bool)
            table[key, codes[:, j]] = True
            self.allowed.append(table)
            key = key * self.K + codes[:, j]
        order = np.argsort(key, kind="stable")
        self._keys = key[order]
        if np.any(np.diff(self._keys) == 0):
            raise ValueError("item codes are not unique; the trie needs an injective code table")
        self._items = order

    def __len__(self) -> int:
        return len(self._keys)

    def children(self, prefix) -> np.ndarray:
        key = 0
        for c in prefix:
            key = key * self.K + int(c)
        return np.nonzero(self.allowed[len(prefix)][key])[0]

    def items_of_keys(self, keys) -> np.ndarray:
        """Item index for each full-code key (-1 where no item carries that code)."""
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        return np.where(self._keys[pos] == keys, self._items[pos], -1)

    def paths(self):
        """Every valid code, in lexicographic order."""
        keys = self._keys.copy()
        out = np.zeros((len(keys), self.m), dtype=np.int64)
        for j in range(self.m - 1, -1, -1):
            keys, out[:, j] = np.divmod(keys, self.K)
        return out
