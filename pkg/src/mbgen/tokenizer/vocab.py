"""Token-id layout and the interaction/sequence flattening.

Token ids are laid out in disjoint ranges::

    0 PAD | 1 BOS | 2 EOS | U user buckets | |B| behaviors | K digit-1 | K digit-2 | ... | K digit-m

so the same digit value at two different positions maps to two different
tokens.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

PAD, BOS, EOS = 0, 1, 2
N_SPECIAL = 3

ROLE_PAD, ROLE_BOS, ROLE_EOS, ROLE_USER, ROLE_BEHAVIOR = 0, 1, 2, 3, 4
ROLE_DIGIT0 = 5  # role code of digit position j (0-based) is ROLE_DIGIT0 + j


def role_name(code: int) -> str:
    names = {ROLE_PAD: "pad", ROLE_BOS: "bos", ROLE_EOS: "eos", ROLE_USER: "user", ROLE_BEHAVIOR: "behavior"}
    return names.get(code, f"digit{code - ROLE_DIGIT0 + 1}")


class TokenError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    n_users: int
    n_behaviors: int
    codebook_size: int
    n_digits: int = 3

    def __post_init__(self):
        if self.n_users < 1 or self.n_behaviors < 1 or self.codebook_size < 2 or self.n_digits < 1:
            raise ValueError(f"invalid vocabulary sizes {self}")

    @property
    def user_offset(self) -> int:
        return N_SPECIAL

    @property
    def behavior_offset(self) -> int:
        return N_SPECIAL + self.n_users

    @property
    def digit_offset(self) -> int:
        return self.behavior_offset + self.n_behaviors

    @property
    def size(self) -> int:
        return self.digit_offset + self.n_digits * self.codebook_size

    def __len__(self) -> int:
        return self.size

    @property
    def roles(self) -> np.ndarray:
        """Role code of every token id."""
        r = np.empty(self.size, dtype=np.int64)
        r[PAD], r[BOS], r[EOS] = ROLE_PAD, ROLE_BOS, ROLE_EOS
        r[self.user_offset:self.behavior_offset] = ROLE_USER
        r[self.behavior_offset:self.digit_offset] = ROLE_BEHAVIOR
        for j in range(self.n_digits):
            s = self.digit_offset + j * self.codebook_size
            r[s:s + self.codebook_size] = ROLE_DIGIT0 + j
        return r

    def role(self, token: int) -> str:
        if not 0 <= token < self.size:
            raise TokenError(f"token {token} outside vocabulary of size {self.size}")
        return role_name(int(self.roles[token]))

    def user_token(self, bucket: int) -> int:
        if not 0 <= bucket < self.n_users:
            raise TokenError(f"user bucket {bucket} outside [0, {self.n_users})")
        return self.user_offset + bucket

    def behavior_token(self, b: int) -> int:
        if not 0 <= b < self.n_behaviors:
            raise TokenError(f"behavior {b} outside [0, {self.n_behaviors})")
        return self.behavior_offset + b

    def behavior_tokens(self) -> np.ndarray:
        return np.arange(self.behavior_offset, self.digit_offset)

    def digit_token(self, position: int, value: int) -> int:
        if not 0 <= position < self.n_digits:
            raise TokenError(f"digit position {position} outside [0, {self.n_digits})")
        if not 0 <= value < self.codebook_size:
            raise TokenError(f"digit value {value} outside [0, {self.codebook_size})")
        return self.digit_offset + position * self.codebook_size + value

    def digit_tokens(self, position: int) -> np.ndarray:
        s = self.digit_offset + position * self.codebook_size
        return np.arange(s, s + self.codebook_size)

    def token_behavior(self, token: int) -> int:
        if not self.behavior_offset <= token < self.digit_offset:
            raise TokenError(f"token {token} is not a behavior token")
        return token - self.behavior_offset

    def token_digit(self, token: int) -> tuple[int, int]:
        off = token - self.digit_offset
        if not 0 <= off < self.n_digits * self.codebook_size:
            raise TokenError(f"token {token} is not an item-digit token")
        return divmod(off, self.codebook_size)

    def to_dict(self) -> dict:
        return {"n_users": self.n_users, "n_behaviors": self.n_behaviors,
                "codebook_size": self.codebook_size, "n_digits": self.n_digits}


def hash_user(raw_id, n_buckets: int) -> int:
    """Stable hashing-trick bucket of a raw user id (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(str(raw_id).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_buckets


def tokenize_interaction(vocab: Vocabulary, behavior: int, code) -> list[int]:
    """``[b, c1, ..., cm]`` as token ids."""
    code = list(code)
    if len(code) != vocab.n_digits:
        raise TokenError(f"code {code} has {len(code)} digits, vocabulary expects {vocab.n_digits}")
    return [vocab.behavior_token(behavior)] + [vocab.digit_token(j, int(c)) for j, c in enumerate(code)]


def detokenize_interaction(vocab: Vocabulary, tokens) -> tuple[int, list[int]]:
    tokens = list(tokens)
    if len(tokens) != vocab.n_digits + 1:
        raise TokenError(f"expected {vocab.n_digits + 1} tokens, got {len(tokens)}")
    b = vocab.token_behavior(tokens[0])
    code = []
    for j, t in enumerate(tokens[1:]):
        pos, val = vocab.token_digit(t)
        if pos != j:
            raise TokenError(f"token {t} is a digit-{pos + 1} token at digit position {j + 1}")
        code.append(val)
    return b, code


def build_model_sequence(vocab: Vocabulary, raw_user, items, behaviors, codes: np.ndarray,
                         target: tuple[int, int] | None = None, max_items: int = 50):
    """Encoder tokens and, when ``target=(item, behavior)`` is given, decoder input/target.

    encoder = [user] + flattened tuples of the last ``max_items`` interactions + [EOS]
    decoder input = [BOS, b, c1..cm], decoder target = [b, c1..cm, EOS]
    """
    items = np.asarray(items)[-max_items:]
    behaviors = np.asarray(behaviors)[-max_items:]
    if len(items) == 0:
        raise TokenError("history must be non-empty")
    enc = [vocab.user_token(hash_user(raw_user, vocab.n_users))]
    for it, b in zip(items, behaviors):
        enc.extend(tokenize_interaction(vocab, int(b), codes[int(it)]))
    enc.append(EOS)
    if target is None:
        return enc
    item, beh = target
    tup = tokenize_interaction(vocab, int(beh), codes[int(item)])
    return enc, [BOS] + tup, tup + [EOS]
