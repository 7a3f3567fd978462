"""Expert routing and behavior context, both pure functions of token roles."""

from __future__ import annotations

import numpy as np

from ..tokenizer.vocab import ROLE_BEHAVIOR, ROLE_DIGIT0, TokenError, Vocabulary


def position_route(roles, n_digits: int = 3, experts: int | None = None) -> np.ndarray:
    """Expert slot per token: behavior -> 0, digit j -> j, everything else -> m+1.

    With ``experts`` given, slots wrap modulo the expert count, so a layer
    with fewer experts than slots shares experts deterministically.
    """
    roles = np.asarray(roles, dtype=np.int64)
    slot = np.full(roles.shape, n_digits + 1, dtype=np.int64)
    slot[roles == ROLE_BEHAVIOR] = 0
    is_digit = (roles >= ROLE_DIGIT0) & (roles < ROLE_DIGIT0 + n_digits)
    slot[is_digit] = roles[is_digit] - ROLE_DIGIT0 + 1
    return slot if experts is None else slot % experts


def behavior_context(vocab: Vocabulary, tokens) -> np.ndarray:
    """Behavior-table row for every token of a batch of sequences.

    Digit tokens take ``1 + b`` where ``b`` is the behavior token that opens
    their tuple; behavior tokens, specials and user tokens take row 0.
    Raises :class:`TokenError` when a digit token is not preceded by its
    tuple's behavior token and the earlier digits in order.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    squeeze = tokens.ndim == 1
    if squeeze:
        tokens = tokens[None]
    roles = vocab.roles[tokens]
    out = np.zeros(tokens.shape, dtype=np.int64)
    for j in range(vocab.n_digits):
        rows, cols = np.nonzero(roles == ROLE_DIGIT0 + j)
        if len(rows) == 0:
            continue
        start = cols - j - 1
        bad = start < 0
        ok_start = np.where(bad, 0, start)
        bad |= roles[rows, ok_start] != ROLE_BEHAVIOR
        for k in range(j):
            bad |= roles[rows, np.maximum(start + 1 + k, 0)] != ROLE_DIGIT0 + k
        if bad.any():
            r, c = int(rows[bad][0]), int(cols[bad][0])
            raise TokenError(f"digit-{j + 1} token at sequence {r}, position {c} is not part of a "
                             f"well-formed [behavior, digit1..] tuple")
        out[rows, cols] = tokens[rows, ok_start] - vocab.behavior_offset + 1
    return out[0] if squeeze else out
