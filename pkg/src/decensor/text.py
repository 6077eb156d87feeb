"""Tokenizer shared by indexing, recognition, censoring and feature extraction.

Tokens are runs of word characters. An apostrophe between two word runs
keeps them together ("O'Brien", "don't"), except for a trailing possessive
"'s", which is split off so that "Trump's" still yields the token "Trump".
"""

from __future__ import annotations

import re
from typing import NamedTuple

_TOKEN_RE = re.compile(r"\w+(?:['’]\w+)*")
_APOSTROPHES = "'’"


class Token(NamedTuple):
    start: int
    end: int
    text: str
    norm: str  # lowercased text


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    for m in _TOKEN_RE.finditer(text):
        s, e = m.span()
        word = m.group()
        if len(word) > 2 and word[-2] in _APOSTROPHES and word[-1] in "sS":
            tokens.append(Token(s, e - 2, word[:-2], word[:-2].lower()))
            tokens.append(Token(e - 2, e, word[-2:], word[-2:].lower()))
        else:
            tokens.append(Token(s, e, word, word.lower()))
    return tokens


def token_key(text: str) -> tuple[str, ...]:
    """Lowercased token tuple; the matching key for names and phrases."""
    return tuple(t.norm for t in tokenize(text))


def normalize_space(text: str) -> str:
    return " ".join(text.split())


def find_phrase(tokens: list[Token], key: tuple[str, ...]) -> list[tuple[int, int]]:
    """Character spans where ``key`` occurs as consecutive tokens."""
    n = len(key)
    if n == 0:
        return []
    spans = []
    for i in range(len(tokens) - n + 1):
        if tokens[i].norm == key[0] and all(tokens[i + j].norm == key[j] for j in range(1, n)):
            spans.append((tokens[i].start, tokens[i + n - 1].end))
    return spans
