"""Inverted index with fixed-width snippet retrieval around name occurrences."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Callable
from dataclasses import dataclass

from .corpus import Corpus, Document, Kind
from .text import Token, tokenize, token_key

DEFAULT_WINDOW = 200
DEFAULT_MIN_LEN = 50

DocFilter = Callable[[Document], bool]


@dataclass(frozen=True)
class Snippet:
    doc_id: str
    kind: Kind
    char_start: int
    char_end: int
    window_text: str
    match_start: int
    match_end: int

    @property
    def matched(self) -> str:
        return self.window_text[self.match_start:self.match_end]

    def __len__(self) -> int:
        return self.char_end - self.char_start


@dataclass(frozen=True)
class Index:
    postings: dict[str, list[tuple[str, int]]]
    doc_count: int
    tokens: dict[str, list[Token]]

    @property
    def vocabulary(self) -> set[str]:
        return set(self.postings)

    def lookup(self, phrase: str) -> list[tuple[str, int, int]]:
        """(doc_id, char_start, char_end) for every whole-token phrase hit."""
        key = token_key(phrase)
        if not key:
            return []
        hits = []
        n = len(key)
        for doc_id, pos in self.postings.get(key[0], ()):
            toks = self.tokens[doc_id]
            if pos + n > len(toks):
                continue
            if all(toks[pos + j].norm == key[j] for j in range(1, n)):
                hits.append((doc_id, toks[pos].start, toks[pos + n - 1].end))
        return hits


def build_index(corpus: Corpus) -> Index:
    postings: dict[str, list[tuple[str, int]]] = defaultdict(list)
    tokens: dict[str, list[Token]] = {}
    for doc in sorted(corpus, key=lambda d: d.doc_id):
        toks = tokenize(doc.text)
        tokens[doc.doc_id] = toks
        for i, tok in enumerate(toks):
            postings[tok.norm].append((doc.doc_id, i))
    return Index(dict(postings), len(corpus), tokens)


def window_bounds(match_start: int, match_end: int, text_len: int,
                  window: int = DEFAULT_WINDOW) -> tuple[int, int]:
    """Center a ``window``-character span on the match and clip it to the text."""
    extra = max(window - (match_end - match_start), 0)
    left = extra // 2
    return max(match_start - left, 0), min(match_end + extra - left, text_len)


def find_snippets(index: Index, corpus: Corpus, name: str, window: int = DEFAULT_WINDOW,
                  min_len: int = DEFAULT_MIN_LEN, scope: DocFilter | None = None) -> list[Snippet]:
    """One snippet per occurrence of ``name`` (case-insensitive, whole tokens).

    Snippets that end up shorter than ``min_len`` after clipping are dropped,
    as are matches longer than the window itself.
    """
    if not name.strip():
        raise ValueError("name must be non-empty")
    if window < min_len:
        raise ValueError("window must be >= min_len")
    out = []
    for doc_id, ms, me in index.lookup(name):
        doc = corpus[doc_id]
        if scope is not None and not scope(doc):
            continue
        if me - ms > window:
            continue
        start, end = window_bounds(ms, me, len(doc.text), window)
        if end - start < min_len:
            continue
        out.append(Snippet(doc_id, doc.kind, start, end, doc.text[start:end],
                           ms - start, me - start))
    return out
