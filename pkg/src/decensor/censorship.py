"""Simulated censorship: mask a target name in a sample of posts.

Each snippet gets its own random mask token, a capitalized string of ASCII
letters that occurs nowhere in the corpus. Every occurrence of the name inside
the snippet window is replaced by that token, including a partial occurrence
cut by the window edge, so no surface trace of the name survives.
"""

from __future__ import annotations

import json
import os
import random
import re
import string
from collections.abc import Iterable
from dataclasses import dataclass

from .corpus import Corpus, atomic_write_text, read_jsonl
from .errors import DataError, InvalidConfig, NameNotFound, ParseError
from .snippets import Index, Snippet, find_snippets
from .text import Token, find_phrase, token_key, tokenize

DEFAULT_MAX_POSTS = 20
DEFAULT_TOKEN_LENGTHS = (6, 10)


class MaskTokenFactory:
    """Draws mask tokens that are pairwise distinct and absent from ``vocabulary``."""

    def __init__(self, vocabulary: Iterable[str], seed, lengths: tuple[int, int] = DEFAULT_TOKEN_LENGTHS):
        lo, hi = lengths
        if not 2 <= lo <= hi:
            raise InvalidConfig("mask token lengths need 2 <= min <= max")
        self._vocab = {v.lower() for v in vocabulary}
        self._used: set[str] = set()
        self._rng = random.Random(seed)
        self.lengths = lengths

    def __call__(self) -> str:
        while True:
            n = self._rng.randint(*self.lengths)
            tok = self._rng.choice(string.ascii_uppercase) + "".join(
                self._rng.choices(string.ascii_lowercase, k=n - 1))
            low = tok.lower()
            if low not in self._vocab and low not in self._used:
                self._used.add(low)
                return tok

    @property
    def issued(self) -> frozenset[str]:
        return frozenset(self._used)


@dataclass(frozen=True)
class MaskedSnippet:
    """A snippet with one name masked.

    ``mask_start``/``mask_end`` locate the occurrence the snippet was retrieved
    for; ``replaced`` lists every (start, end, original) substitution in the
    masked text, which is what :func:`unmask` needs to restore the original.
    """

    doc_id: str
    char_start: int
    char_end: int
    text: str
    mask_token: str
    mask_start: int
    mask_end: int
    replaced: tuple[tuple[int, int, str], ...]


def surface_pattern(name: str) -> re.Pattern:
    """Case-insensitive, word-bounded match of the name's words with any separator.

    Looser than token matching: it also catches spellings the tokenizer glues
    into one word, such as ``paul'Ryan``.
    """
    words = [re.escape(t.norm).replace("'", "['’]") for t in tokenize(name)]
    return re.compile(r"\b" + r"[\W_]+".join(words) + r"\b", re.IGNORECASE)


def _merge(spans):
    out = []
    for s, e in sorted(spans):
        if out and s <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


def mask_snippet(snippet: Snippet, name: str, token: str, source_text: str,
                 source_tokens: list[Token] | None = None) -> MaskedSnippet:
    """Replace ``name`` inside the snippet window with ``token``.

    ``source_tokens`` may carry the document's tokenization (as held by the
    index) to avoid re-tokenizing it.
    """
    key = token_key(name)
    if source_tokens is None:
        source_tokens = tokenize(source_text)
    lo, hi = snippet.char_start, snippet.char_end
    # search the whole document so occurrences straddling the window edge are caught
    found = list(find_phrase(source_tokens, key))
    found += [m.span() for m in surface_pattern(name).finditer(source_text)]
    spans = [(max(s, lo) - lo, min(e, hi) - lo) for s, e in _merge(found) if s < hi and e > lo]
    window = snippet.window_text
    parts, replaced = [], []
    pos = shift = 0
    mask_start = mask_end = -1
    for s, e in spans:
        parts.append(window[pos:s])
        new_start = s + shift
        replaced.append((new_start, new_start + len(token), window[s:e]))
        if s <= snippet.match_start < e:
            mask_start, mask_end = new_start, new_start + len(token)
        parts.append(token)
        shift += len(token) - (e - s)
        pos = e
    parts.append(window[pos:])
    if mask_start < 0:
        raise DataError(f"snippet of {snippet.doc_id!r} does not contain {name!r} at its match")
    return MaskedSnippet(snippet.doc_id, lo, hi, "".join(parts), token,
                         mask_start, mask_end, tuple(replaced))


def unmask(masked: MaskedSnippet) -> str:
    text = masked.text
    for s, e, original in reversed(masked.replaced):
        text = text[:s] + original + text[e:]
    return text


@dataclass(frozen=True)
class CensorPlan:
    target_name: str
    max_posts: int
    selected_post_ids: tuple[str, ...]
    rng_seed: int


@dataclass(frozen=True)
class CensoredPost:
    post_id: str
    target_name: str
    snippets: tuple[MaskedSnippet, ...]
    original_snippets: tuple[Snippet, ...]

    @property
    def mask_tokens(self) -> list[str]:
        return [s.mask_token for s in self.snippets]


def plan_censorship(index: Index, corpus: Corpus, target_name: str,
                    max_posts: int = DEFAULT_MAX_POSTS, seed: int = 0,
                    selection: str = "random", window: int = 200, min_len: int = 50) -> CensorPlan:
    """Pick up to ``max_posts`` posts with at least one snippet of the name."""
    if max_posts < 1:
        raise InvalidConfig("max_posts must be >= 1")
    snippets = find_snippets(index, corpus, target_name, window, min_len,
                             scope=lambda d: d.is_post)
    post_ids = sorted({s.doc_id for s in snippets})
    if not post_ids:
        raise NameNotFound(target_name)
    if len(post_ids) > max_posts:
        if selection == "random":
            rng = random.Random(f"censor:{seed}:{target_name}")
            post_ids = sorted(rng.sample(post_ids, max_posts))
        elif selection == "chronological":
            post_ids = sorted(post_ids, key=lambda p: (corpus[p].created_at, p))[:max_posts]
        else:
            raise InvalidConfig(f"unknown post selection {selection!r}")
    return CensorPlan(target_name, max_posts, tuple(post_ids), seed)


def censor(plan: CensorPlan, snippets: Iterable[Snippet], corpus: Corpus,
           tokens: MaskTokenFactory | None = None,
           token_lengths: tuple[int, int] = DEFAULT_TOKEN_LENGTHS,
           index: Index | None = None) -> list[CensoredPost]:
    """Mask the target name in every snippet, one fresh token per snippet.

    Pass a shared ``tokens`` factory to keep tokens distinct across a whole
    experiment; otherwise one is seeded from the plan.
    """
    selected = set(plan.selected_post_ids)
    if tokens is None:
        vocab = {t.norm for d in corpus for t in tokenize(d.text)}
        tokens = MaskTokenFactory(vocab, f"mask:{plan.rng_seed}:{plan.target_name}", token_lengths)
    grouped: dict[str, list[Snippet]] = {}
    for snip in snippets:
        if snip.doc_id not in selected:
            raise DataError(f"snippet from {snip.doc_id!r} is outside the censor plan")
        grouped.setdefault(snip.doc_id, []).append(snip)
    out = []
    for post_id in plan.selected_post_ids:
        originals = sorted(grouped.get(post_id, ()), key=lambda s: s.char_start)
        doc_tokens = index.tokens[post_id] if index is not None else None
        masked = tuple(mask_snippet(s, plan.target_name, tokens(), corpus[post_id].text, doc_tokens)
                       for s in originals)
        out.append(CensoredPost(post_id, plan.target_name, masked, tuple(originals)))
    return out


def censored_rows(posts: Iterable[CensoredPost]) -> list[dict]:
    return [{"post_id": p.post_id, "mask_token": s.mask_token, "censored_text": s.text,
             "char_start": s.char_start, "char_end": s.char_end,
             "mask_start": s.mask_start, "mask_end": s.mask_end}
            for p in posts for s in p.snippets]


def answer_rows(posts: Iterable[CensoredPost]) -> list[dict]:
    return [{"post_id": p.post_id, "target_name": p.target_name,
             "replaced": [[list(r) for r in s.replaced] for s in p.snippets]}
            for p in posts]


def write_censored(posts: list[CensoredPost], censored_path, answers_path) -> None:
    """Masked snippets and ground truth go to separate files."""
    atomic_write_text(censored_path, "".join(json.dumps(r, ensure_ascii=False) + "\n"
                                             for r in censored_rows(posts)))
    atomic_write_text(answers_path, "".join(json.dumps(r, ensure_ascii=False) + "\n"
                                            for r in answer_rows(posts)))


def masked_from_row(row: dict, path="<row>", lineno: int = 0) -> MaskedSnippet:
    try:
        return MaskedSnippet(row["post_id"], row["char_start"], row["char_end"],
                             row["censored_text"], row["mask_token"],
                             row["mask_start"], row["mask_end"], ())
    except (KeyError, TypeError) as exc:
        raise ParseError(path, lineno, f"bad censored row ({exc})") from None


@dataclass(frozen=True)
class MaskedPost:
    """A censored post as seen by training and resolution: no target name."""

    post_id: str
    snippets: tuple[MaskedSnippet, ...]

    @property
    def mask_tokens(self) -> list[str]:
        return [s.mask_token for s in self.snippets]


def read_masked_posts(path: str | os.PathLike) -> dict[str, list[MaskedPost]]:
    """Censored posts grouped by the ``experiment`` field of each row."""
    grouped: dict[str, dict[str, list[MaskedSnippet]]] = {}
    for i, row in enumerate(read_jsonl(path), 1):
        snip = masked_from_row(row, path, i)
        grouped.setdefault(row.get("experiment", ""), {}).setdefault(snip.doc_id, []).append(snip)
    return {exp: [MaskedPost(p, tuple(snips)) for p, snips in sorted(posts.items())]
            for exp, posts in sorted(grouped.items())}


def read_censored(path: str | os.PathLike) -> dict[str, list[MaskedSnippet]]:
    """Masked snippets per post id, without any ground truth."""
    out: dict[str, list[MaskedSnippet]] = {}
    for i, row in enumerate(read_jsonl(path), 1):
        snip = masked_from_row(row, path, i)
        out.setdefault(snip.doc_id, []).append(snip)
    return out


def read_answers(path: str | os.PathLike) -> dict[str, str]:
    out = {}
    for i, row in enumerate(read_jsonl(path), 1):
        if not isinstance(row.get("post_id"), str) or not isinstance(row.get("target_name"), str):
            raise ParseError(path, i, "need post_id and target_name")
        out[row["post_id"]] = row["target_name"]
    return out
