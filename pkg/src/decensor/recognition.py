"""Person-name recognition: gazetteer lookup plus a capitalization heuristic.

Any external recognizer can be plugged in instead through
:func:`import_annotations`; everything downstream consumes the same
``{doc_id: [(name, offset), ...]}`` mapping.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

from .corpus import Corpus, Document, atomic_write_text
from .errors import InvalidConfig, ParseError, UnknownDocument
from .text import normalize_space, token_key, tokenize

Annotations = dict[str, list[tuple[str, int]]]

DEFAULT_DENYLIST = frozenset({"Facebook", "Wikileaks", "Twitter", "Google"})
DEFAULT_TITLES = frozenset({
    "Mr", "Mrs", "Ms", "Miss", "Dr", "Prof", "Professor", "Sir", "Dame", "Rev",
    "Sen", "Senator", "Rep", "Gov", "Governor", "President", "Secretary", "Judge",
    "Justice", "Mayor", "Gen", "General", "Pope", "Ph.D.",
})
# Capitalized words that start sentences or sit next to names without being part of them.
_STOPWORDS = frozenset("""
a an and as at but by for from he her his i if in into it its my no nor not of on or our
she so that the their then there these they this those to up we what when where which who
why will with yes yet you your after before during while also however meanwhile today
yesterday tomorrow tonight last next new every all some many most more just even still
monday tuesday wednesday thursday friday saturday sunday january february march april may
june july august september october november december dear hey hi thanks thank ok please
""".split())
_SUFFIXES = frozenset({"jr", "sr"})


@dataclass(frozen=True)
class RecognizerConfig:
    gazetteer: frozenset[str] = frozenset()
    title_markers: frozenset[str] = DEFAULT_TITLES
    denylist: frozenset[str] = DEFAULT_DENYLIST
    use_heuristic: bool = False
    _gaz: dict = field(init=False, repr=False, compare=False)
    _deny: frozenset = field(init=False, repr=False, compare=False)
    _titles: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for attr in ("gazetteer", "title_markers", "denylist"):
            object.__setattr__(self, attr, frozenset(getattr(self, attr)))
        deny = frozenset(k for k in map(token_key, self.denylist) if k)
        gaz: dict[str, list[tuple[str, ...]]] = {}
        for key in sorted({k for k in map(token_key, self.gazetteer) if k}):
            if key in deny:
                raise InvalidConfig(f"{' '.join(key)!r} is both in the gazetteer and the denylist")
            gaz.setdefault(key[0], []).append(key)
        for keys in gaz.values():
            keys.sort(key=len, reverse=True)
        titles = frozenset(k[0] for k in map(token_key, self.title_markers) if len(k) == 1)
        object.__setattr__(self, "_gaz", gaz)
        object.__setattr__(self, "_deny", deny)
        object.__setattr__(self, "_titles", titles)


def _is_cap(word: str) -> bool:
    return word[:1].isupper() and not (len(word) > 1 and word.isupper()) and word[:1].isalpha()


def _contains(key: tuple[str, ...], sub: tuple[str, ...]) -> bool:
    n = len(sub)
    return any(key[i:i + n] == sub for i in range(len(key) - n + 1))


def recognize_names(text: str, config: RecognizerConfig) -> list[tuple[str, int]]:
    """Person-name mentions in ``text`` as (surface string, char offset)."""
    toks = tokenize(text)
    n = len(toks)
    covered = [False] * n
    found: list[tuple[int, int]] = []  # token spans [i, j)

    i = 0
    while i < n:
        for key in config._gaz.get(toks[i].norm, ()):
            j = i + len(key)
            if j <= n and all(toks[i + m].norm == key[m] for m in range(1, len(key))):
                found.append((i, j))
                for m in range(i, j):
                    covered[m] = True
                i = j
                break
        else:
            i += 1

    if config.use_heuristic:
        def joined(a: int, b: int) -> bool:
            return text[toks[a].end:toks[b].start].isspace()

        def usable(m: int) -> bool:
            t = toks[m]
            return (not covered[m] and _is_cap(t.text) and t.norm not in _STOPWORDS
                    and t.norm not in config._titles and t.norm not in _SUFFIXES)

        def sentence_start(m: int) -> bool:
            if m == 0:
                return True
            gap = text[toks[m - 1].end:toks[m].start]
            return any(c in gap for c in ".!?") and toks[m - 1].norm not in config._titles

        i = 0
        while i < n:
            if not usable(i):
                i += 1
                continue
            j = i + 1
            while j < n and usable(j) and joined(j - 1, j):
                j += 1
            titled = i > 0 and toks[i - 1].norm in config._titles and (
                joined(i - 1, i) or text[toks[i - 1].end:toks[i].start].strip() == ".")
            # a capitalized sentence opener glued to a two-word name ("Ask Bernie Sanders")
            if j - i == 3 and sentence_start(i):
                i += 1
            size = j - i
            if 2 <= size <= 3 or (titled and size == 1):
                key = tuple(t.norm for t in toks[i:j])
                if not any(_contains(key, d) for d in config._deny):
                    found.append((i, j))
            i = j

    found.sort()
    return [(text[toks[a].start:toks[b - 1].end], toks[a].start) for a, b in found]


def recognize_corpus(corpus: Corpus, config: RecognizerConfig,
                     doc_filter: Callable[[Document], bool] | None = None) -> Annotations:
    out: Annotations = {}
    for doc in corpus:
        if doc_filter is not None and not doc_filter(doc):
            continue
        names = recognize_names(doc.text, config)
        if names:
            out[doc.doc_id] = names
    return out


def canonical_counts(mentions: Iterable[str]) -> Counter:
    """Count mentions case-insensitively under the first-seen spelling."""
    first: dict[str, str] = {}
    counts: Counter = Counter()
    for name in mentions:
        surface = normalize_space(name)
        canon = first.setdefault(surface.lower(), surface)
        counts[canon] += 1
    return counts


@dataclass(frozen=True)
class NameCensus:
    counts: dict[str, int]
    min_occurrences: int

    def __contains__(self, name: str) -> bool:
        return name in self.counts

    def ranked(self) -> list[tuple[str, int]]:
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))


def census(corpus: Corpus, config: RecognizerConfig | None = None, min_occurrences: int = 1,
           doc_filter: Callable[[Document], bool] | None = None,
           annotations: Mapping[str, list[tuple[str, int]]] | None = None) -> NameCensus:
    """Occurrence counts of recognized names, thresholded at ``min_occurrences``.

    Either ``config`` (run the recognizer) or precomputed ``annotations`` must
    be supplied. Denylisted names are removed before thresholding.
    """
    if min_occurrences < 1:
        raise InvalidConfig("min_occurrences must be >= 1")
    if annotations is None:
        if config is None:
            raise InvalidConfig("census needs a recognizer config or annotations")
        annotations = recognize_corpus(corpus, config, doc_filter)
    deny = config._deny if config is not None else frozenset(map(token_key, DEFAULT_DENYLIST))
    mentions = (name for doc in corpus
                if doc_filter is None or doc_filter(doc)
                for name, _ in annotations.get(doc.doc_id, ()))
    counts = canonical_counts(mentions)
    kept = {name: c for name, c in counts.items()
            if c >= min_occurrences and token_key(name) not in deny}
    return NameCensus(kept, min_occurrences)


def load_wordlist(path: str | os.PathLike) -> list[str]:
    """One entry per line; blank lines and ``#`` comments are skipped."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                entries.append(line)
    return entries


def import_annotations(path: str | os.PathLike, corpus: Corpus) -> Annotations:
    out: Annotations = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not (isinstance(row, dict) and isinstance(row.get("doc_id"), str)
                    and isinstance(row.get("name"), str) and type(row.get("offset")) is int):
                raise ParseError(path, lineno, "need doc_id (str), name (str), offset (int)")
            doc_id, name, offset = row["doc_id"], row["name"], row["offset"]
            if doc_id not in corpus.by_id:
                raise UnknownDocument(doc_id)
            if corpus[doc_id].text[offset:offset + len(name)] != name or offset < 0:
                raise ParseError(path, lineno, f"{name!r} does not occur at offset {offset}")
            out.setdefault(doc_id, []).append((name, offset))
    for names in out.values():
        names.sort(key=lambda t: t[1])
    return out


def export_annotations(annotations: Mapping[str, list[tuple[str, int]]],
                       path: str | os.PathLike) -> None:
    lines = [json.dumps({"doc_id": doc_id, "name": name, "offset": offset}, ensure_ascii=False)
             for doc_id in sorted(annotations) for name, offset in annotations[doc_id]]
    atomic_write_text(path, "".join(line + "\n" for line in lines))
