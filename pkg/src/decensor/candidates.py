"""Candidate names for a censored name, taken from the comments of the censored posts."""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

from .corpus import Corpus
from .errors import FairnessViolation, InvalidConfig
from .recognition import RecognizerConfig, canonical_counts, recognize_names


@dataclass(frozen=True)
class CandidateSet:
    """The k names the classifier chooses among.

    ``ranking`` is the natural order (count descending, then name); ``top_k``
    is that order cut at k, with the true name swapped into the last slot when
    it ranked lower (``forced``).
    """

    post_scope: tuple[str, ...]
    counts: dict[str, int]
    k: int
    top_k: tuple[str, ...]
    true_name: str
    true_name_rank: int | None
    forced: bool

    @property
    def in_top_k(self) -> bool:
        return self.true_name_rank is not None and self.true_name_rank <= self.k

    @property
    def ranking(self) -> list[str]:
        return natural_ranking(self.counts)

    def to_json(self) -> dict:
        return {"post_scope": list(self.post_scope), "counts": dict(self.counts), "k": self.k,
                "top_k": list(self.top_k), "true_name": self.true_name,
                "true_name_rank": self.true_name_rank, "forced": self.forced}

    @classmethod
    def from_json(cls, row: dict) -> "CandidateSet":
        return cls(tuple(row["post_scope"]), dict(row["counts"]), row["k"], tuple(row["top_k"]),
                   row["true_name"], row["true_name_rank"], row["forced"])


def natural_ranking(counts: Mapping[str, int]) -> list[str]:
    return [n for n, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


def extract_candidates(corpus: Corpus, recognizer: RecognizerConfig | Mapping[str, list],
                       post_ids: Iterable[str]) -> Counter:
    """Count person-name mentions over all comments of ``post_ids``.

    ``recognizer`` is either a config to run, or precomputed annotations.
    """
    post_ids = list(post_ids)
    if not post_ids:
        raise InvalidConfig("post_ids must be non-empty")
    comments = corpus.comments_for(post_ids)
    if isinstance(recognizer, RecognizerConfig):
        mentions = (n for c in comments for n, _ in recognize_names(c.text, recognizer))
    else:
        mentions = (n for c in comments for n, _ in recognizer.get(c.doc_id, ()))
    return canonical_counts(mentions)


def lookup_name(counts: Mapping[str, int], name: str) -> str | None:
    """The key of ``counts`` spelling ``name`` up to case and spacing."""
    want = " ".join(name.split()).lower()
    for key in counts:
        if key.lower() == want:
            return key
    return None


def select_top_k(counts: Mapping[str, int], k: int, true_name: str,
                 post_scope: Iterable[str] = ()) -> CandidateSet:
    if k < 1:
        raise InvalidConfig("k must be >= 1")
    key = lookup_name(counts, true_name)
    if key is None or counts[key] < 1:
        raise FairnessViolation(true_name)
    ranking = natural_ranking(counts)
    rank = ranking.index(key) + 1
    top = ranking[:k]
    forced = rank > k
    if forced:
        top[-1] = key
    return CandidateSet(tuple(post_scope), dict(counts), k, tuple(top), key, rank, forced)
