"""Posts, comments and the corpus that ties them together.

Corpora are stored as line-delimited JSON, one document per line::

    {"id": "p1", "kind": "post", "page": "nytimes", "created_at": "2016-08-01T12:00:00Z", "text": "..."}
    {"id": "c1", "kind": "comment", "parent_id": "p1", "page": "nytimes", "created_at": "...", "text": "..."}

Replies to comments are expected to be flattened onto their root post.
"""

from __future__ import annotations

import enum
import json
import os
import random
import tempfile
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .errors import DanglingParent, DuplicateId, InvalidSpec, ParseError


class Kind(str, enum.Enum):
    POST = "post"
    COMMENT = "comment"


@dataclass(frozen=True)
class Document:
    doc_id: str
    kind: Kind
    page: str
    created_at: datetime
    text: str
    parent_id: str | None = None

    @property
    def is_post(self) -> bool:
        return self.kind is Kind.POST

    def to_json(self) -> dict:
        row = {"id": self.doc_id, "kind": self.kind.value}
        if self.parent_id is not None:
            row["parent_id"] = self.parent_id
        row["page"] = self.page
        row["created_at"] = format_timestamp(self.created_at)
        row["text"] = self.text
        return row


def parse_timestamp(value: str) -> datetime:
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    dt = datetime.fromisoformat(value)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class Corpus:
    """Immutable document collection with the post -> comments relation.

    Construction validates ids and parent links; use :meth:`from_documents`.
    """

    documents: tuple[Document, ...]
    comments_of: dict[str, tuple[str, ...]] = field(repr=False)
    by_id: dict[str, Document] = field(repr=False, compare=False)

    @classmethod
    def from_documents(cls, documents: Iterable[Document]) -> "Corpus":
        docs = tuple(documents)
        by_id: dict[str, Document] = {}
        for doc in docs:
            if doc.doc_id in by_id:
                raise DuplicateId(doc.doc_id)
            by_id[doc.doc_id] = doc
        comments_of: dict[str, list[str]] = {d.doc_id: [] for d in docs if d.is_post}
        for doc in docs:
            if doc.is_post:
                continue
            if doc.parent_id not in comments_of:
                raise DanglingParent(doc.doc_id, doc.parent_id)
            comments_of[doc.parent_id].append(doc.doc_id)
        return cls(docs, {k: tuple(v) for k, v in comments_of.items()}, by_id)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __getitem__(self, doc_id: str) -> Document:
        return self.by_id[doc_id]

    @property
    def posts(self) -> list[Document]:
        return [d for d in self.documents if d.is_post]

    @property
    def comments(self) -> list[Document]:
        return [d for d in self.documents if not d.is_post]

    def comments_for(self, post_ids: Iterable[str]) -> list[Document]:
        return [self.by_id[c] for p in post_ids for c in self.comments_of.get(p, ())]


def _document_from_row(row: object, path, lineno: int) -> Document:
    if not isinstance(row, dict):
        raise ParseError(path, lineno, "expected a JSON object")
    for key in ("id", "kind", "page", "created_at", "text"):
        if not isinstance(row.get(key), str):
            raise ParseError(path, lineno, f"missing or non-string field {key!r}")
    try:
        kind = Kind(row["kind"])
    except ValueError:
        raise ParseError(path, lineno, f"unknown kind {row['kind']!r}") from None
    parent_id = row.get("parent_id")
    if kind is Kind.COMMENT and not isinstance(parent_id, str):
        raise ParseError(path, lineno, "comment without parent_id")
    if kind is Kind.POST and parent_id is not None:
        raise ParseError(path, lineno, "post with parent_id")
    try:
        created_at = parse_timestamp(row["created_at"])
    except ValueError:
        raise ParseError(path, lineno, f"bad timestamp {row['created_at']!r}") from None
    return Document(row["id"], kind, row["page"], created_at, row["text"], parent_id)


def load_corpus(path: str | os.PathLike) -> Corpus:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON ({exc.msg})") from None
            docs.append(_document_from_row(row, path, lineno))
    return Corpus.from_documents(docs)


def dump_corpus(corpus: Corpus) -> str:
    return "".join(json.dumps(d.to_json(), ensure_ascii=False) + "\n" for d in corpus)


def save_corpus(corpus: Corpus, path: str | os.PathLike) -> None:
    atomic_write_text(path, dump_corpus(corpus))


def read_jsonl(path: str | os.PathLike) -> list[dict]:
    """Rows of a JSON-lines file; blank lines are skipped."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ParseError(path, lineno, f"invalid JSON ({exc.msg})") from None
    return rows


def write_jsonl(path: str | os.PathLike, rows: Iterable[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n"
                                    for r in rows))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# synthetic corpora


@dataclass(frozen=True)
class NameSpec:
    """One planted name.

    ``chatter_rate`` is the probability that a comment anywhere in the corpus
    additionally mentions this name; it models celebrities who are discussed
    everywhere regardless of the post.
    """

    name: str
    vocabulary: tuple[str, ...]
    post_count: int
    comment_count: int
    mention_rate: float
    chatter_rate: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    names: tuple[NameSpec, ...]
    background_vocabulary: tuple[str, ...]
    seed: int
    topic_density: float = 0.5
    sentence_length: tuple[int, int] = (7, 12)
    post_sentences: int = 3
    pages: tuple[str, ...] = ("synthetic",)

    def validate(self) -> None:
        problems = []
        if not 0 <= self.seed < 2**64:
            problems.append("seed: must be a 64-bit unsigned integer")
        if not self.names:
            problems.append("names: at least one name is required")
        if not self.background_vocabulary:
            problems.append("background_vocabulary: must not be empty")
        if not 0.0 <= self.topic_density <= 1.0:
            problems.append("topic_density: must lie in [0, 1]")
        lo, hi = self.sentence_length
        if not 1 <= lo <= hi:
            problems.append("sentence_length: need 1 <= min <= max")
        if self.post_sentences < 1:
            problems.append("post_sentences: must be >= 1")
        if not self.pages:
            problems.append("pages: must not be empty")
        seen = set()
        for i, ns in enumerate(self.names):
            where = f"names[{i}]"
            if not ns.name.strip():
                problems.append(f"{where}.name: empty")
            if ns.name.lower() in seen:
                problems.append(f"{where}.name: duplicate {ns.name!r}")
            seen.add(ns.name.lower())
            if not ns.vocabulary:
                problems.append(f"{where}.vocabulary: must not be empty")
            if ns.post_count < 0:
                problems.append(f"{where}.post_count: must be >= 0")
            if ns.comment_count < 0:
                problems.append(f"{where}.comment_count: must be >= 0")
            if not 0.0 <= ns.mention_rate <= 1.0:
                problems.append(f"{where}.mention_rate: must lie in [0, 1]")
            if not 0.0 <= ns.chatter_rate <= 1.0:
                problems.append(f"{where}.chatter_rate: must lie in [0, 1]")
            if (len(self.names) < 2 and ns.mention_rate < 1.0
                    and ns.post_count and ns.comment_count):
                problems.append(f"{where}.mention_rate: < 1 needs another name to mention")
        if problems:
            raise InvalidSpec(problems)


def _sentence(rng: random.Random, vocab, background, density: float,
              length: tuple[int, int], name: str | None = None) -> str:
    words = [rng.choice(vocab) if rng.random() < density else rng.choice(background)
             for _ in range(rng.randint(*length))]
    if name is not None:
        words.insert(rng.randint(0, len(words)), name)
    words[0] = words[0][:1].upper() + words[0][1:]
    return " ".join(words) + "."


def generate_synthetic(spec: SyntheticSpec) -> Corpus:
    """Build a corpus from ``spec``; the output depends only on the spec."""
    spec.validate()
    rng = random.Random(spec.seed)
    background = list(spec.background_vocabulary)
    length = spec.sentence_length
    clock = datetime(2016, 8, 1, tzinfo=timezone.utc)
    chatter = [ns for ns in spec.names if ns.chatter_rate > 0]
    docs: list[Document] = []
    n_posts = n_comments = 0

    def tick() -> datetime:
        nonlocal clock
        clock += timedelta(seconds=rng.randint(1, 600))
        return clock

    for ns in spec.names:
        others = [o for o in spec.names if o.name != ns.name]
        for _ in range(ns.post_count):
            n_posts += 1
            post_id = f"p{n_posts:06d}"
            page = rng.choice(spec.pages)
            sentences = [_sentence(rng, ns.vocabulary, background, spec.topic_density, length)
                         for _ in range(spec.post_sentences)]
            at = rng.randrange(len(sentences))
            sentences[at] = _sentence(rng, ns.vocabulary, background, spec.topic_density,
                                      length, ns.name)
            docs.append(Document(post_id, Kind.POST, page, tick(), " ".join(sentences)))
            for _ in range(ns.comment_count):
                n_comments += 1
                target = ns if rng.random() < ns.mention_rate else rng.choice(others)
                parts = [_sentence(rng, target.vocabulary, background, spec.topic_density,
                                   length, target.name)]
                for ch in chatter:
                    if rng.random() < ch.chatter_rate:
                        parts.append(_sentence(rng, ch.vocabulary, background,
                                               spec.topic_density, length, ch.name))
                rng.shuffle(parts)
                docs.append(Document(f"c{n_comments:07d}", Kind.COMMENT, page, tick(),
                                     " ".join(parts), parent_id=post_id))
    return Corpus.from_documents(docs)


# Name parts for scenario building. Invented, unlikely to clash with vocabulary.
_FIRST = ("Adela", "Bruno", "Celia", "Dario", "Edna", "Fabian", "Greta", "Hector",
          "Ines", "Joaquin", "Katya", "Lazlo", "Mirela", "Nestor", "Odile", "Pavel",
          "Quinta", "Rufus", "Selma", "Tobias", "Ulla", "Vasco", "Wanda", "Xaver",
          "Yolanda", "Zeno")
_LAST = ("Arkwright", "Bellweather", "Cordovan", "Dunmore", "Esterhazy", "Fairbrook",
         "Gallowglass", "Hawthorne", "Ironside", "Jessamine", "Kestrel", "Lockridge",
         "Marchbanks", "Northcote", "Oakenfold", "Pembury", "Quillfeather", "Ravensworth",
         "Stonebridge", "Thistlewood", "Underhill", "Vantongeren", "Whitlock", "Yarborough",
         "Zimmerley", "Ashcombe")
_ONSETS = ("b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t",
           "v", "w", "z", "br", "cr", "dr", "gl", "pl", "st", "tr", "sk")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ea", "ou")
_CODAS = ("", "n", "r", "s", "t", "l", "m", "nd", "st", "ck")


def pseudo_words(rng: random.Random, count: int, exclude: set[str] = frozenset()) -> list[str]:
    """Distinct pronounceable lowercase nonsense words."""
    out: list[str] = []
    seen = set(exclude)
    while len(out) < count:
        word = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS)
                       for _ in range(rng.randint(2, 3))) + rng.choice(_CODAS)
        if word not in seen:
            seen.add(word)
            out.append(word)
    return out


def planted_names(count: int, offset: int = 0) -> list[str]:
    if count + offset > len(_FIRST) * len(_LAST):
        raise ValueError("too many planted names requested")
    return [f"{_FIRST[i % len(_FIRST)]} {_LAST[(i * 7 + i // len(_FIRST)) % len(_LAST)]}"
            for i in range(offset, offset + count)]


def scenario_spec(*, seed: int, n_names: int = 10, vocab_size: int = 30,
                  shared_fraction: float = 0.0, post_counts: int | list[int] = 20,
                  comment_count: int = 50, mention_rate: float = 0.6,
                  chatter_rates: tuple[float, ...] = (0.7, 0.45, 0.3),
                  background_size: int = 300, topic_density: float = 0.5,
                  cluster_size: int = 1, cluster_fraction: float = 0.0) -> SyntheticSpec:
    """A ready-made spec: ``n_names`` planted names plus popular chatter names.

    ``shared_fraction`` of each planted name's vocabulary is drawn from one
    pool common to every name. With ``cluster_size`` > 1, consecutive planted
    names form topic clusters and ``cluster_fraction`` of the vocabulary comes
    from a pool shared within the cluster. The rest is private to the name.
    Chatter names have no posts; they only show up in comments.
    """
    if isinstance(post_counts, int):
        post_counts = [post_counts] * n_names
    if len(post_counts) != n_names:
        raise InvalidSpec(["post_counts: length must equal n_names"])
    if not 0.0 <= shared_fraction <= 1.0 or not 0.0 <= cluster_fraction <= 1.0:
        raise InvalidSpec(["shared_fraction, cluster_fraction: must lie in [0, 1]"])
    if shared_fraction + cluster_fraction > 1.0 or cluster_size < 1:
        raise InvalidSpec(["cluster_size must be >= 1 and the fractions must sum to <= 1"])
    # vocabulary drawing uses its own stream so it does not shift the corpus stream
    vrng = random.Random(f"vocabulary:{seed}")
    n_shared = round(vocab_size * shared_fraction)
    n_cluster = round(vocab_size * cluster_fraction) if cluster_size > 1 else 0
    n_private = vocab_size - n_shared - n_cluster
    n_total = n_names + len(chatter_rates)
    n_clusters = -(-n_total // cluster_size)
    words = pseudo_words(vrng, background_size + n_shared + n_cluster * n_clusters
                         + n_private * n_total)
    background, words = words[:background_size], words[background_size:]
    shared, words = words[:n_shared], words[n_shared:]
    clusters, private = words[:n_cluster * n_clusters], words[n_cluster * n_clusters:]
    names = planted_names(n_total)
    specs = []
    for i, name in enumerate(names):
        c = i // cluster_size
        vocab = (tuple(shared) + tuple(clusters[c * n_cluster:(c + 1) * n_cluster])
                 + tuple(private[i * n_private:(i + 1) * n_private]))
        if i < n_names:
            specs.append(NameSpec(name, vocab, post_counts[i], comment_count, mention_rate))
        else:
            specs.append(NameSpec(name, vocab, 0, 0, 0.0, chatter_rates[i - n_names]))
    return SyntheticSpec(tuple(specs), tuple(background), seed, topic_density=topic_density)
