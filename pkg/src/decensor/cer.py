"""Candidate entity recognizer.

A multi-class averaged perceptron that decides which of k candidate names a
masked mention stands for, looking only at the words around the mask. The
name itself never reaches the features: every token equal to the snippet's
mask token is rewritten to a fixed placeholder before featurization.

Class labels follow the usual convention: ``ANON`` for the censored name and
``DUMBO1`` .. ``DUMBOk-1`` for the other candidates, numbered in candidate
order.
"""

from __future__ import annotations

import json
import os
import random
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .candidates import CandidateSet
from .censorship import MaskedSnippet, MaskTokenFactory, mask_snippet
from .corpus import Corpus, atomic_write_text
from .errors import EmptyTrainingSet, InsufficientExamples, ParseError
from .snippets import DEFAULT_MIN_LEN, DEFAULT_WINDOW, Index, Snippet, find_snippets
from .text import tokenize

MODEL_FORMAT = "decensor-cer/1"
MASK = "<mask>"
ANON = "ANON"


@dataclass(frozen=True)
class Hyperparameters:
    width: int = 8
    epochs: int = 5
    class_cap: int = 500
    seed: int = 0


def class_labels(candidates: CandidateSet) -> list[tuple[str, str]]:
    """(label, name) per candidate in ``top_k`` order."""
    out, dumbo = [], 0
    for name in candidates.top_k:
        if name == candidates.true_name:
            out.append((ANON, name))
        else:
            dumbo += 1
            out.append((f"DUMBO{dumbo}", name))
    return out


# --------------------------------------------------------------------------
# training data


@dataclass
class TrainingSnippets:
    by_candidate: dict[str, list[Snippet]]
    insufficient: dict[str, InsufficientExamples] = field(default_factory=dict)


def fetch_training_snippets(index: Index, corpus: Corpus, candidates: CandidateSet,
                            excluded_post_ids: Iterable[str], window: int = DEFAULT_WINDOW,
                            min_len: int = DEFAULT_MIN_LEN, minimum: int = 3) -> TrainingSnippets:
    """Snippets of every candidate from the whole corpus minus the censored posts.

    Only snippets strictly longer than ``min_len`` are kept. Candidates with
    fewer than ``minimum`` snippets stay in the result and are flagged.
    """
    excluded = set(excluded_post_ids)
    out = TrainingSnippets({})
    for name in candidates.top_k:
        snips = [s for s in find_snippets(index, corpus, name, window, min_len,
                                          scope=lambda d: d.doc_id not in excluded)
                 if len(s) > min_len]
        out.by_candidate[name] = snips
        if len(snips) < minimum:
            out.insufficient[name] = InsufficientExamples(name, len(snips), minimum)
    return out


def cap_snippets(snippets: TrainingSnippets, cap: int, seed) -> TrainingSnippets:
    """Keep at most ``cap`` snippets per candidate, sampled with a seeded RNG.

    Same rule :func:`train` applies to examples; doing it first avoids
    masking snippets that would be thrown away.
    """
    rng = random.Random(seed)
    kept = {}
    for name, snips in snippets.by_candidate.items():
        if len(snips) > cap:
            snips = [snips[i] for i in sorted(rng.sample(range(len(snips)), cap))]
        kept[name] = snips
    return TrainingSnippets(kept, dict(snippets.insufficient))


@dataclass(frozen=True)
class TrainingExample:
    label: str
    left_context: tuple[str, ...]
    right_context: tuple[str, ...]
    doc_id: str
    candidate: str
    masked: MaskedSnippet | None = None


def contexts(masked: MaskedSnippet) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Lowercased tokens left and right of the mask, in text order."""
    mask = masked.mask_token.lower()
    left, right = [], []
    for tok in tokenize(masked.text):
        word = MASK if tok.norm == mask else tok.norm
        if tok.end <= masked.mask_start:
            left.append(word)
        elif tok.start >= masked.mask_end:
            right.append(word)
    return tuple(left), tuple(right)


def build_examples(snippets: TrainingSnippets | Mapping[str, list[Snippet]],
                   candidates: CandidateSet, corpus: Corpus, tokens: MaskTokenFactory,
                   index: Index | None = None) -> list[TrainingExample]:
    """Mask each candidate snippet the way the censored posts were masked and label it."""
    by_candidate = snippets.by_candidate if isinstance(snippets, TrainingSnippets) else snippets
    labels = {name: label for label, name in class_labels(candidates)}
    out = []
    for name in candidates.top_k:
        for snip in by_candidate.get(name, ()):
            doc_tokens = index.tokens[snip.doc_id] if index is not None else None
            masked = mask_snippet(snip, name, tokens(), corpus[snip.doc_id].text, doc_tokens)
            left, right = contexts(masked)
            out.append(TrainingExample(labels[name], left, right, snip.doc_id, name, masked))
    return out


def _bucket(distance: int) -> str:
    if distance == 1:
        return "adj"
    return "near" if distance <= 3 else "far"


def context_features(left: Sequence[str], right: Sequence[str], width: int = 8) -> list[str]:
    """Unigram and bigram features, tagged with side and distance bucket.

    Each unigram also fires a position-free ``side|win|word`` feature so that
    evidence for a word is shared across buckets.
    """
    feats = []
    for side, near_first in (("L", list(reversed(left[-width:] if width else ()))),
                             ("R", list(right[:width]))):
        if not near_first:
            feats.append(f"{side}|adj|<edge>")
        for d, word in enumerate(near_first, 1):
            feats.append(f"{side}|{_bucket(d)}|{word}")
            feats.append(f"{side}|win|{word}")
            if d < len(near_first):
                nxt = near_first[d]
                pair = f"{nxt}_{word}" if side == "L" else f"{word}_{nxt}"
                feats.append(f"{side}|{_bucket(d)}|{pair}")
    return list(dict.fromkeys(feats))


# --------------------------------------------------------------------------
# model


@dataclass
class CerModel:
    classes: list[tuple[str, str]]
    features: dict[str, int]
    weights: np.ndarray
    hyper: Hyperparameters
    metadata: dict = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.classes]

    def score(self, feats: Iterable[str]) -> np.ndarray:
        idx = [self.features[f] for f in feats if f in self.features]
        if not idx:
            return np.zeros(len(self.classes))
        return self.weights[idx].sum(axis=0)

    def score_snippet(self, masked: MaskedSnippet) -> np.ndarray:
        left, right = contexts(masked)
        return self.score(context_features(left, right, self.hyper.width))

    def to_json(self) -> dict:
        names = sorted(self.features, key=self.features.get)
        return {"format": MODEL_FORMAT, "classes": [list(c) for c in self.classes],
                "hyperparameters": asdict(self.hyper), "metadata": self.metadata,
                "features": names, "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "CerModel":
        if data.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {data.get('format')!r}")
        feats = {f: i for i, f in enumerate(data["features"])}
        weights = np.array(data["weights"], dtype=float).reshape(len(feats), len(data["classes"]))
        return cls([tuple(c) for c in data["classes"]], feats, weights,
                   Hyperparameters(**data["hyperparameters"]), data["metadata"])

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CerModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def train(examples: Sequence[TrainingExample], classes: Sequence[tuple[str, str]],
          hyper: Hyperparameters = Hyperparameters()) -> CerModel:
    """Averaged multi-class perceptron over context features.

    Each class is capped at ``hyper.class_cap`` examples by seeded
    downsampling; epochs visit the examples in a seeded shuffled order.
    """
    label_idx = {label: i for i, (label, _) in enumerate(classes)}
    rng = random.Random(hyper.seed)
    per_class: dict[str, list[TrainingExample]] = {}
    for ex in examples:
        if ex.label not in label_idx:
            raise ValueError(f"example label {ex.label!r} is not a model class")
        per_class.setdefault(ex.label, []).append(ex)
    if len(per_class) < 2:
        raise EmptyTrainingSet("training needs examples for at least two classes")

    kept: list[TrainingExample] = []
    counts = {}
    for label, _ in classes:
        exs = per_class.get(label, [])
        if len(exs) > hyper.class_cap:
            picks = sorted(rng.sample(range(len(exs)), hyper.class_cap))
            exs = [exs[i] for i in picks]
        counts[label] = len(exs)
        kept.extend(exs)

    feat_index: dict[str, int] = {}
    X, Y = [], []
    for ex in kept:
        feats = context_features(ex.left_context, ex.right_context, hyper.width)
        X.append(np.array([feat_index.setdefault(f, len(feat_index)) for f in feats], dtype=np.intp))
        Y.append(label_idx[ex.label])

    n_classes = len(classes)
    W = np.zeros((len(feat_index), n_classes))
    U = np.zeros_like(W)
    step = 1
    order = list(range(len(kept)))
    for _ in range(hyper.epochs):
        rng.shuffle(order)
        for i in order:
            idx, gold = X[i], Y[i]
            pred = int(np.argmax(W[idx].sum(axis=0)))
            if pred != gold:
                W[idx, gold] += 1.0
                W[idx, pred] -= 1.0
                U[idx, gold] += step
                U[idx, pred] -= step
            step += 1
    averaged = W - U / step
    meta = {"examples_per_class": counts, "examples_total": len(examples)}
    return CerModel(list(classes), feat_index, averaged, hyper, meta)


# --------------------------------------------------------------------------
# resolution


@dataclass(frozen=True)
class Resolution:
    post_id: str
    classes: tuple[str, ...]
    snippet_scores: tuple[tuple[float, ...], ...]
    scores: tuple[float, ...]
    predicted_class: str | None
    predicted_name: str | None

    def to_json(self) -> dict:
        return {"post_id": self.post_id, "classes": list(self.classes),
                "snippet_scores": [list(s) for s in self.snippet_scores],
                "scores": list(self.scores), "predicted_class": self.predicted_class,
                "predicted_name": self.predicted_name}

    @classmethod
    def from_json(cls, row: dict) -> "Resolution":
        return cls(row["post_id"], tuple(row["classes"]),
                   tuple(tuple(s) for s in row["snippet_scores"]), tuple(row["scores"]),
                   row["predicted_class"], row["predicted_name"])


def aggregate_scores(snippet_scores: Sequence[Sequence[float]], n_classes: int,
                     mode: str = "sum") -> np.ndarray:
    mat = np.asarray(snippet_scores, dtype=float).reshape(-1, n_classes)
    if mode == "sum":
        return mat.sum(axis=0)
    if mode == "vote":
        votes = np.zeros(n_classes)
        for row in mat:
            votes[int(np.argmax(row))] += 1
        return votes
    raise ValueError(f"unknown aggregation {mode!r}")


def resolve(model: CerModel, censored_post, aggregation: str = "sum",
            abstain_margin: float | None = None) -> Resolution:
    """Score every snippet of a censored post and pick the best class.

    ``censored_post`` needs ``post_id`` and ``snippets`` (masked snippets).
    Per-post scores are the sum of snippet scores (or vote counts with
    ``aggregation="vote"``); ties go to the earlier class. With
    ``abstain_margin`` set, a winning margin below it yields no prediction.
    """
    if not censored_post.snippets:
        raise ValueError(f"censored post {censored_post.post_id!r} has no snippets")
    per_snippet = [model.score_snippet(s) for s in censored_post.snippets]
    total = aggregate_scores(per_snippet, len(model.classes), aggregation)
    best = int(np.argmax(total))
    label, name = model.classes[best]
    if abstain_margin is not None and len(total) > 1:
        runner_up = np.partition(total, -2)[-2]
        if total[best] - runner_up < abstain_margin:
            label = name = None
    return Resolution(censored_post.post_id, tuple(model.labels),
                      tuple(tuple(float(v) for v in row) for row in per_snippet),
                      tuple(float(v) for v in total), label, name)


# --------------------------------------------------------------------------
# audit dumps


def tagged_text(example: TrainingExample) -> str:
    """The masked snippet with its mask wrapped in ``<LABEL>..</LABEL>`` tags."""
    m = example.masked
    if m is None:
        return " ".join((*example.left_context, f"<{example.label}>{MASK}</{example.label}>",
                         *example.right_context))
    return (m.text[:m.mask_start] + f"<{example.label}>{m.mask_token}</{example.label}>"
            + m.text[m.mask_end:])


def dump_examples(examples: Iterable[TrainingExample], path: str | os.PathLike) -> None:
    rows = [json.dumps({"doc_id": ex.doc_id, "label": ex.label, "text": tagged_text(ex)},
                       ensure_ascii=False) for ex in examples]
    atomic_write_text(path, "".join(r + "\n" for r in rows))


def read_resolutions(path: str | os.PathLike) -> list[Resolution]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(Resolution.from_json(json.loads(line)))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ParseError(path, lineno, f"bad resolution row ({exc})") from None
    return out
