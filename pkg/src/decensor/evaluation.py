"""Accuracy metrics and baselines over censored-post trials.

Per trial we record whether the classifier picked the censored name
(``correct``), whether that name ranked naturally among the k most frequent
comment candidates (``in_top_k``) and whether it was the single most frequent
one (``most_freq_hit``). From those:

* CER accuracy      mean(correct and in_top_k)
* Global accuracy   mean(correct)
* most frequent     mean(most_freq_hit)
* random among top  mean(in_top_k) / k   (expected value of a uniform draw)

Per-name rows are averaged into mu-averages (names weighted equally) and the
flat aggregate pools all trials (posts weighted equally).
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .candidates import CandidateSet, natural_ranking
from .cer import ANON, Resolution
from .corpus import atomic_write_text
from .errors import InvalidConfig, MissingAnswer, ParseError

CSV_COLUMNS = ("name", "posts", "cer", "global", "most_freq", "random")
METRICS = ("cer", "global", "most_freq", "random")
DEFINITIONS = {
    "cer": "mean(correct and in_top_k); correct comes from the forced-inclusion run",
    "global": "mean(correct)",
    "most_freq": "mean(rank-1 comment candidate == censored name)",
    "random": "mean(in_top_k) / k, closed-form expectation",
}


@dataclass(frozen=True)
class TrialRecord:
    name: str
    post_id: str
    correct: bool
    in_top_k: bool
    most_freq_hit: bool
    candidate_count: int

    @classmethod
    def from_json(cls, row: dict) -> "TrialRecord":
        return cls(row["name"], row["post_id"], bool(row["correct"]), bool(row["in_top_k"]),
                   bool(row["most_freq_hit"]), int(row["candidate_count"]))


@dataclass(frozen=True)
class NameResult:
    name: str
    posts: int
    cer: float
    global_: float
    most_freq: float
    random: float

    def metric(self, key: str) -> float:
        return self.global_ if key == "global" else getattr(self, key)

    def to_json(self) -> dict:
        return {"name": self.name, "posts": self.posts,
                **{m: self.metric(m) for m in METRICS}}

    @classmethod
    def from_json(cls, row: dict) -> "NameResult":
        return cls(row["name"], int(row["posts"]), float(row["cer"]), float(row["global"]),
                   float(row["most_freq"]), float(row["random"]))


@dataclass
class ExperimentReport:
    settings: dict
    names: list[NameResult]
    flat: dict[str, float]
    mu: dict[str, float]
    total_posts: int
    total_names: int
    skipped: list[dict] = field(default_factory=list)

    @property
    def posts_per_name(self) -> float:
        return self.total_posts / self.total_names if self.total_names else 0.0

    def to_json(self) -> dict:
        return {"settings": self.settings, "definitions": DEFINITIONS,
                "total_posts": self.total_posts, "total_names": self.total_names,
                "posts_per_name": self.posts_per_name, "flat": self.flat, "mu": self.mu,
                "names": [r.to_json() for r in self.names], "skipped": self.skipped}

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentReport":
        return cls(data["settings"], [NameResult.from_json(r) for r in data["names"]],
                   dict(data["flat"]), dict(data["mu"]), data["total_posts"],
                   data["total_names"], list(data.get("skipped", [])))


def baseline_most_frequent(candidates: CandidateSet) -> str:
    return natural_ranking(candidates.counts)[0]


def baseline_random(candidates: CandidateSet, k: int | None = None) -> float:
    k = candidates.k if k is None else k
    return 1.0 / k if candidates.in_top_k else 0.0


def score_trials(resolutions: Iterable[Resolution], candidate_sets: Mapping[str, CandidateSet],
                 answers: Mapping[str, str]) -> list[TrialRecord]:
    """Turn resolutions into trial records.

    ``candidate_sets`` maps each post id to the candidate set it was resolved
    against; ``answers`` maps post ids to the censored name. Anything other
    than ANON, including an abstention, counts as wrong.
    """
    trials = []
    for res in resolutions:
        if res.post_id not in answers:
            raise MissingAnswer(res.post_id)
        cands = candidate_sets[res.post_id]
        truth = answers[res.post_id]
        if truth.lower() != cands.true_name.lower():
            raise InvalidConfig(f"candidate set of {res.post_id!r} was built for another name")
        trials.append(TrialRecord(
            name=truth,
            post_id=res.post_id,
            correct=res.predicted_class == ANON,
            in_top_k=cands.in_top_k,
            most_freq_hit=baseline_most_frequent(cands) == cands.true_name,
            candidate_count=cands.k,
        ))
    return trials


def _rates(trials: Sequence[TrialRecord], k: int) -> dict[str, Fraction]:
    n = len(trials)
    return {
        "cer": Fraction(sum(t.correct and t.in_top_k for t in trials), n),
        "global": Fraction(sum(t.correct for t in trials), n),
        "most_freq": Fraction(sum(t.most_freq_hit for t in trials), n),
        "random": Fraction(sum(t.in_top_k for t in trials), n * k),
    }


def aggregate(trials: Sequence[TrialRecord], k: int, settings: Mapping | None = None,
              skipped: Sequence[dict] = ()) -> ExperimentReport:
    """Per-name rows (sorted by name), flat aggregates and mu-averages.

    Arithmetic is exact; floats appear only in the returned report. An empty
    trial list gives an empty report with zero aggregates.
    """
    if k < 1:
        raise InvalidConfig("k must be >= 1")
    for t in trials:
        if t.candidate_count != k:
            raise InvalidConfig(f"trial {t.post_id!r} was run with k={t.candidate_count}, not {k}")
    by_name: dict[str, list[TrialRecord]] = {}
    for t in trials:
        by_name.setdefault(t.name, []).append(t)
    rows, per_name = [], []
    for name in sorted(by_name):
        r = _rates(by_name[name], k)
        per_name.append(r)
        rows.append(NameResult(name, len(by_name[name]), float(r["cer"]), float(r["global"]),
                               float(r["most_freq"]), float(r["random"])))
    if trials:
        flat = {m: float(v) for m, v in _rates(trials, k).items()}
        mu = {m: float(sum(r[m] for r in per_name) / len(per_name)) for m in METRICS}
    else:
        flat = {m: 0.0 for m in METRICS}
        mu = dict(flat)
    settings = {"k": k, **dict(settings or {})}
    return ExperimentReport(settings, rows, flat, mu, len(trials), len(by_name), list(skipped))


# --------------------------------------------------------------------------
# rendering


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.names:
        writer.writerow([r.name, r.posts, *(f"{r.metric(m):.2f}" for m in METRICS)])
    return buf.getvalue()


def report_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"


def parse_report_csv(text: str) -> list[NameResult]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_COLUMNS:
        raise ParseError("<csv>", 1, f"unexpected header {header!r}")
    return [NameResult(row[0], int(row[1]), *map(float, row[2:6])) for row in reader if row]


def chart_rows(reports: Sequence[ExperimentReport]) -> list[dict]:
    """Bar-chart data: four metric series per (k, nocc) setting, flat and mu."""
    rows = []
    for rep in reports:
        for m in ("most_freq", "random", "global", "cer"):
            rows.append({"k": rep.settings.get("k"), "nocc": rep.settings.get("nocc_min"),
                         "series": m, "flat": rep.flat[m], "mu": rep.mu[m]})
    return rows


def chart_csv(reports: Sequence[ExperimentReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "nocc", "series", "flat", "mu"])
    for row in chart_rows(reports):
        writer.writerow([row["k"], row["nocc"], row["series"],
                         f"{row['flat']:.4f}", f"{row['mu']:.4f}"])
    return buf.getvalue()


def emit_report(report: ExperimentReport, path: str | os.PathLike, fmt: str | None = None) -> None:
    """Write ``report`` as CSV or JSON; the format defaults to the file suffix."""
    fmt = fmt or os.path.splitext(str(path))[1].lstrip(".").lower()
    if fmt == "csv":
        atomic_write_text(path, report_csv(report))
    elif fmt == "json":
        atomic_write_text(path, report_json(report))
    else:
        raise InvalidConfig(f"unknown report format {fmt!r}")


def write_trials(trials: Iterable[TrialRecord], path: str | os.PathLike) -> None:
    atomic_write_text(path, "".join(json.dumps(asdict(t)) + "\n" for t in trials))


def read_trials(path: str | os.PathLike) -> list[TrialRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(TrialRecord.from_json(json.loads(line)))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ParseError(path, lineno, f"bad trial row ({exc})") from None
    return out
