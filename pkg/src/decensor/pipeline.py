"""End-to-end experiment: census, censorship, candidates, training, resolution, scoring.

Every random choice is drawn from a stream derived from ``(seed, target
name, stage)``, so a name's experiment comes out the same whether it runs
alone, inside a full run, in a worker process or inside a settings sweep.
Mask tokens come from ``mask_seed`` streams that feed nothing else, which is
what makes re-masking with a different ``mask_seed`` a clean test of
feature blindness.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .candidates import CandidateSet, extract_candidates, lookup_name, select_top_k
from .cer import (CerModel, Hyperparameters, Resolution, build_examples, cap_snippets,
                  class_labels, fetch_training_snippets, resolve, train)
from .censorship import (CensoredPost, CensorPlan, MaskTokenFactory, censor, censored_rows,
                         plan_censorship)
from .corpus import Corpus, atomic_write_text, load_corpus
from .errors import EmptyTrainingSet, FairnessViolation, InvalidConfig, NameNotFound, ParseError
from .evaluation import (ExperimentReport, TrialRecord, aggregate, chart_csv, report_csv,
                         report_json, score_trials)
from .recognition import (Annotations, NameCensus, RecognizerConfig, DEFAULT_DENYLIST, census,
                          import_annotations, load_wordlist, recognize_corpus)
from .snippets import Index, build_index, find_snippets

log = logging.getLogger(__name__)

ENV_OUTPUT_DIR = "DECENSOR_OUTPUT_DIR"
ENV_WORKERS = "DECENSOR_WORKERS"


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str = ""
    gazetteer_path: str | None = None
    denylist_path: str | None = None
    annotations_path: str | None = None
    use_heuristic: bool = False
    targets: tuple[str, ...] = ()
    k: int = 10
    nocc_min: int = 100
    comment_occurrence_min: int = 50
    max_posts: int = 20
    post_selection: str = "random"
    window: int = 200
    min_len: int = 50
    min_examples: int = 3
    width: int = 8
    epochs: int = 5
    class_cap: int = 500
    seed: int = 0
    mask_seed: int = 0
    scope: str = "pooled"
    aggregation: str = "sum"
    abstain_margin: float | None = None
    output_dir: str = "out"
    workers: int = 1

    def validate(self) -> "RunConfig":
        problems = []
        if self.k < 2:
            problems.append("k must be >= 2")
        for key in ("nocc_min", "comment_occurrence_min", "max_posts", "window", "min_len",
                    "min_examples", "width", "epochs", "class_cap", "workers"):
            if getattr(self, key) < 1:
                problems.append(f"{key} must be >= 1")
        if self.window < self.min_len:
            problems.append("window must be >= min_len")
        if self.scope not in ("pooled", "per_post"):
            problems.append("scope must be 'pooled' or 'per_post'")
        if self.aggregation not in ("sum", "vote"):
            problems.append("aggregation must be 'sum' or 'vote'")
        if self.post_selection not in ("random", "chronological"):
            problems.append("post_selection must be 'random' or 'chronological'")
        if not 0 <= self.seed < 2**64 or not 0 <= self.mask_seed < 2**64:
            problems.append("seeds must be 64-bit unsigned integers")
        if self.abstain_margin is not None and self.abstain_margin < 0:
            problems.append("abstain_margin must be >= 0")
        if problems:
            raise InvalidConfig("; ".join(problems))
        return self

    @property
    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(self.width, self.epochs, self.class_cap, self.seed)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, raw: str, ftype):
    text = raw.strip()
    optional = "None" in str(ftype)
    if optional and text.lower() in ("", "none", "null"):
        return None
    base = str(ftype).replace(" | None", "")
    try:
        if base == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        if base.startswith("tuple"):
            return tuple(p.strip() for p in text.split(",") if p.strip())
    except ValueError:
        raise InvalidConfig(f"{name}: cannot parse {raw!r} as {base}") from None
    return text


def config_from_mapping(values: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    fields = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    changes = {}
    for key, raw in values.items():
        if key not in fields:
            raise InvalidConfig(f"unknown config key {key!r}")
        changes[key] = _coerce(key, raw, fields[key]) if isinstance(raw, str) else raw
    return dataclasses.replace(base or RunConfig(), **changes)


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | os.PathLike | None, overrides: dict[str, str] | None = None,
                env: dict[str, str] | None = None) -> RunConfig:
    values: dict[str, str] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    env = os.environ if env is None else env
    if env.get(ENV_OUTPUT_DIR):
        values["output_dir"] = env[ENV_OUTPUT_DIR]
    if env.get(ENV_WORKERS):
        values["workers"] = env[ENV_WORKERS]
    values.update(overrides or {})
    return config_from_mapping(values).validate()


def config_text(config: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ", ".join(value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{f.name} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"


def derive_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def recognizer_from_config(config: RunConfig) -> RecognizerConfig:
    gazetteer = load_wordlist(config.gazetteer_path) if config.gazetteer_path else []
    denylist = load_wordlist(config.denylist_path) if config.denylist_path else DEFAULT_DENYLIST
    return RecognizerConfig(frozenset(gazetteer), denylist=frozenset(denylist),
                            use_heuristic=config.use_heuristic)


# --------------------------------------------------------------------------
# per-name experiment


@dataclass
class NameRun:
    name: str
    experiment: str
    plan: CensorPlan | None = None
    censored: list[CensoredPost] = field(default_factory=list)
    candidate_sets: dict[str, CandidateSet] = field(default_factory=dict)
    models: list[tuple[tuple[str, ...], CerModel]] = field(default_factory=list)
    resolutions: list[Resolution] = field(default_factory=list)
    trials: list[TrialRecord] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    insufficient: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.trials)


class Experiment:
    """Shared state for all names of one corpus: index, recognized names, caches."""

    def __init__(self, corpus: Corpus, config: RunConfig, annotations: Annotations | None = None,
                 recognizer: RecognizerConfig | None = None):
        self.corpus = corpus
        self.config = config.validate()
        self.recognizer = recognizer or RecognizerConfig()
        self.index: Index = build_index(corpus)
        self.annotations = (annotations if annotations is not None
                            else recognize_corpus(corpus, self.recognizer))
        self.vocabulary = self.index.vocabulary
        self._censored: dict[str, tuple[CensorPlan, list[CensoredPost]]] = {}
        self._runs: dict[tuple[str, int], NameRun] = {}

    @classmethod
    def from_config(cls, config: RunConfig) -> "Experiment":
        corpus = load_corpus(config.corpus_path)
        recognizer = recognizer_from_config(config)
        annotations = (import_annotations(config.annotations_path, corpus)
                       if config.annotations_path else None)
        return cls(corpus, config, annotations, recognizer)

    def census(self, nocc_min: int | None = None) -> NameCensus:
        return census(self.corpus, self.recognizer, nocc_min or self.config.nocc_min,
                      annotations=self.annotations)

    def targets(self, nocc_min: int | None = None) -> list[str]:
        names = sorted(self.census(nocc_min).counts)
        if self.config.targets:
            wanted = {t.lower() for t in self.config.targets}
            names = [n for n in names if n.lower() in wanted]
        return names

    def target_census(self, nocc_min: int | None = None) -> list[tuple[str, int]]:
        """(name, corpus-wide count) for every experiment target, in run order."""
        counts = self.census(nocc_min).counts
        return [(n, counts[n]) for n in self.targets(nocc_min)]

    def censor_name(self, name: str) -> tuple[CensorPlan, list[CensoredPost]]:
        if name not in self._censored:
            cfg = self.config
            plan = plan_censorship(self.index, self.corpus, name, cfg.max_posts, cfg.seed,
                                   cfg.post_selection, cfg.window, cfg.min_len)
            selected = set(plan.selected_post_ids)
            snippets = find_snippets(self.index, self.corpus, name, cfg.window, cfg.min_len,
                                     scope=lambda d: d.doc_id in selected)
            tokens = MaskTokenFactory(self.vocabulary, f"mask:{cfg.mask_seed}:{name}")
            self._censored[name] = (plan, censor(plan, snippets, self.corpus, tokens, index=self.index))
        return self._censored[name]

    def candidate_sets(self, name: str, post_ids: Sequence[str], k: int,
                       run: NameRun) -> dict[str, CandidateSet]:
        if self.config.scope == "pooled":
            counts = extract_candidates(self.corpus, self.annotations, post_ids)
            cand = select_top_k(counts, k, name, post_ids)
            return {p: cand for p in post_ids}
        sets = {}
        for p in post_ids:
            counts = extract_candidates(self.corpus, self.annotations, [p])
            try:
                sets[p] = select_top_k(counts, k, name, [p])
            except FairnessViolation:
                run.skipped.append({"name": name, "post_id": p, "stage": "candidates",
                                    "reason": "censored name absent from this post's comments"})
        return sets

    def train_group(self, cand: CandidateSet, excluded: Sequence[str],
                    censor_tokens: Iterable[str], group: int, run: NameRun) -> CerModel:
        cfg = self.config
        # seeds key off the candidate set's spelling so the staged CLI reproduces them
        name = cand.true_name
        snippets = fetch_training_snippets(self.index, self.corpus, cand, excluded,
                                           cfg.window, cfg.min_len, cfg.min_examples)
        for flag in snippets.insufficient.values():
            run.insufficient.append({"name": name, "candidate": flag.candidate,
                                     "count": flag.count, "minimum": flag.minimum})
        tokens = MaskTokenFactory(self.vocabulary | {t.lower() for t in censor_tokens},
                                  f"mask:{cfg.mask_seed}:{name}:train:{cand.k}:{group}")
        snippets = cap_snippets(snippets, cfg.class_cap, derive_seed(cfg.seed, name, "cap", group))
        examples = build_examples(snippets, cand, self.corpus, tokens, self.index)
        hyper = dataclasses.replace(cfg.hyperparameters, seed=derive_seed(cfg.seed, name, "train"))
        return train(examples, class_labels(cand), hyper)

    def run_name(self, name: str, k: int | None = None, experiment: str = "e001") -> NameRun:
        k = k or self.config.k
        # a name's run does not depend on nocc_min, so sweep cells sharing k reuse it
        if (name, k) not in self._runs:
            self._runs[(name, k)] = self._run_name(name, k)
        return dataclasses.replace(self._runs[(name, k)], experiment=experiment)

    def _run_name(self, name: str, k: int) -> NameRun:
        cfg = self.config
        run = NameRun(name, "")
        try:
            plan, censored = self.censor_name(name)
        except NameNotFound:
            run.skipped.append({"name": name, "stage": "censor",
                                "reason": "no post snippet contains the name"})
            return run
        run.plan, run.censored = plan, censored
        post_ids = list(plan.selected_post_ids)
        pooled = extract_candidates(self.corpus, self.annotations, post_ids)
        key = lookup_name(pooled, name)
        occurrences = pooled[key] if key else 0
        if occurrences < cfg.comment_occurrence_min:
            run.skipped.append({"name": name, "stage": "eligibility",
                                "reason": f"{occurrences} comment occurrences "
                                          f"< {cfg.comment_occurrence_min}"})
            return run
        run.candidate_sets = self.candidate_sets(name, post_ids, k, run)
        censor_tokens = [t for cp in censored for t in cp.mask_tokens]
        run.models = self.train_models(run.candidate_sets, post_ids, censor_tokens, run)
        run.resolutions = self.resolve_posts(run.models, censored)
        answers = {cp.post_id: cp.target_name for cp in censored}
        run.trials = score_trials(run.resolutions, run.candidate_sets, answers)
        return run

    def train_models(self, candidate_sets: dict[str, CandidateSet], post_ids: Sequence[str],
                     censor_tokens: Sequence[str], run: NameRun):
        """One model per distinct candidate list (a single one in pooled scope)."""
        groups: dict[tuple[str, ...], list[str]] = {}
        for p in sorted(post_ids):
            if p in candidate_sets:
                groups.setdefault(candidate_sets[p].top_k, []).append(p)
        models = []
        for gi, members in enumerate(groups.values()):
            cand = candidate_sets[members[0]]
            try:
                model = self.train_group(cand, post_ids, censor_tokens, gi, run)
            except EmptyTrainingSet as exc:
                run.skipped.append({"name": cand.true_name, "stage": "train", "reason": str(exc),
                                    "posts": len(members)})
                continue
            models.append((tuple(members), model))
        return models

    def resolve_posts(self, models, censored_posts) -> list[Resolution]:
        by_post = {cp.post_id: cp for cp in censored_posts}
        out = [resolve(model, by_post[p], self.config.aggregation, self.config.abstain_margin)
               for members, model in models for p in members]
        return sorted(out, key=lambda r: r.post_id)

    def run(self, k: int | None = None, nocc_min: int | None = None,
            workers: int | None = None) -> tuple[ExperimentReport, list[NameRun]]:
        cfg = self.config
        k = k or cfg.k
        nocc_min = nocc_min or cfg.nocc_min
        names = self.targets(nocc_min)
        jobs = [(name, f"e{i + 1:03d}") for i, name in enumerate(names)]
        workers = workers or cfg.workers
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(self,)) as pool:
                runs = list(pool.map(_run_in_worker, [(n, k, e) for n, e in jobs]))
        else:
            runs = [self.run_name(n, k, e) for n, e in jobs]
        trials = [t for r in runs for t in r.trials]
        skipped = sort_skipped(s for r in runs for s in r.skipped)
        settings = report_settings(cfg, k, nocc_min, len(names))
        return aggregate(trials, k, settings, skipped), runs


STAGE_ORDER = {"censor": 0, "eligibility": 1, "candidates": 2, "train": 3}


def sort_skipped(rows: Iterable[dict]) -> list[dict]:
    # experiments are numbered in name order, so this matches run order
    return sorted(rows, key=lambda r: (r["name"], STAGE_ORDER.get(r["stage"], 9)))


def report_settings(config: RunConfig, k: int, nocc_min: int, census_names: int) -> dict:
    return {"k": k, "nocc_min": nocc_min, "comment_occurrence_min": config.comment_occurrence_min,
            "max_posts": config.max_posts, "seed": config.seed, "mask_seed": config.mask_seed,
            "scope": config.scope, "aggregation": config.aggregation,
            "census_names": census_names}


def census_csv(rows: Iterable[tuple[str, int]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "count"])
    writer.writerows(rows)
    return buf.getvalue()


def read_census_csv(path: str | os.PathLike) -> list[tuple[str, int]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["name", "count"]:
            raise ParseError(path, 1, f"unexpected header {header!r}")
        rows = []
        for lineno, row in enumerate(reader, 2):
            try:
                rows.append((row[0], int(row[1])))
            except (IndexError, ValueError):
                raise ParseError(path, lineno, "expected name,count") from None
        return rows


_WORKER: Experiment | None = None


def _init_worker(experiment: Experiment) -> None:
    global _WORKER
    _WORKER = experiment


def _run_in_worker(job) -> NameRun:
    name, k, experiment = job
    return _WORKER.run_name(name, k, experiment)


# --------------------------------------------------------------------------
# file outputs


def _jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows)


def censored_file_rows(runs: Iterable[NameRun]) -> list[dict]:
    return [{"experiment": r.experiment, **row} for r in runs for row in censored_rows(r.censored)]


def answer_file_rows(runs: Iterable[NameRun]) -> list[dict]:
    return [{"experiment": r.experiment, "post_id": cp.post_id, "target_name": cp.target_name,
             "replaced": [[list(x) for x in s.replaced] for s in cp.snippets]}
            for r in runs for cp in r.censored]


def candidate_file_rows(runs: Iterable[NameRun]) -> list[dict]:
    return [{"experiment": r.experiment, "post_id": p, **cs.to_json()}
            for r in runs for p, cs in sorted(r.candidate_sets.items())]


def resolution_file_rows(runs: Iterable[NameRun]) -> list[dict]:
    return [{"experiment": r.experiment, **res.to_json()} for r in runs for res in r.resolutions]


def write_run_outputs(out_dir: str | os.PathLike, report: ExperimentReport, runs: list[NameRun],
                      config: RunConfig, census_rows: Sequence[tuple[str, int]] = (),
                      trials_name: str = "trials.jsonl") -> dict[str, Path]:
    out = Path(out_dir)
    files = {
        "censored": out / "censored.jsonl",
        "answers": out / "answers.jsonl",
        "candidates": out / "candidates.jsonl",
        "resolutions": out / "resolutions.jsonl",
        "trials": out / trials_name,
        "census": out / "census.csv",
        "report_csv": out / "report.csv",
        "report_json": out / "report.json",
        "chart": out / "chart.csv",
        "manifest": out / "manifest.json",
    }
    atomic_write_text(files["censored"], _jsonl(censored_file_rows(runs)))
    atomic_write_text(files["answers"], _jsonl(answer_file_rows(runs)))
    atomic_write_text(files["candidates"], _jsonl(candidate_file_rows(runs)))
    atomic_write_text(files["resolutions"], _jsonl(resolution_file_rows(runs)))
    atomic_write_text(files["trials"], _jsonl(
        {"experiment": r.experiment, **dataclasses.asdict(t)} for r in runs for t in r.trials))
    atomic_write_text(files["census"], census_csv(census_rows))
    atomic_write_text(files["report_csv"], report_csv(report))
    atomic_write_text(files["report_json"], report_json(report))
    atomic_write_text(files["chart"], chart_csv([report]))
    manifest = {"version": __version__, "config": dataclasses.asdict(config),
                "settings": report.settings, "skipped": report.skipped,
                "insufficient_examples": [f for r in runs for f in r.insufficient],
                "files": sorted(p.name for p in files.values())}
    atomic_write_text(files["manifest"], json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return files


def run_experiment(config: RunConfig, experiment: Experiment | None = None) -> ExperimentReport:
    """Run every eligible name and write the report files under ``config.output_dir``."""
    config = config.validate()
    experiment = experiment or Experiment.from_config(config)
    report, runs = experiment.run()
    write_run_outputs(config.output_dir, report, runs, config, experiment.target_census())
    log.info("%d names, %d posts, global accuracy %.3f", report.total_names,
             report.total_posts, report.flat["global"])
    return report


SWEEP_GRID = ((5, 100), (10, 100), (20, 100), (5, 200), (10, 200), (20, 200))


def run_sweep(experiment: Experiment, grid: Sequence[tuple[int, int]] = SWEEP_GRID,
              out_dir: str | os.PathLike | None = None) -> list[ExperimentReport]:
    """One report per (k, nocc) cell; censored posts are shared across cells."""
    reports = []
    for k, nocc in grid:
        report, runs = experiment.run(k=k, nocc_min=nocc)
        reports.append(report)
        if out_dir is not None:
            cell = Path(out_dir) / f"k{k}_nocc{nocc}"
            write_run_outputs(cell, report, runs, experiment.config.replace(k=k, nocc_min=nocc),
                              experiment.target_census(nocc))
    if out_dir is not None:
        atomic_write_text(Path(out_dir) / "chart.csv", chart_csv(reports))
    return reports
