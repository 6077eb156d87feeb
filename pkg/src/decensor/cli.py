"""Command line interface.

Stage subcommands exchange files through one working directory::

    censor      census.csv censored.jsonl answers.jsonl skipped.jsonl
    candidates  candidates.jsonl (reads answers.jsonl for the true names)
    train       models.jsonl
    resolve     resolutions.jsonl
    report      trials.jsonl report.csv report.json chart.csv

``train`` and ``resolve`` never open answers.jsonl; only ``candidates`` and
the scoring step of ``report`` do. ``run`` performs all stages in memory and
writes the same files (except models.jsonl) plus manifest.json.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .candidates import CandidateSet, extract_candidates, lookup_name
from .cer import CerModel, Resolution
from .censorship import read_masked_posts
from .corpus import (atomic_write_text, generate_synthetic, load_corpus, read_jsonl,
                     save_corpus, scenario_spec, write_jsonl)
from .errors import DataError, NameNotFound, ParseError, ValidationError
from .evaluation import (ExperimentReport, TrialRecord, aggregate, chart_csv, report_csv,
                         report_json, score_trials)
from .pipeline import (SWEEP_GRID, Experiment, NameRun, RunConfig, answer_file_rows,
                       candidate_file_rows, censored_file_rows, census_csv, load_config,
                       read_census_csv, report_settings, resolution_file_rows, run_experiment,
                       run_sweep, sort_skipped)

log = logging.getLogger("decensor")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which we reserve for data errors
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# configuration plumbing


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--corpus", help="corpus JSONL (corpus_path)")
    p.add_argument("--gazetteer", help="person-name gazetteer (gazetteer_path)")
    p.add_argument("--out-dir", help="working/output directory (output_dir)")


def _config(args, need_corpus: bool = True) -> RunConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for flag, key in (("corpus", "corpus_path"), ("gazetteer", "gazetteer_path"),
                      ("out_dir", "output_dir")):
        if getattr(args, flag, None):
            overrides[key] = getattr(args, flag)
    config = load_config(args.config, overrides)
    if need_corpus and not config.corpus_path:
        raise UsageError("no corpus given (--corpus or corpus_path in the config)")
    return config


def _group(rows: list[dict]) -> dict[str, list[dict]]:
    out: dict[str, list[dict]] = {}
    for row in rows:
        out.setdefault(row.get("experiment", ""), []).append(row)
    return dict(sorted(out.items()))


def _merge_skipped(work: Path, rows: list[dict], stages: set[str]) -> None:
    path = work / "skipped.jsonl"
    kept = [r for r in read_jsonl(path) if r.get("stage") not in stages] if path.exists() else []
    write_jsonl(path, sort_skipped(kept + rows))


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    counts = [int(x) for x in args.post_counts.split(",")]
    spec = scenario_spec(
        seed=args.seed, n_names=args.names, vocab_size=args.vocab_size,
        shared_fraction=args.shared, post_counts=counts[0] if len(counts) == 1 else counts,
        comment_count=args.comments, mention_rate=args.mention_rate,
        chatter_rates=tuple(float(x) for x in args.chatter.split(",") if x.strip()),
        cluster_size=args.cluster_size, cluster_fraction=args.cluster_fraction)
    corpus = generate_synthetic(spec)
    save_corpus(corpus, args.out)
    gazetteer = args.gazetteer or str(Path(args.out).with_name("gazetteer.txt"))
    atomic_write_text(gazetteer, "".join(ns.name + "\n" for ns in spec.names))
    print(f"{len(corpus.posts)} posts, {len(corpus.comments)} comments -> {args.out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.out:
        save_corpus(corpus, args.out)
    summary = {"documents": len(corpus), "posts": len(corpus.posts),
               "comments": len(corpus.comments),
               "pages": sorted({d.page for d in corpus})}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_census(args) -> int:
    config = _config(args)
    experiment = Experiment.from_config(config)
    table = experiment.census(args.min_occurrences or config.nocc_min).ranked()
    text = census_csv(table)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_censor(args) -> int:
    config = _config(args)
    work = Path(config.output_dir)
    experiment = Experiment.from_config(config)
    table = experiment.target_census()
    runs, skipped = [], []
    for i, (name, _) in enumerate(table):
        run = NameRun(name, f"e{i + 1:03d}")
        try:
            run.plan, run.censored = experiment.censor_name(name)
        except NameNotFound:
            skipped.append({"name": name, "stage": "censor",
                            "reason": "no post snippet contains the name"})
            continue
        runs.append(run)
    atomic_write_text(work / "census.csv", census_csv(table))
    write_jsonl(work / "censored.jsonl", censored_file_rows(runs))
    write_jsonl(work / "answers.jsonl", answer_file_rows(runs))
    _merge_skipped(work, skipped, {"censor", "eligibility", "candidates", "train"})
    print(f"censored {sum(len(r.censored) for r in runs)} posts for {len(runs)} names")
    return EXIT_OK


def cmd_candidates(args) -> int:
    config = _config(args)
    work = Path(config.output_dir)
    experiment = Experiment.from_config(config)
    posts = read_masked_posts(work / "censored.jsonl")
    answers = _group(read_jsonl(work / "answers.jsonl"))
    k = args.k or config.k
    runs, skipped = [], []
    for exp_id, masked in posts.items():
        names = {r["target_name"] for r in answers.get(exp_id, ())}
        if len(names) != 1:
            raise DataError(f"experiment {exp_id!r} needs exactly one target name in answers")
        name = names.pop()
        post_ids = [p.post_id for p in masked]
        run = NameRun(name, exp_id)
        pooled = extract_candidates(experiment.corpus, experiment.annotations, post_ids)
        key = lookup_name(pooled, name)
        occurrences = pooled[key] if key else 0
        if occurrences < config.comment_occurrence_min:
            skipped.append({"name": name, "stage": "eligibility",
                            "reason": f"{occurrences} comment occurrences "
                                      f"< {config.comment_occurrence_min}"})
            continue
        run.candidate_sets = experiment.candidate_sets(name, post_ids, k, run)
        skipped.extend(run.skipped)
        runs.append(run)
    write_jsonl(work / "candidates.jsonl", candidate_file_rows(runs))
    _merge_skipped(work, skipped, {"eligibility", "candidates", "train"})
    print(f"candidate sets for {len(runs)} names, k={k}")
    return EXIT_OK


def _candidate_sets(path: Path) -> dict[str, dict[str, CandidateSet]]:
    return {exp: {r["post_id"]: CandidateSet.from_json(r) for r in rows}
            for exp, rows in _group(read_jsonl(path)).items()}


def cmd_train(args) -> int:
    config = _config(args)
    work = Path(config.output_dir)
    experiment = Experiment.from_config(config)
    posts = read_masked_posts(work / "censored.jsonl")
    rows, skipped, insufficient = [], [], []
    for exp_id, sets in _candidate_sets(work / "candidates.jsonl").items():
        masked = posts.get(exp_id, [])
        post_ids = [p.post_id for p in masked]
        tokens = [t for p in masked for t in p.mask_tokens]
        run = NameRun(next(iter(sets.values())).true_name, exp_id)
        for members, model in experiment.train_models(sets, post_ids, tokens, run):
            rows.append({"experiment": exp_id, "posts": list(members), "model": model.to_json()})
        skipped.extend(run.skipped)
        insufficient.extend(run.insufficient)
    write_jsonl(work / "models.jsonl", rows)
    _merge_skipped(work, skipped, {"train"})
    for flag in insufficient:
        log.warning("%s: candidate %s has only %d training snippets", flag["name"],
                    flag["candidate"], flag["count"])
    print(f"trained {len(rows)} models")
    return EXIT_OK


def cmd_resolve(args) -> int:
    config = _config(args)
    work = Path(config.output_dir)
    experiment = Experiment.from_config(config)
    posts = read_masked_posts(work / "censored.jsonl")
    out = []
    for exp_id, rows in _group(read_jsonl(work / "models.jsonl")).items():
        models = [(tuple(r["posts"]), CerModel.from_json(r["model"])) for r in rows]
        for res in experiment.resolve_posts(models, posts.get(exp_id, [])):
            out.append({"experiment": exp_id, **res.to_json()})
    write_jsonl(work / "resolutions.jsonl", out)
    print(f"resolved {len(out)} posts")
    return EXIT_OK


def score_directory(work: Path) -> list[dict]:
    """Trial rows from resolutions, candidate sets and answers of ``work``."""
    sets = _candidate_sets(work / "candidates.jsonl")
    answers = {exp: {r["post_id"]: r["target_name"] for r in rows}
               for exp, rows in _group(read_jsonl(work / "answers.jsonl")).items()}
    rows = []
    for exp_id, res_rows in _group(read_jsonl(work / "resolutions.jsonl")).items():
        resolutions = [Resolution.from_json(r) for r in res_rows]
        for t in score_trials(resolutions, sets.get(exp_id, {}), answers.get(exp_id, {})):
            rows.append({"experiment": exp_id, **dataclasses.asdict(t)})
    return rows


def cmd_report(args) -> int:
    work = Path(args.dir)
    trials_path = work / "trials.jsonl"
    if args.rescore or not trials_path.exists():
        write_jsonl(trials_path, score_directory(work))
    rows = read_jsonl(trials_path)
    try:
        trials = [TrialRecord.from_json(r) for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(trials_path, 0, f"bad trial row ({exc})") from None
    manifest_path = work / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        settings, skipped = dict(manifest["settings"]), manifest["skipped"]
    else:
        config = _config(args, need_corpus=False)
        ks = {r["k"] for r in read_jsonl(work / "candidates.jsonl")} or {config.k}
        if len(ks) != 1:
            raise DataError(f"candidate sets mix several k values: {sorted(ks)}")
        census_rows = read_census_csv(work / "census.csv")
        settings = report_settings(config, ks.pop(), config.nocc_min, len(census_rows))
        path = work / "skipped.jsonl"
        skipped = read_jsonl(path) if path.exists() else []
    k = settings.pop("k")
    report = aggregate(trials, k, settings, skipped)
    out = Path(args.out) if args.out else work
    atomic_write_text(out / "report.csv", report_csv(report))
    atomic_write_text(out / "report.json", report_json(report))
    atomic_write_text(out / "chart.csv", chart_csv([report]))
    _print_summary(report)
    return EXIT_OK


def _print_summary(report: ExperimentReport) -> None:
    print(f"{report.total_names} names, {report.total_posts} posts, "
          f"{len(report.skipped)} skipped")
    for label, values in (("flat", report.flat), ("mu", report.mu)):
        print(f"  {label:4s} " + "  ".join(f"{m}={v:.2f}" for m, v in values.items()))


def cmd_run(args) -> int:
    config = _config(args)
    report = run_experiment(config)
    _print_summary(report)
    return EXIT_OK


def _parse_grid(text: str) -> list[tuple[int, int]]:
    grid = []
    for cell in text.split(","):
        k, sep, nocc = cell.partition(":")
        if not sep:
            raise UsageError(f"grid cells look like K:NOCC, got {cell!r}")
        grid.append((int(k), int(nocc)))
    return grid


def cmd_sweep(args) -> int:
    config = _config(args)
    grid = _parse_grid(args.grid) if args.grid else SWEEP_GRID
    for k, nocc in grid:
        config.replace(k=k, nocc_min=nocc).validate()
    reports = run_sweep(Experiment.from_config(config), grid, config.output_dir)
    for rep in reports:
        print(f"k={rep.settings['k']:<3d} nocc>={rep.settings['nocc_min']:<4d} "
              f"names={rep.total_names:<3d} global={rep.flat['global']:.2f} "
              f"cer={rep.flat['cer']:.2f}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="decensor", description="Re-identify censored person names "
                     "in post/comment corpora from the comments' context.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic corpus and its gazetteer")
    p.add_argument("--out", required=True)
    p.add_argument("--gazetteer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--names", type=int, default=10)
    p.add_argument("--vocab-size", type=int, default=30)
    p.add_argument("--shared", type=float, default=0.0)
    p.add_argument("--post-counts", default="20", help="one count, or one per name")
    p.add_argument("--comments", type=int, default=50)
    p.add_argument("--mention-rate", type=float, default=0.6)
    p.add_argument("--chatter", default="0.7,0.45,0.3", help="chatter-name mention rates")
    p.add_argument("--cluster-size", type=int, default=1)
    p.add_argument("--cluster-fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate a corpus, optionally rewrite it normalized")
    p.add_argument("corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("census", help="name frequency table")
    _add_config_args(p)
    p.add_argument("--min-occurrences", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_census)

    for name, func, text in (("censor", cmd_censor, "censor the eligible names"),
                             ("candidates", cmd_candidates, "build candidate sets"),
                             ("train", cmd_train, "train one classifier per candidate set"),
                             ("resolve", cmd_resolve, "resolve censored posts")):
        p = sub.add_parser(name, help=text)
        _add_config_args(p)
        if name == "candidates":
            p.add_argument("--k", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="score resolutions and render the report")
    _add_config_args(p)
    p.add_argument("dir", help="working directory of a run or of the stage commands")
    p.add_argument("--out", help="directory for the rendered files (default: dir)")
    p.add_argument("--rescore", action="store_true",
                   help="recompute trials.jsonl even if it exists")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full experiment")
    _add_config_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one run per (k, nocc) cell")
    _add_config_args(p)
    p.add_argument("--grid", help="cells as K:NOCC,K:NOCC,... (default: 6-cell grid)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
