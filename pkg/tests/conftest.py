import json
from datetime import datetime, timedelta, timezone

import pytest

from decensor.corpus import Corpus, Document, Kind, generate_synthetic, scenario_spec
from decensor.pipeline import Experiment, RunConfig
from decensor.recognition import RecognizerConfig

T0 = datetime(2016, 9, 1, tzinfo=timezone.utc)


def post(doc_id, text, minutes=0, page="page"):
    return Document(doc_id, Kind.POST, page, T0 + timedelta(minutes=minutes), text)


def comment(doc_id, parent, text, minutes=0, page="page"):
    return Document(doc_id, Kind.COMMENT, page, T0 + timedelta(minutes=minutes), text, parent)


def corpus_of(*docs):
    return Corpus.from_documents(docs)


def write_rows(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def toy_corpus():
    return corpus_of(
        post("p1", "Paul Ryan met Donald Trump in Ohio to talk about the budget and taxes."),
        comment("c1", "p1", "Donald Trump will win. Paul Ryan is just a speaker."),
        comment("c2", "p1", "I bet Hillary Clinton is laughing at Donald Trump today."),
    )


@pytest.fixture(scope="session")
def small_spec():
    return scenario_spec(seed=3, n_names=4, post_counts=6, comment_count=20)


@pytest.fixture(scope="session")
def small_experiment(small_spec):
    corpus = generate_synthetic(small_spec)
    rec = RecognizerConfig(frozenset(ns.name for ns in small_spec.names))
    return Experiment(corpus, RunConfig(k=5, seed=3), recognizer=rec)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
