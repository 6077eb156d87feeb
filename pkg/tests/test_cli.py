import json
import re

import pytest

from decensor.cli import EXIT_DATA, EXIT_OK, EXIT_VALIDATION, main
from decensor.corpus import dump_corpus

FILES = ("censored.jsonl", "answers.jsonl", "candidates.jsonl", "resolutions.jsonl",
         "trials.jsonl", "report.csv", "report.json", "chart.csv", "census.csv")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.jsonl"
    assert main(["synth", "--out", str(corpus), "--seed", "1", "--names", "4",
                 "--post-counts", "6", "--comments", "20"]) == EXIT_OK
    conf = root / "run.conf"
    conf.write_text(f"corpus_path = {corpus}\ngazetteer_path = {root / 'gazetteer.txt'}\n"
                    "k = 5\nseed = 1\n")
    return root, conf


def test_synth_writes_corpus_and_gazetteer(workspace):
    root, _ = workspace
    assert (root / "gazetteer.txt").read_text().count("\n") == 7
    assert (root / "corpus.jsonl").stat().st_size > 0


def test_ingest(workspace, tmp_path, capsys):
    root, _ = workspace
    assert main(["ingest", str(root / "corpus.jsonl"), "--out", str(tmp_path / "c.jsonl")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["posts"] == 24 and summary["comments"] == 480
    assert (tmp_path / "c.jsonl").read_text() == (root / "corpus.jsonl").read_text()


def test_census_on_toy_corpus(tmp_path, toy_corpus, capsys):
    (tmp_path / "c.jsonl").write_text(dump_corpus(toy_corpus))
    (tmp_path / "g.txt").write_text("Donald Trump\nPaul Ryan\nHillary Clinton\n")
    code = main(["census", "--corpus", str(tmp_path / "c.jsonl"), "--gazetteer",
                 str(tmp_path / "g.txt"), "--min-occurrences", "1"])
    assert code == EXIT_OK
    assert capsys.readouterr().out.splitlines() == [
        "name,count", "Donald Trump,3", "Paul Ryan,2", "Hillary Clinton,1"]


def test_stages_compose_to_run(workspace, tmp_path):
    root, conf = workspace
    run_dir, stage_dir = tmp_path / "run", tmp_path / "stages"
    assert main(["run", "--config", str(conf), "--out-dir", str(run_dir)]) == EXIT_OK
    for stage in ("censor", "candidates", "train", "resolve"):
        assert main([stage, "--config", str(conf), "--out-dir", str(stage_dir)]) == EXIT_OK
    assert main(["report", str(stage_dir), "--config", str(conf)]) == EXIT_OK
    for name in FILES:
        assert (run_dir / name).read_bytes() == (stage_dir / name).read_bytes(), name
    # rendering needs no corpus
    assert main(["report", str(stage_dir), "--out", str(tmp_path / "bare")]) == EXIT_OK
    assert (tmp_path / "bare" / "report.csv").exists()


def test_report_reproduces_run(workspace, tmp_path):
    root, conf = workspace
    run_dir = tmp_path / "run"
    assert main(["run", "--config", str(conf), "--out-dir", str(run_dir)]) == EXIT_OK
    assert main(["report", str(run_dir), "--out", str(tmp_path / "again")]) == EXIT_OK
    for name in ("report.csv", "report.json", "chart.csv"):
        assert (run_dir / name).read_bytes() == (tmp_path / "again" / name).read_bytes()
    assert main(["report", str(run_dir), "--rescore", "--out", str(tmp_path / "re")]) == 0
    assert (run_dir / "report.json").read_bytes() == (tmp_path / "re" / "report.json").read_bytes()


def test_censor_leaves_no_target_name(workspace, tmp_path):
    root, conf = workspace
    assert main(["censor", "--config", str(conf), "--out-dir", str(tmp_path)]) == EXIT_OK
    answers = [json.loads(line) for line in (tmp_path / "answers.jsonl").read_text().splitlines()]
    text = (tmp_path / "censored.jsonl").read_text()
    assert answers
    for target in {a["target_name"] for a in answers}:
        for part in target.split():
            assert not re.search(rf"\b{part}\b", text, re.IGNORECASE)


def test_env_overrides_output_dir(workspace, tmp_path, monkeypatch):
    root, conf = workspace
    monkeypatch.setenv("DECENSOR_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["censor", "--config", str(conf)]) == EXIT_OK
    assert (tmp_path / "env" / "censored.jsonl").exists()


def test_exit_codes(workspace, tmp_path, capsys):
    root, conf = workspace
    assert main(["run", "--config", str(conf), "--set", "k=1"]) == EXIT_VALIDATION
    assert main(["run", "--config", str(conf), "--set", "k"]) == EXIT_VALIDATION
    assert main(["run"]) == EXIT_VALIDATION
    assert main(["frobnicate"]) == EXIT_VALIDATION
    assert main(["run", "--corpus", str(tmp_path / "missing.jsonl")]) == EXIT_DATA
    (tmp_path / "bad.jsonl").write_text("{oops\n")
    assert main(["ingest", str(tmp_path / "bad.jsonl")]) == EXIT_DATA
    assert "bad.jsonl:1" in capsys.readouterr().err
    assert main(["report", str(tmp_path / "nothing-here")]) in (EXIT_DATA, EXIT_VALIDATION)


def test_sweep_command(workspace, tmp_path):
    root, conf = workspace
    code = main(["sweep", "--config", str(conf), "--out-dir", str(tmp_path), "--grid", "3:50,4:50"])
    assert code == EXIT_OK
    assert (tmp_path / "k3_nocc50" / "report.json").exists()
    assert main(["sweep", "--config", str(conf), "--grid", "1:50"]) == EXIT_VALIDATION
