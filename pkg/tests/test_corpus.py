import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from decensor.corpus import (Kind, NameSpec, SyntheticSpec, dump_corpus, generate_synthetic,
                             load_corpus, parse_timestamp, format_timestamp, planted_names,
                             pseudo_words, save_corpus, scenario_spec)
from decensor.errors import DanglingParent, DuplicateId, InvalidSpec, ParseError
from decensor.text import find_phrase, token_key, tokenize

from conftest import comment, corpus_of, post, write_rows

ROW_POST = {"id": "p1", "kind": "post", "page": "news", "created_at": "2016-09-01T10:00:00Z",
            "text": "Donald Trump spoke in Ohio."}


def _comment_row(i, parent="p1"):
    return {"id": f"c{i}", "kind": "comment", "parent_id": parent, "page": "news",
            "created_at": "2016-09-01T10:05:00Z", "text": f"comment number {i}"}


def test_tokenize_keeps_inner_apostrophes_and_splits_possessive():
    toks = [t.text for t in tokenize("O'Brien's dog, don't Trump’s")]
    assert toks == ["O'Brien", "'s", "dog", "don't", "Trump", "’s"]


def test_token_offsets_point_into_text():
    text = "  Mary-Jones, met  Bob_Smith! "
    for t in tokenize(text):
        assert text[t.start:t.end] == t.text
        assert t.norm == t.text.lower()


def test_find_phrase_whole_tokens_only():
    toks = tokenize("Trumpet and Donald Trump and donald TRUMP")
    assert find_phrase(toks, token_key("Donald Trump")) == [(12, 24), (29, 41)]
    assert find_phrase(toks, ()) == []


def test_load_minimal_file(tmp_path):
    path = write_rows(tmp_path / "c.jsonl", [ROW_POST, _comment_row(1), _comment_row(2)])
    corpus = load_corpus(path)
    assert len(corpus) == 3
    assert corpus.comments_of == {"p1": ("c1", "c2")}
    assert corpus["c1"].kind is Kind.COMMENT and corpus["p1"].parent_id is None


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert len(load_corpus(path)) == 0


def test_dangling_parent(tmp_path):
    path = write_rows(tmp_path / "c.jsonl", [ROW_POST, _comment_row(1, parent="p9")])
    with pytest.raises(DanglingParent):
        load_corpus(path)


def test_comment_on_comment_is_dangling():
    with pytest.raises(DanglingParent):
        corpus_of(post("p1", "x"), comment("c1", "p1", "y"), comment("c2", "c1", "z"))


def test_duplicate_id():
    with pytest.raises(DuplicateId):
        corpus_of(post("p1", "x"), post("p1", "y"))


@pytest.mark.parametrize("line, reason", [
    ("{not json", "invalid JSON"),
    ('["a list"]', "JSON object"),
    (json.dumps({**ROW_POST, "kind": "story"}), "unknown kind"),
    (json.dumps({**ROW_POST, "created_at": "yesterday"}), "timestamp"),
    (json.dumps({k: v for k, v in ROW_POST.items() if k != "text"}), "text"),
    (json.dumps({**_comment_row(1), "parent_id": None}), "parent_id"),
])
def test_parse_errors_carry_line_numbers(tmp_path, line, reason):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(ROW_POST) + "\n\n" + line + "\n")
    with pytest.raises(ParseError) as info:
        load_corpus(path)
    assert info.value.line == 3
    assert reason in str(info.value)


def test_round_trip(tmp_path):
    corpus = generate_synthetic(scenario_spec(seed=1, n_names=3, post_counts=2, comment_count=3))
    path = tmp_path / "out.jsonl"
    save_corpus(corpus, path)
    again = load_corpus(path)
    assert dump_corpus(again) == dump_corpus(corpus)
    assert again.comments_of == corpus.comments_of


def test_timestamps():
    dt = parse_timestamp("2016-09-01T10:00:00Z")
    assert format_timestamp(dt) == "2016-09-01T10:00:00Z"
    assert parse_timestamp("2016-09-01T12:00:00+02:00") == dt


def test_inverse_relation_holds():
    corpus = generate_synthetic(scenario_spec(seed=2, n_names=3, post_counts=3, comment_count=4))
    seen = Counter()
    for post_id, kids in corpus.comments_of.items():
        for c in kids:
            assert corpus[c].parent_id == post_id
            seen[c] += 1
    assert set(seen) == {c.doc_id for c in corpus.comments}
    assert set(seen.values()) == {1}


def test_single_name_full_mention_rate():
    spec = SyntheticSpec((NameSpec("Ada Wong", ("alpha", "beta"), 2, 3, 1.0),),
                         ("gamma", "delta"), seed=5)
    corpus = generate_synthetic(spec)
    assert len(corpus.posts) == 2 and len(corpus.comments) == 6
    assert all("Ada Wong" in c.text for c in corpus.comments)


def test_generation_is_deterministic():
    spec = scenario_spec(seed=11, n_names=4, post_counts=3, comment_count=5)
    assert dump_corpus(generate_synthetic(spec)) == dump_corpus(generate_synthetic(spec))
    other = scenario_spec(seed=12, n_names=4, post_counts=3, comment_count=5)
    assert dump_corpus(generate_synthetic(other)) != dump_corpus(generate_synthetic(spec))


def test_mention_rate_is_honoured():
    words = pseudo_words(random.Random(0), 500)
    names = planted_names(10)
    specs = tuple(NameSpec(n, tuple(words[i * 20:(i + 1) * 20]), 4, 50, 0.5)
                  for i, n in enumerate(names))
    corpus = generate_synthetic(SyntheticSpec(specs, tuple(words[300:]), seed=42))
    for name in names:
        posts = [p.doc_id for p in corpus.posts if name in p.text]
        kids = corpus.comments_for(posts)
        assert len(kids) >= 200
        rate = sum(name in c.text for c in kids) / len(kids)
        assert abs(rate - 0.5) <= 0.15


def test_invalid_spec_lists_every_problem():
    bad = SyntheticSpec((NameSpec("", (), -1, 2, 1.5), NameSpec("X", ("a",), 1, 1, 0.5)),
                        (), seed=-1, topic_density=2.0)
    with pytest.raises(InvalidSpec) as info:
        generate_synthetic(bad)
    text = " ".join(info.value.problems)
    for field in ("seed", "background_vocabulary", "topic_density", "names[0].name",
                  "names[0].vocabulary", "names[0].post_count", "names[0].mention_rate"):
        assert field in text


def test_scenario_clusters_share_vocabulary():
    spec = scenario_spec(seed=0, n_names=6, cluster_size=3, cluster_fraction=0.5,
                         chatter_rates=())
    v = [set(ns.vocabulary) for ns in spec.names]
    assert len(v[0] & v[1]) == 15 and len(v[0] & v[3]) == 0
    assert all(len(x) == 30 for x in v)


@settings(max_examples=25, deadline=None)
@given(st.text(alphabet=st.sampled_from("ab 'é.\n-’sS"), max_size=60))
def test_tokens_are_ordered_and_disjoint(text):
    toks = tokenize(text)
    for a, b in zip(toks, toks[1:]):
        assert a.end <= b.start
    for t in toks:
        assert t.text and text[t.start:t.end] == t.text
