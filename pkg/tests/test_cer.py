import random

import numpy as np
import pytest

from decensor.candidates import select_top_k
from decensor.censorship import MaskedSnippet, MaskTokenFactory, censor, plan_censorship
from decensor.cer import (ANON, MASK, CerModel, Hyperparameters, Resolution, TrainingExample,
                          aggregate_scores, build_examples, cap_snippets, class_labels,
                          context_features, contexts, dump_examples, fetch_training_snippets,
                          read_resolutions, resolve, tagged_text, train)
from decensor.corpus import atomic_write_text
from decensor.errors import EmptyTrainingSet
from decensor.snippets import build_index, find_snippets

from conftest import comment, corpus_of, post
from oracles import scan_snippets

PAD = "and then the long story went on for quite a while without any point"


def _example(label, left, right):
    return TrainingExample(label, tuple(left.split()), tuple(right.split()), "d", label)


def _masked(text, token="Qwertyu"):
    start = text.index(token)
    return MaskedSnippet("p", 0, len(text), text, token, start, start + len(token), ())


def test_class_labels_follow_candidate_order():
    cs = select_top_k({"Rex Tillerson": 9, "Donald Trump": 7, "Mike Pence": 3}, 3, "Donald Trump")
    assert class_labels(cs) == [("DUMBO1", "Rex Tillerson"), (ANON, "Donald Trump"),
                                ("DUMBO2", "Mike Pence")]


def test_context_features():
    feats = context_features(["a", "b", "c", "d"], [], width=8)
    assert "L|adj|d" in feats and "L|near|c" in feats and "L|far|a" in feats
    assert "L|adj|c_d" in feats and "R|adj|<edge>" in feats
    assert context_features(["a", "b"], ["c"], width=1) == ["L|adj|b", "L|win|b", "R|adj|c", "R|win|c"]
    assert len(feats) == len(set(feats))


def test_contexts_replace_the_mask_everywhere():
    snip = _masked("Qwertyu said that Qwertyu would win, said Bob")
    left, right = contexts(snip)
    assert left == () and right == ("said", "that", MASK, "would", "win", "said", "bob")


def _training_corpus():
    docs = []
    for i in range(57):
        docs.append(post(f"p{i:02d}", f"{PAD}. Mark Smith was seen there. {PAD}"))
    docs.append(post("q1", "Mark Smith"))
    return corpus_of(*docs)


def test_fetch_honours_exclusion_against_recount():
    corpus = _training_corpus()
    index = build_index(corpus)
    cs = select_top_k({"Mark Smith": 3, "Mary Jones": 1}, 2, "Mark Smith")
    excluded = ["p00", "p01", "p02", "p03"]
    got = fetch_training_snippets(index, corpus, cs, excluded)
    kept = [d for d in corpus if d.doc_id not in excluded]
    want = [s for s in scan_snippets(kept, "Mark Smith") if s[2] - s[1] > 50]
    assert len(got.by_candidate["Mark Smith"]) == len(want) == 53
    assert "Mary Jones" in got.insufficient and got.by_candidate["Mary Jones"] == []


def test_candidate_only_in_censored_posts_is_flagged():
    corpus = corpus_of(post("p1", f"{PAD} Mary Jones {PAD}"), post("p2", f"{PAD} Mark Smith {PAD}"))
    cs = select_top_k({"Mark Smith": 2, "Mary Jones": 1}, 2, "Mark Smith")
    got = fetch_training_snippets(build_index(corpus), corpus, cs, ["p1"])
    assert got.insufficient["Mary Jones"].count == 0
    assert len(got.by_candidate["Mark Smith"]) == 1


def test_examples_mask_only_their_own_candidate():
    text = f"{PAD}. Mark Smith called Mary Jones yesterday. {PAD}"
    corpus = corpus_of(post("p1", text), post("p2", "x"))
    index = build_index(corpus)
    cs = select_top_k({"Mark Smith": 2, "Mary Jones": 1}, 2, "Mark Smith")
    snips = fetch_training_snippets(index, corpus, cs, ["p2"])
    keys = [{(s.doc_id, s.char_start + s.match_start) for s in v}
            for v in snips.by_candidate.values()]
    assert not keys[0] & keys[1]
    examples = build_examples(snips, cs, corpus, MaskTokenFactory(index.vocabulary, 1), index)
    by_label = {ex.label: ex for ex in examples}
    assert set(by_label) == {ANON, "DUMBO1"}
    assert by_label[ANON].candidate == "Mark Smith"
    assert "mary" in by_label[ANON].right_context
    assert "mark" in by_label["DUMBO1"].left_context
    assert "<ANON>" in tagged_text(by_label[ANON]) and "Mark Smith" not in tagged_text(by_label[ANON])


def test_new_token_seed_changes_tokens_not_features():
    corpus = _training_corpus()
    index = build_index(corpus)
    cs = select_top_k({"Mark Smith": 3, "Mary Jones": 1}, 2, "Mark Smith")
    snips = fetch_training_snippets(index, corpus, cs, [])
    a = build_examples(snips, cs, corpus, MaskTokenFactory(index.vocabulary, 1), index)
    b = build_examples(snips, cs, corpus, MaskTokenFactory(index.vocabulary, 2), index)
    assert [x.masked.mask_token for x in a] != [x.masked.mask_token for x in b]
    assert [(x.left_context, x.right_context) for x in a] == \
        [(x.left_context, x.right_context) for x in b]


def test_cap_keeps_at_most_cap_per_candidate():
    corpus = _training_corpus()
    index = build_index(corpus)
    cs = select_top_k({"Mark Smith": 3, "Mary Jones": 1}, 2, "Mark Smith")
    snips = fetch_training_snippets(index, corpus, cs, [])
    capped = cap_snippets(snips, 10, seed=4)
    assert len(capped.by_candidate["Mark Smith"]) == 10
    assert capped.by_candidate == cap_snippets(snips, 10, seed=4).by_candidate


TOY = [("A", "he worked as a drug baron", "in the city"),
       ("A", "the infamous drug baron", "was arrested"),
       ("A", "a known drug baron", "fled"),
       ("B", "yesterday", "the police officer said"),
       ("B", "later", "the police officer arrived"),
       ("B", "and", "the police officer left")]
TOY_CLASSES = [("A", "Mark Smith"), ("B", "Mary Jones")]


def test_separable_toy_set():
    examples = [_example(*row) for row in TOY]
    model = train(examples, TOY_CLASSES, Hyperparameters(epochs=5))
    for ex in examples:
        scores = model.score(context_features(ex.left_context, ex.right_context, 8))
        assert model.classes[int(np.argmax(scores))][0] == ex.label


def test_toy_resolution_picks_mark_smith():
    model = train([_example(*row) for row in TOY], TOY_CLASSES)
    post_ = Resolution  # keep the name import used
    snip = _masked("during his career as a drug baron Qwertyu made millions")

    class Censored:
        post_id = "p1"
        snippets = (snip,)

    res = resolve(model, Censored())
    assert res.predicted_class == "A" and res.predicted_name == "Mark Smith"
    assert post_ is Resolution


def test_single_class_cannot_train():
    with pytest.raises(EmptyTrainingSet):
        train([_example("A", "x", "y")], TOY_CLASSES)


def test_unknown_label_rejected():
    with pytest.raises(ValueError):
        train([_example("Z", "x", "y"), _example("A", "x", "y")], TOY_CLASSES)


def test_five_disjoint_classes_generalize():
    rng = random.Random(0)
    vocab = {c: [f"{c}word{i}" for i in range(20)] for c in "ABCDE"}
    background = [f"bg{i}" for i in range(50)]

    def sample(c):
        def side():
            return " ".join(rng.choice(vocab[c]) if rng.random() < 0.5 else rng.choice(background)
                            for _ in range(rng.randint(3, 8)))
        return _example(c, side(), side())

    classes = [(c, f"Person {c}") for c in "ABCDE"]
    train_set = [sample(c) for c in "ABCDE" for _ in range(50)]
    held_out = [sample(c) for c in "ABCDE" for _ in range(40)]
    model = train(train_set, classes, Hyperparameters(seed=1))
    hits = sum(model.classes[int(np.argmax(model.score(
        context_features(ex.left_context, ex.right_context, 8))))][0] == ex.label
        for ex in held_out)
    assert hits / len(held_out) >= 0.9


def test_class_cap_is_seeded():
    examples = [_example("A", f"w{i}", "x") for i in range(30)] + [_example("B", "y", "z")]
    a = train(examples, TOY_CLASSES, Hyperparameters(class_cap=10, seed=3))
    b = train(examples, TOY_CLASSES, Hyperparameters(class_cap=10, seed=3))
    assert a.metadata["examples_per_class"] == {"A": 10, "B": 1}
    assert a.features == b.features and np.array_equal(a.weights, b.weights)


def _fixed_model(rows):
    feats = {f: i for i, f in enumerate(rows)}
    weights = np.array(list(rows.values()), dtype=float).reshape(len(rows), 2)
    return CerModel([("A", "Ann"), ("B", "Ben")], feats, weights, Hyperparameters(width=1))


class _Post:
    def __init__(self, *snippets):
        self.post_id = "p9"
        self.snippets = snippets


def test_zero_weights_tie_goes_to_first_class():
    model = _fixed_model({"R|adj|alpha": [0.0, 0.0]})
    res = resolve(model, _Post(_masked("Qwertyu alpha")))
    assert res.predicted_class == "A" and res.scores == (0.0, 0.0)


def test_snippet_scores_are_summed():
    model = _fixed_model({"R|adj|alpha": [2.0, 1.0], "R|adj|beta": [0.5, 3.0]})
    res = resolve(model, _Post(_masked("Qwertyu alpha"), _masked("Qwertyu beta")))
    assert res.snippet_scores == ((2.0, 1.0), (0.5, 3.0))
    assert res.scores == (2.5, 4.0) and res.predicted_class == "B"


def test_vote_and_abstain():
    model = _fixed_model({"R|adj|alpha": [2.0, 1.0], "R|adj|beta": [0.5, 3.0]})
    snips = _Post(_masked("Qwertyu alpha"), _masked("Qwertyu alpha"), _masked("Qwertyu beta"))
    assert resolve(model, snips, aggregation="vote").predicted_class == "A"
    assert resolve(model, snips, abstain_margin=0.1).predicted_class == "B"
    assert resolve(model, snips, abstain_margin=0.6).predicted_class is None
    assert list(aggregate_scores([[1, 2], [3, 0]], 2, "vote")) == [1.0, 1.0]
    with pytest.raises(ValueError):
        aggregate_scores([[1, 2]], 2, "max")
    with pytest.raises(ValueError):
        resolve(model, _Post())


def test_model_and_resolution_round_trip(tmp_path):
    model = train([_example(*row) for row in TOY], TOY_CLASSES)
    model.save(tmp_path / "m.json")
    again = CerModel.load(tmp_path / "m.json")
    assert again.classes == model.classes and again.features == model.features
    assert np.array_equal(again.weights, model.weights)
    res = resolve(again, _Post(_masked("a drug baron Qwertyu")))
    atomic_write_text(tmp_path / "r.jsonl", __import__("json").dumps(res.to_json()) + "\n")
    assert read_resolutions(tmp_path / "r.jsonl") == [res]


def test_dump_examples(tmp_path):
    corpus = _training_corpus()
    index = build_index(corpus)
    cs = select_top_k({"Mark Smith": 3, "Mary Jones": 1}, 2, "Mark Smith")
    examples = build_examples(fetch_training_snippets(index, corpus, cs, []), cs, corpus,
                              MaskTokenFactory(index.vocabulary, 0), index)
    dump_examples(examples[:3], tmp_path / "ex.jsonl")
    lines = (tmp_path / "ex.jsonl").read_text().splitlines()
    assert len(lines) == 3 and all("<ANON>" in line for line in lines)


def test_censored_and_training_masks_look_alike():
    corpus = _training_corpus()
    index = build_index(corpus)
    plan = plan_censorship(index, corpus, "Mark Smith", max_posts=2, seed=1)
    chosen = set(plan.selected_post_ids)
    snips = find_snippets(index, corpus, "Mark Smith", scope=lambda d: d.doc_id in chosen)
    [first, _] = censor(plan, snips, corpus, index=index)
    left, right = contexts(first.snippets[0])
    assert MASK not in left + right and right[:3] == ("was", "seen", "there")
