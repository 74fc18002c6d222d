import json

import pytest

import tod


def test_text_helpers():
    assert tod.tokenize("Where is my order?") == ["where", "is", "my", "order", "?"]
    assert tod.split_sentences("Hi. Bye!") == ["Hi.", "Bye!"]
    assert tod.lemmatize("returned") == "return"
    assert tod.sentence_bleu(["a", "b", "c", "d"], ["a", "b", "c", "d"]) == pytest.approx(1.0)
    assert 0 <= tod.sample_gumbel([0.0, 1.0, 2.0], 1.0, 3) < 3


def test_pipeline(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    pool = tmp_path / "gold.pool"
    assert tod.generate_corpus("desk", 60, 3, str(corpus), str(pool)) == 60

    mined = tod.mine(str(corpus), f1=3, f2=1)
    assert mined and all(freq > 1 for _, freq in mined)
    curve = tod.coverage([t for t, _ in mined], str(corpus), [1, len(mined)])
    assert curve[0][1] <= curve[1][1]

    ckpt = tmp_path / "sst.bin"
    history = tod.train_sst(str(corpus), str(ckpt), dim=8, layers=1, heads=2, epochs=1, negatives=5)
    assert [h["epoch"] for h in history] == [0, 1]

    log = tmp_path / "feedback.jsonl"
    ranker = tod.Ranker(ckpt, pool, feedback_log=log)
    resp = ranker.rank("s1", [("user", "i want to return my order")], {"prime_member": "yes"}, k=3)
    ids = [s["template_id"] for s in resp["suggestions"]]
    assert len(ids) == 3 and not resp["no_eligible_response"]

    event = {"session_id": "s1", "turn_index": 1, "shown_template_ids": ids,
             "outcome": "accepted", "chosen_template_id": ids[0]}
    assert ranker.feedback(event)
    assert not ranker.feedback(event)
    with pytest.raises(ValueError):
        ranker.rank("", [("user", "hi")])

    rows = [json.loads(x) for x in tod.sft_examples(str(log), str(pool), str(ckpt), 5).splitlines()]
    assert len(rows) == 1 and rows[0]["provenance"] == "sft_accepted"
    assert ranker.templates("refund")
