import json
import math

import numpy as np
import pytest

import lmscore


@pytest.fixture(scope="module")
def causal():
    return lmscore.make_fixture(lmscore.ModelConfig("causal"), seed=42)


@pytest.fixture(scope="module")
def masked():
    return lmscore.make_fixture(lmscore.ModelConfig("bidirectional"), seed=42)


def test_first_causal_token_is_zero(causal):
    scores = lmscore.Scorer(causal).token_score(["the cat sat on the mat"])
    assert [t for t, _ in scores[0]] == ["the", "cat", "sat", "on", "the", "mat"]
    assert scores[0][0][1] == 0.0
    assert all(lp < 0 for _, lp in scores[0][1:])


def test_sequence_score_is_sum_of_token_scores(causal, masked):
    for lm in (causal, masked):
        scorer = lmscore.Scorer(lm)
        tokens = scorer.token_score(["the dogs run near the cat"])[0]
        total = scorer.sequence_score(["the dogs run near the cat"])[0]
        assert total == pytest.approx(sum(lp for _, lp in tokens), abs=1e-9)


def test_zero_model_is_uniform():
    lm = lmscore.make_fixture(lmscore.ModelConfig("bidirectional"), init="zero")
    mean = lmscore.Scorer(lm).sequence_score(["the cat sat"], reduction="mean")[0]
    assert mean == pytest.approx(-math.log(32), abs=1e-12)


def test_predictions_and_ranks_agree(masked):
    scorer = lmscore.Scorer(masked)
    top = scorer.get_predictions(["the [MASK] sat on the mat"], k=3)[0]
    assert len(top) == 3
    assert top[0][1] >= top[1][1] >= top[2][1]
    ranked = scorer.query_vocab(["the [MASK] sat on the mat"], [top[0][0], top[2][0]])[0]
    assert ranked[0][2] == 1
    assert ranked[1][1] == pytest.approx(top[2][1])


def test_extraction_shapes(masked):
    mats = lmscore.extract_representation(masked, [("the cat sat", "cat"), "the dogs run"], layers=[0, 2])
    assert len(mats) == 2
    assert all(isinstance(m, np.ndarray) and m.shape == (2, 16) for m in mats)


def test_round_trip_and_errors(causal, tmp_path):
    causal.save(tmp_path / "m")
    loaded = lmscore.LanguageModel.load(tmp_path / "m")
    assert loaded.config == causal.config
    s0 = lmscore.Scorer(causal).sequence_score(["the cat sat"])
    s1 = lmscore.Scorer(loaded).sequence_score(["the cat sat"])
    assert s0 == s1
    with pytest.raises(lmscore.VocabularyError):
        lmscore.Scorer(causal).query_vocab(["the cat [MASK]"], ["zebra"])
    with pytest.raises(lmscore.UnsupportedError):
        lmscore.Scorer(causal).get_predictions(["the [MASK] sat"], k=1)


def test_minimal_pair_report(causal, tmp_path):
    data = tmp_path / "pairs.jsonl"
    data.write_text(
        '{"sentence_good": "the cat sits", "sentence_bad": "the cat sit", "linguistics_term": "agr", "UID": "simple"}\n'
    )
    report = json.loads(lmscore.evaluate_minimal_pairs(lmscore.Scorer(causal), data))
    assert report["n_total"] == 1
