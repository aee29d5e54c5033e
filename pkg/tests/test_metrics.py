import math

import pytest
from hypothesis import given, settings, strategies as st

from mtlab.errors import EmptyInput, LengthMismatch
from mtlab.metrics import bleu, chrf, evaluate_corpus
from oracles import oracle_bleu, oracle_chrf

# frozen from the brute-force oracles (and, for the cat/mat case, from the
# closed form 100 * exp(1 - 6/5) * (1 * 3/4 * 1/3 * 1/3) ** 0.25)
CAT_MAT_BLEU = 43.9891724758422
CHRF_ABCD_ABC = 0.5164670658682634
CHRF_UKHAMARA = 0.8340608465608467


def test_bleu_identity_is_exactly_100():
    refs = ["the cat sat", "hola mundo", "a"]
    assert bleu(refs, list(refs)).score == 100.0


def test_bleu_zero_overlap_is_zero():
    assert bleu(["a b c"], ["x y z"]).score == 0.0


def test_bleu_hand_computed_example():
    result = bleu(["the cat sat on the mat"], ["the cat on the mat"])
    assert result.precisions == (5 / 5, 3 / 4, 1 / 3, 1 / 3)
    assert result.brevity_penalty == pytest.approx(math.exp(1 - 6 / 5), abs=1e-12)
    assert (result.hyp_len, result.ref_len) == (5, 6)
    assert result.score == pytest.approx(CAT_MAT_BLEU, abs=1e-9)


def test_bleu_brevity_penalty_direction():
    longer = bleu(["a b"], ["a b c"])  # hypothesis longer: no penalty
    assert longer.brevity_penalty == 1.0
    shorter = bleu(["a b c"], ["a b"])
    assert shorter.brevity_penalty == pytest.approx(math.exp(1 - 3 / 2), abs=1e-12)


def test_bleu_empty_hypotheses():
    assert bleu(["a b"], [""]).score == 0.0


def test_bleu_errors():
    with pytest.raises(LengthMismatch):
        bleu(["a"], ["a", "b"])
    with pytest.raises(EmptyInput):
        bleu([], [])


def test_chrf_identity_is_exactly_one():
    score, per_sentence = chrf(["abc", "hello there"], ["abc", "hello there"])
    assert score == 1.0
    assert per_sentence == [1.0, 1.0]


def test_chrf_disjoint_is_zero():
    score, _ = chrf(["aaa"], ["bbb"])
    assert score == 0.0


def test_chrf_brute_force_value():
    score, _ = chrf(["abcd"], ["abc"])
    assert score == pytest.approx(CHRF_ABCD_ABC, abs=1e-9)
    assert score == pytest.approx(oracle_chrf(["abcd"], ["abc"]), abs=1e-12)


def test_orthography_fixture_word_bleu_zero_chrf_high():
    refs, hyps = ["ukhamarac"], ["ukhamarak"]
    assert bleu(refs, hyps).score == 0.0
    score, _ = chrf(refs, hyps)
    assert score > 0.5
    assert score == pytest.approx(CHRF_UKHAMARA, abs=1e-9)


FIXTURES = [
    (["the cat sat on the mat"], ["the cat on the mat"]),
    (["a b c d"], ["a b c d"]),
    (["uno dos tres"], ["uno tres dos"]),
    (["ukhamarac"], ["ukhamarak"]),
    (["hola mundo", "adios"], ["hola mundo", "adios amigo"]),
    (["x"], ["y"]),
    (["ab cd ef gh ij"], ["ab cd ef"]),
    (["the quick brown fox", "jumps over the dog"], ["the quick fox", "jumps over a dog"]),
    (["aa bb aa bb"], ["aa aa bb bb"]),
    (["k'ochi uta", "jisk'a wawa"], ["k'ochi uka", "jisk'a wawa"]),
    (["one two three four five six seven"], ["one two three four five six seven eight"]),
    (["", "abc"], ["", "abd"]),
]


@pytest.mark.parametrize("refs,hyps", FIXTURES)
def test_bleu_matches_oracle_on_fixtures(refs, hyps):
    assert bleu(refs, hyps).score == pytest.approx(oracle_bleu(refs, hyps), abs=1e-9)


@pytest.mark.parametrize("refs,hyps", FIXTURES)
def test_chrf_matches_oracle_on_fixtures(refs, hyps):
    assert chrf(refs, hyps)[0] == pytest.approx(oracle_chrf(refs, hyps), abs=1e-9)


sentence = st.lists(st.text(alphabet="abcxyz'", min_size=1, max_size=5), min_size=0, max_size=6).map(" ".join)


@given(pairs=st.lists(st.tuples(sentence, sentence), min_size=1, max_size=6), seed=st.randoms())
@settings(max_examples=60, deadline=None)
def test_metrics_permutation_equivariant(pairs, seed):
    refs = [r for r, _ in pairs]
    hyps = [h for _, h in pairs]
    shuffled = list(pairs)
    seed.shuffle(shuffled)
    refs2 = [r for r, _ in shuffled]
    hyps2 = [h for _, h in shuffled]
    assert bleu(refs, hyps).score == pytest.approx(bleu(refs2, hyps2).score, abs=1e-12)
    assert chrf(refs, hyps)[0] == pytest.approx(chrf(refs2, hyps2)[0], abs=1e-12)


@given(refs=st.lists(sentence, min_size=1, max_size=5))
@settings(max_examples=50, deadline=None)
def test_identity_scores_on_random_corpora(refs):
    assert bleu(refs, list(refs)).score == 100.0
    assert chrf(refs, list(refs))[0] == 1.0


@given(pairs=st.lists(st.tuples(sentence, sentence), min_size=1, max_size=5))
@settings(max_examples=50, deadline=None)
def test_random_corpora_match_oracles(pairs):
    refs = [r for r, _ in pairs]
    hyps = [h for _, h in pairs]
    assert bleu(refs, hyps).score == pytest.approx(oracle_bleu(refs, hyps), abs=1e-9)
    assert chrf(refs, hyps)[0] == pytest.approx(oracle_chrf(refs, hyps), abs=1e-9)


def test_beta_one_is_harmonic_mean():
    refs, hyps = ["abcd"], ["abc"]
    score, _ = chrf(refs, hyps, beta=1.0)
    # recompute P and R with the oracle's definitions
    p = (1 + 1 + 1 + 0) / 4
    r = (3 / 4 + 2 / 3 + 1 / 2 + 0) / 4
    assert score == pytest.approx(2 * p * r / (p + r), abs=1e-12)


def test_appending_fully_wrong_pair_never_raises_chrf():
    refs, hyps = ["abc abc", "xyz"], ["abc abc", "xyz"]
    base, _ = chrf(refs, hyps)
    worse, _ = chrf(refs + ["qqqq"], hyps + ["pppp"])
    assert worse <= base


def test_report_bounds_and_fields():
    report = evaluate_corpus(["the cat sat on the mat"], ["the cat on the mat"])
    assert 0.0 <= report.bleu <= 100.0
    upper = 100.0 * math.prod(report.ngram_precisions) ** (1 / 4)
    assert report.bleu <= upper + 1e-9
    assert 0.0 <= report.chrf <= 1.0
    assert 0.0 < report.brevity_penalty <= 1.0
    assert len(report.per_sentence_chrf) == 1
    tsv = report.to_tsv()
    assert "BLEU\t43.9892" in tsv
    assert tsv.startswith("BLEU\t")
    assert "BLEU = 43.9892" in report.pretty()


def test_report_identity_formatting():
    report = evaluate_corpus(["same line"], ["same line"])
    assert "BLEU\t100.0000" in report.to_tsv()
    assert "chrF\t1.0000" in report.to_tsv()
