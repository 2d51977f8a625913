"""Prior models: uniform, unigram, smoothed trigram, external tables."""

import json
import math
import random
import warnings

import numpy as np
import pytest

from wordrec.corpus import GAP_MARKER
from wordrec.errors import PriorError
from wordrec.priors import (BOS, EOS, UNK, ExternalPrior, TrigramKNPrior,
                            UniformPrior, UnigramPrior,
                            _count_of_counts_discount, count_trigrams,
                            fit_trigram_kn, fit_unigram, load_external_priors,
                            prior_continuation, prior_in_context,
                            save_external_priors, uniform_prior)
from helpers import make_token

VOCAB = ("a", "b")


def chi(text: str) -> str:
    return f"[CHI] {text}"


# ---------------------------------------------------------------- uniform

def test_uniform_prior_values():
    vec = uniform_prior(("x", "y", "z", "w"))
    assert vec.tolist() == [0.25] * 4
    model = UniformPrior(("x", "y"))
    assert model.distribution().tolist() == [0.5, 0.5]
    assert model.distribution(make_token()).tolist() == [0.5, 0.5]
    with pytest.raises(PriorError):
        uniform_prior(())


def test_uniform_prior_returns_fresh_copies():
    model = UniformPrior(("x", "y"))
    v = model.distribution()
    v[0] = 99.0
    assert model.distribution().tolist() == [0.5, 0.5]


# ---------------------------------------------------------------- unigram

def test_unigram_prior_hand_arithmetic():
    model = UnigramPrior({"a": 2, "b": 1}, ("a", "b", "c"), pseudocount=0.001)
    denom = 3 + 3 * 0.001
    assert model.distribution().tolist() == pytest.approx(
        [2.001 / denom, 1.001 / denom, 0.001 / denom])
    assert model.distribution().sum() == pytest.approx(1.0, abs=1e-12)


def test_fit_unigram_ignores_out_of_vocabulary_words():
    model = fit_unigram(["a", "a", "zebra", "b"], ("a", "b"))
    want = UnigramPrior({"a": 2, "b": 1}, ("a", "b"))
    assert np.allclose(model.distribution(), want.distribution())


def test_unigram_file_round_trip(tmp_path):
    model = UnigramPrior({"a": 7, "b": 3}, ("a", "b", "c"), pseudocount=0.25)
    p = tmp_path / "uni.tsv"
    model.save(p)
    loaded = UnigramPrior.load(p, ("a", "b", "c"))
    assert np.array_equal(loaded.distribution(), model.distribution())


# ------------------------------------------------------- trigram, hand oracle

@pytest.fixture()
def kn_ab():
    """One training utterance `a b a b` (no tag), candidates (a, b).

    Padded: <s> <s> a b a b </s>.  Five distinct trigrams, each count 1,
    so D3 = n1/(n1+2*n2) = 5/5 = 1.  Bigram continuation counts:
    (<s>,a)=1 (a,b)=2 (b,a)=1 (b,</s>)=1, so D2 = 3/(3+2) = 0.6.
    Unigram continuation counts: a=2 b=1 </s>=1, so D1 = 2/(2+2) = 0.5.
    Prediction vocabulary {a, b, </s>, <unk>} has size 4, and the
    unigram normalizer is the number of distinct bigrams, 4.

    A speaker tag would join the counts as an ordinary token and shift
    every one of these numbers, so the arithmetic fixture trains bare;
    tagged utterances are exercised by the distribution tests below.
    """
    return fit_trigram_kn(["a b a b"], VOCAB)


def test_count_trigrams_pads_both_ends():
    counts = count_trigrams(["a b"])
    assert counts == {(BOS, BOS, "a"): 1, (BOS, "a", "b"): 1, ("a", "b", EOS): 1}
    counts = count_trigrams(["a", "a"])
    assert counts == {(BOS, BOS, "a"): 2, (BOS, "a", EOS): 2}


def test_kn_discounts_from_count_of_counts(kn_ab):
    d1, d2, d3 = kn_ab.discounts
    assert d3 == pytest.approx(1.0)
    assert d2 == pytest.approx(0.6)
    assert d1 == pytest.approx(0.5)


def test_kn_unigram_hand_value(kn_ab):
    # P1(b) = max(1 - 0.5, 0)/4 + (0.5 * 3/4) * (1/4) = 0.21875
    assert kn_ab._p1("b") == pytest.approx(0.21875, abs=1e-12)
    # P1(a) = (2 - 0.5)/4 + 0.09375 = 0.46875
    assert kn_ab._p1("a") == pytest.approx(0.46875, abs=1e-12)
    # unknown words fall to the uniform base through the discount mass
    assert kn_ab._p1(UNK) == pytest.approx(0.09375, abs=1e-12)


def test_kn_bigram_hand_value(kn_ab):
    # P2(b|a) = (2 - 0.6)/2 + (0.6 * 1/2) * P1(b) = 0.7 + 0.3 * 0.21875
    assert kn_ab._p2("b", "a") == pytest.approx(0.765625, abs=1e-12)
    # (b,b) unseen but context b is known: pure smoothing mass,
    # (0.6 * 2/2) * P1(b) = 0.13125
    assert kn_ab._p2("b", "b") == pytest.approx(0.13125, abs=1e-12)
    # unseen context backs off to P1 entirely
    assert kn_ab._p2("a", UNK) == pytest.approx(kn_ab._p1("a"), abs=1e-12)


def test_kn_trigram_hand_value(kn_ab):
    # D3 = 1 strips the raw counts entirely: P3(b|<s>,a) =
    # 0 + (1 * 1/1) * P2(b|a)
    assert kn_ab._p3("b", BOS, "a") == pytest.approx(0.765625, abs=1e-12)
    # D3 = 1 also means a seen context passes through: P3(a|a,b) =
    # 0 + (1 * 2/2) * P2(a|b)
    assert kn_ab._p3("a", "a", "b") == pytest.approx(kn_ab._p2("a", "b"), abs=1e-12)
    # unseen context: straight back-off
    assert kn_ab._p3("a", "b", "b") == pytest.approx(kn_ab._p2("a", "b"), abs=1e-12)


def test_kn_conditional_sums_to_one_over_prediction_vocab(kn_ab):
    for ctx in ((BOS, BOS), (BOS, "a"), ("a", "b"), ("b", "a"), ("zz", "qq")):
        total = sum(kn_ab._p3(w, *ctx) for w in kn_ab.pred_vocab)
        assert total == pytest.approx(1.0, abs=1e-9)
    for v in (BOS, "a", "b", UNK):
        total = sum(kn_ab._p2(w, v) for w in kn_ab.pred_vocab)
        assert total == pytest.approx(1.0, abs=1e-9)
    assert sum(kn_ab._p1(w) for w in kn_ab.pred_vocab) == pytest.approx(1.0, abs=1e-9)


def test_kn_oov_query_tokens_map_to_unk(kn_ab):
    assert kn_ab.map_token("zebra") == UNK
    assert kn_ab.map_token("a") == "a"
    assert kn_ab.map_token(BOS) == BOS
    assert kn_ab.map_token(EOS) == EOS
    assert kn_ab.conditional("a", ("zebra", "wombat")) == pytest.approx(
        kn_ab.conditional("a", (UNK, UNK)))


def test_degenerate_count_of_counts_falls_back():
    # counts of 2 are fine (n2 > 0): discount is 0, no warning
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert _count_of_counts_discount([2, 2], order=3) == 0.0
    # nothing seen once or twice -> formula is 0/0, fixed fallback
    with pytest.warns(UserWarning, match="0.75"):
        d = _count_of_counts_discount([3, 3], order=3)
    assert d == 0.75
    # tripled corpus: every trigram count is 3 -> degenerate at order 3
    with pytest.warns(UserWarning):
        fit_trigram_kn([chi("a b a b")] * 3, VOCAB)


# ------------------------------------------------- trigram, per-token priors

def test_continuation_prior_is_renormalized_conditional(kn_ab):
    ctx = (BOS, "a")
    vec = prior_continuation(kn_ab, ctx)
    raw = np.array([kn_ab.conditional(w, ctx) for w in VOCAB])
    assert np.allclose(vec, raw / raw.sum())
    assert vec.sum() == pytest.approx(1.0, abs=1e-12)


def test_continuation_distribution_reads_gap_context(kn_ab):
    tok = make_token(utterance=chi(f"a b {GAP_MARKER} b"))
    vec = kn_ab.distribution(tok)
    assert np.allclose(vec, prior_continuation(kn_ab, ("a", "b")))
    # a gapright at the start sees only padding
    tok0 = make_token(utterance=chi(f"{GAP_MARKER} a"))
    vec0 = kn_ab.distribution(tok0)
    # context is ([CHI] mapped to <unk>, then the tag) -- the tag itself
    # is a token, so the gap context is (<s>, [CHI])
    assert vec0.sum() == pytest.approx(1.0, abs=1e-12)


def test_in_context_brute_force_oracle(kn_ab):
    model = kn_ab.with_mode("in_context")
    utt = chi(f"a {GAP_MARKER} b a")
    tok = make_token(utterance=utt)
    got = model.distribution(tok)

    # independent recompute: score(w) = prod of trigram terms from the
    # gap through the last word, nothing for end-of-utterance
    raw = utt.split()
    g = raw.index(GAP_MARKER)
    weights = []
    for w in VOCAB:
        filled = [model.map_token(t) for t in raw[:g]] + [model.map_token(w)] \
            + [model.map_token(t) for t in raw[g + 1:]]
        padded = [BOS, BOS] + filled
        score = 1.0
        for j in range(g, len(filled)):
            score *= model._p3(padded[j + 2], padded[j], padded[j + 1])
        weights.append(score)
    want = np.array(weights) / sum(weights)
    assert np.allclose(got, want, atol=1e-12)


def test_in_context_gap_at_end_equals_continuation(kn_ab):
    utt = chi(f"a b {GAP_MARKER}")
    tok = make_token(utterance=utt)
    cont = kn_ab.distribution(tok)
    in_ctx = kn_ab.with_mode("in_context").distribution(tok)
    assert np.allclose(cont, in_ctx, atol=1e-12)


def test_in_context_ignores_far_preceding_words(kn_ab):
    model = kn_ab.with_mode("in_context")
    a = make_token(utterance=chi(f"a a b {GAP_MARKER} a"))
    b = make_token(utterance=chi(f"b a b {GAP_MARKER} a"))
    assert np.allclose(model.distribution(a), model.distribution(b), atol=1e-12)


def test_with_mode_validates(kn_ab):
    with pytest.raises(PriorError):
        kn_ab.with_mode("sideways")
    assert kn_ab.with_mode("in_context").mode == "in_context"
    assert kn_ab.mode == "continuation"  # original untouched


def test_trigram_file_round_trip(kn_ab, tmp_path):
    p = tmp_path / "tri.tsv"
    kn_ab.save(p)
    loaded = TrigramKNPrior.load(p, VOCAB)
    assert loaded.tri == kn_ab.tri
    assert loaded.discounts == pytest.approx(kn_ab.discounts)
    assert loaded.mode == kn_ab.mode
    tok = make_token(utterance=chi(f"a {GAP_MARKER}"))
    assert np.allclose(loaded.distribution(tok), kn_ab.distribution(tok))


def test_fit_trigram_requires_utterances():
    with pytest.raises(PriorError):
        fit_trigram_kn([], VOCAB)


# ---------------------------------------------------------------- external

def test_external_prior_flooring_arithmetic():
    model = ExternalPrior({"t1": {"a": 0.5}}, ("a", "b", "c"), floor=1e-10)
    vec = model.distribution(make_token(token_id="t1"))
    denom = 0.5 + 2e-10
    assert vec.tolist() == pytest.approx([0.5 / denom, 1e-10 / denom, 1e-10 / denom])
    assert vec.sum() == pytest.approx(1.0, abs=1e-12)


def test_external_prior_ignores_out_of_vocab_entries():
    model = ExternalPrior({"t1": {"a": 0.3, "zebra": 0.7}}, ("a", "b"), floor=0.0)
    vec = model.distribution(make_token(token_id="t1"))
    assert vec.tolist() == [1.0, 0.0]


def test_external_prior_errors():
    with pytest.raises(PriorError):
        ExternalPrior({"t1": {"a": -0.2}}, ("a", "b"))
    with pytest.raises(PriorError):
        ExternalPrior({"t1": {"zebra": 1.0}}, ("a", "b"), floor=0.0)
    model = ExternalPrior({"t1": {"a": 1.0}}, ("a", "b"))
    with pytest.raises(PriorError):
        model.distribution(make_token(token_id="unlisted"))


def test_external_priors_file_round_trip(tmp_path):
    table = {"t1": {"a": 0.25, "b": 0.75}, "t2": {"b": 1.0}}
    p = tmp_path / "ext.jsonl"
    save_external_priors(table, p)
    model = load_external_priors(p, ("a", "b"))
    assert model.distribution(make_token(token_id="t1")).tolist() == pytest.approx(
        [0.25, 0.75], abs=1e-9)

    with open(p, "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"token_id": "t1", "probs": {"a": 1.0}}) + "\n")
    with pytest.raises(PriorError, match="duplicate"):
        load_external_priors(p, ("a", "b"))


# -------------------------------------------------------- random normalization

def test_all_priors_normalize_on_random_corpora():
    rng = random.Random(71)
    words = [f"w{i}" for i in range(12)]
    checked = 0
    for _ in range(15):
        vocab = tuple(sorted(rng.sample(words, rng.randrange(3, 9))))
        utterances = []
        for _ in range(rng.randrange(2, 14)):
            n = rng.randrange(1, 7)
            utterances.append(chi(" ".join(rng.choice(words) for _ in range(n))))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tri = fit_trigram_kn(utterances, vocab)
        uni = fit_unigram([rng.choice(words) for _ in range(30)], vocab)
        for _ in range(6):
            n = rng.randrange(1, 5)
            toks = [rng.choice(words) for _ in range(n)]
            toks[rng.randrange(n)] = GAP_MARKER
            tok = make_token(utterance=chi(" ".join(toks)))
            for model in (tri, tri.with_mode("in_context"), uni, UniformPrior(vocab)):
                vec = model.distribution(tok)
                assert vec.shape == (len(vocab),)
                assert (vec >= 0).all()
                assert vec.sum() == pytest.approx(1.0, abs=1e-9)
                checked += 1
    assert checked >= 300
