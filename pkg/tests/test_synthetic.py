"""Generated worlds: determinism, planted structure, and file round trips."""

import math
import random
from collections import Counter

import pytest

from wordrec.corpus import ingest
from wordrec.likelihood import PairModel, edit_distance, path_sum
from wordrec.phon import PhonemeString, load_inventory, load_lexicon
from wordrec.priors import load_external_priors
from wordrec.synthetic import (EditBallSampler, NoiseSpec, PlantedNoise,
                               SyntheticSpec, generate_synthetic_corpus,
                               generate_world, theta_cost_fn)
from helpers import make_inventory, make_lexicon

SMALL = SyntheticSpec(n_words=30, n_children=3, sessions_per_child=4,
                      tokens_per_session=50)


def token_fingerprint(world):
    return [(t.token_id, t.child_id, t.age_months, t.session_id,
             t.actual_phonemes.syms, t.gloss, t.same_utterance,
             t.context_before, t.context_after) for t in world.tokens]


def test_generate_world_seed_determinism():
    w1 = generate_world(SMALL, seed=42)
    w2 = generate_world(SMALL, seed=42)
    assert token_fingerprint(w1) == token_fingerprint(w2)
    assert w1.external_priors == w2.external_priors
    assert w1.lexicon.words == w2.lexicon.words
    w3 = generate_world(SMALL, seed=43)
    assert token_fingerprint(w1) != token_fingerprint(w3)


def test_world_shape_and_negatives_fraction():
    world = generate_world(SMALL, seed=7)
    spec = SMALL
    assert len(world.tokens) == spec.n_children * spec.sessions_per_child * spec.tokens_per_session
    assert len({t.child_id for t in world.tokens}) == spec.n_children
    sessions = {(t.child_id, t.session_id) for t in world.tokens}
    assert len(sessions) == spec.n_children * spec.sessions_per_child
    frac = sum(1 for t in world.tokens if t.gloss is None) / len(world.tokens)
    assert abs(frac - spec.negatives_fraction) < 0.06
    # glossed tokens remember their gold word
    for t in world.tokens:
        if t.gloss is not None:
            assert world.gold_by_token[t.token_id] == t.gloss
        else:
            assert t.token_id not in world.gold_by_token


def test_zero_noise_reproduces_citation_forms():
    spec = SyntheticSpec(n_words=20, n_children=2, sessions_per_child=2,
                         tokens_per_session=40,
                         noise=NoiseSpec(sub_prob=0.0, del_prob=0.0, ins_prob=0.0))
    world = generate_world(spec, seed=5)
    for t in world.tokens:
        if t.gloss is None:
            continue
        prons = {p.syms for p in world.lexicon.pronunciations(t.gloss)}
        assert t.actual_phonemes.syms in prons


def test_deletion_heavy_noise_shortens_forms():
    spec = SyntheticSpec(n_words=20, n_children=3, sessions_per_child=4,
                         tokens_per_session=50,
                         noise=NoiseSpec(sub_prob=0.0, del_prob=0.25, ins_prob=0.0))
    world = generate_world(spec, seed=6)
    actual_lens, citation_lens = [], []
    for t in world.tokens:
        if t.gloss is None:
            continue
        actual_lens.append(len(t.actual_phonemes))
        citation_lens.append(min(len(p) for p in world.lexicon.pronunciations(t.gloss)))
    assert sum(actual_lens) / len(actual_lens) < sum(citation_lens) / len(citation_lens)


def test_planted_priors_cover_tokens_and_respect_gold_mass():
    world = generate_world(SMALL, seed=9)
    assert set(world.external_priors) == {t.token_id for t in world.tokens}
    lo, hi = SMALL.prior_gold_mass
    for t in world.tokens:
        probs = world.external_priors[t.token_id]
        assert sum(probs.values()) == pytest.approx(1.0, abs=1e-9)
        assert all(w in world.lexicon.word_index for w in probs)
        if t.gloss is not None:
            assert lo <= probs[t.gloss] <= hi


def test_child_skew_prefers_disjoint_slices():
    spec = SyntheticSpec(n_words=30, n_children=3, sessions_per_child=6,
                         tokens_per_session=60, child_skew_strength=8.0,
                         negatives_fraction=0.0)
    world = generate_world(spec, seed=11)
    slices = [set(c.preferred) for c in world.children]
    for i in range(len(slices)):
        for j in range(i + 1, len(slices)):
            assert not (slices[i] & slices[j])
    # each child uses its own slice more than any other child's slice
    for child, prof in zip(world.children, world.children):
        counts = Counter(t.gloss for t in world.tokens
                         if t.child_id == prof.child_id and t.gloss is not None)
        own = sum(counts[w] for w in prof.preferred)
        for other in world.children:
            if other.child_id == prof.child_id:
                continue
            theirs = sum(counts[w] for w in other.preferred)
            assert own > theirs


def test_child_specific_noise_gives_distinct_processes():
    spec = SyntheticSpec(n_words=20, n_children=3, sessions_per_child=2,
                         tokens_per_session=10, child_specific_noise=True)
    world = generate_world(spec, seed=3)
    tables = [tuple(c.noise.conditional_rows().ravel()) for c in world.children]
    assert len(set(tables)) == len(tables)
    shared = generate_world(SMALL, seed=3)
    assert len({id(c.noise) for c in shared.children}) == 1


def test_conditional_rows_normalize():
    inv = make_inventory("a:V e:V t:C k:C s:C")
    rng = random.Random(17)
    noise = PlantedNoise(NoiseSpec(sub_prob=0.2, del_prob=0.15, ins_prob=0.1,
                                   n_confusions=2), inv, rng)
    cond = noise.conditional_rows()
    assert cond.shape == (6, 6)
    assert cond[0, 0] == 0.0
    assert cond[0, 1:].sum() == pytest.approx(1.0, abs=1e-12)
    for x in range(1, 6):
        assert cond[x].sum() == pytest.approx(1.0, abs=1e-12)
        assert cond[x, 0] == pytest.approx(0.15)
        assert cond[x, x] == pytest.approx(0.65)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(sub_prob=0.6, del_prob=0.5)


# ----------------------------------------------------------- edit-ball sampler

def test_edit_ball_sampler_stays_in_radius_and_prefers_cheap():
    inv = make_inventory("a:V i:V t:C k:C")
    lex = make_lexicon(inv, tika="t i k a")
    citation = lex.pronunciations("tika")[0]
    sampler = EditBallSampler(lex, scale=3.0, rng=random.Random(8))
    counts = Counter()
    for _ in range(400):
        s = sampler.sample(citation)
        d = edit_distance(citation, s)
        assert d <= 2
        counts[s.syms] += 1
    assert counts.most_common(1)[0][0] == citation.syms


def test_edit_ball_scale_controls_spread():
    inv = make_inventory("a:V i:V t:C k:C")
    lex = make_lexicon(inv, tika="t i k a")
    citation = lex.pronunciations("tika")[0]

    def mean_distance(scale, seed):
        sampler = EditBallSampler(lex, scale=scale, rng=random.Random(seed))
        total = 0
        for _ in range(500):
            total += edit_distance(citation, sampler.sample(citation))
        return total / 500

    assert mean_distance(0.5, 21) > mean_distance(3.0, 21) + 0.3


def test_theta_cost_fn_matches_path_sum():
    inv = make_inventory("a:V t:C")
    pm = PairModel.equal_edit_cost(inv)
    cost = theta_cost_fn(pm)
    cit = PhonemeString(("a", "t"))
    for cand in (("a", "t"), ("t",), ("a", "a", "t")):
        c = PhonemeString(cand)
        # sum over paths, same as the scoring default; always <= the
        # best single path, which for this table is the edit distance
        assert cost(cit, c) == path_sum(pm, cit, c)
        assert cost(cit, c) <= float(edit_distance(cit, c))
        assert path_sum(pm, cit, c, best_path_only=True) == float(edit_distance(cit, c))


def test_edit_ball_sampler_drops_infinite_costs():
    inv = make_inventory("a:V t:C")
    lex = make_lexicon(inv, at="a t")
    citation = lex.pronunciations("at")[0]

    def spiky(cit, cand):
        # forbid any candidate containing t, except the citation itself
        if cand.syms != cit.syms and "t" in cand.syms:
            return math.inf
        return float(edit_distance(cit, cand))

    sampler = EditBallSampler(lex, scale=1.0, rng=random.Random(2), cost_fn=spiky)
    for _ in range(100):
        s = sampler.sample(citation)
        assert s.syms == citation.syms or "t" not in s.syms


# ------------------------------------------------------------------ file layer

def test_generate_synthetic_corpus_round_trips(tmp_path):
    spec = SyntheticSpec(n_words=20, n_children=2, sessions_per_child=3,
                         tokens_per_session=20)
    paths = generate_synthetic_corpus(spec, tmp_path, seed=12)
    for key in ("inventory", "lexicon", "corpus", "external_priors"):
        assert paths[key].exists()

    inv = load_inventory(paths["inventory"])
    lex = load_lexicon(paths["lexicon"], inv)
    tokens = ingest(paths["corpus"], lex, inv)
    # the generator emits only records that pass the ingestion criteria
    assert len(tokens) == 2 * 3 * 20
    world = generate_world(spec, seed=12)
    assert [t.token_id for t in tokens] == [t.token_id for t in world.tokens]
    assert [t.actual_phonemes.syms for t in tokens] == \
        [t.actual_phonemes.syms for t in world.tokens]
    assert [t.gloss for t in tokens] == [t.gloss for t in world.tokens]

    ext = load_external_priors(paths["external_priors"], lex.words)
    vec = ext.distribution(tokens[0])
    assert vec.sum() == pytest.approx(1.0, abs=1e-9)
