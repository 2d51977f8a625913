"""Synthetic corpus generation.

Builds a small self-contained world (inventory, lexicon, per-child noise
processes, planted per-token priors) and samples vocalization records
from it, so the full experimental structure runs at desk scale.  Child
forms are produced by walking edit events over the citation form; a
configurable fraction of tokens are emitted gloss-less with random
phoneme strings to serve as unintelligible negatives.

Everything is driven by one seeded random.Random, so a fixed seed yields
an identical corpus byte for byte.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from wordrec.corpus import VocalizationToken, write_tokens
from wordrec.likelihood import PairModel, edit_distance, path_sum
from wordrec.phon import (Lexicon, PhonemeInventory, PhonemeString,
                          save_inventory, save_lexicon, syllable_count)
from wordrec.priors import save_external_priors

VOWELS = ("a", "e", "i", "o", "u")
CONSONANTS = ("p", "t", "k", "b", "d", "g", "m", "n", "s", "l", "r", "w")

# carrier frames for the gapped utterance; {f} is the word's frame cue
TEMPLATES = (
    "CHI: {f} ⟨GAP⟩",
    "CHI: ⟨GAP⟩ {f}",
    "CHI: a {f} ⟨GAP⟩ now",
    "CHI: ⟨GAP⟩",
)
FRAME_WORDS = ("want", "see", "more", "my", "that", "go")

CONTEXT_BEFORE = (
    "CGV: what do you see",
    "CGV: tell me",
    "CHI: mama",
    "CGV: look here",
)
CONTEXT_AFTER = (
    "CGV: oh really",
    "CGV: good",
    "CHI: yeah",
)


@dataclass(frozen=True)
class NoiseSpec:
    """Per-symbol edit rates for the planted production process.

    Each citation symbol is deleted with ``del_prob``, replaced with one
    of its confusion targets with ``sub_prob``, and otherwise produced
    faithfully.  Before each position (and after the last) an extra
    symbol is inserted with ``ins_prob``, at most one per gap.
    """

    sub_prob: float = 0.12
    del_prob: float = 0.10
    ins_prob: float = 0.06
    n_confusions: int = 2

    def __post_init__(self):
        if self.sub_prob + self.del_prob > 1:
            raise ValueError("sub_prob + del_prob must not exceed 1")


@dataclass(frozen=True)
class SyntheticSpec:
    n_vowels: int = 4
    n_consonants: int = 6
    n_words: int = 60
    neighbor_fraction: float = 0.3   # words given a 1-edit twin in the lexicon
    n_children: int = 3
    sessions_per_child: int = 4
    tokens_per_session: int = 50
    age_start_months: int = 18
    age_step_months: int = 4
    negatives_fraction: float = 0.25
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    child_specific_noise: bool = False
    child_skew_strength: float = 0.0  # 0 = all children share word frequencies
    prior_gold_mass: tuple[float, float] = (0.55, 0.85)
    prior_spread_words: int = 8
    frame_prob: float = 0.7
    echo_prob: float = 0.5


class PlantedNoise:
    """A concrete sampling process with a known implied conditional table."""

    def __init__(self, spec: NoiseSpec, inventory: PhonemeInventory,
                 rng: random.Random):
        self.spec = spec
        self.inventory = inventory
        syms = list(inventory.symbols)
        # each symbol prefers a fixed set of confusion targets
        self.confusions = {}
        for s in syms:
            others = [x for x in syms if x != s]
            rng.shuffle(others)
            self.confusions[s] = tuple(others[:spec.n_confusions])
        # insertions favor a couple of symbols to keep the process peaky
        weights = [rng.random() ** 2 for _ in syms]
        total = sum(weights)
        self.ins_dist = {s: w / total for s, w in zip(syms, weights)}

    def walk(self, citation: PhonemeString, rng: random.Random) -> PhonemeString:
        spec = self.spec
        out: list[str] = []
        for i in range(len(citation) + 1):
            if spec.ins_prob > 0 and rng.random() < spec.ins_prob:
                out.append(self._sample_insertion(rng))
            if i < len(citation):
                x = citation[i]
                r = rng.random()
                if r < spec.del_prob:
                    pass
                elif r < spec.del_prob + spec.sub_prob:
                    out.append(rng.choice(self.confusions[x]))
                else:
                    out.append(x)
        return PhonemeString(tuple(out))

    def _sample_insertion(self, rng: random.Random) -> str:
        r = rng.random()
        acc = 0.0
        for s, w in self.ins_dist.items():
            acc += w
            if r < acc:
                return s
        return self.inventory.symbols[-1]

    def conditional_rows(self) -> np.ndarray:
        """The conditional table this process implies, for comparing
        against an EM-recovered model row by row."""
        inv = self.inventory
        n = len(inv)
        cond = np.zeros((n + 1, n + 1))
        for s, w in self.ins_dist.items():
            cond[0, inv.index(s)] = w
        spec = self.spec
        for s in inv.symbols:
            x = inv.index(s)
            cond[x, 0] = spec.del_prob
            cond[x, x] = 1.0 - spec.del_prob - spec.sub_prob
            share = spec.sub_prob / len(self.confusions[s])
            for t in self.confusions[s]:
                cond[x, inv.index(t)] += share
        return cond


@dataclass
class ChildProfile:
    child_id: str
    word_weights: np.ndarray
    noise: PlantedNoise
    preferred: tuple[str, ...]


@dataclass
class SyntheticWorld:
    spec: SyntheticSpec
    inventory: PhonemeInventory
    lexicon: Lexicon
    children: list[ChildProfile]
    tokens: list[VocalizationToken]
    external_priors: dict[str, dict[str, float]]
    gold_by_token: dict[str, str]


def _make_inventory(spec: SyntheticSpec, rng: random.Random) -> PhonemeInventory:
    vowels = list(VOWELS[:spec.n_vowels])
    consonants = list(CONSONANTS[:spec.n_consonants])
    symbols = vowels + consonants
    flags = {s: s in vowels for s in symbols}
    return PhonemeInventory(symbols, flags)


def _random_word_form(inventory: PhonemeInventory, rng: random.Random) -> PhonemeString:
    """1-2 syllables; a consonant always separates vowel nuclei."""
    vowels = [s for s in inventory.symbols if inventory.vowel_flags[s]]
    consonants = [s for s in inventory.symbols if not inventory.vowel_flags[s]]
    syms: list[str] = []
    n_syl = rng.choice((1, 1, 2))
    for k in range(n_syl):
        if k > 0 or rng.random() < 0.8:
            syms.append(rng.choice(consonants))
        syms.append(rng.choice(vowels))
    if rng.random() < 0.5:
        syms.append(rng.choice(consonants))
    return PhonemeString(tuple(syms))


def _one_edit_variant(form: PhonemeString, inventory: PhonemeInventory,
                      rng: random.Random) -> PhonemeString:
    syms = list(form.syms)
    consonants = [s for s in inventory.symbols if not inventory.vowel_flags[s]]
    i = rng.randrange(len(syms))
    replacement = rng.choice([s for s in inventory.symbols if s != syms[i]])
    if inventory.vowel_flags[syms[i]] and not inventory.vowel_flags[replacement]:
        # swapping a lone vowel for a consonant could zero the syllables
        replacement = rng.choice([v for v in inventory.symbols
                                  if inventory.vowel_flags[v] and v != syms[i]] or
                                 [replacement])
    syms[i] = replacement
    return PhonemeString(tuple(syms))


def _make_lexicon(spec: SyntheticSpec, inventory: PhonemeInventory,
                  rng: random.Random) -> Lexicon:
    entries: dict[str, list[PhonemeString]] = {}
    forms_seen: set[tuple[str, ...]] = set()

    def add(form: PhonemeString) -> bool:
        if form.syms in forms_seen or syllable_count(form, inventory) not in (1, 2):
            return False
        word = "".join(form.syms)
        if word in entries:
            return False
        entries[word] = [form]
        forms_seen.add(form.syms)
        return True

    attempts = 0
    while len(entries) < spec.n_words and attempts < spec.n_words * 200:
        attempts += 1
        form = _random_word_form(inventory, rng)
        if not add(form):
            continue
        # a confusable neighbor makes ranking non-trivial
        if rng.random() < spec.neighbor_fraction and len(entries) < spec.n_words:
            for _ in range(5):
                if add(_one_edit_variant(form, inventory, rng)):
                    break
    if len(entries) < spec.n_words:
        raise RuntimeError("could not build the requested lexicon size")

    # a handful of words get a second pronunciation
    words = sorted(entries)
    for word in rng.sample(words, max(1, len(words) // 15)):
        variant = _one_edit_variant(entries[word][0], inventory, rng)
        if variant.syms not in forms_seen and syllable_count(variant, inventory) in (1, 2):
            entries[word].append(variant)
            forms_seen.add(variant.syms)
    return Lexicon(entries, inventory)


def _make_children(spec: SyntheticSpec, inventory: PhonemeInventory,
                   lexicon: Lexicon, rng: random.Random) -> list[ChildProfile]:
    n_words = len(lexicon.words)
    shared_noise = PlantedNoise(spec.noise, inventory, rng)
    # disjoint slices of the vocabulary to prefer
    order = list(lexicon.words)
    rng.shuffle(order)
    slice_size = n_words // max(spec.n_children, 1)
    children = []
    for c in range(spec.n_children):
        child_id = f"child{c + 1:02d}"
        preferred = tuple(sorted(order[c * slice_size:(c + 1) * slice_size]))
        weights = np.ones(n_words)
        if spec.child_skew_strength > 0:
            for w in preferred:
                weights[lexicon.word_index[w]] += spec.child_skew_strength
        weights = weights / weights.sum()
        if spec.child_specific_noise:
            noise = PlantedNoise(spec.noise, inventory, rng)
        else:
            noise = shared_noise
        children.append(ChildProfile(child_id, weights, noise, preferred))
    return children


def _random_negative_form(inventory: PhonemeInventory, rng: random.Random) -> PhonemeString:
    return _random_word_form(inventory, rng)


def _planted_prior(gold: str | None, lexicon: Lexicon, spec: SyntheticSpec,
                   rng: random.Random) -> dict[str, float]:
    words = lexicon.words
    lo, hi = spec.prior_gold_mass
    spread = min(spec.prior_spread_words, len(words) - 1)
    if gold is not None:
        g = rng.uniform(lo, hi)
        others = rng.sample([w for w in words if w != gold], spread)
        raw = [rng.gammavariate(1.0, 1.0) for _ in others]
        total = sum(raw)
        probs = {gold: g}
        for w, r in zip(others, raw):
            probs[w] = (1.0 - g) * r / total
    else:
        others = rng.sample(list(words), spread + 1)
        raw = [rng.gammavariate(1.0, 1.0) for _ in others]
        total = sum(raw)
        probs = {w: r / total for w, r in zip(others, raw)}
    return probs


def _utterance_with_gap(gold: str | None, spec: SyntheticSpec,
                        rng: random.Random, frame_of: dict[str, str]) -> str:
    if gold is not None and rng.random() < spec.frame_prob:
        frame = frame_of[gold]
    else:
        frame = rng.choice(FRAME_WORDS)
    template = rng.choice(TEMPLATES)
    return template.format(f=frame)


def generate_world(spec: SyntheticSpec, seed: int) -> SyntheticWorld:
    """Sample the complete world and corpus in memory."""
    rng = random.Random(seed)
    inventory = _make_inventory(spec, rng)
    lexicon = _make_lexicon(spec, inventory, rng)
    children = _make_children(spec, inventory, lexicon, rng)
    # a fixed frame word per vocabulary word gives the trigram prior
    # something to learn from the gapped utterances
    frame_of = {w: rng.choice(FRAME_WORDS) for w in lexicon.words}

    tokens: list[VocalizationToken] = []
    priors: dict[str, dict[str, float]] = {}
    gold_by_token: dict[str, str] = {}
    counter = 0
    for child in children:
        for s in range(spec.sessions_per_child):
            session_id = f"{child.child_id}-s{s + 1:02d}"
            age = spec.age_start_months + s * spec.age_step_months
            for _ in range(spec.tokens_per_session):
                counter += 1
                token_id = f"t{counter:06d}"
                if rng.random() < spec.negatives_fraction:
                    gold = None
                    form = _random_negative_form(inventory, rng)
                else:
                    widx = rng.choices(range(len(lexicon.words)),
                                       weights=child.word_weights)[0]
                    gold = lexicon.words[widx]
                    citation = rng.choice(lexicon.pronunciations(gold))
                    form = child.noise.walk(citation, rng)
                    if syllable_count(form, inventory) not in (1, 2):
                        # rare: noise destroyed or added a nucleus; retry once
                        form = child.noise.walk(citation, rng)
                        if syllable_count(form, inventory) not in (1, 2):
                            form = citation
                    gold_by_token[token_id] = gold
                same = _utterance_with_gap(gold, spec, rng, frame_of)
                before = [rng.choice(CONTEXT_BEFORE)]
                after = [rng.choice(CONTEXT_AFTER)]
                if gold is not None and rng.random() < spec.echo_prob:
                    after.insert(0, f"CGV: yes the {gold}")
                tokens.append(VocalizationToken(
                    token_id=token_id,
                    child_id=child.child_id,
                    age_months=age,
                    session_id=session_id,
                    actual_phonemes=form,
                    gloss=gold,
                    context_before=tuple(before),
                    same_utterance=same,
                    context_after=tuple(after),
                ))
                priors[token_id] = _planted_prior(gold, lexicon, spec, rng)
    return SyntheticWorld(spec=spec, inventory=inventory, lexicon=lexicon,
                          children=children, tokens=tokens,
                          external_priors=priors, gold_by_token=gold_by_token)


def generate_synthetic_corpus(spec: SyntheticSpec, out_dir, seed: int) -> dict[str, Path]:
    """Write inventory, lexicon, corpus, and external prior files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = generate_world(spec, seed)
    paths = {
        "inventory": out / "inventory.tsv",
        "lexicon": out / "lexicon.tsv",
        "corpus": out / "corpus.jsonl",
        "external_priors": out / "external_priors.jsonl",
    }
    save_inventory(world.inventory, paths["inventory"])
    save_lexicon(world.lexicon, paths["lexicon"])
    # tokens are written in the normalized tagged form and reparsed on
    # ingestion, which must be a fixed point
    write_tokens(world.tokens, paths["corpus"])
    save_external_priors(world.external_priors, paths["external_priors"])
    return paths


class EditBallSampler:
    """Sample child forms from P(d | w) proportional to exp(-scale * cost)
    over the ball of strings within ``radius`` edits of a citation form.

    The likelihood families are improper over unbounded string space, so
    the generative reading truncates the support.  ``cost_fn(citation,
    candidate)`` defaults to plain edit distance; pass a path-sum cost to
    plant a lambda instead of a beta.
    """

    def __init__(self, lexicon: Lexicon, scale: float, rng: random.Random,
                 cost_fn=None, radius: int = 2):
        self.lexicon = lexicon
        self.scale = scale
        self.rng = rng
        self.cost_fn = cost_fn or (lambda cit, cand: float(edit_distance(cit, cand)))
        self.radius = radius
        self._cache: dict[tuple[str, ...], tuple[list[PhonemeString], list[float]]] = {}

    def _ball(self, citation: PhonemeString) -> list[PhonemeString]:
        symbols = self.lexicon.inventory.symbols
        seen = {citation.syms}
        frontier = [citation.syms]
        for _ in range(self.radius):
            new = []
            for syms in frontier:
                L = len(syms)
                for i in range(L):
                    for s in symbols:
                        if s != syms[i]:
                            cand = syms[:i] + (s,) + syms[i + 1:]
                            if cand not in seen:
                                seen.add(cand)
                                new.append(cand)
                    cand = syms[:i] + syms[i + 1:]
                    if cand not in seen:
                        seen.add(cand)
                        new.append(cand)
                for i in range(L + 1):
                    for s in symbols:
                        cand = syms[:i] + (s,) + syms[i:]
                        if cand not in seen:
                            seen.add(cand)
                            new.append(cand)
            frontier = new
        return [PhonemeString(s) for s in sorted(seen)]

    def sample(self, citation: PhonemeString) -> PhonemeString:
        key = citation.syms
        if key not in self._cache:
            ball = self._ball(citation)
            costs = [self.cost_fn(citation, cand) for cand in ball]
            finite = [(cand, c) for cand, c in zip(ball, costs) if math.isfinite(c)]
            weights = [math.exp(-self.scale * c) for _, c in finite]
            self._cache[key] = ([cand for cand, _ in finite], weights)
        ball, weights = self._cache[key]
        return self.rng.choices(ball, weights=weights)[0]


def theta_cost_fn(pair_model: PairModel):
    """Cost function planting a lambda: cost = path_sum under the model."""
    def cost(citation: PhonemeString, candidate: PhonemeString) -> float:
        return path_sum(pair_model, citation, candidate)
    return cost
