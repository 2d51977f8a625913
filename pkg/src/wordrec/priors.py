"""Priors P(w|c) over the candidate vocabulary.

Every prior exposes ``distribution(token) -> np.ndarray`` aligned with a
fixed sorted candidate list and summing to 1.  Context enters only
through the trigram prior (which reads the token's gapped utterance) and
the external per-token prior file; the uniform and unigram priors ignore
the token entirely.
"""

from __future__ import annotations

import json
import math
import warnings
from typing import Iterable, Mapping, Sequence

import numpy as np

from wordrec.corpus import GAP_MARKER, VocalizationToken
from wordrec.errors import PriorError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

DEGENERATE_DISCOUNT = 0.75


def uniform_prior(vocab: Sequence[str]) -> np.ndarray:
    if len(vocab) == 0:
        raise PriorError("empty candidate vocabulary")
    return np.full(len(vocab), 1.0 / len(vocab))


class UniformPrior:
    def __init__(self, vocab: Sequence[str]):
        self.vocab = tuple(vocab)
        self._dist = uniform_prior(self.vocab)

    def distribution(self, token: VocalizationToken | None = None) -> np.ndarray:
        return self._dist.copy()


class UnigramPrior:
    """Pseudocount-smoothed relative frequencies, context-free."""

    def __init__(self, counts: Mapping[str, float], vocab: Sequence[str],
                 pseudocount: float = 0.001):
        if not pseudocount > 0:
            raise PriorError("pseudocount must be positive")
        if len(vocab) == 0:
            raise PriorError("empty candidate vocabulary")
        self.vocab = tuple(vocab)
        self.pseudocount = pseudocount
        self.counts = {w: float(counts.get(w, 0.0)) for w in self.vocab}
        vec = np.array([self.counts[w] + pseudocount for w in self.vocab])
        self._dist = vec / vec.sum()

    def distribution(self, token: VocalizationToken | None = None) -> np.ndarray:
        return self._dist.copy()


    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#pseudocount\t{self.pseudocount:.17g}\n")
            for w in self.vocab:
                fh.write(f"{w}\t{self.counts[w]:.17g}\n")

    @classmethod
    def load(cls, path, vocab: Sequence[str]) -> "UnigramPrior":
        pseudocount = 0.001
        counts: dict[str, float] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if parts[0] == "#pseudocount":
                    pseudocount = float(parts[1])
                elif len(parts) == 2:
                    counts[parts[0]] = float(parts[1])
                else:
                    raise PriorError(f"line {line_no}: malformed count record")
        return cls(counts, vocab, pseudocount)


def fit_unigram(train_words: Iterable[str], vocab: Sequence[str],
                pseudocount: float = 0.001) -> UnigramPrior:
    counts: dict[str, int] = {}
    vocab_set = set(vocab)
    for w in train_words:
        if w in vocab_set:
            counts[w] = counts.get(w, 0) + 1
    return UnigramPrior(counts, vocab, pseudocount)


def _count_of_counts_discount(values: Iterable[int], order: int) -> float:
    n1 = sum(1 for v in values if v == 1)
    n2 = sum(1 for v in values if v == 2)
    if n1 + 2 * n2 == 0:
        warnings.warn(f"degenerate counts at order {order}; "
                      f"using fixed discount {DEGENERATE_DISCOUNT}")
        return DEGENERATE_DISCOUNT
    return n1 / (n1 + 2 * n2)


class TrigramKNPrior:
    """Interpolated Kneser-Ney trigram over utterance tokens.

    Sentences are padded ``<s> <s> ... </s>``; speaker tags are ordinary
    tokens.  The trigram level uses raw counts, lower levels use
    continuation counts, and the unigram level interpolates down to a
    uniform base over the prediction vocabulary so every word (including
    ``<unk>``) keeps positive mass.  Query words never seen in training
    are mapped to ``<unk>``.

    Two query modes: ``continuation`` conditions on the two words before
    the gap; ``in_context`` scores the whole gapped utterance (the terms
    preceding the gap cancel in normalization and are skipped, and no
    end-of-sentence term is applied, so a gap in final position matches
    the continuation mode exactly).
    """

    MODES = ("continuation", "in_context")

    def __init__(self, trigram_counts: Mapping[tuple[str, str, str], int],
                 vocab: Sequence[str], mode: str = "continuation",
                 discounts: tuple[float, float, float] | None = None):
        if mode not in self.MODES:
            raise PriorError(f"mode must be one of {self.MODES}, got {mode!r}")
        if len(vocab) == 0:
            raise PriorError("empty candidate vocabulary")
        if not trigram_counts:
            raise PriorError("no trigram counts; train on at least one utterance")
        self.vocab = tuple(vocab)
        self.mode = mode
        self.tri = {k: int(v) for k, v in trigram_counts.items() if v > 0}

        # raw trigram totals and type counts per (u, v) context
        self.ctx2_total: dict[tuple[str, str], int] = {}
        self.ctx2_types: dict[tuple[str, str], int] = {}
        # continuation counts: distinct left extensions of (v, w)
        cont_bi: dict[tuple[str, str], set] = {}
        for (u, v, w), c in self.tri.items():
            self.ctx2_total[(u, v)] = self.ctx2_total.get((u, v), 0) + c
            self.ctx2_types[(u, v)] = self.ctx2_types.get((u, v), 0) + 1
            cont_bi.setdefault((v, w), set()).add(u)
        self.cont_bi = {k: len(s) for k, s in cont_bi.items()}

        self.ctx1_total: dict[str, int] = {}
        self.ctx1_types: dict[str, int] = {}
        cont_uni: dict[str, set] = {}
        for (v, w), c in self.cont_bi.items():
            self.ctx1_total[v] = self.ctx1_total.get(v, 0) + c
            self.ctx1_types[v] = self.ctx1_types.get(v, 0) + 1
            cont_uni.setdefault(w, set()).add(v)
        self.cont_uni = {k: len(s) for k, s in cont_uni.items()}
        self.uni_total = sum(self.cont_uni.values())
        self.uni_types = len(self.cont_uni)

        # prediction vocabulary: everything that ever follows a context
        # (includes </s>, never <s>), plus the unknown symbol
        self.pred_vocab = set(w for (_, _, w) in self.tri) | {UNK}
        self.known = set()
        for (u, v, w) in self.tri:
            self.known.update((u, v, w))

        if discounts is None:
            d3 = _count_of_counts_discount(self.tri.values(), 3)
            d2 = _count_of_counts_discount(self.cont_bi.values(), 2)
            d1 = _count_of_counts_discount(self.cont_uni.values(), 1)
            discounts = (d1, d2, d3)
        self.discounts = discounts

    def map_token(self, t: str) -> str:
        return t if t in self.known or t in (BOS, EOS) else UNK

    def _p1(self, w: str) -> float:
        d1 = self.discounts[0]
        base = 1.0 / len(self.pred_vocab)
        c = self.cont_uni.get(w, 0)
        return (max(c - d1, 0.0) / self.uni_total
                + d1 * self.uni_types / self.uni_total * base)

    def _p2(self, w: str, v: str) -> float:
        total = self.ctx1_total.get(v, 0)
        if total == 0:
            return self._p1(w)
        d2 = self.discounts[1]
        c = self.cont_bi.get((v, w), 0)
        return (max(c - d2, 0.0) / total
                + d2 * self.ctx1_types[v] / total * self._p1(w))

    def _p3(self, w: str, u: str, v: str) -> float:
        total = self.ctx2_total.get((u, v), 0)
        if total == 0:
            return self._p2(w, v)
        d3 = self.discounts[2]
        c = self.tri.get((u, v, w), 0)
        return (max(c - d3, 0.0) / total
                + d3 * self.ctx2_types[(u, v)] / total * self._p2(w, v))

    def conditional(self, w: str, context: tuple[str, str]) -> float:
        """P(w | u, v) over the full prediction vocabulary."""
        u, v = (self.map_token(t) for t in context)
        return self._p3(self.map_token(w), u, v)

    def distribution(self, token: VocalizationToken) -> np.ndarray:
        if self.mode == "continuation":
            context = _gap_context(token.same_utterance)
            return prior_continuation(self, context)
        return prior_in_context(self, token.same_utterance)

    def with_mode(self, mode: str) -> "TrigramKNPrior":
        out = TrigramKNPrior.__new__(TrigramKNPrior)
        out.__dict__.update(self.__dict__)
        if mode not in self.MODES:
            raise PriorError(f"mode must be one of {self.MODES}, got {mode!r}")
        out.mode = mode
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#mode\t{self.mode}\n")
            fh.write(f"#discounts\t{self.discounts[0]:.17g}"
                     f"\t{self.discounts[1]:.17g}\t{self.discounts[2]:.17g}\n")
            for key in sorted(self.tri):
                fh.write(f"{key[0]}\t{key[1]}\t{key[2]}\t{self.tri[key]}\n")

    @classmethod
    def load(cls, path, vocab: Sequence[str]) -> "TrigramKNPrior":
        mode = "continuation"
        discounts = None
        counts: dict[tuple[str, str, str], int] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if parts[0] == "#mode":
                    mode = parts[1]
                elif parts[0] == "#discounts":
                    discounts = tuple(float(x) for x in parts[1:4])
                elif len(parts) == 4:
                    counts[(parts[0], parts[1], parts[2])] = int(parts[3])
                else:
                    raise PriorError(f"line {line_no}: malformed n-gram record")
        return cls(counts, vocab, mode, discounts)


def tokenize_utterance(text: str) -> list[str]:
    return text.split()


def count_trigrams(utterances: Iterable[str]) -> dict[tuple[str, str, str], int]:
    counts: dict[tuple[str, str, str], int] = {}
    for utt in utterances:
        toks = [BOS, BOS] + tokenize_utterance(utt) + [EOS]
        for i in range(len(toks) - 2):
            key = (toks[i], toks[i + 1], toks[i + 2])
            counts[key] = counts.get(key, 0) + 1
    return counts


def fit_trigram_kn(training_utterances: Iterable[str], vocab: Sequence[str],
                   mode: str = "continuation") -> TrigramKNPrior:
    """Train on tagged utterance texts, e.g. ``[CHI] want cookie``."""
    counts = count_trigrams(training_utterances)
    if not counts:
        raise PriorError("no training utterances")
    return TrigramKNPrior(counts, vocab, mode)


def _gap_context(utterance_with_gap: str) -> tuple[str, str]:
    toks = tokenize_utterance(utterance_with_gap)
    try:
        g = toks.index(GAP_MARKER)
    except ValueError:
        raise PriorError(f"utterance has no {GAP_MARKER}: {utterance_with_gap!r}") from None
    padded = [BOS, BOS] + toks
    return (padded[g], padded[g + 1])


def prior_continuation(model: TrigramKNPrior, context: tuple[str, str]) -> np.ndarray:
    """KN trigram continuation distribution restricted to the candidates."""
    u, v = (model.map_token(t) for t in context)
    vec = np.array([model._p3(model.map_token(w), u, v) for w in model.vocab])
    return vec / vec.sum()


def prior_in_context(model: TrigramKNPrior, utterance_with_gap: str) -> np.ndarray:
    """Whole-utterance probability with each candidate at the gap,
    renormalized over the candidates (leading terms cancel)."""
    toks = tokenize_utterance(utterance_with_gap)
    try:
        g = toks.index(GAP_MARKER)
    except ValueError:
        raise PriorError(f"utterance has no {GAP_MARKER}: {utterance_with_gap!r}") from None
    mapped = [model.map_token(t) for t in toks]
    padded = [BOS, BOS] + mapped

    logp = np.empty(len(model.vocab))
    for wi, w in enumerate(model.vocab):
        padded[g + 2] = model.map_token(w)
        acc = 0.0
        # terms from the gap word through the last word; everything
        # earlier is candidate-independent and cancels
        for j in range(g, len(toks)):
            acc += math.log(model._p3(padded[j + 2], padded[j], padded[j + 1]))
        logp[wi] = acc
    logp -= logp.max()
    vec = np.exp(logp)
    return vec / vec.sum()


class ExternalPrior:
    """Per-token distributions supplied by an outside model.

    Words missing from a token's record get ``floor`` mass; the vector
    is then renormalized over the candidate list.
    """

    def __init__(self, table: Mapping[str, Mapping[str, float]],
                 vocab: Sequence[str], floor: float = 1e-10):
        if floor < 0:
            raise PriorError("floor must be non-negative")
        if len(vocab) == 0:
            raise PriorError("empty candidate vocabulary")
        self.vocab = tuple(vocab)
        self.floor = floor
        self.word_index = {w: i for i, w in enumerate(self.vocab)}
        self.table: dict[str, np.ndarray] = {}
        for token_id, probs in table.items():
            vec = np.full(len(self.vocab), floor, dtype=np.float64)
            for word, p in probs.items():
                if p < 0:
                    raise PriorError(f"token {token_id!r}: negative probability for {word!r}")
                idx = self.word_index.get(word)
                if idx is not None:
                    vec[idx] = p
            total = vec.sum()
            if total <= 0:
                raise PriorError(f"token {token_id!r}: all-zero prior mass with floor 0")
            self.table[token_id] = vec / total

    def distribution(self, token: VocalizationToken) -> np.ndarray:
        try:
            return self.table[token.token_id].copy()
        except KeyError:
            raise PriorError(f"no external prior for token {token.token_id!r}") from None


def load_external_priors(path, vocab: Sequence[str], floor: float = 1e-10) -> ExternalPrior:
    table: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PriorError(f"line {line_no}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "token_id" not in obj or "probs" not in obj:
                raise PriorError(f"line {line_no}: expected {{token_id, probs}}")
            token_id = obj["token_id"]
            if token_id in table:
                raise PriorError(f"line {line_no}: duplicate token_id {token_id!r}")
            probs = obj["probs"]
            if not isinstance(probs, dict):
                raise PriorError(f"line {line_no}: probs must be an object")
            table[token_id] = {str(w): float(p) for w, p in probs.items()}
    return ExternalPrior(table, vocab, floor)


def save_external_priors(table: Mapping[str, Mapping[str, float]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token_id in table:
            fh.write(json.dumps({"token_id": token_id, "probs": dict(table[token_id])},
                                ensure_ascii=False) + "\n")
