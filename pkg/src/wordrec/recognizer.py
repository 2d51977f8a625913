"""Posterior inference over the candidate vocabulary.

Combines a prior vector with an unnormalized likelihood vector in log
space and derives the quantities the experiments consume: entropy of the
posterior, surprisal and rank of the gold word, and the top-k guesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from wordrec.corpus import VocalizationToken
from wordrec.errors import NoInterpretableCandidate, ValidationError
from wordrec.likelihood import (EditDistanceLikelihood, WfstLikelihood,
                                edit_log_likelihoods, wfst_log_likelihoods)
from wordrec.phon import Lexicon, PhonemeString

NEG_INF = float("-inf")


@dataclass(frozen=True)
class PosteriorResult:
    token_id: str
    probs: np.ndarray
    entropy_bits: float
    gold: str | None
    gold_surprisal_bits: float | None
    gold_rank: int | None
    top_k: tuple[tuple[str, float], ...]


def log_likelihood_vector(model, d: PhonemeString, lexicon: Lexicon) -> np.ndarray:
    """Natural-log unnormalized likelihoods; ``None`` scores prior-only."""
    if model is None:
        return np.zeros(len(lexicon.words))
    if isinstance(model, EditDistanceLikelihood):
        return edit_log_likelihoods(model, d, lexicon)
    if isinstance(model, WfstLikelihood):
        return wfst_log_likelihoods(model, d, lexicon)
    raise ValidationError(f"unknown likelihood model {type(model).__name__}")


def posterior_from_logs(log_prior: np.ndarray, log_lik: np.ndarray) -> np.ndarray:
    logp = log_prior + log_lik
    m = logp.max()
    if m == NEG_INF or not np.isfinite(m):
        raise NoInterpretableCandidate("every candidate has zero posterior mass")
    p = np.exp(logp - m)
    return p / p.sum()


def posterior(prior_vec: np.ndarray, likelihoods: np.ndarray) -> np.ndarray:
    """Normalized prior * likelihood over the candidate list."""
    prior_vec = np.asarray(prior_vec, dtype=np.float64)
    likelihoods = np.asarray(likelihoods, dtype=np.float64)
    if np.any(likelihoods < 0):
        raise ValidationError("likelihoods must be non-negative")
    with np.errstate(divide="ignore"):
        return posterior_from_logs(np.log(prior_vec), np.log(likelihoods))


def entropy_bits(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def surprisal_bits(p: np.ndarray, gold: str, vocab: Sequence[str]) -> float:
    try:
        idx = vocab.index(gold) if isinstance(vocab, (list, tuple)) else list(vocab).index(gold)
    except ValueError:
        raise ValidationError(f"gold word {gold!r} not in the candidate vocabulary") from None
    val = float(p[idx])
    return math.inf if val == 0.0 else -math.log2(val)


def rank_and_topk(p: np.ndarray, gold: str | None, k: int,
                  vocab: Sequence[str]) -> tuple[int | None, tuple[tuple[str, float], ...]]:
    """1-based rank of gold and the k best candidates.

    Order is descending probability; ties break lexicographically on the
    orthographic form.  ``vocab`` is sorted, so a stable argsort on the
    negated probabilities gives exactly that order.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    order = np.argsort(-p, kind="stable")
    top = tuple((vocab[i], float(p[i])) for i in order[:min(k, len(vocab))])
    if gold is None:
        return None, top
    try:
        gold_idx = vocab.index(gold) if isinstance(vocab, (list, tuple)) else list(vocab).index(gold)
    except ValueError:
        raise ValidationError(f"gold word {gold!r} not in the candidate vocabulary") from None
    rank = int(np.nonzero(order == gold_idx)[0][0]) + 1
    return rank, top


def score_token(token: VocalizationToken, prior, likelihood,
                lexicon: Lexicon, k: int = 10) -> PosteriorResult:
    """Full posterior pass for one token.

    ``likelihood`` is an EditDistanceLikelihood, a WfstLikelihood, or
    None for a prior-only model.  Raises NoInterpretableCandidate when
    every candidate's posterior mass is zero.
    """
    prior_vec = prior.distribution(token)
    log_lik = log_likelihood_vector(likelihood, token.actual_phonemes, lexicon)
    with np.errstate(divide="ignore"):
        probs = posterior_from_logs(np.log(prior_vec), log_lik)

    gold = token.gloss
    rank, top = rank_and_topk(probs, gold, k, lexicon.words)
    surprisal = None
    if gold is not None:
        surprisal = surprisal_bits(probs, gold, lexicon.words)
    return PosteriorResult(
        token_id=token.token_id,
        probs=probs,
        entropy_bits=entropy_bits(probs),
        gold=gold,
        gold_surprisal_bits=surprisal,
        gold_rank=rank,
        top_k=top,
    )


RESULT_COLUMNS = ("token_id", "child_id", "age_months", "model_id", "entropy_bits",
                  "gold", "gold_surprisal_bits", "gold_rank", "top1", "top1_prob")


def result_row(token: VocalizationToken, result: PosteriorResult, model_id: str) -> str:
    def fmt(x: float) -> str:
        return f"{x:.17g}"

    top1, top1_prob = result.top_k[0]
    cells = (
        token.token_id,
        token.child_id,
        str(token.age_months),
        model_id,
        fmt(result.entropy_bits),
        result.gold if result.gold is not None else "",
        fmt(result.gold_surprisal_bits) if result.gold_surprisal_bits is not None else "",
        str(result.gold_rank) if result.gold_rank is not None else "",
        top1,
        fmt(top1_prob),
    )
    return ",".join(cells)


def write_results_csv(rows: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            fh.write(row + "\n")
