"""Experiment harness: intelligibility classification, recovery metrics,
and per-partition model comparison.

Statistical conventions:

* ROC orientation is fixed so that LOW posterior entropy predicts an
  intelligible (word-interpreted) token; AUC > 0.5 means entropy is
  informative in that direction.
* Infinite surprisals are never averaged; every aggregate excludes them
  and reports how many were excluded.
* The Monte Carlo null for the crossfit matrix permutes entries within
  each row (models fixed, test partitions exchangeable).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from wordrec.corpus import VocalizationToken, age_bin
from wordrec.errors import EvaluationError, NoInterpretableCandidate
from wordrec.likelihood import edit_distance
from wordrec.phon import Lexicon
from wordrec.recognizer import PosteriorResult, score_token


@dataclass(frozen=True)
class RocResult:
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float
    n_pos: int
    n_neg: int


@dataclass(frozen=True)
class ModelComparison:
    model_a: str
    model_b: str
    statistic: float
    p_value: float
    method: str
    n: int = 0
    n_excluded: int = 0


@dataclass(frozen=True)
class StratumStats:
    n: int
    mean_surprisal: float
    sem: float
    n_infinite: int


@dataclass(frozen=True)
class StratifiedReport:
    key: str
    strata: dict[str, StratumStats]


@dataclass(frozen=True)
class AggregateMetrics:
    mean_surprisal: float
    mean_rank: float
    top1_rate: float
    n: int
    n_infinite_surprisal: int


@dataclass(frozen=True)
class CrossfitResult:
    labels: tuple[str, ...]
    matrix: np.ndarray          # rows: models, columns: test partitions
    counts: np.ndarray
    n_infinite: np.ndarray


def intelligibility_auc(entropies_pos: Sequence[float],
                        entropies_neg: Sequence[float]) -> RocResult:
    """ROC for classifying intelligible vs. unintelligible by entropy.

    ``entropies_pos`` are the word-interpreted tokens.  A token is
    classified intelligible when its entropy falls at or below the
    threshold; ties across classes get half credit, so the trapezoidal
    AUC equals the Mann-Whitney statistic.
    """
    pos = np.asarray(entropies_pos, dtype=np.float64)
    neg = np.asarray(entropies_neg, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise EvaluationError("both intelligible and unintelligible tokens are required")

    thresholds = np.unique(np.concatenate([pos, neg]))
    tpr = np.array([(pos <= t).mean() for t in thresholds])
    fpr = np.array([(neg <= t).mean() for t in thresholds])

    prev_f, prev_t, auc = 0.0, 0.0, 0.0
    for f, t in zip(fpr, tpr):
        auc += (f - prev_f) * (t + prev_t) / 2.0
        prev_f, prev_t = f, t
    return RocResult(thresholds=thresholds, tpr=tpr, fpr=fpr, auc=float(auc),
                     n_pos=len(pos), n_neg=len(neg))


def _midrank(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = len(x)
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j < n and xs[j] == xs[i]:
            j += 1
        ranks[i:j] = 0.5 * (i + j - 1) + 1.0
        i = j
    out = np.empty(n)
    out[order] = ranks
    return out


def _delong_components(pos: np.ndarray, neg: np.ndarray):
    m, n = len(pos), len(neg)
    tx = _midrank(pos)
    ty = _midrank(neg)
    tz = _midrank(np.concatenate([pos, neg]))
    auc = (tz[:m].sum() - m * (m + 1) / 2.0) / (m * n)
    v01 = (tz[:m] - tx) / n
    v10 = 1.0 - (tz[m:] - ty) / m
    return auc, v01, v10


def delong_test(scores_a: Sequence[float], scores_b: Sequence[float],
                labels: Sequence[bool], model_a: str = "A",
                model_b: str = "B") -> ModelComparison:
    """Paired DeLong test on two correlated AUCs over the same tokens.

    ``labels`` marks the positive class; higher scores must indicate the
    positive class for both models (pass negated entropies).
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if not (len(a) == len(b) == len(y)):
        raise EvaluationError("scores and labels must be aligned")
    if y.all() or not y.any():
        raise EvaluationError("both classes must be present")

    auc_a, v01_a, v10_a = _delong_components(a[y], a[~y])
    auc_b, v01_b, v10_b = _delong_components(b[y], b[~y])
    m, n = int(y.sum()), int((~y).sum())

    s01 = np.cov(np.stack([v01_a, v01_b]), ddof=1) if m > 1 else np.zeros((2, 2))
    s10 = np.cov(np.stack([v10_a, v10_b]), ddof=1) if n > 1 else np.zeros((2, 2))
    s = s01 / m + s10 / n
    var = s[0, 0] + s[1, 1] - 2.0 * s[0, 1]

    delta = auc_a - auc_b
    if var <= 0:
        if delta == 0.0:
            return ModelComparison(model_a, model_b, 0.0, 1.0, "delong", n=m + n)
        raise EvaluationError(
            f"DeLong variance estimate is zero but AUCs differ by {delta}; "
            f"scores are degenerate")
    z = delta / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return ModelComparison(model_a, model_b, float(z), float(p), "delong", n=m + n)


def paired_t_bonferroni(surprisals_by_model: Mapping[str, Sequence[float]],
                        m_comparisons: int | None = None) -> list[ModelComparison]:
    """All pairwise paired t-tests with Bonferroni-adjusted p-values.

    Tokens where either model's surprisal is infinite are excluded from
    that pair, with the exclusion count reported.  A zero-variance
    nonzero difference (e.g. a constant shift) gets an infinite
    statistic and p = 0.
    """
    models = list(surprisals_by_model)
    if len(models) < 2:
        raise EvaluationError("need at least two models to compare")
    vectors = {k: np.asarray(v, dtype=np.float64) for k, v in surprisals_by_model.items()}
    n_tokens = {len(v) for v in vectors.values()}
    if len(n_tokens) != 1:
        raise EvaluationError("surprisal vectors must be aligned on the same tokens")

    pairs = list(combinations(models, 2))
    m = m_comparisons if m_comparisons is not None else len(pairs)
    out = []
    for ma, mb in pairs:
        a, b = vectors[ma], vectors[mb]
        ok = np.isfinite(a) & np.isfinite(b)
        n_excluded = int((~ok).sum())
        a, b = a[ok], b[ok]
        if len(a) < 2:
            raise EvaluationError(f"fewer than 2 finite tokens for pair ({ma}, {mb})")
        d = a - b
        mean = d.mean()
        sd = d.std(ddof=1)
        if sd == 0.0:
            if mean == 0.0:
                t_stat, p = 0.0, 1.0
            else:
                t_stat = math.inf if mean > 0 else -math.inf
                p = 0.0
        else:
            t_stat = mean / (sd / math.sqrt(len(d)))
            p = 2.0 * float(stats.t.sf(abs(t_stat), df=len(d) - 1))
        p_adj = min(1.0, p * m)
        out.append(ModelComparison(ma, mb, float(t_stat), p_adj, "paired_t",
                                   n=len(d), n_excluded=n_excluded))
    return out


def aggregate_metrics(results: Sequence[PosteriorResult]) -> AggregateMetrics:
    """Mean surprisal / mean rank / top-1 rate over glossed results."""
    if not results:
        raise EvaluationError("no results to aggregate")
    for r in results:
        if r.gold is None:
            raise EvaluationError(f"token {r.token_id} has no gold word")
    surprisals = [r.gold_surprisal_bits for r in results]
    finite = [s for s in surprisals if math.isfinite(s)]
    n_inf = len(surprisals) - len(finite)
    mean_surprisal = sum(finite) / len(finite) if finite else math.inf
    mean_rank = sum(r.gold_rank for r in results) / len(results)
    top1 = sum(1 for r in results if r.gold_rank == 1) / len(results)
    return AggregateMetrics(mean_surprisal, mean_rank, top1, len(results), n_inf)


def _best_citation(tok: VocalizationToken, lexicon: Lexicon):
    return min(lexicon.pronunciations(tok.gloss),
               key=lambda p: (edit_distance(p, tok.actual_phonemes), p.syms))


def stratify(scored: Sequence[tuple[VocalizationToken, PosteriorResult]],
             key: str, lexicon: Lexicon | None = None) -> StratifiedReport:
    """Mean gold surprisal per stratum with SEM (sd/sqrt(n)) and counts.

    Keys: ``edit_distance`` and ``length_diff`` compare the child form
    with the gold word's closest citation form (these need a lexicon);
    ``age_bin`` buckets into 6-month bins; ``child`` groups by child id.
    """
    if key not in ("edit_distance", "length_diff", "age_bin", "child"):
        raise EvaluationError(f"unknown stratification key {key!r}")
    if key in ("edit_distance", "length_diff") and lexicon is None:
        raise EvaluationError(f"stratifying by {key} requires the lexicon")

    buckets: dict[str, list[float]] = {}
    for tok, res in scored:
        if res.gold is None:
            raise EvaluationError(f"token {tok.token_id} has no gold word")
        if key == "edit_distance":
            best = _best_citation(tok, lexicon)
            label = str(edit_distance(best, tok.actual_phonemes))
        elif key == "length_diff":
            best = _best_citation(tok, lexicon)
            label = str(len(tok.actual_phonemes) - len(best))
        elif key == "age_bin":
            start = age_bin(tok.age_months)
            label = f"{start}-{start + 5}"
        else:
            label = tok.child_id
        buckets.setdefault(label, []).append(res.gold_surprisal_bits)

    strata = {}
    for label in sorted(buckets):
        vals = buckets[label]
        finite = [v for v in vals if math.isfinite(v)]
        n_inf = len(vals) - len(finite)
        if finite:
            mean = sum(finite) / len(finite)
            if len(finite) >= 2:
                sd = math.sqrt(sum((v - mean) ** 2 for v in finite) / (len(finite) - 1))
                sem = sd / math.sqrt(len(finite))
            else:
                sem = 0.0
        else:
            mean, sem = math.inf, 0.0
        strata[label] = StratumStats(n=len(vals), mean_surprisal=mean,
                                     sem=sem, n_infinite=n_inf)
    return StratifiedReport(key=key, strata=strata)


def crossfit_matrix(partitioned_models: Mapping[str, tuple],
                    partitioned_tests: Mapping[str, Sequence[VocalizationToken]],
                    lexicon: Lexicon) -> CrossfitResult:
    """Mean gold surprisal of every partition's model on every
    partition's glossed test tokens.

    Rows are models, columns are test partitions, in one shared sorted
    label order.  Partitions missing a model or holding no glossed test
    tokens are dropped with a warning so the matrix stays square.
    """
    labels = []
    for label in sorted(set(partitioned_models) | set(partitioned_tests)):
        glossed = [t for t in partitioned_tests.get(label, []) if t.gloss is not None]
        if label not in partitioned_models:
            warnings.warn(f"partition {label!r} has no model; excluded")
        elif not glossed:
            warnings.warn(f"partition {label!r} has no glossed test tokens; excluded")
        else:
            labels.append(label)
    if not labels:
        raise EvaluationError("no evaluable partitions")

    k = len(labels)
    matrix = np.zeros((k, k))
    counts = np.zeros((k, k), dtype=np.int64)
    n_inf = np.zeros((k, k), dtype=np.int64)
    for i, model_label in enumerate(labels):
        prior, likelihood = partitioned_models[model_label]
        for j, test_label in enumerate(labels):
            tokens = [t for t in partitioned_tests[test_label] if t.gloss is not None]
            finite = []
            bad = 0
            for tok in tokens:
                try:
                    res = score_token(tok, prior, likelihood, lexicon, k=1)
                except NoInterpretableCandidate:
                    bad += 1
                    continue
                if math.isfinite(res.gold_surprisal_bits):
                    finite.append(res.gold_surprisal_bits)
                else:
                    bad += 1
            if not finite:
                raise EvaluationError(
                    f"model {model_label!r} assigns zero mass to every gold word "
                    f"in partition {test_label!r}")
            matrix[i, j] = sum(finite) / len(finite)
            counts[i, j] = len(finite)
            n_inf[i, j] = bad
    return CrossfitResult(labels=tuple(labels), matrix=matrix,
                          counts=counts, n_infinite=n_inf)


def monte_carlo_best_match(matrix: np.ndarray, n_sims: int,
                           seed: int) -> ModelComparison:
    """Permutation test for diagonal advantage in a crossfit matrix.

    Statistic: number of rows whose minimum sits on the diagonal.  Null:
    each row's entries are uniformly permuted (test partitions
    exchangeable for every model).  One-sided, add-one smoothed.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise EvaluationError("crossfit matrix must be square")
    if n_sims < 1:
        raise EvaluationError("n_sims must be >= 1")
    k = m.shape[0]

    def diag_mins(mat: np.ndarray) -> int:
        return int(sum(mat[i, i] == mat[i].min() for i in range(k)))

    observed = diag_mins(m)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_sims):
        permuted = np.stack([rng.permutation(m[i]) for i in range(k)])
        if diag_mins(permuted) >= observed:
            hits += 1
    p = (hits + 1) / (n_sims + 1)
    return ModelComparison("diagonal", "permuted-rows", float(observed), p,
                           "monte_carlo", n=k)
