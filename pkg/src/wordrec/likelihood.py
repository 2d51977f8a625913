"""Pronunciation likelihoods P(d|w).

Two families over the same edit-lattice machinery:

* ``EditDistanceLikelihood``: exp(-beta * unit-cost edit distance).
* ``WfstLikelihood``: exp(-lambda * theta) where theta is the negative
  log of the total conditional probability of all monotone alignments
  from a citation form to the child form under a trained ``PairModel``.

Both are unnormalized; the posterior normalization absorbs constants.
Likelihood values and expectation counts are computed by the kernels in
``wordrec._kernels`` (compiled when available).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from wordrec import _kernels
from wordrec.errors import PairModelError, ValidationError
from wordrec.phon import EPSILON, Lexicon, PhonemeInventory, PhonemeString

NEG_INF = float("-inf")


@dataclass(frozen=True)
class EditDistanceLikelihood:
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta}")


class PairModel:
    """Probability table over edit events (input symbol or eps -> output
    symbol or eps), excluding eps->eps.

    Trained models hold a joint distribution over events; the conditional
    table (each input symbol's outgoing arcs normalized to sum 1) is
    derived from it exactly once, here.  Models built directly from arc
    weights (``from_arc_weights``) carry no joint and use the given
    weights as-is; they exist for cost-style configurations such as the
    equal-edit-cost table, whose best-path score is plain edit distance.
    """

    def __init__(self, inventory: PhonemeInventory, joint: np.ndarray | None,
                 log_conditional: np.ndarray):
        self.inventory = inventory
        self.joint = joint
        self.log_conditional = log_conditional

    @classmethod
    def from_joint(cls, joint: np.ndarray, inventory: PhonemeInventory) -> "PairModel":
        n = len(inventory)
        joint = np.asarray(joint, dtype=np.float64)
        if joint.shape != (n + 1, n + 1):
            raise PairModelError(f"joint table must be {(n + 1, n + 1)}, got {joint.shape}")
        if np.any(joint < 0):
            raise PairModelError("joint probabilities must be non-negative")
        if joint[0, 0] != 0.0:
            raise PairModelError("the eps->eps event is not permitted")
        total = float(joint.sum())
        if abs(total - 1.0) > 1e-9:
            raise PairModelError(f"joint table sums to {total!r}, expected 1")
        cond = np.zeros_like(joint)
        with np.errstate(invalid="ignore", divide="ignore"):
            row_sums = joint.sum(axis=1, keepdims=True)
            cond = np.divide(joint, row_sums, out=cond, where=row_sums > 0)
        logc = np.full_like(cond, NEG_INF)
        np.log(cond, out=logc, where=cond > 0)
        logc[0, 0] = NEG_INF
        return cls(inventory, joint, np.ascontiguousarray(logc))

    @classmethod
    def from_arc_weights(cls, weights: np.ndarray, inventory: PhonemeInventory) -> "PairModel":
        n = len(inventory)
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n + 1, n + 1):
            raise PairModelError(f"weight table must be {(n + 1, n + 1)}, got {w.shape}")
        if np.any(w < 0):
            raise PairModelError("arc weights must be non-negative")
        logw = np.full_like(w, NEG_INF)
        np.log(w, out=logw, where=w > 0)
        logw[0, 0] = NEG_INF
        return cls(inventory, None, np.ascontiguousarray(logw))

    @classmethod
    def uniform(cls, inventory: PhonemeInventory) -> "PairModel":
        n = len(inventory)
        joint = np.full((n + 1, n + 1), 1.0 / ((n + 1) ** 2 - 1))
        joint[0, 0] = 0.0
        return cls.from_joint(joint, inventory)

    @classmethod
    def equal_edit_cost(cls, inventory: PhonemeInventory,
                        edit_weight: float = math.exp(-1.0)) -> "PairModel":
        """Matches carry weight 1 and every true edit the same weight < 1,
        so the best-path score is edit_weight_cost * edit distance."""
        if not 0 < edit_weight < 1:
            raise PairModelError("edit_weight must be in (0, 1)")
        n = len(inventory)
        w = np.full((n + 1, n + 1), edit_weight)
        w[0, 0] = 0.0
        for i in range(1, n + 1):
            w[i, i] = 1.0
        return cls.from_arc_weights(w, inventory)

    def conditional(self) -> np.ndarray:
        return np.exp(self.log_conditional)

    def validate(self, tol: float = 1e-9) -> None:
        """Check the joint and conditional table invariants."""
        if self.joint is not None:
            total = float(self.joint.sum())
            if abs(total - 1.0) > tol:
                raise PairModelError(f"joint table sums to {total!r}")
            cond = self.conditional()
            for x in range(cond.shape[0]):
                row = cond[x]
                if self.joint[x].sum() == 0:
                    continue  # symbol unseen in training, no arcs to normalize
                s = float(row.sum())
                if abs(s - 1.0) > tol:
                    raise PairModelError(f"conditional row {x} sums to {s!r}")

    def save(self, path) -> None:
        if self.joint is None:
            raise PairModelError("only joint-backed models serialize")
        inv = self.inventory
        with open(path, "w", encoding="utf-8") as fh:
            for x in range(len(inv) + 1):
                for y in range(len(inv) + 1):
                    if x == 0 and y == 0:
                        continue
                    fh.write(f"{inv.symbol(x)}\t{inv.symbol(y)}\t{self.joint[x, y]:.17g}\n")

    @classmethod
    def load(cls, path, inventory: PhonemeInventory) -> "PairModel":
        n = len(inventory)
        joint = np.zeros((n + 1, n + 1))
        with open(path, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise PairModelError(f"line {line_no}: expected `input<TAB>output<TAB>prob`")
                x = inventory.index(parts[0]) if parts[0] != EPSILON else 0
                y = inventory.index(parts[1]) if parts[1] != EPSILON else 0
                if x == 0 and y == 0:
                    raise PairModelError(f"line {line_no}: eps->eps event is not permitted")
                try:
                    joint[x, y] = float(parts[2])
                except ValueError:
                    raise PairModelError(f"line {line_no}: bad probability {parts[2]!r}") from None
        return cls.from_joint(joint, inventory)


@dataclass(frozen=True)
class WfstLikelihood:
    pair_model: PairModel
    lam: float
    best_path_only: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError(f"lambda must be non-negative, got {self.lam}")


@dataclass(frozen=True)
class EmTrainConfig:
    max_iters: int = 50
    tol: float = 1e-6
    learning_rate: float = 1.0
    event_floor: float = 0.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if not 0 < self.learning_rate <= 1:
            raise ValidationError("learning_rate must be in (0, 1]")
        if self.event_floor < 0:
            raise ValidationError("event_floor must be non-negative")


def edit_distance(a: PhonemeString, b: PhonemeString) -> int:
    """Unit-cost Levenshtein distance over phoneme symbols."""
    ids: dict[str, int] = {}
    ea = [ids.setdefault(s, len(ids) + 1) for s in a.syms]
    eb = [ids.setdefault(s, len(ids) + 1) for s in b.syms]
    return int(_kernels.levenshtein(ea, eb))


def min_edit_distances(d: PhonemeString, lexicon: Lexicon) -> np.ndarray:
    """Per candidate word, the smallest distance over its citation forms."""
    enc_d = lexicon.inventory.encode(d)
    out = np.empty(len(lexicon.words), dtype=np.int64)
    for i, word in enumerate(lexicon.words):
        out[i] = min(_kernels.levenshtein(enc, enc_d) for enc in lexicon.encoded(word))
    return out


def edit_likelihood(model: EditDistanceLikelihood, word: str, d: PhonemeString,
                    lexicon: Lexicon) -> float:
    dist = min(edit_distance(p, d) for p in lexicon.pronunciations(word))
    return math.exp(-model.beta * dist)


def edit_log_likelihoods(model: EditDistanceLikelihood, d: PhonemeString,
                         lexicon: Lexicon) -> np.ndarray:
    """Natural-log unnormalized likelihood for every candidate word."""
    return -model.beta * min_edit_distances(d, lexicon).astype(np.float64)


def path_sum(pm: PairModel, citation: PhonemeString, child: PhonemeString,
             best_path_only: bool = False) -> float:
    """theta: negative log of the summed conditional probability of all
    monotone alignments from citation to child.

    +inf when every alignment crosses a zero-probability arc.  The sum
    over alignments is not itself a probability, so theta can dip below
    zero for insertion-heavy models; callers get the raw value.
    """
    inv = pm.inventory
    a = inv.encode(citation)
    b = inv.encode(child)
    if best_path_only:
        return -_kernels.lattice_best(pm.log_conditional, a, b)
    return -_kernels.lattice_logsum(pm.log_conditional, a, b)


def min_path_sums(pm: PairModel, d: PhonemeString, lexicon: Lexicon,
                  best_path_only: bool = False) -> np.ndarray:
    """Per candidate word, the smallest theta over its citation forms."""
    enc_d = lexicon.inventory.encode(d)
    score = _kernels.lattice_best if best_path_only else _kernels.lattice_logsum
    logc = pm.log_conditional
    out = np.empty(len(lexicon.words), dtype=np.float64)
    for i, word in enumerate(lexicon.words):
        out[i] = -max(score(logc, enc, enc_d) for enc in lexicon.encoded(word))
    return out


def wfst_likelihood(model: WfstLikelihood, word: str, d: PhonemeString,
                    lexicon: Lexicon) -> float:
    if model.lam == 0.0:
        lexicon.pronunciations(word)  # still enforce membership
        return 1.0
    theta = min(path_sum(model.pair_model, p, d, model.best_path_only)
                for p in lexicon.pronunciations(word))
    if theta == float("inf"):
        return 0.0
    return math.exp(-model.lam * theta)


def wfst_log_likelihoods(model: WfstLikelihood, d: PhonemeString,
                         lexicon: Lexicon) -> np.ndarray:
    """Natural-log unnormalized likelihood for every candidate word."""
    if model.lam == 0.0:
        return np.zeros(len(lexicon.words))
    thetas = min_path_sums(model.pair_model, d, lexicon, model.best_path_only)
    out = np.empty_like(thetas)
    finite = np.isfinite(thetas)
    out[finite] = -model.lam * thetas[finite]
    out[~finite] = NEG_INF
    return out


def em_train_pair_model(pairs: Sequence[tuple[PhonemeString, PhonemeString]],
                        inventory: PhonemeInventory,
                        cfg: EmTrainConfig = EmTrainConfig()) -> PairModel:
    """Fit the joint edit-event table by expectation maximization.

    E-step: forward-backward over each pair's edit lattice under the
    current joint table.  M-step: renormalize the expected event counts,
    interpolated with the old table by ``learning_rate`` (1.0 replaces
    it outright).  Stops when mean per-pair log-likelihood improves by
    less than ``tol`` or after ``max_iters`` iterations.

    The per-iteration mean log-likelihood trace is attached to the
    returned model as ``em_history``.
    """
    if not pairs:
        raise ValidationError("cannot train a pair model on an empty pair list")
    n = len(inventory)
    encoded = []
    for citation, child in pairs:
        if len(citation) == 0 and len(child) == 0:
            warnings.warn("skipping pair with both strings empty")
            continue
        encoded.append((inventory.encode(citation), inventory.encode(child)))
    if not encoded:
        raise ValidationError("no usable pairs after skipping empty ones")

    joint = np.full((n + 1, n + 1), 1.0 / ((n + 1) ** 2 - 1))
    joint[0, 0] = 0.0
    history: list[float] = []

    for _ in range(cfg.max_iters):
        logj = np.full_like(joint, NEG_INF)
        np.log(joint, out=logj, where=joint > 0)
        logj = np.ascontiguousarray(logj)
        counts = np.zeros_like(joint)
        ll = 0.0
        for a, b in encoded:
            ll += _kernels.em_accumulate(logj, a, b, counts)
        ll /= len(encoded)
        history.append(ll)

        total = counts.sum()
        if total <= 0:
            warnings.warn("all pairs have zero probability; stopping early")
            break
        new_joint = counts / total
        new_joint[0, 0] = 0.0
        joint = cfg.learning_rate * new_joint + (1.0 - cfg.learning_rate) * joint

        if len(history) >= 2 and history[-1] - history[-2] < cfg.tol:
            break

    if cfg.event_floor > 0:
        joint = joint + cfg.event_floor
        joint[0, 0] = 0.0
        joint = joint / joint.sum()

    model = PairModel.from_joint(joint / joint.sum(), inventory)
    model.em_history = tuple(history)
    return model


def training_pairs(tokens, lexicon: Lexicon) -> list[tuple[PhonemeString, PhonemeString]]:
    """(citation, child) pairs from glossed tokens, nearest citation first.

    The citation form is the pronunciation with the smallest edit
    distance to the child form, matching how likelihoods pick forms.
    """
    out = []
    for tok in tokens:
        if tok.gloss is None:
            continue
        best = min(lexicon.pronunciations(tok.gloss),
                   key=lambda p: (edit_distance(p, tok.actual_phonemes), p.syms))
        out.append((best, tok.actual_phonemes))
    return out


def _scale_grid(grid: tuple[float, float, float]) -> np.ndarray:
    lo, hi, step = grid
    if step <= 0 or hi < lo:
        raise ValidationError(f"bad grid {grid!r}")
    return np.round(np.arange(lo, hi + step / 2, step), 10)


def fit_scale_parameter(likelihood_kind: str,
                        grid: tuple[float, float, float],
                        dev_tokens,
                        prior,
                        lexicon: Lexicon,
                        pair_model: PairModel | None = None,
                        best_path_only: bool = False) -> float:
    """Grid-search beta (edit) or lambda (wfst) by mean posterior
    probability of the gold gloss over a development set.

    Emits a warning when the argmax sits on a grid boundary or the score
    sequence is not unimodal across the grid.
    """
    if likelihood_kind not in ("edit", "wfst"):
        raise ValidationError(f"unknown likelihood kind {likelihood_kind!r}")
    if likelihood_kind == "wfst" and pair_model is None:
        raise ValidationError("fitting lambda requires a pair model")
    dev_tokens = list(dev_tokens)
    if not dev_tokens:
        raise ValidationError("empty development set")
    for tok in dev_tokens:
        if tok.gloss is None:
            raise ValidationError(f"dev token {tok.token_id} has no gloss")

    values = _scale_grid(grid)

    # the per-token cost vector (distance or theta) does not depend on
    # the scale parameter, so compute it once per token
    costs = []
    gold_idx = []
    prior_vecs = []
    for tok in dev_tokens:
        if likelihood_kind == "edit":
            costs.append(min_edit_distances(tok.actual_phonemes, lexicon).astype(np.float64))
        else:
            costs.append(min_path_sums(pair_model, tok.actual_phonemes, lexicon,
                                       best_path_only))
        gold_idx.append(lexicon.word_index[tok.gloss])
        prior_vecs.append(prior.distribution(tok))

    scores = np.empty(len(values))
    for gi, val in enumerate(values):
        total = 0.0
        for cost, g, pv in zip(costs, gold_idx, prior_vecs):
            if val == 0.0:
                loglik = np.zeros_like(cost)
            else:
                loglik = np.where(np.isfinite(cost), -val * cost, NEG_INF)
            with np.errstate(divide="ignore"):
                logpost = loglik + np.log(pv)
            m = logpost.max()
            if m == NEG_INF:
                continue  # gold gets zero mass, contributes nothing
            post = np.exp(logpost - m)
            post /= post.sum()
            total += post[g]
        scores[gi] = total / len(dev_tokens)

    best_i = int(np.argmax(scores))
    if best_i in (0, len(values) - 1) and len(values) > 1:
        warnings.warn(f"scale argmax {values[best_i]} lies on the grid boundary")
    diffs = np.diff(scores)
    signs = [s for s in np.sign(diffs) if s != 0]
    descents = sum(1 for prev, cur in zip(signs, signs[1:]) if prev < 0 and cur > 0)
    if descents > 0:
        warnings.warn("score sequence over the grid is not unimodal")
    return float(values[best_i])
