"""End-to-end orchestration: load, split, train, fit, score, report.

Every stage is deterministic for a fixed config and seed; scoring runs
token-parallel with order-preserving collection, so thread count never
changes the output bytes.  On a stage failure, everything written so far
moves to a quarantine directory and the stage name is surfaced.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import shutil
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

import wordrec
from wordrec import corpus as corpus_mod
from wordrec import evaluation as eval_mod
from wordrec import likelihood as lik_mod
from wordrec import priors as prior_mod
from wordrec import recognizer as rec_mod
from wordrec._kernels import BACKEND
from wordrec.corpus import GAP_MARKER, VocalizationToken
from wordrec.errors import (NoInterpretableCandidate, PipelineStageError,
                            ValidationError)
from wordrec.phon import Lexicon, filter_candidate_vocabulary, load_inventory, load_lexicon

DEFAULT_BETA_GRID = (1.5, 4.5, 0.1)
DEFAULT_LAMBDA_GRID = (0.0, 2.0, 0.1)

PRIOR_SPECS = ("uniform", "unigram", "trigram-continuation", "trigram-incontext", "external")
LIKELIHOOD_SPECS = ("none", "edit", "wfst")


@dataclass(frozen=True)
class RosterEntry:
    label: str
    prior: str
    likelihood: str


@dataclass
class RunConfig:
    inventory: str
    lexicon: str
    corpus: str
    out_dir: str
    external_priors: str | None = None
    seed: int = 0
    threads: int = 1
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    min_word_count: int = 0
    beta_grid: tuple[float, float, float] = DEFAULT_BETA_GRID
    lambda_grid: tuple[float, float, float] = DEFAULT_LAMBDA_GRID
    age_threshold_months: int = 30
    dev_sample: int = 5000
    em_max_iters: int = 30
    em_tol: float = 1e-6
    em_learning_rate: float = 1.0
    em_event_floor: float = 1e-6
    n_sims: int = 10000
    top_k: int = 5
    roster: tuple[RosterEntry, ...] = ()

    @classmethod
    def from_json(cls, path, **overrides) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw, **overrides)

    @classmethod
    def from_dict(cls, raw: dict, **overrides) -> "RunConfig":
        data = dict(raw)
        data.update({k: v for k, v in overrides.items() if v is not None})
        em = data.pop("em", {})
        for k, v in em.items():
            data[f"em_{k}"] = v
        roster = tuple(RosterEntry(label=r["label"], prior=r["prior"],
                                   likelihood=r["likelihood"])
                       for r in data.pop("roster", []))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        try:
            cfg = cls(roster=roster, **{k: v for k, v in data.items() if k != "roster"})
        except TypeError as exc:
            raise ValidationError(f"incomplete config: {exc}") from None
        cfg.fractions = tuple(cfg.fractions)
        cfg.beta_grid = tuple(cfg.beta_grid)
        cfg.lambda_grid = tuple(cfg.lambda_grid)
        return cfg

    def to_dict(self) -> dict:
        d = {
            "inventory": self.inventory, "lexicon": self.lexicon,
            "corpus": self.corpus, "out_dir": self.out_dir,
            "external_priors": self.external_priors,
            "seed": self.seed, "threads": self.threads,
            "fractions": list(self.fractions),
            "min_word_count": self.min_word_count,
            "beta_grid": list(self.beta_grid),
            "lambda_grid": list(self.lambda_grid),
            "age_threshold_months": self.age_threshold_months,
            "dev_sample": self.dev_sample,
            "em": {"max_iters": self.em_max_iters, "tol": self.em_tol,
                   "learning_rate": self.em_learning_rate,
                   "event_floor": self.em_event_floor},
            "n_sims": self.n_sims, "top_k": self.top_k,
            "roster": [{"label": r.label, "prior": r.prior, "likelihood": r.likelihood}
                       for r in self.roster],
        }
        return d

    def config_hash(self) -> str:
        # threads are execution detail, not an input; they must not
        # change the recorded identity of a run
        d = self.to_dict()
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def validate(self) -> None:
        for name in ("inventory", "lexicon", "corpus"):
            p = getattr(self, name)
            if not Path(p).exists():
                raise ValidationError(f"{name} path does not exist: {p}")
        if self.external_priors is not None and not Path(self.external_priors).exists():
            raise ValidationError(f"external_priors path does not exist: {self.external_priors}")
        labels = [r.label for r in self.roster]
        if len(set(labels)) != len(labels):
            raise ValidationError("roster labels must be unique")
        if not self.roster:
            raise ValidationError("roster must contain at least one entry")
        for r in self.roster:
            pspec = r.prior.split(":", 1)[0]
            lspec = r.likelihood.split(":", 1)[0]
            if pspec not in PRIOR_SPECS:
                raise ValidationError(f"unknown prior spec {r.prior!r}")
            if lspec not in LIKELIHOOD_SPECS:
                raise ValidationError(f"unknown likelihood spec {r.likelihood!r}")
            if pspec == "external" and ":" not in r.prior and self.external_priors is None:
                raise ValidationError(f"roster entry {r.label!r} needs an external prior file")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")


def default_roster() -> tuple[RosterEntry, ...]:
    return (
        RosterEntry("external-wfst", "external", "wfst"),
        RosterEntry("external-edit", "external", "edit"),
        RosterEntry("external-none", "external", "none"),
        RosterEntry("trigram-cont-wfst", "trigram-continuation", "wfst"),
        RosterEntry("trigram-incontext-wfst", "trigram-incontext", "wfst"),
        RosterEntry("unigram-wfst", "unigram", "wfst"),
        RosterEntry("uniform-wfst", "uniform", "wfst"),
    )


@dataclass
class PipelineState:
    """Everything the stages hand to each other."""
    config: RunConfig
    inventory: object = None
    lexicon: Lexicon | None = None
    tokens: list = field(default_factory=list)
    split: object = None
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    test: list = field(default_factory=list)
    pair_model: object = None
    beta: float | None = None
    lam: float | None = None
    priors: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)     # label -> list[PosteriorResult]
    skipped: dict = field(default_factory=dict)     # label -> n unscorable
    written: list = field(default_factory=list)


def _filled_utterance(tok: VocalizationToken) -> str:
    return tok.same_utterance.replace(GAP_MARKER, tok.gloss)


def _stage_load(state: PipelineState) -> None:
    cfg = state.config
    state.inventory = load_inventory(cfg.inventory)
    state.lexicon = load_lexicon(cfg.lexicon, state.inventory)


def _stage_ingest(state: PipelineState) -> None:
    cfg = state.config
    tokens = corpus_mod.ingest(cfg.corpus, state.lexicon, state.inventory)
    counts: dict[str, int] = {}
    for t in tokens:
        if t.gloss is not None:
            counts[t.gloss] = counts.get(t.gloss, 0) + 1
    state.lexicon = filter_candidate_vocabulary(state.lexicon, counts, cfg.min_word_count)
    # re-apply the vocabulary criterion against the filtered candidates
    state.tokens = [t for t in tokens if t.gloss is None or t.gloss in state.lexicon]
    if not state.tokens:
        raise ValidationError("no tokens survive the inclusion criteria")


def _stage_split(state: PipelineState) -> None:
    cfg = state.config
    state.split = corpus_mod.make_split(state.tokens, cfg.seed, cfg.fractions)
    by_id = {t.token_id: t for t in state.tokens}
    state.train = [by_id[i] for i in sorted(state.split.train)]
    state.validation = [by_id[i] for i in sorted(state.split.validation)]
    state.test = [by_id[i] for i in sorted(state.split.test)]


def _em_config(cfg: RunConfig) -> lik_mod.EmTrainConfig:
    return lik_mod.EmTrainConfig(max_iters=cfg.em_max_iters, tol=cfg.em_tol,
                                 learning_rate=cfg.em_learning_rate,
                                 event_floor=cfg.em_event_floor)


def _stage_train_pair_model(state: PipelineState) -> None:
    pairs = lik_mod.training_pairs(state.train, state.lexicon)
    if not pairs:
        raise ValidationError("no glossed training tokens to align")
    state.pair_model = lik_mod.em_train_pair_model(pairs, state.inventory,
                                                   _em_config(state.config))


def _dev_tokens(state: PipelineState) -> list[VocalizationToken]:
    cfg = state.config
    pool = [t for t in state.validation if t.gloss is not None]
    if not pool:
        warnings.warn("validation split has no glossed tokens; fitting scales on train")
        pool = [t for t in state.train if t.gloss is not None]
    if len(pool) > cfg.dev_sample:
        rng = random.Random(cfg.seed)
        pool = rng.sample(pool, cfg.dev_sample)
        pool.sort(key=lambda t: t.token_id)
    return pool


def _stage_fit_scales(state: PipelineState) -> None:
    cfg = state.config
    dev = _dev_tokens(state)
    uniform = prior_mod.UniformPrior(state.lexicon.words)
    state.beta = lik_mod.fit_scale_parameter("edit", cfg.beta_grid, dev, uniform,
                                             state.lexicon)
    state.lam = lik_mod.fit_scale_parameter("wfst", cfg.lambda_grid, dev, uniform,
                                            state.lexicon, pair_model=state.pair_model)


def _stage_fit_priors(state: PipelineState) -> None:
    cfg = state.config
    words = state.lexicon.words
    state.priors["uniform"] = prior_mod.UniformPrior(words)
    train_glosses = [t.gloss for t in state.train if t.gloss is not None]
    state.priors["unigram"] = prior_mod.fit_unigram(train_glosses, words)
    utterances = [_filled_utterance(t) for t in state.train if t.gloss is not None]
    trigram = prior_mod.fit_trigram_kn(utterances, words, mode="continuation")
    state.priors["trigram-continuation"] = trigram
    state.priors["trigram-incontext"] = trigram.with_mode("in_context")
    if cfg.external_priors is not None:
        state.priors["external"] = prior_mod.load_external_priors(
            cfg.external_priors, words)


def _resolve_prior(spec: str, state: PipelineState):
    kind, _, arg = spec.partition(":")
    if kind == "external" and arg:
        key = f"external:{arg}"
        if key not in state.priors:
            state.priors[key] = prior_mod.load_external_priors(arg, state.lexicon.words)
        return state.priors[key]
    try:
        return state.priors[kind]
    except KeyError:
        raise ValidationError(f"prior {spec!r} is not available") from None


def _resolve_likelihood(spec: str, state: PipelineState):
    kind, _, arg = spec.partition(":")
    if kind == "none":
        return None
    if kind == "edit":
        beta = float(arg) if arg else state.beta
        return lik_mod.EditDistanceLikelihood(beta=beta)
    if kind == "wfst":
        lam = float(arg) if arg else state.lam
        return lik_mod.WfstLikelihood(pair_model=state.pair_model, lam=lam)
    raise ValidationError(f"unknown likelihood spec {spec!r}")


def score_tokens(tokens, prior, likelihood, lexicon: Lexicon, k: int,
                 threads: int = 1):
    """Order-preserving parallel scoring; unscorable tokens yield None."""
    def work(tok):
        try:
            return rec_mod.score_token(tok, prior, likelihood, lexicon, k)
        except NoInterpretableCandidate:
            return None

    if threads <= 1:
        return [work(t) for t in tokens]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, tokens))


def _stage_score(state: PipelineState, out: Path) -> None:
    cfg = state.config
    results_dir = out / "results"
    results_dir.mkdir(parents=True, exist_ok=True)
    for entry in cfg.roster:
        prior = _resolve_prior(entry.prior, state)
        likelihood = _resolve_likelihood(entry.likelihood, state)
        scored = score_tokens(state.test, prior, likelihood, state.lexicon,
                              cfg.top_k, cfg.threads)
        kept = []
        rows = []
        skipped = 0
        for tok, res in zip(state.test, scored):
            if res is None:
                skipped += 1
                continue
            kept.append((tok, res))
            rows.append(rec_mod.result_row(tok, res, entry.label))
        state.results[entry.label] = kept
        state.skipped[entry.label] = skipped
        path = results_dir / f"{entry.label}.csv"
        rec_mod.write_results_csv(rows, path)
        state.written.append(path)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _stage_experiments(state: PipelineState, out: Path) -> None:
    cfg = state.config
    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    summary: list[str] = []

    # Experiment 1: intelligibility classification by posterior entropy
    lines = ["model,auc,n_pos,n_neg"]
    entropies: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for entry in cfg.roster:
        pos = [r.entropy_bits for _, r in state.results[entry.label] if r.gold is not None]
        neg = [r.entropy_bits for _, r in state.results[entry.label] if r.gold is None]
        if not pos or not neg:
            warnings.warn(f"{entry.label}: missing a class; experiment 1 row skipped")
            continue
        roc = eval_mod.intelligibility_auc(pos, neg)
        entropies[entry.label] = (np.array(pos), np.array(neg))
        lines.append(f"{entry.label},{_fmt(roc.auc)},{roc.n_pos},{roc.n_neg}")
        summary.append(f"experiment1 {entry.label}: AUC={roc.auc:.4f} "
                       f"(n={roc.n_pos}+{roc.n_neg})")
    path = reports / "experiment1.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    state.written.append(path)

    # pairwise DeLong on shared tokens (full test roster is shared)
    lines = ["model_a,model_b,z,p"]
    labels = [e.label for e in cfg.roster if e.label in entropies]
    for i, la in enumerate(labels):
        for lb in labels[i + 1:]:
            res_a = state.results[la]
            res_b = state.results[lb]
            ids_a = {t.token_id for t, _ in res_a}
            ids_b = {t.token_id for t, _ in res_b}
            shared = ids_a & ids_b
            sa = [-r.entropy_bits for t, r in res_a if t.token_id in shared]
            sb = [-r.entropy_bits for t, r in res_b if t.token_id in shared]
            ys = [r.gold is not None for t, r in res_a if t.token_id in shared]
            try:
                cmp = eval_mod.delong_test(sa, sb, ys, la, lb)
            except eval_mod.EvaluationError as exc:
                warnings.warn(f"DeLong {la} vs {lb} skipped: {exc}")
                continue
            lines.append(f"{la},{lb},{_fmt(cmp.statistic)},{_fmt(cmp.p_value)}")
    path = reports / "experiment1_delong.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    state.written.append(path)

    # Experiment 2: recovery metrics for glossed tokens
    lines = ["model,n,mean_surprisal_bits,mean_rank,top1_rate,n_infinite"]
    surprisal_vectors: dict[str, list[float]] = {}
    shared_ids: set[str] | None = None
    for entry in cfg.roster:
        glossed = [(t, r) for t, r in state.results[entry.label] if r.gold is not None]
        if not glossed:
            continue
        agg = eval_mod.aggregate_metrics([r for _, r in glossed])
        lines.append(f"{entry.label},{agg.n},{_fmt(agg.mean_surprisal)},"
                     f"{_fmt(agg.mean_rank)},{_fmt(agg.top1_rate)},{agg.n_infinite_surprisal}")
        summary.append(f"experiment2 {entry.label}: surprisal={agg.mean_surprisal:.3f} "
                       f"rank={agg.mean_rank:.2f} top1={agg.top1_rate:.3f}")
        ids = {t.token_id for t, _ in glossed}
        shared_ids = ids if shared_ids is None else (shared_ids & ids)
    path = reports / "experiment2_metrics.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    state.written.append(path)

    for entry in cfg.roster:
        glossed = [(t, r) for t, r in state.results[entry.label]
                   if r.gold is not None and (shared_ids is None or t.token_id in shared_ids)]
        glossed.sort(key=lambda pair: pair[0].token_id)
        surprisal_vectors[entry.label] = [r.gold_surprisal_bits for _, r in glossed]

    lengths = {len(v) for v in surprisal_vectors.values()}
    if len(lengths) == 1 and len(surprisal_vectors) >= 2 and lengths.pop() >= 2:
        comparisons = eval_mod.paired_t_bonferroni(surprisal_vectors)
        lines = ["model_a,model_b,t,p_bonferroni,n,n_excluded"]
        for c in comparisons:
            lines.append(f"{c.model_a},{c.model_b},{_fmt(c.statistic)},"
                         f"{_fmt(c.p_value)},{c.n},{c.n_excluded}")
        path = reports / "experiment2_ttests.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        state.written.append(path)

    for key in ("edit_distance", "length_diff", "age_bin", "child"):
        lines = ["model,stratum,n,mean_surprisal_bits,sem,n_infinite"]
        for entry in cfg.roster:
            glossed = [(t, r) for t, r in state.results[entry.label] if r.gold is not None]
            if not glossed:
                continue
            report = eval_mod.stratify(glossed, key, state.lexicon)
            for label, st in report.strata.items():
                lines.append(f"{entry.label},{label},{st.n},{_fmt(st.mean_surprisal)},"
                             f"{_fmt(st.sem)},{st.n_infinite}")
        path = reports / f"experiment2_by_{key}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        state.written.append(path)

    # Experiment 3: per-partition fine-tuning, crossfit, Monte Carlo.
    # The permutation null treats each model's test partitions as
    # exchangeable within its row; see monte_carlo_best_match.
    for part_key, name in (("child", "child"), (cfg.age_threshold_months, "age")):
        train_parts = corpus_mod.partition(state.train, part_key)
        test_parts = corpus_mod.partition(state.test, part_key)
        models = {}
        for label in sorted(train_parts):
            part_train = train_parts[label]
            glosses = [t.gloss for t in part_train if t.gloss is not None]
            pairs = lik_mod.training_pairs(part_train, state.lexicon)
            if not glosses or not pairs:
                warnings.warn(f"partition {label!r} has no usable training data; skipped")
                continue
            prior = prior_mod.fit_unigram(glosses, state.lexicon.words)
            pm = lik_mod.em_train_pair_model(pairs, state.inventory, _em_config(cfg))
            models[label] = (prior, lik_mod.WfstLikelihood(pair_model=pm, lam=state.lam))
        if len(models) < 2:
            warnings.warn(f"experiment 3 by {name}: fewer than 2 partitions; skipped")
            continue
        try:
            cross = eval_mod.crossfit_matrix(models, test_parts, state.lexicon)
        except eval_mod.EvaluationError as exc:
            warnings.warn(f"experiment 3 by {name} skipped: {exc}")
            continue
        mc = eval_mod.monte_carlo_best_match(cross.matrix, cfg.n_sims, cfg.seed)
        lines = ["model_partition," + ",".join(cross.labels)]
        for i, label in enumerate(cross.labels):
            row = ",".join(_fmt(v) for v in cross.matrix[i])
            lines.append(f"{label},{row}")
        lines.append(f"# diagonal_minima,{int(mc.statistic)}")
        lines.append(f"# monte_carlo_p,{_fmt(mc.p_value)}")
        lines.append(f"# n_sims,{cfg.n_sims}")
        path = reports / f"experiment3_{name}_matrix.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        state.written.append(path)
        summary.append(f"experiment3 by {name}: diagonal minima "
                       f"{int(mc.statistic)}/{len(cross.labels)}, p={mc.p_value:.5g}")

    path = reports / "summary.txt"
    path.write_text("\n".join(summary) + "\n", encoding="utf-8")
    state.written.append(path)


def _stage_save_models(state: PipelineState, out: Path) -> None:
    models_dir = out / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    pm_path = models_dir / "pair_model.tsv"
    state.pair_model.save(pm_path)
    state.written.append(pm_path)
    tri = state.priors.get("trigram-continuation")
    if tri is not None:
        tri_path = models_dir / "trigram.tsv"
        tri.save(tri_path)
        state.written.append(tri_path)
    uni = state.priors.get("unigram")
    if uni is not None:
        uni_path = models_dir / "unigram.tsv"
        uni.save(uni_path)
        state.written.append(uni_path)


def _stage_manifest(state: PipelineState, out: Path) -> None:
    cfg = state.config
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "versions": {
            "wordrec": wordrec.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "kernel_backend": BACKEND,
        },
        "counts": {
            "tokens": len(state.tokens),
            "train": len(state.train),
            "validation": len(state.validation),
            "test": len(state.test),
            "vocabulary": len(state.lexicon),
            "pronunciations": state.lexicon.pronunciation_count(),
        },
        "fitted": {"beta": state.beta, "lambda": state.lam},
        "unscorable_tokens": state.skipped,
        "outputs": sorted(str(p.relative_to(out)) for p in state.written),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def run_pipeline(config: RunConfig) -> dict:
    """Run every stage; returns the manifest dictionary."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = PipelineState(config=config)

    stages = [
        ("validate", lambda: config.validate()),
        ("load", lambda: _stage_load(state)),
        ("ingest", lambda: _stage_ingest(state)),
        ("split", lambda: _stage_split(state)),
        ("train_pair_model", lambda: _stage_train_pair_model(state)),
        ("fit_scales", lambda: _stage_fit_scales(state)),
        ("fit_priors", lambda: _stage_fit_priors(state)),
        ("save_models", lambda: _stage_save_models(state, out)),
        ("score", lambda: _stage_score(state, out)),
        ("experiments", lambda: _stage_experiments(state, out)),
        ("manifest", lambda: _stage_manifest(state, out)),
    ]
    for name, fn in stages:
        try:
            fn()
        except Exception as exc:
            _quarantine(state, out)
            raise PipelineStageError(name, exc) from exc

    with open(out / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


def _quarantine(state: PipelineState, out: Path) -> None:
    if not state.written:
        return
    qdir = out / "quarantine"
    qdir.mkdir(parents=True, exist_ok=True)
    for p in state.written:
        if p.exists():
            target = qdir / p.relative_to(out)
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(p), str(target))
