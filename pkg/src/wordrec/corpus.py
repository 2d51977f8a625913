"""Vocalization records: ingestion criteria, splits, and partitions.

A token pairs the child's phonetic form with the transcriber's word
interpretation (absent for unintelligible vocalizations) and a window of
surrounding utterances.  Speaker tags are normalized to two labels and
kept inline as ordinary leading tokens, e.g. ``[CHI] want cookie``.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

from wordrec.errors import CorpusFormatError, ValidationError
from wordrec.phon import Lexicon, PhonemeInventory, PhonemeString, syllable_count

GAP_MARKER = "⟨GAP⟩"
CHILD_TAG = "[CHI]"
CAREGIVER_TAG = "[CGV]"
MAX_CONTEXT_UTTERANCES = 20

# CHILDES-style codes marking unintelligible material; a token is dropped
# when its host utterance contains any of these besides the gap itself.
UNINTELLIGIBLE_CODES = frozenset({"xxx", "yyy"})


@dataclass(frozen=True)
class VocalizationToken:
    token_id: str
    child_id: str
    age_months: int
    session_id: str
    actual_phonemes: PhonemeString
    gloss: str | None
    context_before: tuple[str, ...]
    same_utterance: str
    context_after: tuple[str, ...]

    @property
    def intelligible(self) -> bool:
        return self.gloss is not None


@dataclass(frozen=True)
class CorpusSplit:
    train: frozenset[str]
    validation: frozenset[str]
    test: frozenset[str]
    # (child_id, age_bin_start) -> (n_train, n_validation, n_test)
    stratification: dict[tuple[str, int], tuple[int, int, int]]


def _normalize_utterance(raw: str, line_no: int) -> str:
    """`SPK: text` -> `[CHI] text` or `[CGV] text`."""
    speaker, sep, text = raw.partition(":")
    if not sep:
        raise CorpusFormatError("utterance missing `SPK:` prefix", line_no)
    tag = CHILD_TAG if speaker.strip() == "CHI" else CAREGIVER_TAG
    return f"{tag} {text.strip()}"


def _denormalize_utterance(tagged: str) -> str:
    tag, _, text = tagged.partition(" ")
    speaker = "CHI" if tag == CHILD_TAG else "CGV"
    return f"{speaker}: {text}"


def _parse_record(obj: dict, line_no: int, inventory: PhonemeInventory) -> VocalizationToken:
    try:
        token_id = obj["token_id"]
        child_id = obj["child_id"]
        age_months = obj["age_months"]
        session_id = obj["session_id"]
        phonemes = obj["actual_phonemes"]
        gloss = obj["gloss"]
        before = obj["context_before"]
        same = obj["same_utterance"]
        after = obj["context_after"]
    except KeyError as exc:
        raise CorpusFormatError(f"missing field {exc.args[0]!r}", line_no) from None

    if not isinstance(token_id, str) or not token_id:
        raise CorpusFormatError("token_id must be a non-empty string", line_no)
    if not isinstance(child_id, str) or not child_id:
        raise CorpusFormatError("child_id must be a non-empty string", line_no)
    if not isinstance(age_months, int) or isinstance(age_months, bool) or age_months < 0:
        raise CorpusFormatError("age_months must be a non-negative integer", line_no)
    if not isinstance(session_id, str) or not session_id:
        raise CorpusFormatError("session_id must be a non-empty string", line_no)
    if not isinstance(phonemes, list) or not all(isinstance(p, str) for p in phonemes):
        raise CorpusFormatError("actual_phonemes must be an array of symbols", line_no)
    if gloss is not None and not isinstance(gloss, str):
        raise CorpusFormatError("gloss must be a string or null", line_no)
    if not isinstance(before, list) or not isinstance(after, list):
        raise CorpusFormatError("context windows must be arrays", line_no)
    if not isinstance(same, str):
        raise CorpusFormatError("same_utterance must be a string", line_no)
    if same.count(GAP_MARKER) != 1:
        raise CorpusFormatError(f"same_utterance must contain exactly one {GAP_MARKER}", line_no)

    ps = PhonemeString(tuple(phonemes))
    for sym in ps:
        if sym not in inventory:
            raise CorpusFormatError(f"unknown phoneme symbol {sym!r}", line_no)

    # a transcriber code in the gloss field marks the token itself as
    # unintelligible: that is the negative class, not a vocabulary miss
    if gloss in UNINTELLIGIBLE_CODES:
        gloss = None

    return VocalizationToken(
        token_id=token_id,
        child_id=child_id,
        age_months=age_months,
        session_id=session_id,
        actual_phonemes=ps,
        gloss=gloss,
        # keep the nearest utterances when the window is over-wide
        context_before=tuple(_normalize_utterance(u, line_no)
                             for u in before[-MAX_CONTEXT_UTTERANCES:]),
        same_utterance=_normalize_utterance(same, line_no),
        context_after=tuple(_normalize_utterance(u, line_no)
                            for u in after[:MAX_CONTEXT_UTTERANCES]),
    )


def _passes_criteria(tok: VocalizationToken, lexicon: Lexicon,
                     inventory: PhonemeInventory) -> bool:
    if syllable_count(tok.actual_phonemes, inventory) not in (1, 2):
        return False
    # other unintelligible material in the host utterance disqualifies
    # the token; the gap itself is the token under study
    for word in tok.same_utterance.split():
        if word in UNINTELLIGIBLE_CODES:
            return False
    if tok.gloss is not None and tok.gloss not in lexicon:
        return False
    return True


def ingest(path, lexicon: Lexicon, inventory: PhonemeInventory) -> list[VocalizationToken]:
    """Read a line-delimited corpus file and apply the inclusion criteria.

    Malformed records abort with their line number; records that parse
    but fail a criterion are silently excluded (they are valid data,
    just out of scope).
    """
    kept: list[VocalizationToken] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", line_no) from None
            if not isinstance(obj, dict):
                raise CorpusFormatError("record must be an object", line_no)
            tok = _parse_record(obj, line_no, inventory)
            if tok.token_id in seen_ids:
                raise CorpusFormatError(f"duplicate token_id {tok.token_id!r}", line_no)
            seen_ids.add(tok.token_id)
            if _passes_criteria(tok, lexicon, inventory):
                kept.append(tok)
    return kept


def write_tokens(tokens: Iterable[VocalizationToken], path) -> None:
    """Serialize tokens back to the line-delimited record format."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok in tokens:
            record = {
                "token_id": tok.token_id,
                "child_id": tok.child_id,
                "age_months": tok.age_months,
                "session_id": tok.session_id,
                "actual_phonemes": list(tok.actual_phonemes.syms),
                "gloss": tok.gloss,
                "context_before": [_denormalize_utterance(u) for u in tok.context_before],
                "same_utterance": _denormalize_utterance(tok.same_utterance),
                "context_after": [_denormalize_utterance(u) for u in tok.context_after],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


AGE_BIN_MONTHS = 6


def age_bin(age_months: int) -> int:
    """Start of the 6-month age bin containing this age."""
    return (age_months // AGE_BIN_MONTHS) * AGE_BIN_MONTHS


def make_split(tokens: Sequence[VocalizationToken], seed: int,
               fractions: tuple[float, float, float]) -> CorpusSplit:
    """Deterministic session-atomic split, age-stratified per child.

    Within each child, sessions are ordered by (age, session_id) and
    dealt to splits by running quota (assign to the split furthest below
    its target share), so every split samples the child's whole age
    range.  The seed shuffles the tie-break priority among splits with
    equal deficits; it never overrides age ordering.  A child with fewer
    sessions than there are nonzero splits goes entirely to train.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError("fractions must sum to 1")
    if any(f < 0 for f in fractions):
        raise ValidationError("fractions must be non-negative")
    if not tokens:
        raise ValidationError("cannot split an empty token collection")

    rng = random.Random(seed)

    # session key -> tokens; a session never straddles splits
    sessions: dict[tuple[str, str], list[VocalizationToken]] = {}
    for tok in tokens:
        sessions.setdefault((tok.child_id, tok.session_id), []).append(tok)

    by_child: dict[str, list[tuple[str, str]]] = {}
    for key in sessions:
        by_child.setdefault(key[0], []).append(key)

    n_active = sum(1 for f in fractions if f > 0)
    assigned: dict[tuple[str, str], int] = {}

    for child in sorted(by_child):
        keys = by_child[child]
        # lowest session_id first on age ties
        keys.sort(key=lambda k: (min(t.age_months for t in sessions[k]), k[1]))
        if len(keys) < n_active:
            if n_active > 1:
                warnings.warn(
                    f"child {child!r} has {len(keys)} session(s) for {n_active} "
                    f"splits; assigning all to train")
            for k in keys:
                assigned[k] = 0
            continue
        priority = [0, 1, 2]
        rng.shuffle(priority)
        counts = [0, 0, 0]
        for i, k in enumerate(keys):
            deficits = [fractions[s] * (i + 1) - counts[s] for s in range(3)]
            best = max(range(3), key=lambda s: (deficits[s], -priority.index(s)))
            assigned[k] = best
            counts[best] += 1

    ids: tuple[set[str], set[str], set[str]] = (set(), set(), set())
    strat: dict[tuple[str, int], list[int]] = {}
    for key, toks in sessions.items():
        s = assigned[key]
        for tok in toks:
            ids[s].add(tok.token_id)
            cell = strat.setdefault((tok.child_id, age_bin(tok.age_months)), [0, 0, 0])
            cell[s] += 1

    return CorpusSplit(
        train=frozenset(ids[0]),
        validation=frozenset(ids[1]),
        test=frozenset(ids[2]),
        stratification={k: tuple(v) for k, v in strat.items()},
    )


def partition(tokens: Sequence[VocalizationToken],
              key: str | int) -> dict[str, list[VocalizationToken]]:
    """Group tokens by child (`key="child"`) or by an age threshold.

    An integer key splits at that many months: at or below goes to
    "younger", above goes to "older".
    """
    out: dict[str, list[VocalizationToken]] = {}
    if key == "child":
        for tok in tokens:
            out.setdefault(tok.child_id, []).append(tok)
    elif isinstance(key, int) and not isinstance(key, bool):
        for tok in tokens:
            label = "younger" if tok.age_months <= key else "older"
            out.setdefault(label, []).append(tok)
    else:
        raise ValueError(f"partition key must be 'child' or an integer age threshold, got {key!r}")
    return out
