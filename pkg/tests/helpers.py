"""Shared builders and independent oracles for the test suite.

The alignment oracles here enumerate complete monotone alignments as
explicit op sequences and fold their weights, so they share no code
path with the DP kernels they check.
"""

from __future__ import annotations

import math

from wordrec.corpus import GAP_MARKER, VocalizationToken
from wordrec.phon import Lexicon, PhonemeInventory, PhonemeString


def make_inventory(spec: str = "a:V t:C k:C") -> PhonemeInventory:
    """Build an inventory from `sym:V sym:C ...`."""
    syms = []
    flags = {}
    for part in spec.split():
        sym, _, klass = part.partition(":")
        syms.append(sym)
        flags[sym] = klass == "V"
    return PhonemeInventory(syms, flags)


def S(text: str) -> PhonemeString:
    return PhonemeString.from_text(text)


def make_lexicon(inventory: PhonemeInventory, **entries) -> Lexicon:
    """make_lexicon(inv, cat="k a t", dog=["d o", "d o g"])"""
    table = {}
    for word, prons in entries.items():
        if isinstance(prons, str):
            prons = [prons]
        table[word] = [S(p) for p in prons]
    return Lexicon(table, inventory)


def make_token(token_id="t0", actual="a", gloss=None, child="c1", age=24,
               session=None, utterance=None, before=(), after=()):
    if session is None:
        session = f"{child}-s0"
    if utterance is None:
        utterance = f"[CHI] {GAP_MARKER}"
    return VocalizationToken(
        token_id=token_id, child_id=child, age_months=age, session_id=session,
        actual_phonemes=S(actual), gloss=gloss,
        context_before=tuple(before), same_utterance=utterance,
        context_after=tuple(after))


def all_alignments(n: int, m: int):
    """Yield every monotone alignment between an n-symbol input and an
    m-symbol output as a tuple of ops: ("sub", i, j), ("del", i),
    ("ins", j)."""
    def rec(i, j, acc):
        if i == n and j == m:
            yield tuple(acc)
            return
        if i < n and j < m:
            yield from rec(i + 1, j + 1, acc + [("sub", i, j)])
        if i < n:
            yield from rec(i + 1, j, acc + [("del", i)])
        if j < m:
            yield from rec(i, j + 1, acc + [("ins", j)])
    yield from rec(0, 0, [])


def _path_weight(weights, a_ids, b_ids, path) -> float:
    w = 1.0
    for op in path:
        if op[0] == "sub":
            w *= weights[a_ids[op[1]]][b_ids[op[2]]]
        elif op[0] == "del":
            w *= weights[a_ids[op[1]]][0]
        else:
            w *= weights[0][b_ids[op[1]]]
    return w


def enum_path_total(weights, a_ids, b_ids) -> float:
    """Sum of path weights over all alignments (linear space)."""
    return sum(_path_weight(weights, a_ids, b_ids, p)
               for p in all_alignments(len(a_ids), len(b_ids)))


def enum_path_best(weights, a_ids, b_ids) -> float:
    """Largest single path weight over all alignments."""
    return max(_path_weight(weights, a_ids, b_ids, p)
               for p in all_alignments(len(a_ids), len(b_ids)))


def brute_edit_distance(a, b) -> int:
    """Plain recursive Levenshtein, memoized on suffix indices."""
    memo = {}

    def rec(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        key = (i, j)
        if key not in memo:
            best = rec(i + 1, j + 1) + (a[i] != b[j])
            best = min(best, rec(i + 1, j) + 1, rec(i, j + 1) + 1)
            memo[key] = best
        return memo[key]

    return rec(0, 0)


def log_or_neg_inf(x: float) -> float:
    return math.log(x) if x > 0 else float("-inf")
