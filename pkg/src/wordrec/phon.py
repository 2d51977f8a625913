"""Phoneme inventory, phoneme strings, and the pronunciation lexicon.

Symbols are whitespace-delimited tokens, so diphthongs and affricates
stay atomic.  The inventory assigns each symbol a stable 1-based integer
id; id 0 is reserved for the empty symbol ``<eps>`` used by the edit
kernels and the pair-model tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from wordrec.errors import InventoryError, LexiconError

EPSILON = "<eps>"


class PhonemeInventory:
    """Ordered phoneme symbol set with vowel flags.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, symbols: Iterable[str], vowel_flags: Mapping[str, bool]):
        syms = tuple(symbols)
        if len(set(syms)) != len(syms):
            raise InventoryError("duplicate symbols in inventory")
        for s in syms:
            if not s:
                raise InventoryError("empty symbol in inventory")
            if s == EPSILON:
                raise InventoryError(f"{EPSILON!r} is reserved and cannot be a phoneme")
            if s not in vowel_flags:
                raise InventoryError(f"symbol {s!r} has no vowel flag")
        self.symbols = syms
        self.vowel_flags = {s: bool(vowel_flags[s]) for s in syms}
        self.epsilon = EPSILON
        # id 0 is epsilon; real symbols are 1..n
        self._ids = {s: i + 1 for i, s in enumerate(syms)}

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._ids

    def __eq__(self, other) -> bool:
        return (isinstance(other, PhonemeInventory)
                and self.symbols == other.symbols
                and self.vowel_flags == other.vowel_flags)

    def index(self, symbol: str) -> int:
        """1-based id of a symbol; 0 for epsilon."""
        if symbol == EPSILON:
            return 0
        try:
            return self._ids[symbol]
        except KeyError:
            raise InventoryError(f"unknown phoneme symbol {symbol!r}") from None

    def symbol(self, idx: int) -> str:
        if idx == 0:
            return EPSILON
        return self.symbols[idx - 1]

    def is_vowel(self, symbol: str) -> bool:
        try:
            return self.vowel_flags[symbol]
        except KeyError:
            raise InventoryError(f"unknown phoneme symbol {symbol!r}") from None

    def encode(self, s: "PhonemeString") -> np.ndarray:
        """Symbol ids as int32, ready for the lattice kernels."""
        return np.array([self.index(x) for x in s.syms], dtype=np.int32)

    def validate(self, s: "PhonemeString") -> None:
        for x in s.syms:
            if x not in self._ids:
                raise InventoryError(f"unknown phoneme symbol {x!r}")


@dataclass(frozen=True)
class PhonemeString:
    """A (possibly empty) sequence of phoneme symbols."""

    syms: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "syms", tuple(self.syms))

    @classmethod
    def from_text(cls, text: str) -> "PhonemeString":
        return cls(tuple(text.split()))

    def __len__(self) -> int:
        return len(self.syms)

    def __iter__(self) -> Iterator[str]:
        return iter(self.syms)

    def __getitem__(self, i):
        return self.syms[i]

    def __str__(self) -> str:
        return " ".join(self.syms)


def syllable_count(s: PhonemeString, inventory: PhonemeInventory) -> int:
    """Number of vowel nuclei: maximal runs of consecutive vowel symbols."""
    count = 0
    in_nucleus = False
    for sym in s.syms:
        if inventory.is_vowel(sym):
            if not in_nucleus:
                count += 1
                in_nucleus = True
        else:
            in_nucleus = False
    return count


class Lexicon:
    """Orthographic words mapped to one or more citation pronunciations.

    The candidate list ``words`` is sorted, which fixes candidate order
    everywhere downstream (posterior vectors, tie-breaks, CSV rows).
    Encoded id arrays are precomputed once since likelihood scoring
    touches every pronunciation for every token.
    """

    def __init__(self, entries: Mapping[str, Iterable[PhonemeString]],
                 inventory: PhonemeInventory):
        cleaned: dict[str, tuple[PhonemeString, ...]] = {}
        for word, prons in entries.items():
            uniq: dict[tuple[str, ...], PhonemeString] = {}
            for p in prons:
                inventory.validate(p)
                uniq.setdefault(p.syms, p)
            if not uniq:
                raise LexiconError(f"word {word!r} has no pronunciations")
            cleaned[word] = tuple(sorted(uniq.values(), key=lambda p: p.syms))
        self.entries = cleaned
        self.inventory = inventory
        self.words: tuple[str, ...] = tuple(sorted(cleaned))
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self._encoded = {w: tuple(inventory.encode(p) for p in cleaned[w])
                         for w in self.words}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def pronunciations(self, word: str) -> tuple[PhonemeString, ...]:
        try:
            return self.entries[word]
        except KeyError:
            raise LexiconError(f"word {word!r} not in lexicon") from None

    def encoded(self, word: str) -> tuple[np.ndarray, ...]:
        try:
            return self._encoded[word]
        except KeyError:
            raise LexiconError(f"word {word!r} not in lexicon") from None

    def pronunciation_count(self) -> int:
        return sum(len(p) for p in self.entries.values())


def load_inventory(path) -> PhonemeInventory:
    """Read an inventory file: one `symbol<TAB>V|C` line per symbol."""
    symbols: list[str] = []
    flags: dict[str, bool] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("V", "C"):
                raise InventoryError(f"line {line_no}: expected `symbol<TAB>V|C`, got {raw!r}")
            sym = parts[0].strip()
            if not sym:
                raise InventoryError(f"line {line_no}: empty symbol")
            if sym in flags:
                raise InventoryError(f"line {line_no}: duplicate symbol {sym!r}")
            symbols.append(sym)
            flags[sym] = parts[1] == "V"
    return PhonemeInventory(symbols, flags)


def save_inventory(inventory: PhonemeInventory, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sym in inventory.symbols:
            fh.write(f"{sym}\t{'V' if inventory.vowel_flags[sym] else 'C'}\n")


def load_lexicon(path, inventory: PhonemeInventory) -> Lexicon:
    """Read a lexicon file: `word<TAB>phoneme( phoneme)*` lines.

    Duplicate (word, pronunciation) lines collapse to one entry.
    """
    entries: dict[str, list[PhonemeString]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LexiconError(f"line {line_no}: expected `word<TAB>phonemes`, got {raw!r}")
            word = parts[0].strip()
            pron_text = parts[1].strip()
            if not word:
                raise LexiconError(f"line {line_no}: empty word")
            if not pron_text:
                raise LexiconError(f"line {line_no}: empty pronunciation for {word!r}")
            pron = PhonemeString.from_text(pron_text)
            for sym in pron:
                if sym not in inventory:
                    raise LexiconError(f"line {line_no}: unknown phoneme symbol {sym!r}")
            entries.setdefault(word, []).append(pron)
    return Lexicon(entries, inventory)


def save_lexicon(lexicon: Lexicon, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in lexicon.words:
            for pron in lexicon.entries[word]:
                fh.write(f"{word}\t{pron}\n")


def filter_candidate_vocabulary(lexicon: Lexicon,
                                corpus_counts: Mapping[str, int],
                                min_count: int) -> Lexicon:
    """Restrict to 1-2 syllable pronunciations of sufficiently frequent words.

    A word survives only if at least one pronunciation has one or two
    vowel nuclei and its corpus count meets ``min_count``; surviving
    words keep only their qualifying pronunciations.
    """
    if min_count < 0:
        raise ValueError("min_count must be >= 0")
    kept: dict[str, list[PhonemeString]] = {}
    for word in lexicon.words:
        if corpus_counts.get(word, 0) < min_count:
            continue
        good = [p for p in lexicon.entries[word]
                if syllable_count(p, lexicon.inventory) in (1, 2)]
        if good:
            kept[word] = good
    return Lexicon(kept, lexicon.inventory)
