"""Compile class-based n-gram LMs and phrase lists into grapheme-level FSTs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .arpa import BOS, EOS, NgramModel
from .fst import EPSILON, INF, Arc, Fst, FstError, SymbolTable, build_fst, determinize_acyclic

LN10 = math.log(10.0)
DEFAULT_DELIMITER = "_"
KEYWORD_TOKEN = "<keyword>"


class GraphError(ValueError):
    pass


def is_class_token(word: str) -> bool:
    return word.startswith("<") and word.endswith(">") and word not in (BOS, EOS, "<unk>")


def cost(log10p: float) -> float:
    """log10 probability -> tropical cost (-ln p)."""
    return -log10p * LN10


@dataclass(frozen=True)
class ClassSpec:
    token: str
    phrases: tuple[str, ...]
    boost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phrases", tuple(self.phrases))
        if not is_class_token(self.token):
            raise GraphError(f"bad class token {self.token!r}")
        if not self.phrases:
            raise GraphError(f"class {self.token} has no phrases")
        for p in self.phrases:
            if not p.strip():
                raise GraphError(f"class {self.token} has an empty phrase")


@dataclass
class Speller:
    """Word -> grapheme sequence.

    Words without an explicit spelling are split into characters, each of
    which must belong to ``alphabet``.
    """

    alphabet: frozenset[str]
    spellings: dict[str, tuple[str, ...]] = field(default_factory=dict)
    delimiter: str = DEFAULT_DELIMITER

    def __post_init__(self):
        self.alphabet = frozenset(self.alphabet)
        if self.delimiter in self.alphabet:
            raise GraphError(f"delimiter {self.delimiter!r} is also a grapheme")

    def spell(self, word: str) -> tuple[str, ...]:
        if word in self.spellings:
            return self.spellings[word]
        bad = [c for c in word if c not in self.alphabet]
        if bad or not word:
            raise GraphError(f"cannot spell {word!r}: unknown graphemes {''.join(sorted(set(bad)))!r}")
        return tuple(word)

    def spell_phrase(self, phrase: str) -> tuple[str, ...]:
        """Graphemes of all words, joined by the delimiter (none trailing)."""
        out: list[str] = []
        for i, word in enumerate(phrase.split()):
            if i:
                out.append(self.delimiter)
            out.extend(self.spell(word))
        if not out:
            raise GraphError("cannot spell an empty phrase")
        return tuple(out)

    def graphemes(self) -> list[str]:
        found = set(self.alphabet)
        for seq in self.spellings.values():
            found.update(seq)
        return sorted(found)

    @classmethod
    def from_text(cls, text: str, alphabet=None, delimiter: str = DEFAULT_DELIMITER) -> Speller:
        spellings = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            word, sep, rest = line.partition("\t")
            graphemes = tuple(rest.split())
            if not sep or not word or not graphemes:
                raise GraphError(f"speller line {lineno}: expected 'word<TAB>g1 g2 ...'")
            spellings[word] = graphemes
        if alphabet is None:
            alphabet = {g for seq in spellings.values() for g in seq}
        return cls(frozenset(alphabet), spellings, delimiter)

    def to_text(self) -> str:
        return "".join(f"{w}\t{' '.join(g)}\n" for w, g in sorted(self.spellings.items()))


def grapheme_table(speller: Speller, class_tokens=()) -> SymbolTable:
    """Symbol table for grapheme-level graphs, in a fixed order."""
    syms = SymbolTable()
    for g in speller.graphemes():
        syms.add(g, "grapheme")
    syms.add(speller.delimiter, "delim")
    for tok in sorted(class_tokens):
        syms.add(tok, "class")
    return syms


def history_states(model: NgramModel) -> list[tuple[str, ...]]:
    """Histories that need their own state, in a fixed order.

    A history gets a state when it has continuations, a non-zero back-off
    weight, or is the sentence-start context. Anything else is folded into
    its longest suffix, which is exact because its back-off weight is 1.
    """
    n = model.order
    for ng in model.probs:
        if len(ng) >= 2 and ng[:-1] not in model.probs:
            raise GraphError(f"missing required history entry {' '.join(ng[:-1])!r} "
                             f"for n-gram {' '.join(ng)!r}")
    keep = {()}
    for ng in model.probs:
        if len(ng) >= 2:
            keep.add(ng[:-1])
    for h, bo in model.backoffs.items():
        if len(h) < n and bo != 0.0:
            keep.add(h)
    if (BOS,) in model.probs and n > 1:
        keep.add((BOS,))
    keep = {h for h in keep if EOS not in h and len(h) < n}
    return sorted(keep, key=lambda h: (len(h), h))


def _state_for(h: tuple[str, ...], index: dict) -> int:
    while h not in index:
        h = h[1:]
    return index[h]


def eos_cost(model: NgramModel, h: tuple[str, ...]) -> float:
    """Cost of ending the sentence after history ``h``, backing off as needed."""
    total = 0.0
    while True:
        if h + (EOS,) in model.probs:
            return total + cost(model.probs[h + (EOS,)])
        if not h:
            return INF
        total += cost(model.backoffs.get(h, 0.0))
        h = h[1:]


def compile_ngram_fst(model: NgramModel, syms: SymbolTable) -> Fst:
    """Word-level back-off acceptor.

    Word arcs carry -ln P from explicit n-grams; epsilon arcs carry the
    back-off cost to the shortened history. Final weights are the cost of
    ``</s>`` via back-off; a model without ``</s>`` gets final weight 0
    everywhere. Words are added to ``syms`` (class tokens with role
    ``"class"``).
    """
    histories = history_states(model)
    index = {h: i for i, h in enumerate(histories)}
    start = index.get((BOS,), index[()])
    for w in sorted(model.vocab):
        if w in (BOS, EOS):
            continue
        syms.add(w, "class" if is_class_token(w) else None)
    keep = model.order - 1
    arcs = []
    for ng in sorted(model.probs):
        h, w = ng[:-1], ng[-1]
        if w in (BOS, EOS) or EOS in h or h not in index:
            continue
        dest = (h + (w,))[-keep:] if keep else ()
        label = syms.id(w)
        arcs.append((index[h], Arc(label, label, cost(model.probs[ng]), _state_for(dest, index))))
    for h in histories:
        if h:
            arcs.append((index[h], Arc(EPSILON, EPSILON, cost(model.backoffs.get(h, 0.0)),
                                       _state_for(h[1:], index))))
    has_eos = (EOS,) in model.probs
    finals = [(index[h], eos_cost(model, h) if has_eos else 0.0) for h in histories]
    try:
        return build_fst(start, arcs, finals, num_states=len(histories))
    except FstError as exc:
        raise GraphError(str(exc)) from None


def spell_fst(fst: Fst, wsyms: SymbolTable, speller: Speller, gsyms: SymbolTable) -> Fst:
    """Expand each word arc into a grapheme chain ending in the delimiter.

    The word's weight sits on the first grapheme arc. Epsilon arcs are kept.
    A class-token arc is kept as is and followed by a zero-weight delimiter
    arc, so class phrases end at a word boundary like ordinary words.
    """
    delim = gsyms.add(speller.delimiter, "delim")
    arcs = []
    next_state = fst.num_states
    for q, arc in fst.all_arcs():
        if arc.ilabel == EPSILON:
            arcs.append((q, arc))
            continue
        word = wsyms.symbol(arc.ilabel)
        if wsyms.role(word) == "class" or is_class_token(word):
            label = gsyms.add(word, "class")
            mid = next_state
            next_state += 1
            arcs.append((q, Arc(label, label, arc.weight, mid)))
            arcs.append((mid, Arc(delim, delim, 0.0, arc.next)))
            continue
        try:
            chain = [gsyms.add(g) for g in speller.spell(word)] + [delim]
        except GraphError:
            raise GraphError(f"missing spelling for word {word!r}") from None
        src, w = q, arc.weight
        for i, g in enumerate(chain):
            if i == len(chain) - 1:
                dst = arc.next
            else:
                dst = next_state
                next_state += 1
            arcs.append((src, Arc(g, g, w, dst)))
            src, w = dst, 0.0
    return build_fst(fst.start, arcs, fst.finals.items(), num_states=next_state)


def build_class_fst(spec: ClassSpec, speller: Speller, gsyms: SymbolTable) -> Fst:
    """Deterministic acyclic acceptor of the spelled phrases, all at cost 0.

    The class boost is not included; it is applied on class entry.
    """
    arcs, finals = [], []
    next_state = 1
    for phrase in spec.phrases:
        labels = [gsyms.add(g) for g in speller.spell_phrase(phrase)]
        src = 0
        for g in labels:
            arcs.append((src, Arc(g, g, 0.0, next_state)))
            src = next_state
            next_state += 1
        finals.append((src, 0.0))
    chains = build_fst(0, arcs, finals, num_states=next_state)
    return determinize_acyclic(chains)


def read_phrases(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class ManifestEntry:
    token: str
    path: Path
    boost: float


def read_class_manifest(path) -> list[ManifestEntry]:
    """``token<TAB>phrase-file<TAB>boost`` lines; paths relative to the manifest.

    The reserved token ``<keyword>`` names the wake-word class.
    """
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphError(f"{path}:{lineno}: expected 'token<TAB>path<TAB>boost'")
        token, rel, boost = parts
        if not is_class_token(token):
            raise GraphError(f"{path}:{lineno}: bad class token {token!r}")
        try:
            boost = float(boost)
        except ValueError:
            raise GraphError(f"{path}:{lineno}: bad boost {boost!r}") from None
        entries.append(ManifestEntry(token, path.parent / rel, boost))
    return entries
