"""Sequence scorers: log P(l_i | x, l_1..l_{i-1}) over graphemes and <eos>.

A scorer is prefix-synchronous and side-effect free: its state depends
only on the utterance and the labels consumed so far, and advancing a state
never invalidates it.
"""

from __future__ import annotations

import abc
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Hashable, Iterable, NamedTuple, Sequence

import numpy as np

EOS = "<eos>"
BOS = "<bos>"
NORM_TOL = 1e-6


class ScorerError(ValueError):
    pass


@dataclass
class Utterance:
    id: str
    context: Any = None  # posterior matrix for PosteriorScorer, unused by LM scorers
    reference: str | None = None


class Scorer(abc.ABC):
    """Abstract sequence scorer over a fixed label alphabet ending in <eos>."""

    def __init__(self, alphabet: Sequence[str]):
        alphabet = list(alphabet)
        if EOS not in alphabet:
            raise ScorerError(f"alphabet must contain {EOS}")
        if len(set(alphabet)) != len(alphabet):
            raise ScorerError("duplicate symbols in alphabet")
        self.alphabet = alphabet
        self.eos = alphabet.index(EOS)
        self.index = {a: i for i, a in enumerate(alphabet)}

    @abc.abstractmethod
    def init(self, utt: Utterance) -> Hashable:
        """State for the empty prefix."""

    @abc.abstractmethod
    def logprobs(self, state) -> np.ndarray:
        """Log-probabilities over ``alphabet`` given ``state``."""

    @abc.abstractmethod
    def advance(self, state, label: int):
        """State after consuming ``alphabet[label]``."""

    def default_max_len(self, utt: Utterance) -> int:
        return 100


class _Row(NamedTuple):
    matrix: Any
    row: int

    def __hash__(self):
        return hash((id(self.matrix), self.row))

    def __eq__(self, other):
        return isinstance(other, _Row) and self.matrix is other.matrix and self.row == other.row


class PosteriorScorer(Scorer):
    """Reads step ``i`` of a fixed posterior matrix for prefix length ``i``.

    Past the last row all mass goes to <eos>.
    """

    def init(self, utt: Utterance) -> _Row:
        m = np.array(utt.context, dtype=np.float64)  # private read-only copy
        if m.ndim != 2 or m.shape[1] != len(self.alphabet):
            raise ScorerError(f"{utt.id}: posterior shape {m.shape} does not match "
                              f"alphabet of size {len(self.alphabet)}")
        check_rows(m, utt.id)
        m.setflags(write=False)
        return _Row(m, 0)

    def logprobs(self, state: _Row) -> np.ndarray:
        if state.row < len(state.matrix):
            return state.matrix[state.row]
        out = np.full(len(self.alphabet), -np.inf)
        out[self.eos] = 0.0
        return out

    def advance(self, state: _Row, label: int) -> _Row:
        return _Row(state.matrix, state.row + 1)

    def default_max_len(self, utt: Utterance) -> int:
        return 2 * len(utt.context)


def check_rows(matrix: np.ndarray, name: str = "posterior") -> None:
    if np.isnan(matrix).any() or (matrix > 0).any():
        raise ScorerError(f"{name}: log-probabilities must be <= 0 and not NaN")
    with np.errstate(divide="ignore"):
        sums = np.logaddexp.reduce(matrix, axis=1)
    bad = np.flatnonzero(np.abs(sums) > NORM_TOL)
    if bad.size:
        r = int(bad[0])
        raise ScorerError(f"{name}: row {r} sums to {math.exp(sums[r]):.6g} in probability, not 1")


class UniformScorer(Scorer):
    def init(self, utt: Utterance):
        return 0

    def logprobs(self, state) -> np.ndarray:
        return np.full(len(self.alphabet), -math.log(len(self.alphabet)))

    def advance(self, state, label: int):
        return state + 1


class CharNgramScorer(Scorer):
    """Add-alpha smoothed character n-gram; the state is the last order-1 labels."""

    def __init__(self, alphabet: Sequence[str], order: int, counts: Counter, alpha: float = 1.0):
        super().__init__(alphabet)
        if order < 1:
            raise ScorerError("order must be >= 1")
        self.order = order
        self.alpha = alpha
        self.counts = counts
        self.context_counts: Counter = Counter()
        for (hist, _), c in counts.items():
            self.context_counts[hist] += c
        self._cache: dict = {}

    @classmethod
    def train(cls, alphabet: Sequence[str], lines: Iterable[Sequence[str]], order: int = 2,
              alpha: float = 1.0) -> CharNgramScorer:
        """Count n-grams over label sequences (each implicitly ends with <eos>)."""
        counts: Counter = Counter()
        known = set(alphabet)
        for seq in lines:
            hist = (BOS,) * (order - 1)
            for sym in list(seq) + [EOS]:
                if sym not in known:
                    raise ScorerError(f"training symbol {sym!r} not in alphabet")
                counts[(hist, sym)] += 1
                hist = (hist + (sym,))[1:] if order > 1 else ()
        return cls(alphabet, order, counts, alpha)

    def init(self, utt: Utterance) -> tuple[str, ...]:
        return (BOS,) * (self.order - 1)

    def logprobs(self, state: tuple[str, ...]) -> np.ndarray:
        out = self._cache.get(state)
        if out is None:
            denom = self.context_counts[state] + self.alpha * len(self.alphabet)
            out = np.log(np.array([(self.counts[(state, a)] + self.alpha) / denom
                                   for a in self.alphabet]))
            out.setflags(write=False)
            self._cache[state] = out
        return out

    def advance(self, state: tuple[str, ...], label: int) -> tuple[str, ...]:
        if self.order == 1:
            return ()
        return (state + (self.alphabet[label],))[1:]


def read_posteriors(path) -> tuple[list[str], np.ndarray]:
    """``alphabet: g1 g2 ... <eos>`` header, then one row of natural-log probabilities per step."""
    lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
    if not lines or not lines[0].startswith("alphabet:"):
        raise ScorerError(f"{path}: missing 'alphabet:' header")
    alphabet = lines[0][len("alphabet:"):].split()
    if not alphabet or alphabet[-1] != EOS:
        raise ScorerError(f"{path}: alphabet must end with {EOS}")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        try:
            row = [float(x) for x in line.split()]
        except ValueError:
            raise ScorerError(f"{path}:{lineno}: malformed number") from None
        if len(row) != len(alphabet):
            raise ScorerError(f"{path}:{lineno}: expected {len(alphabet)} values, got {len(row)}")
        rows.append(row)
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), len(alphabet))
    check_rows(matrix, str(path))
    return alphabet, matrix


def write_posteriors(path, alphabet: Sequence[str], matrix: np.ndarray) -> None:
    lines = ["alphabet: " + " ".join(alphabet)]
    lines += [" ".join(repr(float(x)) for x in row) for row in np.asarray(matrix)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
