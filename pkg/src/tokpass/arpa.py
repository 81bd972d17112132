"""ARPA back-off n-gram models: parsing and writing."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

BOS = "<s>"
EOS = "</s>"

_COUNT_RE = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")
_SECTION_RE = re.compile(r"^\\(\d+)-grams:$")


class ArpaError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


@dataclass
class NgramModel:
    """Back-off n-gram tables keyed by word tuples.

    ``probs[(w1, ..., wn)]`` is log10 P(wn | w1..wn-1); ``backoffs[h]`` is
    the log10 back-off weight of history ``h`` (absent means 0).
    """

    order: int
    probs: dict[tuple[str, ...], float] = field(default_factory=dict)
    backoffs: dict[tuple[str, ...], float] = field(default_factory=dict)

    @property
    def vocab(self) -> list[str]:
        return sorted(ng[0] for ng in self.probs if len(ng) == 1)

    def counts(self) -> dict[int, int]:
        out = {n: 0 for n in range(1, self.order + 1)}
        for ng in self.probs:
            out[len(ng)] += 1
        return out

    def ngrams(self, n: int) -> list[tuple[str, ...]]:
        return sorted(ng for ng in self.probs if len(ng) == n)


def parse_arpa(text: str | Iterable[str]) -> NgramModel:
    lines = text.splitlines() if isinstance(text, str) else list(text)
    declared: dict[int, int] = {}
    model = None
    section = None  # "data", an int order, or "end"
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line == "\\data\\":
            if section is not None:
                raise ArpaError("duplicate \\data\\ section", lineno)
            section = "data"
            continue
        if line == "\\end\\":
            section = "end"
            break
        m = _SECTION_RE.match(line)
        if m:
            if section is None:
                raise ArpaError("n-gram section before \\data\\", lineno)
            n = int(m.group(1))
            if n not in declared:
                raise ArpaError(f"section for undeclared order {n}", lineno)
            if model is None:
                model = NgramModel(order=max(declared))
            section = n
            continue
        if section is None:
            continue  # text before \data\ is ignored, as in most tools
        if section == "data":
            m = _COUNT_RE.match(line)
            if not m:
                raise ArpaError(f"malformed count line {line!r}", lineno)
            declared[int(m.group(1))] = int(m.group(2))
            continue
        n = section
        parts = line.split()
        if len(parts) not in (n + 1, n + 2):
            raise ArpaError(f"expected {n} words in {n}-gram entry", lineno)
        try:
            logp = float(parts[0])
            bo = float(parts[n + 1]) if len(parts) == n + 2 else None
        except ValueError:
            raise ArpaError(f"malformed number in {line!r}", lineno) from None
        if logp > 0:
            raise ArpaError(f"positive log-probability {logp}", lineno)
        ngram = tuple(parts[1:n + 1])
        if ngram in model.probs:
            raise ArpaError(f"duplicate n-gram {' '.join(ngram)}", lineno)
        model.probs[ngram] = logp
        if bo is not None:
            if bo != bo or abs(bo) == float("inf"):
                raise ArpaError("non-finite back-off weight", lineno)
            model.backoffs[ngram] = bo
    if section != "end":
        raise ArpaError("missing \\end\\ marker")
    if model is None:
        raise ArpaError("no n-gram sections")
    got = model.counts()
    for n, count in sorted(declared.items()):
        if got.get(n, 0) != count:
            raise ArpaError(f"count mismatch for order {n}: header says {count}, found {got.get(n, 0)}")
    return model


def _fmt(x: float) -> str:
    return repr(float(x))


def write_arpa(model: NgramModel) -> str:
    counts = model.counts()
    out = ["", "\\data\\"]
    out += [f"ngram {n}={counts[n]}" for n in range(1, model.order + 1)]
    for n in range(1, model.order + 1):
        out += ["", f"\\{n}-grams:"]
        for ng in model.ngrams(n):
            line = f"{_fmt(model.probs[ng])}\t{' '.join(ng)}"
            if ng in model.backoffs:
                line += f"\t{_fmt(model.backoffs[ng])}"
            out.append(line)
    out += ["", "\\end\\", ""]
    return "\n".join(out)
