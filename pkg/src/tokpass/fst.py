"""Weighted finite-state acceptors over the tropical semiring.

Weights are plain floats holding negative natural-log probabilities:
costs add along a path and the minimum is taken across paths. ``INF``
means "no path". Label id 0 is reserved for epsilon.
"""

from __future__ import annotations

import bisect
import math
from collections import defaultdict
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

INF = math.inf
EPSILON = 0
EPSILON_SYMBOL = "<eps>"


class FstError(ValueError):
    pass


class EpsilonCycleError(FstError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("epsilon cycle: " + " -> ".join(map(str, self.cycle)))


class SymbolTable:
    """Bidirectional symbol <-> id map. Id 0 is always epsilon.

    Entries can carry a role tag (``"class"``, ``"eos"``, ``"delim"``) so
    that class tokens and markers stay ordinary symbols.
    """

    def __init__(self, symbols: Iterable[str] = ()):
        self._ids = {EPSILON_SYMBOL: EPSILON}
        self._symbols = [EPSILON_SYMBOL]
        self._roles: dict[str, str] = {}
        for sym in symbols:
            self.add(sym)

    def add(self, symbol: str, role: str | None = None) -> int:
        if not symbol or any(c.isspace() for c in symbol):
            raise FstError(f"invalid symbol {symbol!r}")
        if symbol == EPSILON_SYMBOL:
            raise FstError("epsilon cannot be added as a user symbol")
        idx = self._ids.get(symbol)
        if idx is None:
            idx = len(self._symbols)
            self._ids[symbol] = idx
            self._symbols.append(symbol)
        if role is not None:
            old = self._roles.get(symbol)
            if old is not None and old != role:
                raise FstError(f"symbol {symbol!r} already has role {old!r}")
            self._roles[symbol] = role
        return idx

    def id(self, symbol: str) -> int:
        try:
            return self._ids[symbol]
        except KeyError:
            raise FstError(f"unknown symbol {symbol!r}") from None

    def get(self, symbol: str, default=None):
        return self._ids.get(symbol, default)

    def symbol(self, idx: int) -> str:
        return self._symbols[idx]

    def role(self, symbol: str) -> str | None:
        return self._roles.get(symbol)

    def with_role(self, role: str) -> list[str]:
        return [s for s in self._symbols if self._roles.get(s) == role]

    def ids_with_role(self, role: str) -> set[int]:
        return {self._ids[s] for s in self.with_role(role)}

    def copy(self) -> SymbolTable:
        other = SymbolTable()
        other._ids = dict(self._ids)
        other._symbols = list(self._symbols)
        other._roles = dict(self._roles)
        return other

    def __contains__(self, symbol) -> bool:
        return symbol in self._ids

    def __len__(self) -> int:
        return len(self._symbols)

    def __iter__(self):
        return iter(self._symbols)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SymbolTable) and self._symbols == other._symbols
                and self._roles == other._roles)

    def to_text(self) -> str:
        lines = []
        for i, sym in enumerate(self._symbols):
            role = self._roles.get(sym)
            lines.append(f"{sym}\t{i}" + (f"\t{role}" if role else ""))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SymbolTable:
        table = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise FstError(f"line {lineno}: expected 'symbol<TAB>id[<TAB>role]'")
            sym, idx = parts[0], int(parts[1])
            if sym == EPSILON_SYMBOL:
                if idx != EPSILON:
                    raise FstError(f"line {lineno}: epsilon must have id 0")
                continue
            got = table.add(sym, parts[2] if len(parts) == 3 else None)
            if got != idx:
                raise FstError(f"line {lineno}: ids must be dense and ordered")
        return table


class Arc(NamedTuple):
    ilabel: int
    olabel: int
    weight: float
    next: int


class Fst:
    """Immutable weighted automaton. Build it with :func:`build_fst`."""

    __slots__ = ("start", "_arcs", "_labels", "_finals")

    def __init__(self, start: int, arcs: Sequence[tuple[Arc, ...]], finals: dict[int, float]):
        self.start = start
        self._arcs = tuple(arcs)
        self._labels = tuple(tuple(a.ilabel for a in state_arcs) for state_arcs in self._arcs)
        self._finals = dict(finals)

    @property
    def num_states(self) -> int:
        return len(self._arcs)

    def states(self) -> range:
        return range(len(self._arcs))

    def arcs(self, state: int) -> tuple[Arc, ...]:
        return self._arcs[state]

    def matching(self, state: int, ilabel: int) -> tuple[Arc, ...]:
        """Arcs leaving ``state`` with input label ``ilabel`` (binary search)."""
        labels = self._labels[state]
        lo = bisect.bisect_left(labels, ilabel)
        hi = bisect.bisect_right(labels, ilabel, lo)
        return self._arcs[state][lo:hi]

    def final(self, state: int) -> float:
        return self._finals.get(state, INF)

    @property
    def finals(self) -> dict[int, float]:
        return dict(self._finals)

    @property
    def num_arcs(self) -> int:
        return sum(len(a) for a in self._arcs)

    def all_arcs(self):
        for q, state_arcs in enumerate(self._arcs):
            for arc in state_arcs:
                yield q, arc

    def __repr__(self):
        return f"Fst(states={self.num_states}, arcs={self.num_arcs}, start={self.start})"


def build_fst(start: int, arcs: Iterable[tuple[int, Arc]],
              finals: Iterable[tuple[int, float]], num_states: int | None = None) -> Fst:
    """Validate and freeze an automaton.

    Arc lists come out sorted by ilabel (ties by next state, then weight).
    Raises :class:`EpsilonCycleError` if an epsilon cycle is reachable
    from ``start``.
    """
    arcs = [(q, Arc(*a)) for q, a in arcs]
    finals = list(finals)
    highest = max([start] + [q for q, _ in arcs] + [a.next for _, a in arcs] + [q for q, _ in finals])
    if num_states is None:
        num_states = highest + 1
    elif highest >= num_states:
        raise FstError(f"dangling state reference {highest} (num_states={num_states})")
    for q in [start] + [q for q, _ in arcs] + [a.next for _, a in arcs] + [q for q, _ in finals]:
        if q < 0:
            raise FstError(f"dangling state reference {q}")
    per_state: list[list[Arc]] = [[] for _ in range(num_states)]
    for q, arc in arcs:
        if arc.ilabel < 0 or arc.olabel < 0:
            raise FstError(f"negative label on arc from {q}")
        if math.isnan(arc.weight):
            raise FstError(f"NaN weight on arc from {q}")
        per_state[q].append(arc._replace(weight=float(arc.weight)))
    final_map: dict[int, float] = {}
    for q, w in finals:
        w = float(w)
        if w < INF:
            final_map[q] = min(w, final_map.get(q, INF))
    fst = Fst(start, [tuple(sorted(s, key=lambda a: (a.ilabel, a.next, a.weight, a.olabel)))
                      for s in per_state], final_map)
    _check_epsilon_cycles(fst)
    return fst


def _check_epsilon_cycles(fst: Fst) -> None:
    # iterative DFS over finite-weight epsilon arcs; grey = on current path
    reachable = _reachable(fst)
    color = [0] * fst.num_states
    for root in fst.states():
        if not reachable[root] or color[root]:
            continue
        color[root] = 1
        path = [root]
        stack = [iter(fst.matching(root, EPSILON))]
        while stack:
            arc = next(stack[-1], None)
            if arc is None:
                color[path.pop()] = 2
                stack.pop()
                continue
            if arc.weight == INF:
                continue
            if color[arc.next] == 1:
                i = path.index(arc.next)
                raise EpsilonCycleError(path[i:] + [arc.next])
            if color[arc.next] == 0:
                color[arc.next] = 1
                path.append(arc.next)
                stack.append(iter(fst.matching(arc.next, EPSILON)))


def _reachable(fst: Fst) -> list[bool]:
    seen = [False] * fst.num_states
    seen[fst.start] = True
    todo = [fst.start]
    while todo:
        q = todo.pop()
        for arc in fst.arcs(q):
            if not seen[arc.next]:
                seen[arc.next] = True
                todo.append(arc.next)
    return seen


def is_acyclic(fst: Fst) -> bool:
    indeg = [0] * fst.num_states
    for _, arc in fst.all_arcs():
        indeg[arc.next] += 1
    todo = [q for q in fst.states() if indeg[q] == 0]
    seen = 0
    while todo:
        q = todo.pop()
        seen += 1
        for arc in fst.arcs(q):
            indeg[arc.next] -= 1
            if indeg[arc.next] == 0:
                todo.append(arc.next)
    return seen == fst.num_states


def is_deterministic(fst: Fst) -> bool:
    for q in fst.states():
        labels = [a.ilabel for a in fst.arcs(q)]
        if EPSILON in labels or len(labels) != len(set(labels)):
            return False
    return True


def determinize_acyclic(fst: Fst) -> Fst:
    """Weighted subset construction for acyclic, epsilon-free acceptors.

    Each output state is a set of (input state, residual cost) pairs. The
    result has one arc per (state, ilabel) and assigns every sequence the
    same minimum cost as the input.
    """
    for q, arc in fst.all_arcs():
        if arc.ilabel == EPSILON:
            raise FstError(f"determinize_acyclic: epsilon arc at state {q}")
        if arc.ilabel != arc.olabel:
            raise FstError(f"determinize_acyclic: transducer arc at state {q}")
    if not is_acyclic(fst):
        raise FstError("determinize_acyclic: input is cyclic")

    start = ((fst.start, 0.0),)
    index = {start: 0}
    queue = [start]
    arcs: list[tuple[int, Arc]] = []
    finals: list[tuple[int, float]] = []
    while queue:
        subset = queue.pop(0)
        src = index[subset]
        final = min((r + fst.final(q) for q, r in subset), default=INF)
        if final < INF:
            finals.append((src, final))
        by_label: dict[int, dict[int, float]] = defaultdict(dict)
        for q, r in subset:
            for arc in fst.arcs(q):
                targets = by_label[arc.ilabel]
                cost = r + arc.weight
                if cost < targets.get(arc.next, INF):
                    targets[arc.next] = cost
        for label in sorted(by_label):
            targets = by_label[label]
            w = min(targets.values())
            nxt = tuple(sorted((q, c - w) for q, c in targets.items()))
            if nxt not in index:
                index[nxt] = len(index)
                queue.append(nxt)
            arcs.append((src, Arc(label, label, w, index[nxt])))
    return build_fst(0, arcs, finals, num_states=len(index))


def score_sequence(fst: Fst, seq: Sequence[int]) -> float:
    """Minimum cost of any accepting path whose input is ``seq``.

    Epsilon arcs may be taken anywhere. Returns ``INF`` if no path exists.
    Exact search (memoized over (state, position)); relies on the
    epsilon-cycle check done at build time.
    """
    seq = tuple(seq)
    n = len(seq)

    @lru_cache(maxsize=None)
    def best(q: int, i: int) -> float:
        cost = fst.final(q) if i == n else INF
        for arc in fst.matching(q, EPSILON):
            cost = min(cost, arc.weight + best(arc.next, i))
        if i < n:
            for arc in fst.matching(q, seq[i]):
                cost = min(cost, arc.weight + best(arc.next, i + 1))
        return cost

    return best(fst.start, 0)


def _fmt_weight(w: float) -> str:
    return repr(float(w))


def dump_text(fst: Fst, isyms: SymbolTable | None = None, osyms: SymbolTable | None = None) -> str:
    """AT&T-style text: ``src dst ilabel olabel weight`` and ``state weight``.

    The first line's source state is the start state.
    """
    osyms = osyms or isyms
    ilab = isyms.symbol if isyms else str
    olab = osyms.symbol if osyms else str
    order = [fst.start] + [q for q in fst.states() if q != fst.start]
    lines = []
    if not fst.arcs(fst.start):
        # keep the start state first even without arcs
        lines.append(f"{fst.start}\t{_fmt_weight(fst.final(fst.start))}")
    for q in order:
        for arc in fst.arcs(q):
            lines.append(f"{q}\t{arc.next}\t{ilab(arc.ilabel)}\t{olab(arc.olabel)}\t{_fmt_weight(arc.weight)}")
    for q in order:
        w = fst.final(q)
        if w < INF and not (q == fst.start and not fst.arcs(fst.start)):
            lines.append(f"{q}\t{_fmt_weight(w)}")
    return "\n".join(lines) + "\n"


def load_text(text: str, isyms: SymbolTable | None = None,
              osyms: SymbolTable | None = None, num_states: int | None = None) -> Fst:
    osyms = osyms or isyms
    ilab = isyms.id if isyms else int
    olab = osyms.id if osyms else int
    arcs, finals = [], []
    start = None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        try:
            if len(parts) in (4, 5):
                src, dst = int(parts[0]), int(parts[1])
                w = float(parts[4]) if len(parts) == 5 else 0.0
                arcs.append((src, Arc(ilab(parts[2]), olab(parts[3]), w, dst)))
            elif len(parts) in (1, 2):
                src = int(parts[0])
                w = float(parts[1]) if len(parts) == 2 else 0.0
                if w == INF:
                    # explicit non-final marker, used for an empty start state
                    pass
                else:
                    finals.append((src, w))
            else:
                raise FstError("wrong number of fields")
        except (ValueError, FstError) as exc:
            raise FstError(f"line {lineno}: {exc}") from None
        if start is None:
            start = src
    if start is None:
        raise FstError("empty FST text")
    return build_fst(start, arcs, finals, num_states=num_states)
