"""On-the-fly replacement of class-token arcs by class phrase FSTs.

The outside graph is the grapheme-level LM. Each class-token arc in it is
expanded lazily into the class's phrase acceptor; leaving the class resumes
at the arc's target. Only one level of replacement is supported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .builder import KEYWORD_TOKEN, GraphError
from .fst import EPSILON, INF, Arc, Fst, SymbolTable, build_fst, dump_text


class DynState(NamedTuple):
    graph: int  # 0 = outside LM, k > 0 = class k
    state: int
    ret: int | None = None  # outside state to resume at on class exit


def state_key(s: DynState):
    """Total order on states, used for deterministic tie-breaking."""
    return (s.graph, s.state, -1 if s.ret is None else s.ret)


@dataclass(frozen=True)
class ClassGraph:
    token: str
    label: int
    fst: Fst
    boost: float


@dataclass(eq=False)
class GraphSet:
    """Outside LM plus class graphs, with per-instance expansion caches.

    Build with :func:`make_graph_set`. Graph id ``k`` refers to
    ``classes[k - 1]``.
    """

    outside: Fst
    symbols: SymbolTable
    classes: tuple[ClassGraph, ...]
    _by_label: dict = field(default_factory=dict, repr=False)
    _closure_cache: dict = field(default_factory=dict, repr=False)
    _expand_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_label = {c.label: k for k, c in enumerate(self.classes, 1)}

    def graph(self, k: int) -> Fst:
        return self.outside if k == 0 else self.classes[k - 1].fst

    def class_index(self, token: str) -> int:
        return self._by_label[self.symbols.id(token)]

    @property
    def num_states(self) -> int:
        """States of the statically expanded machine (for beam sizing)."""
        total = self.outside.num_states
        for c in self.classes:
            uses = sum(1 for _, a in self.outside.all_arcs() if a.ilabel == c.label)
            total += uses * c.fst.num_states
        return total

    def dump(self) -> str:
        parts = [f"0:\n{dump_text(self.outside, self.symbols)}"]
        for k, c in enumerate(self.classes, 1):
            parts.append(f"{k}: {c.token} boost={c.boost!r}\n{dump_text(c.fst, self.symbols)}")
        return "".join(parts)


def make_graph_set(outside: Fst, symbols: SymbolTable, classes: dict[str, tuple[Fst, float]],
                   keyword: tuple[Fst, float] | None = None) -> GraphSet:
    """Validate and assemble a :class:`GraphSet`.

    ``classes`` maps class token -> (phrase FST, boost). A keyword class is
    attached as a ``<keyword>`` arc looping on the outside start state,
    followed by a delimiter, so the wake word can only open a sentence.
    """
    classes = dict(classes)
    if keyword is not None:
        symbols = symbols.copy()
        kw_label = symbols.add(KEYWORD_TOKEN, "class")
        delims = symbols.with_role("delim")
        if len(delims) != 1:
            raise GraphError("keyword attachment needs exactly one delimiter symbol")
        delim = symbols.id(delims[0])
        mid = outside.num_states
        arcs = list(outside.all_arcs())
        arcs.append((outside.start, Arc(kw_label, kw_label, 0.0, mid)))
        arcs.append((mid, Arc(delim, delim, 0.0, outside.start)))
        outside = build_fst(outside.start, arcs, outside.finals.items(), num_states=mid + 1)
        classes[KEYWORD_TOKEN] = keyword

    class_labels = symbols.ids_with_role("class")
    for token in classes:
        if token not in symbols or symbols.role(token) != "class":
            raise GraphError(f"{token} is not a class token of this symbol table")
    graphs = []
    for token in sorted(classes, key=symbols.id):
        fst, boost = classes[token]
        if fst.final(fst.start) < INF:
            raise GraphError(f"class {token} accepts the empty string")
        for q, arc in fst.all_arcs():
            if arc.ilabel in class_labels:
                raise GraphError(f"class {token} contains nested class arc at state {q}")
        graphs.append(ClassGraph(token, symbols.id(token), fst, float(boost)))
    registered = {g.label for g in graphs}
    for q, arc in outside.all_arcs():
        if arc.ilabel in class_labels and arc.ilabel not in registered:
            raise GraphError(f"class token {symbols.symbol(arc.ilabel)} at outside state {q} "
                             "has no registered class graph")
    return GraphSet(outside, symbols, tuple(graphs))


def dyn_start(g: GraphSet) -> DynState:
    return DynState(0, g.outside.start)


def _moves(g: GraphSet, s: DynState):
    """Non-consuming steps: back-off epsilons, class entry, class exit."""
    if s.graph == 0:
        for arc in g.outside.arcs(s.state):
            if arc.ilabel == EPSILON:
                yield DynState(0, arc.next), arc.weight
            else:
                k = g._by_label.get(arc.ilabel)
                if k is not None:
                    cls = g.classes[k - 1]
                    yield DynState(k, cls.fst.start, arc.next), arc.weight + cls.boost
    else:
        fst = g.classes[s.graph - 1].fst
        for arc in fst.matching(s.state, EPSILON):
            yield DynState(s.graph, arc.next, s.ret), arc.weight
        w = fst.final(s.state)
        if w < INF:
            yield DynState(0, s.ret), w


def dyn_closure(g: GraphSet, s: DynState) -> tuple[tuple[DynState, float], ...]:
    """All states reachable from ``s`` without consuming, with min cost."""
    cached = g._closure_cache.get(s)
    if cached is not None:
        return cached
    best = {s: 0.0}
    todo = [s]
    while todo:
        cur = todo.pop()
        base = best[cur]
        for nxt, w in _moves(g, cur):
            c = base + w
            if c < best.get(nxt, INF):
                best[nxt] = c
                todo.append(nxt)
    out = tuple(sorted(best.items(), key=lambda kv: (kv[1], state_key(kv[0]))))
    g._closure_cache[s] = out
    return out


def _consume(g: GraphSet, s: DynState, label: int):
    for arc in g.graph(s.graph).matching(s.state, label):
        yield DynState(s.graph, arc.next, s.ret), arc.weight


def dyn_expand(g: GraphSet, s: DynState, label: int) -> list[tuple[DynState, float]]:
    """Every state reachable by consuming exactly one ``label``.

    Non-consuming steps are only taken before the consuming arc. Results
    are unique per state, carry the full path cost, and are sorted by cost.
    """
    key = (s, label)
    cached = g._expand_cache.get(key)
    if cached is not None:
        return cached
    if label == EPSILON:
        raise ValueError("dyn_expand: label must not be epsilon")
    best: dict[DynState, float] = {}
    for mid, c in dyn_closure(g, s):
        for nxt, w in _consume(g, mid, label):
            if c + w < best.get(nxt, INF):
                best[nxt] = c + w
    out = sorted(best.items(), key=lambda kv: (kv[1], state_key(kv[0])))
    g._expand_cache[key] = out
    return out


def dyn_expand_single(g: GraphSet, s: DynState, label: int) -> list[tuple[DynState, float]]:
    """Single-token rule: non-consuming steps only when nothing matches.

    Looks for a match at ``s`` first; failing that, one layer of
    non-consuming steps further out, and so on. Returns the cheapest match
    of the first layer that has one (at most one result).
    """
    layer = {s: 0.0}
    seen = {s}
    while layer:
        found = []
        for mid, c in layer.items():
            for nxt, w in _consume(g, mid, label):
                found.append((c + w, state_key(nxt), nxt))
        if found:
            c, _, nxt = min(found)
            return [(nxt, c)]
        nxt_layer: dict[DynState, float] = {}
        for mid, c in layer.items():
            for nxt, w in _moves(g, mid):
                if nxt not in seen and c + w < nxt_layer.get(nxt, INF):
                    nxt_layer[nxt] = c + w
        seen.update(nxt_layer)
        layer = nxt_layer
    return []


def dyn_final(g: GraphSet, s: DynState) -> float:
    """Cheapest way to finish from ``s`` without consuming anything."""
    return min((c + g.outside.final(q.state) for q, c in dyn_closure(g, s) if q.graph == 0),
               default=INF)
