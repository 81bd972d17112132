"""Token-passing beam search with shallow fusion.

Each hypothesis is a unique label prefix with one scorer state and a small
set of tokens, one per graph state the prefix can be in. A hypothesis is
ranked by ``model_logprob - min token cost``, where token costs are
lambda-scaled graph costs (negative log probabilities).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .dynamic import DynState, GraphSet, dyn_expand, dyn_expand_single, dyn_final, dyn_start, state_key
from .fst import INF
from .scorer import EOS, Scorer, Utterance

MULTI = "multi"
BASELINE = "baseline"


class DecodeError(ValueError):
    pass


class Token(NamedTuple):
    state: DynState
    cost: float


class Hypothesis:
    __slots__ = ("labels", "scorer_state", "model_logprob", "tokens")

    def __init__(self, labels: tuple[str, ...], scorer_state, model_logprob: float, tokens: list[Token]):
        self.labels = labels
        self.scorer_state = scorer_state
        self.model_logprob = model_logprob
        self.tokens = tokens

    @property
    def combined(self) -> float:
        return self.model_logprob - self.tokens[0].cost

    def __repr__(self):
        return (f"Hypothesis({''.join(self.labels)!r}, model={self.model_logprob:.4f}, "
                f"tokens={len(self.tokens)}, combined={self.combined:.4f})")


@dataclass
class DecodeConfig:
    beam: int = 10
    token_beam: int | None = 10  # None: no cap
    lam: float = 1.0
    mode: str = MULTI
    max_len: int | None = None  # None: the scorer's default
    end_margin: float = 0.0
    recombine: bool = True

    def __post_init__(self):
        if self.beam < 1:
            raise DecodeError("beam must be positive")
        if self.token_beam is not None and self.token_beam < 1:
            raise DecodeError("token_beam must be positive")
        if self.lam < 0:
            raise DecodeError("lambda must be non-negative")
        if self.mode not in (MULTI, BASELINE):
            raise DecodeError(f"unknown mode {self.mode!r}")
        if self.max_len is not None and self.max_len < 1:
            raise DecodeError("max_len must be positive")
        if self.end_margin < 0:
            raise DecodeError("end_margin must be non-negative")


@dataclass
class DecodeStats:
    steps: int = 0
    closures: list[int] = field(default_factory=list)  # tokens expanded per step
    expansions: list[int] = field(default_factory=list)  # (token, label) probes per step
    tokens: list[int] = field(default_factory=list)  # tokens alive after pruning per step
    hyps: list[int] = field(default_factory=list)
    merged: int = 0  # tokens dropped by same-state recombination

    @property
    def mean_tokens_per_step(self) -> float:
        return sum(self.tokens) / len(self.tokens) if self.tokens else 0.0


@dataclass
class DecodeResult:
    hyps: list[tuple[tuple[str, ...], float]]
    complete: bool
    stats: DecodeStats

    @property
    def best(self) -> tuple[str, ...] | None:
        return self.hyps[0][0] if self.hyps else None


def token_recombine(tokens: Sequence[Token], limit: int | None) -> list[Token]:
    """Keep the cheapest token per graph state, then the ``limit`` cheapest overall."""
    best: dict[DynState, float] = {}
    for t in tokens:
        if t.cost < best.get(t.state, INF):
            best[t.state] = t.cost
    out = sorted((Token(s, c) for s, c in best.items()), key=_token_key)
    return out if limit is None else out[:limit]


def _token_key(t: Token):
    return (t.cost, state_key(t.state))


def _hyp_key(h):
    return (-h.combined, len(h.labels), h.labels)


def select_top_n(hyps: Sequence[Hypothesis], n: int) -> list[Hypothesis]:
    """Best ``n`` by combined score; ties go to the shorter, then lexicographically smaller prefix."""
    return sorted(hyps, key=_hyp_key)[:n]


def end_detection(active: Sequence, completed: Sequence, cfg: DecodeConfig, step: int,
                  max_len: int) -> bool:
    """Stop when nothing is active, when ``step`` (the active prefix length)
    passes ``max_len``, or when the best completed hypothesis beats the best
    active one by more than ``cfg.end_margin``."""
    if step > max_len or not active:
        return True
    if not completed:
        return False
    best_done = max(c.combined for c in completed)
    best_active = max(h.combined for h in active)
    return best_done > best_active + cfg.end_margin


class _Done(NamedTuple):
    labels: tuple[str, ...]
    combined: float


def _ranked(done: Sequence[_Done]) -> list[tuple[tuple[str, ...], float]]:
    return [(d.labels, d.combined) for d in sorted(done, key=lambda d: (-d.combined, len(d.labels), d.labels))]


def label_map(scorer: Scorer, graphs: GraphSet) -> list[int | None]:
    """Graph label id for each scorer label (None for <eos>)."""
    out = []
    syms = graphs.symbols
    for sym in scorer.alphabet:
        if sym == EOS:
            out.append(None)
            continue
        idx = syms.get(sym)
        if idx is None or syms.role(sym) == "class":
            raise DecodeError(f"alphabet mismatch: scorer label {sym!r} is not a grapheme of the graph")
        out.append(idx)
    return out


def decode(scorer: Scorer, utt: Utterance, graphs: GraphSet, cfg: DecodeConfig | None = None) -> DecodeResult:
    cfg = cfg or DecodeConfig()
    labels = label_map(scorer, graphs)
    max_len = cfg.max_len or scorer.default_max_len(utt)
    use_graph = cfg.lam > 0
    baseline = cfg.mode == BASELINE
    expand = dyn_expand_single if baseline else dyn_expand
    token_cap = 1 if baseline else cfg.token_beam
    lam = cfg.lam
    stats = DecodeStats()

    active = [Hypothesis((), scorer.init(utt), 0.0, [Token(dyn_start(graphs), 0.0)])]
    done: list[_Done] = []
    last_alive: list = active
    step = 0
    while True:
        candidates = []
        n_closures = n_probes = 0
        for hyp in active:
            lp = scorer.logprobs(hyp.scorer_state)
            n_closures += len(hyp.tokens)
            for idx, label in enumerate(labels):
                score = lp[idx]
                if score == -math.inf:
                    continue
                model = hyp.model_logprob + score
                if label is None:
                    if use_graph:
                        final = min(t.cost + lam * dyn_final(graphs, t.state) for t in hyp.tokens)
                    else:
                        final = 0.0
                    if final < INF:
                        done.append(_Done(hyp.labels, model - final))
                    continue
                if step >= max_len:
                    continue
                if use_graph:
                    new_tokens = []
                    for t in hyp.tokens:
                        n_probes += 1
                        for s, w in expand(graphs, t.state, label):
                            new_tokens.append(Token(s, t.cost + lam * w))
                    if not new_tokens:
                        continue
                    if cfg.recombine:
                        stats.merged += len(new_tokens) - len({t.state for t in new_tokens})
                        new_tokens = token_recombine(new_tokens, token_cap)
                    else:
                        new_tokens.sort(key=_token_key)
                        if token_cap is not None:
                            new_tokens = new_tokens[:token_cap]
                else:
                    n_probes += len(hyp.tokens)
                    new_tokens = hyp.tokens
                candidates.append(_Candidate(hyp, idx, model, new_tokens, scorer.alphabet[idx]))
        stats.closures.append(n_closures)
        stats.expansions.append(n_probes)
        chosen = select_top_n(candidates, cfg.beam)
        if chosen:
            last_alive = chosen
        active = [Hypothesis(c.labels, scorer.advance(c.parent.scorer_state, c.idx), c.model_logprob, c.tokens)
                  for c in chosen]
        stats.hyps.append(len(active))
        stats.tokens.append(sum(len(h.tokens) for h in active))
        step += 1
        stats.steps = step
        if end_detection(active, done, cfg, step, max_len):
            break
    if done:
        return DecodeResult(_ranked(done), True, stats)
    # best effort: rank the last non-empty set of prefixes by their score so far
    return DecodeResult(_ranked([_Done(h.labels, h.combined) for h in last_alive]), False, stats)


class _Candidate:
    __slots__ = ("parent", "idx", "model_logprob", "tokens", "labels")

    def __init__(self, parent, idx, model_logprob, tokens, sym):
        self.parent = parent
        self.idx = idx
        self.model_logprob = model_logprob
        self.tokens = tokens
        self.labels = parent.labels + (sym,)

    @property
    def combined(self) -> float:
        return self.model_logprob - self.tokens[0].cost


def beam_search(scorer: Scorer, utt: Utterance, beam: int = 10, max_len: int | None = None,
                end_margin: float = 0.0) -> list[tuple[tuple[str, ...], float]]:
    """Scorer-only beam search, without any graph."""
    max_len = max_len or scorer.default_max_len(utt)
    beams = [((), scorer.init(utt), 0.0)]
    done = []
    for step in range(max_len + 1):
        cands = []
        for labels, state, score in beams:
            lp = scorer.logprobs(state)
            for idx, sym in enumerate(scorer.alphabet):
                if lp[idx] == -math.inf:
                    continue
                if idx == scorer.eos:
                    done.append((labels, score + lp[idx]))
                elif step < max_len:
                    cands.append((labels + (sym,), state, idx, score + lp[idx]))
        cands.sort(key=lambda c: (-c[3], len(c[0]), c[0]))
        beams = [(lab, scorer.advance(st, idx), sc) for lab, st, idx, sc in cands[:beam]]
        if not beams:
            break
        if done and max(s for _, s in done) > max(s for _, _, s in beams) + end_margin:
            break
    return sorted(done, key=lambda d: (-d[1], len(d[0]), d[0]))
