import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tokpass.builder import ClassSpec, Speller  # noqa: E402
from tokpass.evaluation import build_bundle  # noqa: E402
from tokpass.fst import INF  # noqa: E402
from tokpass.synth import LETTERS  # noqa: E402

TOY_WORDS = ["HEY", "CALL", "ALEX", "CHEN", "MOM"]

# after "ALEX" the LM lists only CHEN; CALL needs the back-off arc
BACKOFF_ARPA = """\\data\\
ngram 1=5
ngram 2=2

\\1-grams:
-1.0\t</s>
-99\t<s>\t-0.3
-0.7\tALEX\t-0.4
-0.8\tCHEN
-0.9\tCALL

\\2-grams:
-0.2\t<s> ALEX
-0.1\tALEX CHEN

\\end\\
"""

# MELODY is both an LM word and a <song> phrase; neither has continuations,
# so both routes end in the unigram state
DUPLICATE_ARPA = """\\data\\
ngram 1=5
ngram 2=3

\\1-grams:
-0.8\t</s>
-99\t<s>\t-0.3
-0.7\tPLAY\t-0.4
-1.1\tMELODY
-1.2\t<song>

\\2-grams:
-0.2\t<s> PLAY
-0.5\tPLAY MELODY
-0.4\tPLAY <song>

\\end\\
"""


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.LINES:
            terminalreporter.write_line(line)


def char_speller(words, alphabet=LETTERS):
    return Speller(frozenset(alphabet), {w: tuple(w) for w in words})


@pytest.fixture
def backoff_bundle():
    return build_bundle(BACKOFF_ARPA, char_speller(["ALEX", "CHEN", "CALL"]), [])


@pytest.fixture
def duplicate_bundle():
    spec = ClassSpec("<song>", ("MELODY", "HARMONY"), -0.5)
    return build_bundle(DUPLICATE_ARPA, char_speller(["PLAY", "MELODY"]), [spec])


def sample_accepted(graphs, rng, labels, max_len):
    """Random label sequence the graph accepts, found by a random walk."""
    from tokpass.dynamic import dyn_expand, dyn_final, dyn_start

    for _ in range(50):
        tokens, seq = {dyn_start(graphs)}, []
        while len(seq) < max_len:
            finishable = any(dyn_final(graphs, t) < INF for t in tokens)
            if seq and finishable and rng.random() < 0.25:
                return seq
            options = [(lab, {s for t in tokens for s, _ in dyn_expand(graphs, t, graphs.symbols.id(lab))})
                       for lab in labels]
            options = [o for o in options if o[1]]
            if not options:
                break
            lab, tokens = rng.choice(options)
            seq.append(lab)
        if seq and any(dyn_final(graphs, t) < INF for t in tokens):
            return seq
    return []


def random_decode_instance(seed, max_steps=7):
    """Random small class LM plus posteriors built around one accepted sequence.

    Each row favours the sequence's label and spreads the rest over one or
    two random distractors (sometimes <eos>), so the search has real
    alternatives both inside and outside the graph.
    """
    import random

    import numpy as np

    from tokpass.scorer import EOS, PosteriorScorer, Utterance
    from tokpass.synth import random_graph_bundle

    rng = random.Random(seed)
    bundle = random_graph_bundle(rng)
    graphs = bundle.graph_set()
    graphemes = sorted(bundle.speller.alphabet) + [bundle.delimiter]
    alphabet = graphemes + [EOS]
    target = sample_accepted(graphs, rng, graphemes, max_steps) + [EOS]
    rows = []
    for lab in target:
        row = np.full(len(alphabet), -np.inf)
        weights = {lab: rng.uniform(0.3, 1.0)}
        for other in rng.sample(alphabet, rng.randint(1, 2)):
            weights.setdefault(other, rng.uniform(0.05, 1.0))
        total = sum(weights.values())
        for k, w in weights.items():
            row[alphabet.index(k)] = np.log(w / total)
        rows.append(row)
    matrix = np.array(rows)
    graph_ids = {a: graphs.symbols.id(a) for a in graphemes}
    return graphs, PosteriorScorer(alphabet), Utterance(f"r{seed}", matrix), alphabet, matrix, graph_ids
