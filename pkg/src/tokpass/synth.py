"""Synthetic LMs, phrase lists and posterior matrices for desk-scale experiments.

Posteriors are built directly from a target grapheme string, so which
hypothesis the scorer prefers is known by construction.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .arpa import BOS, EOS, NgramModel, write_arpa
from .builder import KEYWORD_TOKEN, ClassSpec, Speller
from .evaluation import Bundle, TestItem, build_bundle
from .scorer import EOS as EOS_LABEL, Utterance, write_posteriors

LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
CONSONANTS = "BCDFGKLMNPRSTVZ"
VOWELS = "AEIOU"


def peaked_posteriors(target: Sequence[str], alphabet: Sequence[str], p_true: float = 0.9,
                      overrides: dict[int, dict[str, float]] | None = None,
                      eos_floor: float = 1e-8) -> np.ndarray:
    """One row per target label plus a final <eos> row.

    Row ``i`` puts ``p_true`` on ``target[i]``, ``eos_floor`` on <eos> (an
    acoustic model rarely thinks the utterance is over mid-word) and spreads
    the rest evenly, unless ``overrides[i]`` gives explicit probabilities
    for some labels.
    """
    alphabet = list(alphabet)
    index = {a: i for i, a in enumerate(alphabet)}
    labels = list(target) + [EOS_LABEL]
    rows = []
    for i, lab in enumerate(labels):
        probs = dict(overrides.get(i, {})) if overrides and i in overrides else {lab: p_true}
        if EOS_LABEL in index and EOS_LABEL not in probs:
            probs[EOS_LABEL] = eos_floor
        rest = 1.0 - sum(probs.values())
        others = [a for a in alphabet if a not in probs]
        row = np.zeros(len(alphabet))
        for a, p in probs.items():
            row[index[a]] = p
        for a in others:
            row[index[a]] = rest / len(others)
        rows.append(np.log(row / row.sum()))
    return np.array(rows)


def spell_sentence(words: Sequence[str], delimiter: str = "_") -> list[str]:
    out = []
    for w in words:
        out.extend(w)
        out.append(delimiter)
    return out


def random_name(rng: random.Random, lo: int = 4, hi: int = 6) -> str:
    n = rng.randint(lo, hi)
    return "".join(rng.choice(CONSONANTS if i % 2 == 0 else VOWELS) for i in range(n))


@dataclass
class Suite:
    """An LM, class defaults, and a test set, with per-utterance notes."""

    name: str
    arpa: str
    speller: Speller
    classes: list[ClassSpec]
    items: list[TestItem]
    notes: dict[str, dict] = field(default_factory=dict)

    def bundle(self) -> Bundle:
        return build_bundle(self.arpa, self.speller, self.classes)

    def write(self, root) -> dict[str, Path]:
        """Write ARPA, speller, class manifest and test set in the CLI's formats."""
        root = Path(root)
        (root / "classes").mkdir(parents=True, exist_ok=True)
        (root / "testset" / "post").mkdir(parents=True, exist_ok=True)
        (root / "testset" / "manifests").mkdir(parents=True, exist_ok=True)
        (root / "lm.arpa").write_text(self.arpa, encoding="utf-8")
        (root / "speller.tsv").write_text(self.speller.to_text(), encoding="utf-8")
        (root / "alphabet.txt").write_text(" ".join(sorted(self.speller.alphabet)) + "\n", encoding="utf-8")
        (root / "classes.tsv").write_text(_manifest(self.classes, root / "classes", root), encoding="utf-8")
        index = []
        for item in self.items:
            uid = item.utt.id
            write_posteriors(root / "testset" / "post" / f"{uid}.post", item.alphabet, item.utt.context)
            manifest = "-"
            if item.classes:
                mdir = root / "testset" / "manifests"
                (mdir / f"{uid}.tsv").write_text(_manifest(item.classes, mdir, mdir, prefix=uid),
                                                 encoding="utf-8")
                manifest = f"manifests/{uid}.tsv"
            index.append(f"{uid}\tpost/{uid}.post\t{item.utt.reference}\t{manifest}")
        (root / "testset" / "index.tsv").write_text("\n".join(index) + "\n", encoding="utf-8")
        return {"arpa": root / "lm.arpa", "speller": root / "speller.tsv", "classes": root / "classes.tsv",
                "testset": root / "testset" / "index.tsv", "alphabet": root / "alphabet.txt"}


def _manifest(specs: Sequence[ClassSpec], directory: Path, base: Path, prefix: str = "") -> str:
    # phrase paths are written relative to the manifest's own directory
    lines = []
    for spec in specs:
        name = spec.token.strip("<>")
        fname = f"{prefix}.{name}.txt" if prefix else f"{name}.txt"
        (directory / fname).write_text("\n".join(spec.phrases) + "\n", encoding="utf-8")
        rel = (directory / fname).relative_to(base).as_posix()
        lines.append(f"{spec.token}\t{rel}\t{spec.boost!r}")
    return "\n".join(lines) + "\n"


def _char_speller(words: Sequence[str], alphabet: Sequence[str]) -> Speller:
    return Speller(frozenset(alphabet), {w: tuple(w) for w in words})


def ambiguity_suite(n_cases: int = 24, seed: int = 0, p_true: float = 0.97) -> Suite:
    """Back-off prefix ambiguity: direct bigram arcs hide the right word.

    Case ``i`` reads "CTX W". After CTX the LM has explicit bigrams to ``m``
    decoy words sharing W's two-letter prefix; W itself is only reachable
    through the back-off arc to the unigram state. At the first letter the
    token for W ranks ``m + 1``, so it survives only with a token beam of at
    least ``m + 1``, and a decoder that follows back-off arcs only when
    nothing matches never reaches it.
    """
    if n_cases > len(LETTERS):
        raise ValueError("at most 26 cases (one first letter each)")
    rng = random.Random(seed)
    firsts = rng.sample(LETTERS, n_cases)
    used: set[str] = set()

    def fresh(prefix: str, n: int, avoid_second: str | None = None) -> str:
        while True:
            tail = [rng.choice(LETTERS) for _ in range(n)]
            if avoid_second is not None and tail[0] == avoid_second:
                continue
            w = prefix + "".join(tail)
            if w not in used:
                used.add(w)
                return w

    model = NgramModel(order=2)
    model.probs[(BOS,)] = -99.0
    model.backoffs[(BOS,)] = -0.5
    model.probs[(EOS,)] = -1.0
    alphabet = list(LETTERS) + ["_", EOS_LABEL]
    items, notes, words = [], {}, []
    for i, first in enumerate(firsts):
        m = 1 + i % 8
        prefix = first + rng.choice(LETTERS)
        truth = fresh(prefix, 3)
        decoys = [fresh(prefix, 3, avoid_second=truth[2]) for _ in range(m)]
        ctx = fresh(rng.choice(LETTERS), 3)
        model.probs[(ctx,)] = -2.0
        model.backoffs[(ctx,)] = -0.5
        model.probs[(truth,)] = -1.5
        for j, d in enumerate(decoys):
            model.probs[(d,)] = -2.0
            model.probs[(ctx, d)] = -(0.3 + 0.05 * j)
        model.probs[(BOS, ctx)] = -0.5
        words += [ctx, truth] + decoys
        ref = [ctx, truth]
        uid = f"amb{i:02d}"
        post = peaked_posteriors(spell_sentence(ref), alphabet, p_true)
        items.append(TestItem(Utterance(uid, post, " ".join(ref)), alphabet))
        notes[uid] = {"decoys": m, "needed_tokens": m + 1, "truth": truth, "context": ctx}
    return Suite("ambiguity", write_arpa(model), _char_speller(words, LETTERS), [], items, notes)


def contextual_suite(n_utts: int = 30, n_distractors: int = 999, seed: int = 0,
                     confused_fraction: float = 0.75, keyword: str = "HEY NOVA",
                     keyword_boost: float = -2.0, class_boost: float = -1.0) -> Suite:
    """Wake word + "CALL/TEXT <contact>" with 1 true name and many distractors per utterance.

    For a ``confused_fraction`` of utterances one distractor (the confuser)
    is favored by the posteriors over the true name; those utterances are
    misrecognized exactly when the confuser is in the active phrase list.
    The rest favor the true name outright.
    """
    rng = random.Random(seed)
    pool: list[str] = []
    seen = set()
    while len(pool) < n_distractors + n_utts * 2 + 10:
        name = random_name(rng)
        if name not in seen:
            seen.add(name)
            pool.append(name)
    general = _general_words(rng, 12, seen)
    model = NgramModel(order=2)
    model.probs[(BOS,)] = -99.0
    model.backoffs[(BOS,)] = -0.2
    model.probs[(EOS,)] = -0.7
    for w, p in (("CALL", -1.0), ("TEXT", -1.0), ("<contact>", -1.5)):
        model.probs[(w,)] = p
    for w in general:
        model.probs[(w,)] = -1.3
    model.probs[(BOS, "CALL")] = -0.3
    model.probs[(BOS, "TEXT")] = -0.5
    model.probs[("CALL", "<contact>")] = -0.2
    model.probs[("TEXT", "<contact>")] = -0.2
    model.backoffs[("CALL",)] = -0.3
    model.backoffs[("TEXT",)] = -0.3
    alphabet = list(LETTERS) + ["_", EOS_LABEL]
    kw_spec = ClassSpec(KEYWORD_TOKEN, (keyword,), keyword_boost)
    default_contacts = ClassSpec("<contact>", tuple(pool[:10]), class_boost)
    items, notes = [], {}
    for u in range(n_utts):
        truth = pool[n_distractors + 10 + 2 * u]
        distractors = rng.sample(pool[:n_distractors + 10], n_distractors)
        verb = rng.choice(["CALL", "TEXT"])
        ref = keyword.split() + [verb, truth]
        target = spell_sentence(ref)
        overrides = {}
        confuser = None
        if rng.random() < confused_fraction:
            confuser = _confuser(rng, truth, seen)
            distractors[rng.randrange(len(distractors))] = confuser
            offset = len(spell_sentence(keyword.split() + [verb]))
            for j, (t, c) in enumerate(zip(truth, confuser)):
                if t != c:
                    overrides[offset + j] = {c: 0.55, t: 0.3}
        post = peaked_posteriors(target, alphabet, 0.9, overrides)
        uid = f"ctx{u:02d}"
        phrases = tuple(sorted(set([truth] + distractors)))
        classes = [ClassSpec("<contact>", phrases, class_boost), kw_spec]
        items.append(TestItem(Utterance(uid, post, " ".join(ref)), alphabet, classes))
        notes[uid] = {"truth": truth, "confuser": confuser}
    words = ["CALL", "TEXT"] + general
    return Suite("contextual", write_arpa(model), _char_speller(words, LETTERS),
                 [default_contacts, kw_spec], items, notes)


def _confuser(rng: random.Random, truth: str, seen: set) -> str:
    # same length, one or two letters swapped for other letters of the same kind
    while True:
        chars = list(truth)
        for j in rng.sample(range(len(chars)), rng.randint(1, 2)):
            kind = VOWELS if chars[j] in VOWELS else CONSONANTS
            chars[j] = rng.choice([c for c in kind if c != chars[j]])
        name = "".join(chars)
        if name not in seen:
            seen.add(name)
            return name


def _general_words(rng: random.Random, n: int, seen: set) -> list[str]:
    out = []
    while len(out) < n:
        w = random_name(rng, 3, 5)
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def general_suite(n_utts: int = 20, seed: int = 1, p_true: float = 0.75) -> Suite:
    """Class-free sentences over the contextual suite's LM (general ASR)."""
    base = contextual_suite(n_utts=1, n_distractors=50, seed=seed)
    rng = random.Random(seed + 1000)
    general = sorted(w for w in base.speller.spellings if w not in ("CALL", "TEXT"))
    alphabet = list(LETTERS) + ["_", EOS_LABEL]
    items = []
    for u in range(n_utts):
        ref = [rng.choice(general) for _ in range(rng.randint(2, 4))]
        post = peaked_posteriors(spell_sentence(ref), alphabet, p_true)
        items.append(TestItem(Utterance(f"gen{u:02d}", post, " ".join(ref)), alphabet))
    return Suite("general", base.arpa, base.speller, base.classes, items)


def random_ngram(rng: random.Random, words: Sequence[str], order: int = 2,
                 density: float = 0.4) -> NgramModel:
    """Random back-off model over ``words`` with a valid history structure."""
    model = NgramModel(order=order)
    vocab = list(words)
    model.probs[(BOS,)] = -99.0
    model.probs[(EOS,)] = round(rng.uniform(-1.5, -0.2), 3)
    for w in vocab:
        model.probs[(w,)] = round(rng.uniform(-1.5, -0.2), 3)
    histories = [(h,) for h in [BOS] + vocab]
    for n in range(2, order + 1):
        new = []
        for h in histories:
            for w in vocab + [EOS]:
                if rng.random() < density:
                    model.probs[h + (w,)] = round(rng.uniform(-1.0, -0.05), 3)
                    if w != EOS:
                        new.append(h + (w,))
            if rng.random() < 0.7:
                model.backoffs[h] = round(rng.uniform(-1.0, 0.0), 3)
        histories = new
    return model


def random_graph_bundle(rng: random.Random, n_letters: int | None = None, with_keyword: bool | None = None,
                        order: int = 2) -> Bundle:
    """Small random class LM: at most 4 letters plus the delimiter.

    Phrases may duplicate LM words and each other, so the composed machine
    is non-deterministic in all the ways a real one is.
    """
    n_letters = n_letters or rng.randint(2, 4)
    letters = LETTERS[:n_letters]

    def word(lo=1, hi=3):
        return "".join(rng.choice(letters) for _ in range(rng.randint(lo, hi)))

    words = sorted({word() for _ in range(rng.randint(2, 4))})
    n_classes = rng.randint(1, 2)
    tokens = [f"<c{k}>" for k in range(n_classes)]
    specs = []
    for tok in tokens:
        phrases = set()
        for _ in range(rng.randint(1, 3)):
            r = rng.random()
            if r < 0.3:
                phrases.add(rng.choice(words))
            elif r < 0.45:
                phrases.add(f"{word(1, 2)} {word(1, 2)}")
            else:
                phrases.add(word())
        specs.append(ClassSpec(tok, tuple(sorted(phrases)), round(rng.uniform(-1, 1), 3)))
    if with_keyword is None:
        with_keyword = rng.random() < 0.5
    if with_keyword:
        specs.append(ClassSpec(KEYWORD_TOKEN, (word(),), round(rng.uniform(-1, 1), 3)))
    model = random_ngram(rng, words + tokens, order=order)
    return build_bundle(write_arpa(model), _char_speller(words, letters), specs)


def random_posteriors(rng: random.Random, alphabet: Sequence[str], steps: int,
                      support: tuple[int, int] = (2, 3)) -> np.ndarray:
    """Sparse random rows: each step gives mass to only a few labels."""
    rows = []
    for _ in range(steps):
        k = rng.randint(*support)
        chosen = rng.sample(range(len(alphabet)), min(k, len(alphabet)))
        row = np.full(len(alphabet), -math.inf)
        weights = np.array([rng.uniform(0.05, 1.0) for _ in chosen])
        row[chosen] = np.log(weights / weights.sum())
        rows.append(row)
    return np.array(rows)


def duplicate_phrase_bundle(rng: random.Random, n_dups: int = 2, n_extra: int = 3) -> tuple[Bundle, list[str], list[str]]:
    """Song names that are both LM words and ``<song>`` phrases.

    Neither the names nor ``<song>`` have continuations or back-off weights,
    so after a name and its delimiter the word route and the class route
    land in the same outside state. Returns (bundle, verbs, duplicated names).
    """
    seen: set[str] = set()

    def fresh(lo=3, hi=5):
        while True:
            w = random_name(rng, lo, hi)
            if w not in seen:
                seen.add(w)
                return w

    verbs = [fresh(3, 4) for _ in range(2)]
    dups = [fresh() for _ in range(n_dups)]
    extra = [fresh() for _ in range(n_extra)]
    model = NgramModel(order=2)
    model.probs[(BOS,)] = -99.0
    model.backoffs[(BOS,)] = round(rng.uniform(-1.0, -0.1), 3)
    model.probs[(EOS,)] = round(rng.uniform(-1.0, -0.3), 3)
    model.probs[("<song>",)] = round(rng.uniform(-1.5, -0.5), 3)
    for w in verbs + dups:
        model.probs[(w,)] = round(rng.uniform(-1.5, -0.5), 3)
    for v in verbs:
        model.probs[(BOS, v)] = round(rng.uniform(-0.6, -0.1), 3)
        model.probs[(v, "<song>")] = round(rng.uniform(-0.8, -0.1), 3)
        for d in dups:
            if rng.random() < 0.7:
                model.probs[(v, d)] = round(rng.uniform(-0.8, -0.1), 3)
        model.backoffs[(v,)] = round(rng.uniform(-1.0, -0.1), 3)
    spec = ClassSpec("<song>", tuple(sorted(dups + extra)), round(rng.uniform(-2.0, 1.0), 3))
    letters = sorted(set("".join(verbs + dups + extra)))
    bundle = build_bundle(write_arpa(model), _char_speller(verbs + dups, letters), [spec])
    return bundle, verbs, dups
