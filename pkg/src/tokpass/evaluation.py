"""Bundles of compiled graphs, test sets, corpus decoding, WER and sweeps."""

from __future__ import annotations

import dataclasses
import random
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .arpa import parse_arpa
from .builder import (KEYWORD_TOKEN, ClassSpec, GraphError, Speller, build_class_fst, compile_ngram_fst,
                      grapheme_table, is_class_token, read_class_manifest, read_phrases, spell_fst)
from .decoder import DecodeConfig, DecodeStats, decode
from .dynamic import GraphSet, make_graph_set
from .fst import Fst, SymbolTable, dump_text, load_text
from .scorer import PosteriorScorer, Utterance, read_posteriors


class BundleError(ValueError):
    pass


def edit_ops(ref: Sequence, hyp: Sequence) -> int:
    """Minimum substitutions + deletions + insertions turning ``ref`` into ``hyp``."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> float:
    if isinstance(reference, str):
        reference = reference.split()
    if isinstance(hypothesis, str):
        hypothesis = hypothesis.split()
    if not reference:
        raise ValueError("empty reference")
    return edit_ops(reference, hypothesis) / len(reference)


def labels_to_words(labels: Sequence[str], delimiter: str) -> list[str]:
    words, cur = [], []
    for g in labels:
        if g == delimiter:
            if cur:
                words.append("".join(cur))
            cur = []
        else:
            cur.append(g)
    if cur:
        words.append("".join(cur))
    return words


@dataclass
class Bundle:
    """Compiled outside LM plus default class graphs."""

    symbols: SymbolTable
    outside: Fst
    speller: Speller
    classes: dict[str, tuple[Fst, float]]
    keyword: tuple[Fst, float] | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def delimiter(self) -> str:
        return self.speller.delimiter

    def class_fst(self, spec: ClassSpec) -> Fst:
        key = (spec.token, spec.phrases)
        fst = self._cache.get(key)
        if fst is None:
            fst = self._cache[key] = build_class_fst(spec, self.speller, self.symbols.copy())
        return fst

    def graph_set(self, overrides: Sequence[ClassSpec] = (), class_boost: float | None = None,
                  keyword_boost: float | None = None) -> GraphSet:
        """GraphSet for one utterance: bundle defaults with per-utterance phrase lists on top."""
        classes = dict(self.classes)
        keyword = self.keyword
        for spec in overrides:
            fst = self.class_fst(spec)
            if spec.token == KEYWORD_TOKEN:
                keyword = (fst, spec.boost)
            elif spec.token not in self.symbols or self.symbols.role(spec.token) != "class":
                raise BundleError(f"utterance manifest names unknown class {spec.token}")
            else:
                classes[spec.token] = (fst, spec.boost)
        if class_boost is not None:
            classes = {t: (f, class_boost) for t, (f, _) in classes.items()}
        if keyword is not None and keyword_boost is not None:
            keyword = (keyword[0], keyword_boost)
        return make_graph_set(self.outside, self.symbols, classes, keyword)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "graphemes.syms").write_text(self.symbols.to_text(), encoding="utf-8")
        (out / "speller.tsv").write_text(self.speller.to_text(), encoding="utf-8")
        (out / "outside.fst").write_text(dump_text(self.outside, self.symbols), encoding="utf-8")
        lines = [f"delimiter\t{self.delimiter}",
                 f"alphabet\t{' '.join(sorted(self.speller.alphabet))}",
                 "outside\toutside.fst"]
        for token in sorted(self.classes):
            fst, boost = self.classes[token]
            name = f"class_{_slug(token)}.fst"
            (out / name).write_text(dump_text(fst, self.symbols), encoding="utf-8")
            lines.append(f"class\t{token}\t{name}\t{boost!r}")
        if self.keyword is not None:
            (out / "keyword.fst").write_text(dump_text(self.keyword[0], self.symbols), encoding="utf-8")
            lines.append(f"keyword\t{KEYWORD_TOKEN}\tkeyword.fst\t{self.keyword[1]!r}")
        (out / "bundle.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, bundle_dir) -> Bundle:
        root = Path(bundle_dir)
        manifest = root / "bundle.tsv"
        if not manifest.exists():
            raise BundleError(f"{manifest}: no bundle manifest")
        symbols = SymbolTable.from_text((root / "graphemes.syms").read_text(encoding="utf-8"))
        fields = {}
        classes = {}
        keyword = None
        outside = None
        for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
            parts = line.split("\t")
            kind = parts[0]
            try:
                if kind in ("delimiter", "alphabet"):
                    fields[kind] = parts[1]
                elif kind == "outside":
                    outside = _load(root / parts[1], symbols)
                elif kind in ("class", "keyword"):
                    entry = (_load(root / parts[2], symbols), float(parts[3]))
                    if kind == "class":
                        classes[parts[1]] = entry
                    else:
                        keyword = entry
                else:
                    raise BundleError(f"unknown entry {kind!r}")
            except (IndexError, ValueError) as exc:
                raise BundleError(f"{manifest}:{lineno}: {exc}") from None
        if outside is None or "delimiter" not in fields:
            raise BundleError(f"{manifest}: incomplete bundle")
        speller = Speller.from_text((root / "speller.tsv").read_text(encoding="utf-8"),
                                    alphabet=fields.get("alphabet", "").split(),
                                    delimiter=fields["delimiter"])
        return cls(symbols, outside, speller, classes, keyword)


def _load(path: Path, symbols: SymbolTable) -> Fst:
    try:
        return load_text(path.read_text(encoding="utf-8"), symbols)
    except OSError as exc:
        raise BundleError(f"cannot read {path}: {exc.strerror}") from None


def _slug(token: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", token).strip("_") or "class"


def build_bundle(arpa_text: str, speller: Speller, specs: Sequence[ClassSpec]) -> Bundle:
    """Compile the outside LM and the default class graphs."""
    model = parse_arpa(arpa_text)
    wsyms = SymbolTable()
    word_fst = compile_ngram_fst(model, wsyms)
    lm_classes = {w for w in model.vocab if is_class_token(w)}
    by_token = {s.token: s for s in specs}
    missing = sorted(lm_classes - set(by_token))
    if missing:
        raise GraphError(f"class token {missing[0]} in LM has no phrase list")
    class_tokens = (lm_classes | set(by_token)) - {KEYWORD_TOKEN}
    if KEYWORD_TOKEN in by_token:
        class_tokens.add(KEYWORD_TOKEN)
    gsyms = grapheme_table(speller, class_tokens)
    outside = spell_fst(word_fst, wsyms, speller, gsyms)
    classes = {}
    keyword = None
    for spec in specs:
        fst = build_class_fst(spec, speller, gsyms)
        if spec.token == KEYWORD_TOKEN:
            keyword = (fst, spec.boost)
        else:
            classes[spec.token] = (fst, spec.boost)
    return Bundle(gsyms, outside, speller, classes, keyword)


def load_class_specs(manifest_path) -> list[ClassSpec]:
    specs = []
    for entry in read_class_manifest(manifest_path):
        try:
            phrases = read_phrases(entry.path)
        except OSError:
            raise BundleError(f"phrase file not found: {entry.path}") from None
        specs.append(ClassSpec(entry.token, tuple(phrases), entry.boost))
    return specs


@dataclass
class TestItem:
    utt: Utterance
    alphabet: list[str]
    classes: list[ClassSpec] = field(default_factory=list)

    __test__ = False  # not a pytest class


def read_testset(index_path) -> list[TestItem]:
    """``utt-id<TAB>posterior-path<TAB>reference<TAB>manifest-path`` lines ('-' = no manifest)."""
    index_path = Path(index_path)
    root = index_path.parent
    items = []
    seen = set()
    for lineno, line in enumerate(index_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) == 3:
            parts.append("-")
        if len(parts) != 4 or not parts[2].strip():
            raise BundleError(f"{index_path}:{lineno}: expected 'id<TAB>posteriors<TAB>reference<TAB>manifest'")
        utt_id, post, ref, manifest = parts
        if utt_id in seen:
            raise BundleError(f"{index_path}:{lineno}: duplicate utterance id {utt_id}")
        seen.add(utt_id)
        alphabet, matrix = read_posteriors(root / post)
        specs = load_class_specs(root / manifest) if manifest not in ("", "-") else []
        items.append(TestItem(Utterance(utt_id, matrix, ref), alphabet, specs))
    return items


def limit_phrases(phrases: Sequence[str], reference: str, n: int, seed: int = 0) -> tuple[str, ...]:
    """First ``n`` phrases of a fixed seeded order, phrases in the reference first.

    Subsets for increasing ``n`` are nested.
    """
    ref = f" {' '.join(reference.split())} "
    keep = [p for p in phrases if f" {' '.join(p.split())} " in ref]
    rest = [p for p in phrases if p not in keep]
    random.Random(seed).shuffle(rest)
    return tuple(keep + rest[:max(0, n - len(keep))])


@dataclass
class UttResult:
    id: str
    hypothesis: str
    reference: str
    errors: int
    ref_words: int
    seconds: float
    complete: bool
    stats: DecodeStats


@dataclass
class Report:
    results: list[UttResult]

    @property
    def wer(self) -> float:
        words = sum(r.ref_words for r in self.results)
        return sum(r.errors for r in self.results) / words if words else 0.0

    @property
    def mean_time(self) -> float:
        return sum(r.seconds for r in self.results) / max(1, len(self.results))

    @property
    def mean_tokens(self) -> float:
        return sum(r.stats.mean_tokens_per_step for r in self.results) / max(1, len(self.results))

    def hypothesis_text(self) -> str:
        return "".join(f"{r.id}\t{r.hypothesis}\n" for r in self.results)

    def summary_text(self) -> str:
        incomplete = sum(not r.complete for r in self.results)
        return (f"utterances\t{len(self.results)}\n"
                f"wer\t{self.wer!r}\n"
                f"errors\t{sum(r.errors for r in self.results)}\n"
                f"ref_words\t{sum(r.ref_words for r in self.results)}\n"
                f"incomplete\t{incomplete}\n")


@dataclass
class DecodeJob:
    cfg: DecodeConfig
    class_boost: float | None = None
    keyword_boost: float | None = None
    phrase_limit: int | None = None
    seed: int = 0


def decode_item(bundle: Bundle, item: TestItem, job: DecodeJob) -> UttResult:
    specs = item.classes
    if job.phrase_limit is not None:
        specs = [dataclasses.replace(s, phrases=limit_phrases(s.phrases, item.utt.reference or "",
                                                              job.phrase_limit, job.seed))
                 for s in specs]
    graphs = bundle.graph_set(specs, job.class_boost, job.keyword_boost)
    scorer = PosteriorScorer(item.alphabet)
    t0 = time.perf_counter()
    result = decode(scorer, item.utt, graphs, job.cfg)
    seconds = time.perf_counter() - t0
    words = labels_to_words(result.best or (), bundle.delimiter)
    ref = (item.utt.reference or "").split()
    return UttResult(item.utt.id, " ".join(words), " ".join(ref), edit_ops(ref, words), len(ref),
                     seconds, result.complete, result.stats)


def _decode_star(args):
    return decode_item(*args)


def decode_testset(bundle: Bundle, items: Sequence[TestItem], job: DecodeJob, workers: int = 1) -> Report:
    """Decode every item; results stay in input order whatever ``workers`` is."""
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_decode_star, [(bundle, it, job) for it in items]))
    else:
        results = [decode_item(bundle, it, job) for it in items]
    return Report(results)


@dataclass
class SweepRow:
    value: float
    wer: float
    mean_time: float
    mean_tokens: float


SWEEP_AXES = ("btok", "phrases", "boost")


def sweep(bundle: Bundle, items: Sequence[TestItem], axis: str, values: Sequence[float],
          job: DecodeJob, workers: int = 1) -> list[SweepRow]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}")
    rows = []
    for v in values:
        if axis == "btok":
            j = dataclasses.replace(job, cfg=dataclasses.replace(job.cfg, token_beam=int(v)))
        elif axis == "phrases":
            j = dataclasses.replace(job, phrase_limit=int(v))
        else:
            j = dataclasses.replace(job, class_boost=float(v))
        rep = decode_testset(bundle, items, j, workers)
        rows.append(SweepRow(v, rep.wer, rep.mean_time, rep.mean_tokens))
    return rows


def sweep_table(axis: str, rows: Sequence[SweepRow]) -> str:
    lines = [f"{axis}\twer\tmean_time\tmean_tokens_per_step"]
    lines += [f"{r.value:g}\t{r.wer:.6f}\t{r.mean_time:.6f}\t{r.mean_tokens:.3f}" for r in rows]
    return "\n".join(lines) + "\n"
