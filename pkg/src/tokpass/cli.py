"""Command-line front end: build, decode, wer, sweep.

Errors are reported on stderr as one line, ``error: <category>: <message>``,
with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .arpa import ArpaError
from .builder import GraphError, Speller
from .decoder import BASELINE, MULTI, DecodeConfig, DecodeError
from .evaluation import (SWEEP_AXES, Bundle, BundleError, DecodeJob, build_bundle, decode_testset,
                         edit_ops, load_class_specs, read_testset, sweep, sweep_table)
from .fst import FstError
from .scorer import ScorerError

WORKERS_ENV = "TOKPASS_WORKERS"

EXIT_CODES = {"usage": 2, "input": 3, "graph": 4, "alphabet": 5, "decode": 6}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        self.category = category
        super().__init__(message)


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def cmd_build(args) -> int:
    try:
        arpa_text = Path(args.arpa).read_text(encoding="utf-8")
        speller_text = Path(args.speller).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError("input", f"{exc.filename}: {exc.strerror}")
    alphabet = args.alphabet.split() if args.alphabet else None
    try:
        speller = Speller.from_text(speller_text, alphabet=alphabet, delimiter=args.delimiter)
        specs = load_class_specs(args.classes) if args.classes else []
    except OSError as exc:
        raise CliError("input", f"{exc.filename}: {exc.strerror}")
    except BundleError as exc:
        raise CliError("input", str(exc))
    except GraphError as exc:
        raise CliError("graph", str(exc))
    try:
        bundle = build_bundle(arpa_text, speller, specs)
    except ArpaError as exc:
        raise CliError("graph", f"{args.arpa}: {exc}")
    except (GraphError, FstError) as exc:
        raise CliError("graph", str(exc))
    bundle.write(args.out)
    print(f"wrote bundle to {args.out}: {bundle.outside.num_states} outside states, "
          f"{len(bundle.classes)} class(es)" + (", keyword" if bundle.keyword else ""))
    return 0


def _job(args) -> DecodeJob:
    try:
        cfg = DecodeConfig(beam=args.beam, token_beam=args.btok, lam=args.lam, mode=args.mode,
                           max_len=args.max_len, end_margin=args.end_margin)
    except DecodeError as exc:
        raise CliError("usage", str(exc))
    return DecodeJob(cfg, args.class_boost, args.keyword_boost, getattr(args, "phrase_limit", None),
                     args.seed)


def _load(args):
    try:
        bundle = Bundle.read(args.bundle)
        items = read_testset(args.testset)
    except OSError as exc:
        raise CliError("input", f"{exc.filename}: {exc.strerror}")
    except (BundleError, ScorerError, FstError) as exc:
        raise CliError("input", str(exc))
    except GraphError as exc:
        raise CliError("graph", str(exc))
    return bundle, items


def _run(fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except DecodeError as exc:
        category = "alphabet" if "alphabet" in str(exc) else "decode"
        raise CliError(category, str(exc))
    except (GraphError, BundleError) as exc:
        raise CliError("graph", str(exc))
    except ScorerError as exc:
        raise CliError("input", str(exc))


def cmd_decode(args) -> int:
    bundle, items = _load(args)
    report = _run(decode_testset, bundle, items, _job(args), args.workers)
    hyp_text = report.hypothesis_text()
    summary = report.summary_text()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "hyp.txt").write_text(hyp_text, encoding="utf-8")
        (out / "summary.tsv").write_text(summary, encoding="utf-8")
    else:
        sys.stdout.write(hyp_text)
    sys.stdout.write(summary)
    return 0


def _read_pairs(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        utt, _, words = line.partition("\t")
        out[utt] = words
    return out


def cmd_wer(args) -> int:
    try:
        refs = _read_pairs(args.ref)
        hyps = _read_pairs(args.hyp)
    except OSError as exc:
        raise CliError("input", f"{exc.filename}: {exc.strerror}")
    errors = words = 0
    for utt, ref in refs.items():
        ref = ref.split()
        if not ref:
            raise CliError("input", f"empty reference for {utt}")
        errors += edit_ops(ref, hyps.get(utt, "").split())
        words += len(ref)
    print(f"wer\t{errors / words!r}\nerrors\t{errors}\nref_words\t{words}")
    return 0


def cmd_sweep(args) -> int:
    bundle, items = _load(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise CliError("usage", f"bad --values {args.values!r}")
    if not values:
        raise CliError("usage", "no sweep values")
    rows = _run(sweep, bundle, items, args.axis, values, _job(args), args.workers)
    table = sweep_table(args.axis, rows)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def _add_decode_flags(p):
    p.add_argument("bundle")
    p.add_argument("testset", help="index file: id<TAB>posteriors<TAB>reference<TAB>manifest")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--btok", type=int, default=10)
    p.add_argument("--mode", choices=(MULTI, BASELINE), default=MULTI)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--end-margin", type=float, default=0.0)
    p.add_argument("--class-boost", type=float, default=None)
    p.add_argument("--keyword-boost", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=_default_workers())


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tokpass", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="compile ARPA LM + classes into a graph bundle")
    p.add_argument("arpa")
    p.add_argument("speller", help="word<TAB>g1 g2 ... lines")
    p.add_argument("classes", nargs="?", help="class manifest: token<TAB>phrase-file<TAB>boost")
    p.add_argument("out")
    p.add_argument("--delimiter", default="_")
    p.add_argument("--alphabet", default=None, help="space-separated graphemes (default: from speller)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("decode", help="decode a test set")
    _add_decode_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("wer", help="score id<TAB>words hypothesis file against references")
    p.add_argument("ref")
    p.add_argument("hyp")
    p.set_defaults(func=cmd_wer)

    p = sub.add_parser("sweep", help="WER over one decoding parameter")
    _add_decode_flags(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]


if __name__ == "__main__":
    sys.exit(main())
