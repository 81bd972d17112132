"""Write the synthetic evaluation suites in the CLI's file formats.

    python scripts/make_suites.py data/

creates data/{ambiguity,contextual,general}/ with lm.arpa, speller.tsv,
alphabet.txt, classes.tsv and testset/index.tsv, ready for ``tokpass build``
and ``tokpass decode``.
"""

import argparse
from pathlib import Path

from tokpass.synth import ambiguity_suite, contextual_suite, general_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--contextual-utts", type=int, default=30)
    ap.add_argument("--distractors", type=int, default=999)
    args = ap.parse_args()
    out = Path(args.out)
    suites = [ambiguity_suite(seed=args.seed),
              contextual_suite(n_utts=args.contextual_utts, n_distractors=args.distractors, seed=args.seed),
              general_suite(seed=args.seed + 1)]  # the general suite defaults to seed 1
    for suite in suites:
        paths = suite.write(out / suite.name)
        print(f"{suite.name}: {len(suite.items)} utterances -> {paths['testset']}")


if __name__ == "__main__":
    main()
