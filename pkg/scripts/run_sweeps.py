"""Reproduce the three trend tables on the synthetic suites.

    python scripts/run_sweeps.py results/

Writes btok.tsv (ambiguity suite), phrases.tsv (contextual suite) and
boost.tsv (contextual and general suites) and prints them.
"""

import argparse
import os
from pathlib import Path

from tokpass.decoder import BASELINE, DecodeConfig
from tokpass.evaluation import DecodeJob, decode_testset, sweep, sweep_table
from tokpass.synth import ambiguity_suite, contextual_suite, general_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--workers", type=int, default=int(os.environ.get("TOKPASS_WORKERS", "1")))
    ap.add_argument("--beam", type=int, default=10)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    job = DecodeJob(DecodeConfig(beam=args.beam))

    amb = ambiguity_suite()
    bundle = amb.bundle()
    table = sweep_table("btok", sweep(bundle, amb.items, "btok", [1, 2, 5, 10], job, args.workers))
    base = decode_testset(bundle, amb.items, DecodeJob(DecodeConfig(beam=args.beam, mode=BASELINE)), args.workers)
    table += f"# single-token baseline wer {base.wer:.6f}\n"
    (out / "btok.tsv").write_text(table)
    print(table)

    ctx = contextual_suite()
    table = sweep_table("phrases", sweep(ctx.bundle(), ctx.items, "phrases", [10, 100, 1000], job, args.workers))
    (out / "phrases.tsv").write_text(table)
    print(table)

    boosts = [-4, -3, -2, -1, 0, 1, 2]
    gen = general_suite()
    lines = ["boost\tcontextual_wer\tgeneral_wer"]
    ctx_rows = sweep(ctx.bundle(), ctx.items, "boost", boosts, job, args.workers)
    gen_rows = sweep(gen.bundle(), gen.items, "boost", boosts, job, args.workers)
    for c, g in zip(ctx_rows, gen_rows):
        lines.append(f"{c.value:g}\t{c.wer:.6f}\t{g.wer:.6f}")
    table = "\n".join(lines) + "\n"
    (out / "boost.tsv").write_text(table)
    print(table)


if __name__ == "__main__":
    main()
