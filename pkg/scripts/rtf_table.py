"""Real-time factor of each global-module variant at the default config.

    python scripts/rtf_table.py --lens 30 60 --reps 3 --out runs/rtf.json

Prints one row per (variant, input length) and the 30 -> 60 s growth factor.
Only the ordering is meaningful; absolute numbers depend on the machine.
"""

import argparse
import json
import logging
from pathlib import Path

from tce.netref import VARIANTS, ModelConfig
from tce.netref.bench import rtf_bench


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--variants", nargs="+", default=["pooling_attention", "full_attention"],
                    choices=VARIANTS)
    ap.add_argument("--lens", nargs="+", type=float, default=[30.0, 60.0])
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out")
    return ap.parse_args()


def main():
    args = parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    results = {}
    for n in args.lens:
        results[n] = rtf_bench(ModelConfig(), args.variants, n, args.reps, threads=args.threads)
    print(f"{'variant':<20}{'len s':>8}{'RTF':>10}{'median s':>12}")
    for n, table in results.items():
        for v, row in table.items():
            print(f"{v:<20}{n:>8.0f}{row['rtf']:>10.4f}{row['median_s']:>12.2f}")
    if len(args.lens) >= 2:
        lo, hi = min(args.lens), max(args.lens)
        for v in args.variants:
            g = results[hi][v]["median_s"] / results[lo][v]["median_s"]
            print(f"{v}: runtime x{g:.2f} from {lo:g} s to {hi:g} s")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps({str(k): v for k, v in results.items()}, indent=2))


if __name__ == "__main__":
    main()
