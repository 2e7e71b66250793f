"""End-to-end run of every CLI stage on a small generated corpus.

    python scripts/demo_pipeline.py --out runs/demo

Uses tone voices and random network weights, so the scores only show that
the plumbing works; they say nothing about extraction quality.
"""

import argparse
import json
from pathlib import Path

from tce.cli import main


def run(argv):
    print("$ tce", " ".join(map(str, argv)))
    code = main([str(a) for a in argv])
    if code:
        raise SystemExit(code)


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/demo")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=4)
    ap.add_argument("--seg-len", type=float, default=10.0)
    return ap.parse_args()


def main_():
    args = parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    s = ["--seed", args.seed]
    run([*s, "synth", "--demo-pool", 16, "--n", 6, "--duration", 30, "--out", out / "synth"])
    run([*s, "augment", "--catalog", out / "synth/catalog.json", "--pool", out / "synth/pool/pool.json",
         "--p", 0.5, "--out", out / "aug"])
    spec = {"catalog": "aug/catalog.json", "counts": {"test": args.samples}, "seg_len_s": args.seg_len,
            "enrollment_s": 3, "min_speech_frac": 0.5}
    (out / "spec.json").write_text(json.dumps(spec, indent=2))
    run([*s, "mix", "--spec", out / "spec.json", "--out", out / "mix"])
    # a reduced network keeps the demo under a minute on one core
    small = {"emb_channels": 8, "n_blocks": 2, "window": 50, "stride": 50, "hidden": 16, "heads": 2,
             "qk_dim": 16}
    (out / "model.json").write_text(json.dumps(small, indent=2))
    run([*s, "separate", "--manifest", out / "mix/manifest.json", "--config", out / "model.json",
         "--out", out / "sep"])
    run([*s, "eval", "--manifest", out / "sep/manifest.json", "--out", out / "eval.csv"])
    run([*s, "perturb", "--mode", "random", "--tau", 1.0, "--manifest", out / "mix/manifest.json",
         "--out", out / "perturbed"])
    print(f"outputs under {out}")


if __name__ == "__main__":
    main_()
