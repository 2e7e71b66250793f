"""Small end-to-end CLI run shared by the CLI and acceptance tests."""

import hashlib
import json
from pathlib import Path

from tce.cli import main

SMALL_MODEL = {"emb_channels": 4, "n_blocks": 2, "window": 10, "stride": 10, "hidden": 8,
               "heads": 2, "qk_dim": 8}


def run_pipeline(root: Path, seed: int = 3) -> dict[str, Path]:
    root = Path(root)
    dirs = {k: root / k for k in ("synth", "aug", "mix", "sep", "pert_random", "pert_left")}

    def call(*argv):
        code = main(["--seed", str(seed), *map(str, argv)])
        assert code == 0, argv

    call("synth", "--demo-pool", 12, "--n", 5, "--duration", 20, "--out", dirs["synth"])
    pool = dirs["synth"] / "pool" / "pool.json"
    call("augment", "--catalog", dirs["synth"] / "catalog.json", "--pool", pool, "--p", 0.5,
         "--out", dirs["aug"])
    spec = {"catalog": "aug/catalog.json", "counts": {"test": 2}, "seg_len_s": 8,
            "enrollment_s": 2, "min_speech_frac": 0.5}
    (root / "spec.json").write_text(json.dumps(spec))
    call("mix", "--spec", root / "spec.json", "--out", dirs["mix"])
    (root / "model.json").write_text(json.dumps(SMALL_MODEL))
    call("separate", "--manifest", dirs["mix"] / "manifest.json", "--config", root / "model.json",
         "--out", dirs["sep"])
    call("eval", "--manifest", dirs["sep"] / "manifest.json", "--out", root / "eval.csv")
    call("perturb", "--mode", "random", "--tau", 1.0, "--manifest", dirs["mix"] / "manifest.json",
         "--out", dirs["pert_random"])
    call("perturb", "--mode", "left", "--manifest", dirs["mix"] / "manifest.json",
         "--out", dirs["pert_left"])
    dirs["eval"] = root / "eval.csv"
    return dirs


def payload_digests(root: Path) -> dict[str, str]:
    """sha256 of every manifest, transcript, CSV and WAV under ``root``, keyed by relative path.

    Invocation records (``*run.json``) are excluded because they name the output paths.
    """
    root = Path(root)
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and not p.name.endswith("run.json"):
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out
