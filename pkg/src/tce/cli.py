"""Command line entry point: ``tce <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import Waveform, read_wav, write_wav
from .augment import AugmentPlan, TurnTakingStats, augment_conversation, default_stats, synth_conversation
from .corpus import (
    Conversation,
    UtterancePool,
    load_embedding,
    make_tone_pool,
    render_tracks,
    save_conversation,
)
from .errors import TCEError
from .metrics import evaluate, incorrect_target_ratio, paired_t_test, summarize
from .mixer import DatasetSpec, build_dataset, load_manifest, save_manifest
from .netref import VARIANTS, ModelConfig, WeightStore, forward
from .netref.bench import rtf_bench
from .perturb import random_shift, shift_all_left
from .seeding import derive_seed
from .transcript import load_transcript, save_transcript

log = logging.getLogger("tce")


# -- helpers -----------------------------------------------------------------

def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _run_record(args, out_path: Path) -> None:
    """JSON record of the invocation, written beside the outputs."""
    skip = {"func"}
    rec = {
        "command": args.command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k not in skip},
        "seed": args.seed,
        "versions": {
            "tce": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    out_path = Path(out_path)
    target = out_path / "run.json" if out_path.is_dir() else out_path.with_name(out_path.name + ".run.json")
    _dump(rec, target)


def _load_catalog(path) -> list[Conversation]:
    path = Path(path)
    d = json.loads(path.read_text())
    convs = []
    for entry in d["conversations"]:
        p = Path(entry["transcript"])
        if not p.is_absolute():
            p = path.parent / p
        convs.append(Conversation(load_transcript(p)))
    return convs


def _write_catalog(paths: list[Path], out_dir: Path) -> Path:
    cat = {"conversations": [{"transcript": str(p.relative_to(out_dir))} for p in paths]}
    target = out_dir / "catalog.json"
    _dump(cat, target)
    return target


def _rel(p, base: Path) -> str:
    return os.path.relpath(Path(p).resolve(), base.resolve())


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = TurnTakingStats.load(args.stats) if args.stats else default_stats()
    if args.pool:
        pool = UtterancePool.from_manifest(args.pool)
    else:
        pool_dir = out / "pool"
        pool = make_tone_pool(args.demo_pool, seed=derive_seed(args.seed, "pool"), out_dir=pool_dir)
        pool.to_manifest(pool_dir / "pool.json")
    paths = []
    for i in range(args.n):
        res = synth_conversation(
            stats, pool, args.speakers, args.duration, derive_seed(args.seed, "conv", i),
            conversation_id=f"synth-{i:04d}",
        )
        paths.append(save_conversation(Conversation(res.transcript, res.tracks), out / f"conv_{i:04d}"))
    _write_catalog(paths, out)
    _run_record(args, out)
    log.info("wrote %d synthetic conversations to %s", args.n, out)
    return 0


def cmd_augment(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    catalog = _load_catalog(args.catalog)
    pool = UtterancePool.from_manifest(args.pool)
    paths, provenance = [], []
    for i, conv in enumerate(catalog):
        t = conv.transcript
        tracks = render_tracks(t)
        plan = AugmentPlan(args.p, pool, derive_seed(args.seed, "augment", t.conversation_id))
        res = augment_conversation(t, tracks, plan)
        paths.append(save_conversation(Conversation(res.transcript, res.tracks), out / f"conv_{i:04d}"))
        provenance.append({"conversation_id": t.conversation_id, "replaced": res.replaced, "p": args.p})
    _write_catalog(paths, out)
    _dump({"samples": provenance}, out / "augment_manifest.json")
    _run_record(args, out)
    return 0


def _dataset_spec(path, seed: int) -> DatasetSpec:
    path = Path(path)
    d = json.loads(path.read_text())

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else path.parent / p

    plan = None
    if d.get("augment"):
        a = d["augment"]
        plan = AugmentPlan(float(a["p"]), UtterancePool.from_manifest(resolve(a["pool"])), seed)
    noise = [read_wav(resolve(p)) for p in d.get("noise", [])] or None
    return DatasetSpec(
        catalog=_load_catalog(resolve(d["catalog"])),
        counts={k: int(v) for k, v in d.get("counts", {"test": 1}).items()},
        splits=d.get("splits"),
        seg_len_s=float(d.get("seg_len_s", 60.0)),
        min_speech_frac=float(d.get("min_speech_frac", 0.6)),
        min_active=int(d.get("min_active", 2)),
        enrollment_s=float(d.get("enrollment_s", 5.0)),
        snr_db=tuple(d.get("snr_db", (-3.0, 3.0))),
        noise=noise,
        noise_snr_db=tuple(d.get("noise_snr_db", (0.0, 10.0))),
        plan=plan,
        embeddings_dir=str(resolve(d["embeddings_dir"])) if d.get("embeddings_dir") else None,
        embedding_seed=int(d.get("embedding_seed", 0)),
        seed=int(d.get("seed", seed)),
    )


def cmd_mix(args) -> int:
    spec = _dataset_spec(args.spec, args.seed)
    build_dataset(spec, args.out, jobs=args.jobs)
    _run_record(args, Path(args.out))
    return 0


def _model(args) -> tuple[ModelConfig, WeightStore]:
    cfg = ModelConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else ModelConfig()
    if args.weights:
        ws = WeightStore.load(args.weights)
    else:
        log.warning("no --weights given: using seeded random weights (seed %d)", args.seed)
        ws = WeightStore.random(cfg, args.seed)
    ws.validate(cfg)
    if args.dump_weights:
        ws.save(args.dump_weights)
    return cfg, ws


def _separate_one(job) -> None:
    mix_path, emb_path, out_path, cfg_dict, weights_path, seed = job
    cfg = ModelConfig.from_dict(cfg_dict)
    ws = WeightStore.load(weights_path) if weights_path else WeightStore.random(cfg, seed)
    y = forward(read_wav(mix_path), load_embedding(emb_path), ws, cfg)
    write_wav(y, out_path)


def cmd_separate(args) -> int:
    cfg, ws = _model(args)
    if args.manifest:
        src = Path(args.manifest)
        base = src.parent
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = load_manifest(src)
        jobs, records = [], []
        for rec in manifest["samples"]:
            (out / rec["id"]).mkdir(parents=True, exist_ok=True)
            out_wav = out / rec["id"] / "output.wav"
            jobs.append((
                str(base / rec["paths"]["mixture"]), str(base / rec["paths"]["embedding"]),
                str(out_wav), cfg.to_dict(), args.weights, args.seed,
            ))
            rec = json.loads(json.dumps(rec))
            rec["paths"] = {
                k: ([_rel(base / x, out) for x in v] if isinstance(v, list) else _rel(base / v, out))
                for k, v in rec["paths"].items()
            }
            rec["paths"]["output"] = f"{rec['id']}/output.wav"
            records.append(rec)
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(args.jobs) as ex:
                list(ex.map(_separate_one, jobs))
        else:
            for job in jobs:
                y = forward(read_wav(job[0]), load_embedding(job[1]), ws, cfg)
                write_wav(y, job[2])
        save_manifest(dict(manifest, samples=records), out / "manifest.json")
        _run_record(args, out)
        return 0
    if not (args.input and args.emb and args.out):
        raise UsageError("separate needs --in, --emb and --out (or --manifest and --out)")
    y = forward(read_wav(args.input), load_embedding(args.emb), ws, cfg)
    write_wav(y, args.out)
    _run_record(args, Path(args.out))
    return 0


EVAL_COLUMNS = [
    "id", "snr_db", "si_sdr_db", "snri_db", "si_sdri_db", "input_snr_db", "input_si_sdr_db",
    "incorrect_target",
]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if v == math.inf else "-inf" if v == -math.inf else repr(v)
    return str(v)


def _finite_pairs(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    keep = np.isfinite(a) & np.isfinite(b)
    return a[keep], b[keep]


def _t_test_or_none(a, b):
    a, b = _finite_pairs(a, b)
    try:
        return paired_t_test(a, b)
    except TCEError:
        return None


def cmd_eval(args) -> int:
    src = Path(args.manifest)
    base = src.parent
    manifest = load_manifest(src)
    rows, wrong_sets = [], []
    for rec in manifest["samples"]:
        p = rec["paths"]
        if "output" not in p:
            raise UsageError(f"sample {rec['id']} has no output; run `tce separate --manifest` first")
        mixture = read_wav(base / p["mixture"]).samples
        target = read_wav(base / p["target"]).samples
        output = read_wav(base / p["output"]).samples
        r = evaluate(rec["id"], mixture, output, target)
        row = {
            "id": r.sample_id, "snr_db": r.snr_db, "si_sdr_db": r.si_sdr_db, "snri_db": r.snri_db,
            "si_sdri_db": r.si_sdri_db, "input_snr_db": r.input_snr_db,
            "input_si_sdr_db": r.input_si_sdr_db, "incorrect_target": "",
        }
        if p.get("inter"):
            wrong = read_wav(base / p["reference"]).samples.astype(np.float64)
            for q in p["inter"]:
                wrong = wrong + read_wav(base / q).samples
            item = {"output": output, "target_conv": target, "wrong_conv": wrong, "mixture": mixture}
            wrong_sets.append(item)
            row["incorrect_target"] = int(incorrect_target_ratio([item]))
        rows.append(row)
    rows.sort(key=lambda r: r["id"])
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})

    col = lambda name: [r[name] for r in rows]  # noqa: E731
    summary = {k: summarize(col(k)) for k in EVAL_COLUMNS[1:-1]} if rows else {}
    summary["t_test_output_vs_input"] = {
        "snr": _t_test_or_none(col("snr_db"), col("input_snr_db")),
        "si_sdr": _t_test_or_none(col("si_sdr_db"), col("input_si_sdr_db")),
    } if rows else {}
    summary["incorrect_target_ratio"] = incorrect_target_ratio(wrong_sets) if wrong_sets else None
    if args.baseline:
        with open(args.baseline) as fh:
            base_rows = {r["id"]: r for r in csv.DictReader(fh)}
        ids = [r["id"] for r in rows if r["id"] in base_rows]
        mine = {r["id"]: r for r in rows}
        summary["t_test_vs_baseline"] = {
            m: _t_test_or_none([mine[i][m] for i in ids], [float(base_rows[i][m]) for i in ids])
            for m in ("snri_db", "si_sdri_db")
        }
    _dump(summary, out.with_suffix(".summary.json"))
    _run_record(args, out)
    for k in ("si_sdri_db", "snri_db"):
        if k in summary:
            s = summary[k]
            print(f"{k}: mean {s['mean']:.3f} (n={s['n']}, infinite excluded={s['n_infinite']})")
    return 0


def cmd_perturb(args) -> int:
    src = Path(args.manifest)
    base = src.parent
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(src)
    records = []
    for rec in manifest["samples"]:
        p = rec["paths"]
        t = load_transcript(base / p["target_transcript"])
        speakers = [rec["reference_speaker_id"], *rec["conv_speakers"]]
        tracks = {rec["reference_speaker_id"]: read_wav(base / p["reference"])}
        for spk, q in zip(rec["conv_speakers"], p["conv"]):
            tracks[spk] = read_wav(base / q)
        if args.mode == "random":
            res = random_shift(t, tracks, args.tau, speakers, derive_seed(args.seed, rec["id"]))
        else:
            res = shift_all_left(t, tracks, speakers)
        inter = [read_wav(base / q) for q in p["inter"]]
        noise = read_wav(base / p["noise"])
        d = out / rec["id"]
        d.mkdir(parents=True, exist_ok=True)
        ref = res.tracks[rec["reference_speaker_id"]]
        conv = [res.tracks[s] for s in rec["conv_speakers"]]
        target = ref.samples.astype(np.float64) + sum((c.samples for c in conv), np.zeros(len(ref)))
        mixture = target + sum((w.samples for w in inter), np.zeros(len(ref))) + noise.samples
        new = json.loads(json.dumps(rec))
        paths = {}
        write_wav(Waveform(mixture.astype(np.float32)), d / "mixture.wav")
        write_wav(Waveform(target.astype(np.float32)), d / "target.wav")
        write_wav(ref, d / "s0.wav")
        for i, c in enumerate(conv):
            write_wav(c, d / f"conv_{i + 1}.wav")
        save_transcript(res.transcript, d / "target_transcript.json")
        sid = rec["id"]
        paths.update(
            mixture=f"{sid}/mixture.wav", target=f"{sid}/target.wav", reference=f"{sid}/s0.wav",
            conv=[f"{sid}/conv_{i + 1}.wav" for i in range(len(conv))],
            target_transcript=f"{sid}/target_transcript.json",
        )
        for k in ("inter", "noise", "embedding", "enrollment", "interference_transcript"):
            v = p[k]
            paths[k] = [_rel(base / x, out) for x in v] if isinstance(v, list) else _rel(base / v, out)
        new["paths"] = paths
        new["perturbation"] = {"mode": args.mode, "tau_s": args.tau if args.mode == "random" else None}
        records.append(new)
    save_manifest(dict(manifest, samples=records), out / "manifest.json")
    _run_record(args, out)
    return 0


def cmd_bench(args) -> int:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise UsageError(f"unknown variants {bad}; choose from {', '.join(VARIANTS)}")
    table = rtf_bench(ModelConfig(), variants, args.len, args.reps, args.seed, args.threads)
    print(f"{'variant':<20}{'RTF':>10}{'median s':>12}{'params':>12}")
    for v, row in table.items():
        print(f"{v:<20}{row['rtf']:>10.4f}{row['median_s']:>12.2f}{row['param_count']:>12d}")
    if args.out:
        _dump(table, args.out)
        _run_record(args, Path(args.out))
    return 0


# -- parser ------------------------------------------------------------------

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tce", description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--log-level", default=os.environ.get("TCE_LOG", "WARNING"))
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate statistics-driven synthetic conversations")
    p.add_argument("--stats", help="TurnTakingStats JSON (default: built-in stand-in)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--pool", help="utterance pool manifest")
    src.add_argument("--demo-pool", type=int, default=8, help="size of a generated tone-voice pool")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="timing-preserving speaker replacement")
    p.add_argument("--catalog", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("mix", help="build a mixture dataset from a spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("separate", help="run the extraction network")
    p.add_argument("--in", dest="input")
    p.add_argument("--emb")
    p.add_argument("--manifest")
    p.add_argument("--weights")
    p.add_argument("--config")
    p.add_argument("--dump-weights")
    p.add_argument("--out")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("eval", help="score outputs against targets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", help="results CSV to t-test improvements against")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("perturb", help="timing perturbation of a mixture manifest")
    p.add_argument("--mode", choices=("random", "left"), required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("bench", help="real-time factor per global-module variant")
    p.add_argument("--variants", default="pooling_attention,full_attention")
    p.add_argument("--len", type=float, default=60.0)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tce {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (TCEError, OSError, ValueError, KeyError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
