"""Command line: nnintra {extract-dataset,train,encode,decode,analyze,bdrate,flops}.

Exit codes: 0 ok, 2 usage, 3 bad input format, 4 model/digest problem,
5 internal invariant violated. Each run writes a JSON manifest (seed, config,
SHA-256 of every input) next to its primary output.
"""

from __future__ import annotations

import os

if os.environ.get("NNINTRA_THREADS"):
    # must precede the first numpy import to cap BLAS worker threads
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["NNINTRA_THREADS"])

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .errors import NnIntraError

log = logging.getLogger("nnintra")

IMAGE_SUFFIXES = (".pgm", ".png")
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_digests(paths) -> dict:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for q in sorted(p.rglob("*")):
                if q.is_file() and q.name != "run_manifest.json":
                    out[str(q)] = file_digest(q)
        elif p.exists():
            out[str(p)] = file_digest(p)
    return out


def write_manifest(path, command: str, config: dict, inputs, seed=None) -> None:
    doc = {
        "tool": "nnintra",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": _input_digests(inputs),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _manifest_path(args, output: Path | None, default_name: str) -> Path:
    if args.manifest:
        return Path(args.manifest)
    if output is None:
        return Path(default_name)
    if output.is_dir():
        return output / "run_manifest.json"
    return output.with_name(output.name + ".manifest.json")


def _qps(text: str) -> list[int]:
    try:
        qps = [int(q) for q in text.split(",") if q.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad QP list {text!r}") from None
    if not qps or any(not 0 <= q <= 51 for q in qps):
        raise argparse.ArgumentTypeError("QPs must lie in [0, 51]")
    return qps


def _qp(text: str) -> int:
    qps = _qps(text)
    if len(qps) != 1:
        raise argparse.ArgumentTypeError("a single QP is expected")
    return qps[0]


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if any(s not in (4, 8, 16, 32) for s in sizes):
        raise argparse.ArgumentTypeError("sizes must be among 4, 8, 16, 32")
    return sizes


def _corpus_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise UsageError(f"corpus {path} does not exist")
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise UsageError(f"no .pgm/.png images in {path}")
    return files


def _predictor(kind: str, models):
    from .coder import NmPredictor, TmPredictor
    from .intra_nm import ModelRegistry

    if kind == "tm":
        return TmPredictor()
    if models is None:
        raise UsageError("--predictor nm needs --models")
    return NmPredictor(ModelRegistry.load(models))


# --- subcommands ------------------------------------------------------------------


def cmd_extract(args) -> None:
    from .core import load_plane
    from .train import extract_dataset, save_dataset

    files = _corpus_files(Path(args.corpus))
    planes = [load_plane(f) for f in files]
    data = extract_dataset(planes, args.qps, blocks=args.blocks)
    out = Path(args.output)
    save_dataset(data, out)
    counts = {n: len(v) for n, v in data.items()}
    print("samples per size: " + ", ".join(f"{n}x{n}={c}" for n, c in counts.items()))
    write_manifest(_manifest_path(args, out, ""), "extract-dataset",
                   {"qps": args.qps, "blocks": args.blocks, "counts": counts}, files)


def cmd_train(args) -> None:
    from .intra_nm import ModelRegistry
    from .train import TrainConfig, load_dataset, train_all

    cfg = TrainConfig(
        epochs_baseline=args.epochs_baseline,
        epochs_finetune=args.epochs_finetune,
        seed=args.seed,
        norm=args.norm,
    )
    data = load_dataset(args.dataset)
    out = Path(args.output)
    registry = ModelRegistry.load(out) if (out / "manifest.txt").exists() else ModelRegistry()
    trained, reports = train_all(data, cfg, sizes=args.size)
    for model in list(trained.baselines.values()) + list(trained.models.values()):
        registry.add(model)
    registry.save(out)
    for n, rep in reports.items():
        (out / f"train_log_n{n:02d}.csv").write_text(rep.csv())
        print(f"size {n}: {rep.baseline_iterations} baseline + "
              f"{sum(rep.finetune_iterations.values())} fine-tune iterations")
    write_manifest(_manifest_path(args, out, ""), "train", {"sizes": args.size, **asdict(cfg)},
                   [args.dataset], seed=args.seed)


def _append_rd(path: Path, bits: int, quality: float, qp: int, image: str) -> None:
    new = not path.exists()
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(["bitrate", "psnr", "qp", "image"])
        w.writerow([bits, f"{quality:.6f}", qp, image])


def cmd_encode(args) -> None:
    from .coder import encode_frame
    from .core import load_plane, save_plane
    from .metrics import psnr

    plane = load_plane(args.image)
    predictor = _predictor(args.predictor, args.models)
    if args.predictor == "nm":
        predictor.registry.check_complete()
    res = encode_frame(plane, args.qp, predictor)
    out = Path(args.output)
    out.write_bytes(res.bitstream)
    quality = psnr(plane, res.recon)
    if args.stats:
        Path(args.stats).write_text(res.stats_csv())
    if args.recon:
        save_plane(res.recon, args.recon)
    if args.rd:
        _append_rd(Path(args.rd), res.total_bits, quality, args.qp, Path(args.image).name)
    print(f"{args.image}: qp {args.qp}, {res.total_bits} bits, PSNR {quality:.3f} dB, {len(res.stats)} blocks")
    inputs = [args.image] + ([args.models] if args.predictor == "nm" else [])
    write_manifest(_manifest_path(args, out, ""), "encode",
                   {"qp": args.qp, "predictor": args.predictor, "bits": res.total_bits, "psnr": quality}, inputs)


def cmd_decode(args) -> None:
    from .coder import NM_TAG, decode_frame, read_header
    from .core import save_plane

    data = Path(args.bitstream).read_bytes()
    hdr = read_header(data)
    kind = "nm" if hdr["tag"] == NM_TAG else "tm"
    plane = decode_frame(data, _predictor(kind, args.models))
    out = Path(args.output)
    save_plane(plane, out)
    print(f"decoded {plane.width}x{plane.height} ({kind}, qp {hdr['qp']}) -> {out}")
    inputs = [args.bitstream] + ([args.models] if kind == "nm" else [])
    write_manifest(_manifest_path(args, out, ""), "decode", {"predictor": kind}, inputs)


def _read_stats(path):
    from .coder import BlockStat

    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != BlockStat.CSV_HEADER.split(","):
            raise UsageError(f"{path}: not a block statistics CSV")
        return [BlockStat(**{k: int(v) for k, v in row.items()}) for row in reader]


def cmd_analyze(args) -> None:
    from .metrics import ModeStats, mode_probability_report, per_mode_psnr, write_mode_psnr, write_mode_series, write_slot_report

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    stats = ModeStats()
    for path in args.stats:
        stats = stats.merge(ModeStats.from_blocks(_read_stats(path)))
    report = mode_probability_report(stats)
    write_slot_report(report, out / "mpm_slots.csv", provenance=f"{len(args.stats)} stats file(s), {report['total']} blocks")
    write_mode_series(report, out / "mode_probability.csv")
    summary = {k: report[k] for k in ("total", "per_mode_mpm", "per_mode_non_mpm", "p_mpm0", "p_mpm12_per_mode",
                                       "mpm_beats_non_mpm", "mpm0_beats_mpm12", "slot_order_holds")}
    summary["slots_percent"] = report["slots"]["all"]
    inputs = list(args.stats)
    if args.psnr_dataset:
        from .intra_nm import ModelRegistry
        from .train import load_dataset

        if not args.models:
            raise UsageError("--psnr-dataset needs --models")
        registry = ModelRegistry.load(args.models)
        data = load_dataset(args.psnr_dataset)
        for n in registry.sizes():
            rows = per_mode_psnr(registry, data[n], n)
            write_mode_psnr(rows, out / f"mode_psnr_n{n:02d}.csv")
            scored = [r for r in rows if r.count]
            summary[f"nm_ge_tm_n{n}"] = [sum(r.nm >= r.tm for r in scored), len(scored)]
        inputs += [args.psnr_dataset, args.models]
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    s = report["slots"]["all"]
    print(f"{report['total']} blocks; MPM0 {s[0]:.1f}%  MPM1 {s[1]:.1f}%  MPM2 {s[2]:.1f}%  non-MPM {s[3]:.1f}%")
    write_manifest(_manifest_path(args, out, ""), "analyze", {}, inputs)


def cmd_bdrate(args) -> None:
    from .metrics import bd_rate, read_rd_points

    anchor, test = read_rd_points(args.anchor), read_rd_points(args.test)
    value = bd_rate(anchor, test)
    print(f"BD-rate: {value:.2f}%")
    out = Path(args.output) if args.output else None
    if out:
        out.write_text(f"bd_rate_percent\n{value:.6f}\n")
    write_manifest(_manifest_path(args, out, "bdrate.manifest.json"), "bdrate", {"bd_rate": value}, [args.anchor, args.test])


def cmd_flops(args) -> None:
    from .intra_nm import ModelRegistry, make_model
    from .metrics import flops_report

    if args.models:
        reg = ModelRegistry.load(args.models)
        models = [reg.baselines.get(n) or reg.get(n, 0) for n in sorted(set(reg.sizes()) | set(reg.baselines))]
    else:
        models = [make_model(n) for n in (4, 8, 16, 32)]
    rows = flops_report(models)
    lines = ["n,flops,reference,ratio"] + [f"{r['n']},{r['flops']},{r['reference']:.0f},{r['ratio']:.4f}" for r in rows]
    print("\n".join(lines))
    out = Path(args.output) if args.output else None
    if out:
        out.write_text("\n".join(lines) + "\n")
    write_manifest(_manifest_path(args, out, "flops.manifest.json"), "flops", {},
                   [args.models] if args.models else [])


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nnintra", description="Intra codec with per-mode neural predictors.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--manifest", help="where to write the run manifest JSON")
        return sp

    sp = add("extract-dataset", cmd_extract, "encode a corpus with the TM codec and record labelled blocks")
    sp.add_argument("corpus", help="directory of .pgm/.png images (or a single image)")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--qps", type=_qps, default=[22, 27, 32, 37])
    sp.add_argument("--blocks", choices=("leaves", "searched"), default="leaves",
                    help="record only the final quadtree leaves, or every block the R-D search coded")

    sp = add("train", cmd_train, "baseline + per-mode fine-tuning")
    sp.add_argument("dataset")
    sp.add_argument("-o", "--output", required=True, help="model directory")
    sp.add_argument("--size", type=_sizes, default=[4, 8, 16, 32], help="comma-separated block sizes")
    sp.add_argument("--epochs-baseline", type=int, default=1)
    sp.add_argument("--epochs-finetune", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--norm", choices=("l2", "mse"), default="l2")

    sp = add("encode", cmd_encode, "encode one image")
    sp.add_argument("image")
    sp.add_argument("--qp", type=_qp, required=True)
    sp.add_argument("--predictor", choices=("tm", "nm"), default="tm")
    sp.add_argument("--models")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--stats", help="per-block statistics CSV")
    sp.add_argument("--recon", help="write the encoder reconstruction (.pgm/.png)")
    sp.add_argument("--rd", help="append a bitrate,psnr row to this CSV")

    sp = add("decode", cmd_decode, "decode a bitstream")
    sp.add_argument("bitstream")
    sp.add_argument("--models")
    sp.add_argument("-o", "--output", required=True)

    sp = add("analyze", cmd_analyze, "best-mode probability tables from stats CSVs")
    sp.add_argument("stats", nargs="+")
    sp.add_argument("-o", "--output", required=True, help="report directory")
    sp.add_argument("--psnr-dataset", help="held-out dataset for per-mode NM vs TM PSNR")
    sp.add_argument("--models")

    sp = add("bdrate", cmd_bdrate, "Bjontegaard delta rate between two R-D CSVs")
    sp.add_argument("anchor")
    sp.add_argument("test")
    sp.add_argument("-o", "--output")

    sp = add("flops", cmd_flops, "FLOPs per predictor against the published figures")
    sp.add_argument("models", nargs="?")
    sp.add_argument("-o", "--output")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as e:
        print(f"nnintra: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"nnintra: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NnIntraError as e:
        print(f"nnintra: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"nnintra: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
