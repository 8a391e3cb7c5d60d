#!/usr/bin/env python3
"""End-to-end desk experiment.

Trains the 4 x 35 neural predictors on natural-image crops, measures held-out
per-mode prediction PSNR against the traditional modes, encodes held-out crops
with both predictor sets and reports BD-rate and MPM slot statistics.

    python3 scripts/desk_experiment.py -o runs/desk
"""

from __future__ import annotations

import argparse
import json
import logging
import time
from dataclasses import asdict, replace
from pathlib import Path

from nnintra.experiment import (
    DeskConfig,
    build_registry,
    default_predictors,
    encode_sweep,
    heldout_corpus,
    mode_stats,
    per_image_bd_rates,
    rd_curve,
    summarize_bd,
)
from nnintra.intra_nm import count_flops
from nnintra.metrics import mode_probability_report, per_mode_psnr, write_mode_psnr, write_rd_points, write_slot_report
from nnintra.train import extract_dataset


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-o", "--output", type=Path, required=True)
    ap.add_argument("--train-images", type=int, default=50)
    ap.add_argument("--heldout-images", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=2, help="baseline and fine-tune epochs")
    ap.add_argument("--seed", type=int, default=0)
    return ap.parse_args()


def main():
    args = parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    base = DeskConfig()
    cfg = replace(
        base,
        train_images=args.train_images,
        heldout_images=args.heldout_images,
        train=replace(base.train, epochs_baseline=args.epochs, epochs_finetune=args.epochs, seed=args.seed),
    )
    out = args.output
    out.mkdir(parents=True, exist_ok=True)
    timings = {}

    t = time.perf_counter()
    registry, reports, data = build_registry(cfg)
    timings["train_s"] = time.perf_counter() - t
    registry.save(out / "models")
    for n, rep in reports.items():
        (out / f"train_log_n{n:02d}.csv").write_text(rep.csv())

    held = heldout_corpus(cfg)
    t = time.perf_counter()
    held_data = extract_dataset(held, cfg.qps, blocks=cfg.blocks)
    psnr_summary = {}
    for n in sorted(held_data):
        rows = per_mode_psnr(registry, held_data[n], n)
        write_mode_psnr(rows, out / f"mode_psnr_n{n:02d}.csv")
        filled = [r for r in rows if r.count]
        psnr_summary[n] = {"modes": len(filled), "nm_wins": sum(r.nm >= r.tm for r in filled)}
    timings["heldout_psnr_s"] = time.perf_counter() - t

    t = time.perf_counter()
    coded = encode_sweep(held, cfg.qps, default_predictors(registry))
    timings["encode_s"] = time.perf_counter() - t
    (out / "rd").mkdir(exist_ok=True)
    for i in range(len(held)):
        for name in ("tm", "nm"):
            write_rd_points(rd_curve(coded, held, i, name), out / "rd" / f"img{i:02d}_{name}.csv")
    bd = summarize_bd(per_image_bd_rates(coded, held))
    slots = {}
    for name in ("tm", "nm"):
        rep = mode_probability_report(mode_stats(coded, name))
        write_slot_report(rep, out / f"mpm_slots_{name}.csv", provenance=f"{len(held)} held-out crops, {name}")
        slots[name] = {k: rep[k] for k in ("slots", "per_mode_mpm", "per_mode_non_mpm", "slot_order_holds")}

    summary = {
        "config": asdict(cfg),
        "training_samples": {n: len(v) for n, v in data.items()},
        "heldout_samples": {n: len(v) for n, v in held_data.items()},
        "mode_psnr": psnr_summary,
        "bd_rate_nm_vs_tm": bd,
        "mpm_slots": slots,
        "round_trip_ok": all(c.decoded_equal for c in coded),
        "flops": {n: count_flops(registry.get(n, 0)) for n in registry.sizes()},
        "timings": {k: round(v, 1) for k, v in timings.items()},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    print(json.dumps({k: summary[k] for k in ("mode_psnr", "bd_rate_nm_vs_tm", "round_trip_ok", "timings")},
                     indent=2, default=float))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
