"""Command-line driver: fixtures, run, eval, stats, invert, train, predict."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import tensor_io
from ._resize import resize2d
from .attention import aggregate, aggregate_features, load_bundle, save_bundle
from .config import PipelineConfig, load_config_file, merge_config
from .cut import attention_cut
from .decoder import (
    TrainBatch,
    init_decoder,
    load_checkpoint,
    loss_and_grad,
    predict as decoder_predict,
    forward as decoder_forward,
    save_checkpoint,
    stack_features,
    train as decoder_train,
)
from .evalkit import (
    Box,
    corloc,
    image_stats,
    mask_to_bbox,
    max_f_beta,
    polygon_stats,
    saliency_metrics,
    shape_diversity,
)
from .fixtures import generate_fixture_set
from .inversion import (
    CapturingPredictor,
    RandomLinearPredictor,
    ScalarLinearPredictor,
    ZeroPredictor,
    invert_and_collect,
    make_subsampled_schedule,
)


def _mask_name(index: int) -> str:
    return f"mask_{index:05d}.pgm"


def _soft_name(index: int) -> str:
    return f"soft_{index:05d}.atnt"


def _process_entry(task: tuple) -> tuple[int, dict | None, str | None]:
    """Worker: one manifest entry to one mask. Returns (index, row, error)."""
    index, manifest_root, entry, config_dict = task
    config = PipelineConfig(**config_dict)
    resolve = lambda p: os.path.normpath(os.path.join(manifest_root, p))
    try:
        records = load_bundle(resolve(entry.attn))
        image = tensor_io.read_tensor(resolve(entry.image))
        target_dims = (image.shape[0], image.shape[1])
        if config.mode == "attentioncut":
            agg = aggregate(records, k=config.k, r=config.r, r_s=config.r_s)
            result = attention_cut(agg, image, config.cut_params(), target_dims=target_dims)
            mask = result.mask
            soft = np.clip(resize2d(result.soft, *target_dims), 0.0, 1.0)
            extra = {"energy": result.energy, "empty": int(result.empty_foreground)}
        elif config.mode == "decoder":
            params = load_checkpoint(config.checkpoint)
            feats = stack_features(aggregate_features(records), config.decoder_r)
            mask = decoder_predict(params, feats, target_dims)
            prob = decoder_forward(params, feats)
            soft = np.clip(resize2d(prob, *target_dims), 0.0, 1.0)
            extra = {}
        else:
            return index, None, f"unknown mode {config.mode!r}"
        os.makedirs(config.out, exist_ok=True)
        tensor_io.write_mask(mask, os.path.join(config.out, _mask_name(index)))
        if config.save_soft:
            tensor_io.write_tensor(soft, os.path.join(config.out, _soft_name(index)))
        row = {"index": index, "image": entry.image, "label": entry.label, **extra}
        if entry.gt_mask is not None:
            gt = tensor_io.read_mask(resolve(entry.gt_mask))
            acc, iou = saliency_metrics(mask, gt)
            row["acc"] = acc
            row["iou"] = iou
        return index, row, None
    except Exception as exc:  # per-entry failure must not kill the run
        return index, None, f"{type(exc).__name__}: {exc}"


def run_pipeline(config: PipelineConfig) -> int:
    """Aggregate -> mask per manifest entry; report; 0 ok, 2 if any entry failed."""
    # path problems surface per entry so one bad bundle cannot kill the run
    manifest = tensor_io.load_manifest(config.manifest, check_paths=False)
    config_dict = {f: getattr(config, f) for f in PipelineConfig.__dataclass_fields__}
    tasks = [(i, manifest.root, e, config_dict) for i, e in enumerate(manifest.entries)]
    workers = config.workers if config.workers > 0 else (os.cpu_count() or 1)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_process_entry, tasks))
    else:
        results = [_process_entry(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    rows = [row for _, row, err in results if row is not None]
    failures = [(i, err) for i, _, err in results if err is not None]
    os.makedirs(config.out, exist_ok=True)
    report_path = os.path.join(config.out, "report.csv")
    fieldnames = ["index", "image", "label", "acc", "iou", "energy", "empty"]
    with open(report_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)

    scored = [r for r in rows if "iou" in r]
    print(f"processed {len(rows)}/{len(tasks)} entries -> {config.out}")
    if scored:
        mean_acc = float(np.mean([r["acc"] for r in scored]))
        mean_iou = float(np.mean([r["iou"] for r in scored]))
        print(f"mean acc {mean_acc:.4f}  mean iou {mean_iou:.4f}  ({len(scored)} with ground truth)")
    for index, err in failures:
        print(f"FAILED entry {index}: {err}", file=sys.stderr)
    return 2 if failures else 0


def cmd_fixtures(args) -> int:
    manifest = generate_fixture_set(
        n=args.n, rng_seed=args.seed, out_dir=args.out,
        dims=args.dims, t_steps=args.t_steps, n_layers=args.layers,
    )
    print(f"wrote {len(manifest)} scenes under {args.out}")
    return 0


def cmd_run(args) -> int:
    file_values = load_config_file(args.config) if args.config else None
    flag_values = {
        "manifest": args.manifest, "out": args.out, "mode": args.mode,
        "workers": args.workers, "save_soft": args.save_soft,
        "k": args.k, "r": args.r, "r_s": args.r_s,
        "tau_mode": args.tau_mode, "tau": args.tau, "n_seeds": args.n_seeds,
        "rng_seed": args.rng_seed, "lambda_phi": args.lambda_phi,
        "lambda_psi": args.lambda_psi, "lam": getattr(args, "lambda"),
        "long_range_k": args.long_range_k,
        "checkpoint": args.checkpoint, "decoder_r": args.decoder_r,
    }
    config = merge_config(file_values, flag_values)
    if not config.manifest:
        print("a manifest is required (--manifest or config file)", file=sys.stderr)
        return 1
    return run_pipeline(config)


def cmd_eval(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    accs, ious = [], []
    softs, gts = [], []
    pred_boxes, gt_boxes = [], []
    have_boxes = False
    for i, entry in enumerate(manifest.entries):
        if entry.gt_mask is None:
            continue
        gt = tensor_io.read_mask(manifest.resolve(entry.gt_mask))
        mask = tensor_io.read_mask(os.path.join(args.pred_dir, _mask_name(i)))
        acc, iou = saliency_metrics(mask, gt)
        accs.append(acc)
        ious.append(iou)
        soft_path = os.path.join(args.pred_dir, _soft_name(i))
        softs.append(tensor_io.read_tensor(soft_path) if os.path.exists(soft_path) else mask / 255.0)
        gts.append(gt)
        if entry.gt_boxes:
            have_boxes = True
            pred_boxes.append(mask_to_bbox(mask))
            gt_boxes.append([Box(*b) for b in entry.gt_boxes])
    if not ious:
        print("no entries with ground truth", file=sys.stderr)
        return 1
    score, threshold = max_f_beta(softs, gts)
    print(f"entries            {len(ious)}")
    print(f"mean accuracy      {np.mean(accs):.4f}")
    print(f"mean IoU           {np.mean(ious):.4f}")
    print(f"max F-beta         {score:.4f}  (threshold {threshold:.4f})")
    rows = {"n": len(ious), "acc": float(np.mean(accs)), "iou": float(np.mean(ious)),
            "max_f_beta": score, "f_beta_threshold": threshold}
    if have_boxes:
        rows["corloc"] = corloc(pred_boxes, gt_boxes)
        print(f"CorLoc             {rows['corloc']:.4f}")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows.keys()))
            writer.writeheader()
            writer.writerow(rows)
        print(f"report -> {args.out}")
    return 0


def cmd_stats(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    rows = []
    polygons = []
    skipped = 0
    for entry in manifest.entries:
        if entry.gt_mask is None:
            skipped += 1
            continue
        mask = tensor_io.read_mask(manifest.resolve(entry.gt_mask))
        image = tensor_io.read_tensor(manifest.resolve(entry.image))
        stats = image_stats(image, mask)
        rows.append({
            "image": entry.image, "size": stats.size, "cx": stats.cx, "cy": stats.cy,
            "contrast": stats.contrast, "SC": stats.sc, "PL": stats.pl,
        })
        poly = polygon_stats(mask) if (mask > 127).any() else None
        if poly is not None:
            polygons.append(poly.polygon)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["image", "size", "cx", "cy", "contrast", "SC", "PL"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print(f"wrote {len(rows)} rows -> {args.out} ({skipped} entries without mask skipped)")
    if len(polygons) >= 2:
        print(f"shape diversity    {shape_diversity(polygons):.4f}")
    return 0


def _make_predictor(spec: str, channels: int):
    if spec == "zero":
        return ZeroPredictor()
    if spec.startswith("linear:"):
        return ScalarLinearPredictor(float(spec.split(":", 1)[1]))
    if spec == "randlin":
        return RandomLinearPredictor(channels)
    raise ValueError(f"unknown predictor {spec!r} (use zero, linear:<c>, randlin)")


def cmd_invert(args) -> int:
    x0 = tensor_io.read_tensor(args.input)
    channels = x0.shape[-1] if x0.ndim == 3 else 1
    predictor = _make_predictor(args.predictor, channels)
    if args.record:
        predictor = CapturingPredictor(predictor)
    schedule = make_subsampled_schedule(t_steps=args.steps)
    x_t, recon, records = invert_and_collect(x0, predictor, schedule)
    os.makedirs(args.out, exist_ok=True)
    tensor_io.write_tensor(x_t, os.path.join(args.out, "latent.atnt"))
    tensor_io.write_tensor(recon, os.path.join(args.out, "recon.atnt"))
    if records:
        save_bundle(records, os.path.join(args.out, "bundle"))
    rel = float(np.max(np.abs(recon - x0)) / max(np.max(np.abs(x0)), 1e-12))
    print(f"T={args.steps} predictor={args.predictor} relative reconstruction error {rel:.3e}")
    print(f"outputs -> {args.out}")
    return 0


def _load_training_samples(manifest: tensor_io.DatasetManifest, r: int):
    samples = []
    for entry in manifest.entries:
        if entry.gt_mask is None:
            continue
        records = load_bundle(manifest.resolve(entry.attn))
        feats = stack_features(aggregate_features(records), r)
        gt = tensor_io.read_mask(manifest.resolve(entry.gt_mask))
        target = (resize2d((gt > 127).astype(np.float64), r, r) > 0.5).astype(np.float64)
        samples.append((feats, target))
    return samples


def cmd_train(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    samples = _load_training_samples(manifest, args.r)
    if not samples:
        print("manifest has no entries with ground-truth masks", file=sys.stderr)
        return 1
    c_in = samples[0][0].shape[-1]
    params = init_decoder(args.seed, c_in=c_in, hidden=args.hidden, lr=args.lr)
    batch = TrainBatch(np.stack([s[0] for s in samples[: args.batch_size]]),
                       np.stack([s[1] for s in samples[: args.batch_size]]))
    initial_loss, _ = loss_and_grad(params, batch)
    params, curve = decoder_train(samples, epochs=args.epochs, params=params,
                                  batch_size=args.batch_size, shuffle_seed=args.seed)
    save_checkpoint(params, args.out)
    with open(os.path.join(args.out, "loss_curve.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(curve, start=1):
            writer.writerow([epoch, loss])
    print(f"initial loss {initial_loss:.4f} -> final epoch loss {curve[-1]:.4f}"
          f" over {args.epochs} epochs ({len(samples)} samples)")
    print(f"checkpoint -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    config = PipelineConfig(manifest=args.manifest, out=args.out, mode="decoder",
                            workers=args.workers, checkpoint=args.checkpoint,
                            decoder_r=args.r)
    return run_pipeline(config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attncut",
                                     description="attention tensors to object masks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", help="generate a synthetic fixture set")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--t-steps", type=int, default=1)
    p.add_argument("--layers", type=int, default=6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("run", help="run the mask pipeline over a manifest")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--mode", choices=["attentioncut", "decoder"])
    p.add_argument("--workers", type=int)
    p.add_argument("--save-soft", dest="save_soft", action="store_const", const=True)
    p.add_argument("--no-save-soft", dest="save_soft", action="store_const", const=False)
    p.add_argument("--k", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--r-s", dest="r_s", type=int)
    p.add_argument("--tau-mode", dest="tau_mode", choices=["otsu", "fixed"])
    p.add_argument("--tau", type=float)
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--rng-seed", dest="rng_seed", type=int)
    p.add_argument("--lambda-phi", dest="lambda_phi", type=float)
    p.add_argument("--lambda-psi", dest="lambda_psi", type=float)
    p.add_argument("--lambda", type=float)
    p.add_argument("--long-range-k", dest="long_range_k", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--decoder-r", dest="decoder_r", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--out", help="write a machine-readable CSV summary here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="per-image dataset statistics CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("invert", help="deterministic inversion round trip")
    p.add_argument("--input", required=True, help="ATNT tensor to invert")
    p.add_argument("--steps", type=int, default=40)
    p.add_argument("--predictor", default="linear:0.01")
    p.add_argument("--record", action="store_true",
                   help="record an attention bundle during the reverse pass")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("train", help="train the segment decoder on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--r", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decoder inference over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--r", type=int, default=64)
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
