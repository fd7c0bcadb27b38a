#!/usr/bin/env python3
"""End-to-end demo: synthesize a fixture set, cut masks, train the decoder,
and score both against the generator's ground truth.

    python scripts/run_demo.py --n 12 --workdir /tmp/attncut-demo
"""

import argparse
import os
import subprocess
import sys


def sh(*args: str) -> None:
    print("+", " ".join(args))
    subprocess.run([sys.executable, "-m", "attncut.cli", *args], check=True)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=12)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workdir", default="demo_out")
    args = parser.parse_args()

    fixtures = os.path.join(args.workdir, "fixtures")
    manifest = os.path.join(fixtures, "manifest.txt")
    sh("fixtures", "--n", str(args.n), "--seed", str(args.seed), "--out", fixtures)

    cut_masks = os.path.join(args.workdir, "masks_cut")
    sh("run", "--manifest", manifest, "--out", cut_masks, "--workers", "0")
    sh("eval", "--manifest", manifest, "--pred-dir", cut_masks,
       "--out", os.path.join(args.workdir, "eval_cut.csv"))

    ckpt = os.path.join(args.workdir, "decoder")
    sh("train", "--manifest", manifest, "--out", ckpt, "--epochs", "20")
    decoder_masks = os.path.join(args.workdir, "masks_decoder")
    sh("predict", "--manifest", manifest, "--checkpoint", ckpt, "--out", decoder_masks)
    sh("eval", "--manifest", manifest, "--pred-dir", decoder_masks,
       "--out", os.path.join(args.workdir, "eval_decoder.csv"))

    sh("stats", "--manifest", manifest, "--out", os.path.join(args.workdir, "stats.csv"))
    print(f"\nartifacts under {args.workdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
