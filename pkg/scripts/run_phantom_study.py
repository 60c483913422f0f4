#!/usr/bin/env python3
"""Phantom study: does slice-plane adjustment change geometric agreement?

Generates a corpus of synthetic phantoms, displaces the craniocaudal level
boundaries by up to --jitter slices (the kind of disagreement two experts
show on where a level starts), then adjusts the jittered volumes and
compares both variants against the ground truth.

The question mirrors the motivating clinical finding: adjustment must
remove every slice-consistency violation while leaving volumetric Dice
essentially unchanged, because the voxels it moves sit exactly on the
contested slice planes. The script prints per-level Dice for both
variants, the violation counts, and a paired signed-rank test between
the two Dice columns.

Example:
    python3 scripts/run_phantom_study.py --phantoms 30 --jitter 1 --seed 0
"""

import argparse
import sys
import time

import numpy as np

from levelqa.metrics import evaluate_case
from levelqa.phantom import PhantomConfig, generate_phantom, perturb_boundary_jitter
from levelqa.postprocess import slice_consistency_violations, slice_plane_adjust
from levelqa.schema import default_schema
from levelqa.stats import PairedSample, summary_line, wilcoxon_signed_rank


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--phantoms", type=int, default=30, help="corpus size")
    ap.add_argument("--jitter", type=int, default=1,
                    help="max boundary displacement in slices")
    ap.add_argument("--seed", type=int, default=0, help="base seed")
    ap.add_argument("--dims", type=int, nargs=3, default=(32, 32, 32),
                    metavar=("NX", "NY", "NZ"))
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    schema = default_schema()
    t0 = time.perf_counter()

    dice_jittered, dice_adjusted = [], []
    violations_before = violations_after = 0
    for i in range(args.phantoms):
        _, truth = generate_phantom(
            PhantomConfig(seed=args.seed + i, dims=tuple(args.dims)), schema)
        jittered = perturb_boundary_jitter(
            truth, schema, max_shift_slices=args.jitter, seed=args.seed + i + 10_000)
        violations_before += len(slice_consistency_violations(jittered, schema))
        adjusted, _ = slice_plane_adjust(jittered, schema)
        violations_after += len(slice_consistency_violations(adjusted, schema))

        rep_jit = evaluate_case(jittered, truth, schema)
        rep_adj = evaluate_case(adjusted, truth, schema)
        for level_id in rep_jit.levels:
            dice_jittered.append(rep_jit.levels[level_id].vol_dice)
            dice_adjusted.append(rep_adj.levels[level_id].vol_dice)

    print(f"phantoms:             {args.phantoms} at {tuple(args.dims)}, "
          f"jitter <= {args.jitter} slice(s)")
    print(f"level comparisons:    {len(dice_jittered)}")
    print(f"violations:           {violations_before} before adjustment, "
          f"{violations_after} after")
    print(f"vol Dice (jittered):  {summary_line(dice_jittered)}")
    print(f"vol Dice (adjusted):  {summary_line(dice_adjusted)}")
    deltas = np.abs(np.asarray(dice_adjusted) - np.asarray(dice_jittered))
    print(f"per-level |delta|:    max {deltas.max():.4f}, mean {deltas.mean():.4f}")

    sample = PairedSample.from_arrays(dice_adjusted, dice_jittered)
    res = wilcoxon_signed_rank(sample)
    print(f"signed-rank adjusted vs jittered: statistic={res.statistic:.1f} "
          f"p={res.p_value:.4g} ({res.method}, n_effective={res.n_effective})")
    print(f"wall clock:           {time.perf_counter() - t0:.1f}s")

    if violations_after != 0:
        print("FAIL: adjustment left violations behind", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
