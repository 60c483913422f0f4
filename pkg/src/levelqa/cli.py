"""Command-line entry point: preprocess, postprocess, evaluate, stats,
phantom, review-plan, and serve subcommands.

Exit codes: 0 success, 1 internal failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import metrics, phantom, postprocess, preprocess, stats
from .errors import LevelQAError
from .review.plan import CaseEntry, create_plan
from .schema import default_schema, load_schema
from .volume_io import read_nifti, write_nifti

CROP_GUIDANCE = (
    "The crop box is chosen by the operator on anatomical landmarks: "
    "superior at the frontal skull base, inferior at the carina, lateral "
    "at the humeral heads, posterior in front of the CT table surface."
)


def _schema_from(args):
    if getattr(args, "schema", None):
        return load_schema(args.schema)
    return default_schema()


def _load_manifest(path: str):
    """Manifest: {"schema": optional path, "cases": [{case_id, image, sets}]}."""
    with open(path) as fh:
        raw = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    cases = []
    seen = set()
    for entry in raw.get("cases", []):
        case_id = entry["case_id"]
        if case_id in seen:
            raise LevelQAError(f"manifest: duplicate case id {case_id!r}")
        seen.add(case_id)
        cases.append(
            CaseEntry(
                case_id=case_id,
                image_path=resolve(entry["image"]),
                contour_sets={k: resolve(v) for k, v in entry["sets"].items()},
            )
        )
    if not cases:
        raise LevelQAError("manifest holds no cases")
    schema_path = raw.get("schema")
    schema = load_schema(resolve(schema_path)) if schema_path else None
    return schema, cases


# -- subcommands -------------------------------------------------------------

def cmd_preprocess(args) -> int:
    image = read_nifti(args.image, kind="image")
    if args.crop:
        i0, i1, j0, j1, k0, k1 = args.crop
        box = preprocess.CropBox(mins=(i0, j0, k0), maxs=(i1, j1, k1))
        image = preprocess.crop_to_box(image, box)
    params = preprocess.OtsuMaskParams(
        percentile_clip=args.percentile_clip,
        threshold_correction=args.threshold_correction,
        closing_size_voxels=args.closing_size,
        dilate_size_voxels=args.dilate_size,
    )
    if args.no_mask:
        out = image
        masked = 0
    else:
        mask = preprocess.foreground_mask_otsu(image, params)
        if args.mask_out:
            write_nifti(mask, args.mask_out)
        out = preprocess.apply_mask(image, mask, fill_hu=args.fill_hu)
        masked = int(np.count_nonzero(mask.labels == 0))
    write_nifti(out, args.out)
    nx, ny, nz = out.grid.dims
    total = nx * ny * nz
    print(
        f"wrote {args.out}: dims ({nx}, {ny}, {nz}), "
        f"masked {masked} of {total} voxels ({100.0 * masked / total:.1f}%)"
    )
    return 0


def cmd_postprocess(args) -> int:
    schema = _schema_from(args)
    labels = read_nifti(args.labels, kind="label")
    if labels.schema_id != schema.schema_id:
        labels = type(labels)(grid=labels.grid, labels=labels.labels,
                              schema_id=schema.schema_id)
    cfg = postprocess.SliceAdjustConfig(
        min_foreground_voxels=args.min_foreground, drop_fraction=args.drop_fraction
    )

    which = None
    run_components = args.components != "none"
    if run_components and args.components != "all":
        names = [s.strip() for s in args.components.split(",")]
        which = {schema.by_name(n).id for n in names}

    t0 = time.perf_counter()
    if run_components and args.order == "components-first":
        labels = postprocess.largest_component_per_label(labels, schema, which=which)
    adjusted, report = postprocess.slice_plane_adjust(labels, schema, cfg)
    if run_components and args.order == "adjust-first":
        adjusted = postprocess.largest_component_per_label(adjusted, schema, which=which)
    elapsed = time.perf_counter() - t0

    write_nifti(adjusted, args.out)
    payload = report.to_dict()
    payload["wall_clock_s"] = round(elapsed, 4)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(payload, fh, indent=2)
    print(
        f"wrote {args.out}: {len(report.slice_conflicts)} slice conflicts resolved, "
        f"{len(report.background_clears)} slices cleared, "
        f"{report.total_changed_voxels} voxels changed, {elapsed:.3f} s"
    )
    return 0


def _evaluate_one(case, ref_name, schema, tol_mm):
    rows = []
    try:
        ref = read_nifti(case.contour_sets[ref_name], kind="label")
        ref = type(ref)(grid=ref.grid, labels=ref.labels, schema_id=schema.schema_id)
    except (LevelQAError, OSError, KeyError) as exc:
        return [
            {"case": case.case_id, "contour_set": ref_name, "level": "error",
             "note": str(exc)}
        ], True
    failed = False
    for set_name in sorted(case.contour_sets):
        if set_name == ref_name:
            continue
        try:
            pred = read_nifti(case.contour_sets[set_name], kind="label")
            pred = type(pred)(grid=pred.grid, labels=pred.labels,
                              schema_id=schema.schema_id)
            report = metrics.evaluate_case(
                pred, ref, schema, tol_mm=tol_mm, case_id=case.case_id
            )
        except (LevelQAError, ValueError, OSError) as exc:
            rows.append(
                {"case": case.case_id, "contour_set": set_name, "level": "error",
                 "note": str(exc)}
            )
            failed = True
            continue
        for row in report.to_rows(schema):
            row["contour_set"] = set_name
            rows.append(row)
    return rows, failed


def cmd_evaluate(args) -> int:
    schema_override, cases = _load_manifest(args.manifest)
    schema = schema_override or _schema_from(args)
    tol_mm = args.tolerance

    work = lambda case: _evaluate_one(case, args.reference, schema, tol_mm)
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(work, cases))
    else:
        results = [work(c) for c in cases]

    all_rows = [r for rows, _ in results for r in rows]
    any_failed = any(failed for _, failed in results)
    all_rows.sort(key=lambda r: (r["case"], r.get("contour_set", ""), r["level"]))

    fieldnames = ["case", "contour_set", "level", "vol_dice", "surf_dice", "hd_max_mm", "note"]
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(all_rows)

    for set_name in sorted({r["contour_set"] for r in all_rows}):
        for level in ("union",):
            vals = [
                r["vol_dice"] for r in all_rows
                if r["contour_set"] == set_name and r["level"] == level
                and r.get("vol_dice") is not None
            ]
            if vals:
                print(f"{set_name} {level} vol_dice: {stats.summary_line(vals)}")
            svals = [
                r["surf_dice"] for r in all_rows
                if r["contour_set"] == set_name and r["level"] == level
                and r.get("surf_dice") is not None
            ]
            if svals:
                print(f"{set_name} {level} surf_dice: {stats.summary_line(svals)}")
        per_level = [
            r["vol_dice"] for r in all_rows
            if r["contour_set"] == set_name and r["level"] not in ("union", "error")
            and r.get("vol_dice") is not None
        ]
        if per_level:
            print(f"{set_name} per-level vol_dice: {stats.summary_line(per_level)}")
    print(f"wrote {args.out}: {len(all_rows)} rows")
    return 2 if any_failed else 0


def _read_csv_column(path: str, column: str) -> list[float]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise LevelQAError(f"{path}: no column {column!r}")
        out = []
        for row in reader:
            cell = (row[column] or "").strip()
            if cell:
                out.append(float(cell))
    return out


def cmd_stats(args) -> int:
    if args.test == "descriptive":
        values = _read_csv_column(args.csv, args.values or args.x)
        print(f"n={len(values)}: {stats.summary_line(values)}")
        return 0
    x = _read_csv_column(args.csv, args.x)
    y = _read_csv_column(args.csv, args.y)
    if args.test == "signed-rank":
        sample = stats.PairedSample.from_arrays(x, y)
        result = stats.wilcoxon_signed_rank(sample, mode=args.mode)
    elif args.test == "rank-sum":
        result = stats.wilcoxon_rank_sum(x, y)
    else:  # paired-levene
        sample = stats.PairedSample.from_arrays(x, y)
        result = stats.paired_levene(sample)
    note = f" ({result.notes})" if result.notes else ""
    print(
        f"{result.method}: statistic={result.statistic:.6g} "
        f"p={result.p_value:.6g} n={result.n_effective}{note}"
    )
    return 0


def cmd_phantom(args) -> int:
    schema = _schema_from(args)
    cfg = phantom.PhantomConfig(
        dims=tuple(args.dims),
        spacing_mm=tuple(args.spacing),
        seed=args.seed,
        levels=tuple(args.levels),
        slab_slices=args.slab_slices,
        start_slice=args.start_slice,
        table=args.table,
        noise_sd_hu=args.noise_sd,
    )
    image, labels = phantom.generate_phantom(cfg, schema)
    os.makedirs(args.out_dir, exist_ok=True)
    image_path = os.path.join(args.out_dir, "image.nii.gz")
    labels_path = os.path.join(args.out_dir, "labels.nii.gz")
    write_nifti(image, image_path)
    write_nifti(labels, labels_path)
    sidecar = {
        "config": {
            "dims": list(cfg.dims),
            "spacing_mm": list(cfg.spacing_mm),
            "seed": cfg.seed,
            "levels": list(cfg.levels),
            "slab_slices": cfg.slab_slices,
            "start_slice": cfg.start_slice,
            "ellipse_semiaxes": list(cfg.ellipse_semiaxes),
            "lateral_split": cfg.split,
            "table": cfg.table,
            "noise_sd_hu": cfg.noise_sd_hu,
        },
        "schema_id": schema.schema_id,
        "files": {"image": "image.nii.gz", "labels": "labels.nii.gz"},
    }
    if args.jitter > 0:
        jittered = phantom.perturb_boundary_jitter(
            labels, schema, max_shift_slices=args.jitter, seed=args.jitter_seed
        )
        jit_path = os.path.join(args.out_dir, "labels_jittered.nii.gz")
        write_nifti(jittered, jit_path)
        sidecar["files"]["labels_jittered"] = "labels_jittered.nii.gz"
        sidecar["jitter"] = {"max_shift_slices": args.jitter, "seed": args.jitter_seed}
    with open(os.path.join(args.out_dir, "phantom.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)
    print(f"wrote phantom to {args.out_dir}")
    return 0


def cmd_review_plan(args) -> int:
    schema_override, cases = _load_manifest(args.manifest)
    schema = schema_override or _schema_from(args)
    sets = sorted({s for c in cases for s in c.contour_sets})
    plan = create_plan(
        cases, sets, args.raters, seed=args.seed, schema=schema,
        check_files=not args.no_check_files,
    )
    plan.save(args.out)
    print(
        f"wrote {args.out}: {len(plan.raters)} raters x "
        f"{plan.assignments_per_rater} assignments, "
        f"{plan.expected_ratings} expected ratings"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .review.plan import ReviewPlan
    from .review.service import ReviewService, create_app

    plan = ReviewPlan.load(args.plan)
    plan_dir = os.path.dirname(os.path.abspath(args.plan))
    ratings = args.ratings or os.path.join(plan_dir, "ratings.jsonl")
    data_root = args.data_root or os.environ.get("LEVELQA_DATA_ROOT") or plan_dir
    schema = _schema_from(args)
    service = ReviewService(plan, ratings_path=ratings, schema=schema, data_root=data_root)
    app = create_app(service)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"server failed: {exc}", file=sys.stderr)
        return 1
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levelqa",
        description="Head-and-neck lymph node level volumes: preprocessing, "
        "slice-plane adjustment, geometric evaluation, and blinded review.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "preprocess",
        help="crop, Otsu-mask, and fill a CT volume",
        epilog=CROP_GUIDANCE,
    )
    p.add_argument("--image", required=True, help="input CT volume (.nii/.nii.gz)")
    p.add_argument("--out", required=True, help="output volume path")
    p.add_argument("--crop", nargs=6, type=int, metavar=("I0", "I1", "J0", "J1", "K0", "K1"),
                   help="half-open voxel crop box; " + CROP_GUIDANCE)
    p.add_argument("--percentile-clip", type=float, default=0.01,
                   help="histogram clip fraction (default 0.01)")
    p.add_argument("--threshold-correction", type=float, default=0.3,
                   help="Otsu correction factor toward the clipped minimum (default 0.3)")
    p.add_argument("--closing-size", type=int, default=9,
                   help="cubic closing element edge in voxels (default 9)")
    p.add_argument("--dilate-size", type=int, default=2,
                   help="mask dilation iterations (default 2)")
    p.add_argument("--fill-hu", type=float, default=-1024.0,
                   help="fill value outside the mask (default -1024)")
    p.add_argument("--mask-out", help="also write the binary mask here")
    p.add_argument("--no-mask", action="store_true", help="crop only, skip masking")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("postprocess", help="slice-plane adjustment of a label volume")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write the adjustment report JSON here")
    p.add_argument("--schema", help="level schema config (default: built-in 20 levels)")
    p.add_argument("--min-foreground", type=int, default=10,
                   help="clear slices with this many voxels or fewer (default 10)")
    p.add_argument("--drop-fraction", type=float, default=0.80,
                   help="relative drop that clears a boundary slice (default 0.80)")
    p.add_argument("--components", default="all",
                   help="largest-component filter: all, none, or level names (default all)")
    p.add_argument("--order", choices=("components-first", "adjust-first"),
                   default="components-first")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("evaluate", help="metrics of every contour set against a reference")
    p.add_argument("--manifest", required=True, help="case manifest JSON")
    p.add_argument("--reference", required=True, help="reference contour-set name")
    p.add_argument("--tolerance", type=float, default=None,
                   help="surface-dice tolerance in mm (default: one voxel = max spacing)")
    p.add_argument("--out", required=True, help="long-format CSV output")
    p.add_argument("--schema")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="statistical tests on CSV columns")
    p.add_argument("--test", required=True,
                   choices=("descriptive", "signed-rank", "rank-sum", "paired-levene"))
    p.add_argument("--csv", required=True)
    p.add_argument("--x", help="first column name")
    p.add_argument("--y", help="second column name")
    p.add_argument("--values", help="column for descriptive summaries")
    p.add_argument("--mode", choices=("auto", "exact", "approx"), default="auto")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("phantom", help="write a synthetic phantom volume pair")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", nargs=3, type=int, default=[32, 32, 32])
    p.add_argument("--spacing", nargs=3, type=float, default=[1.0, 1.0, 3.0])
    p.add_argument("--levels", nargs="+", default=["II", "III", "IVa"])
    p.add_argument("--slab-slices", type=int, default=8)
    p.add_argument("--start-slice", type=int, default=4)
    p.add_argument("--table", action="store_true", help="add a detached table slab")
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--jitter", type=int, default=0,
                   help="also write labels with boundary jitter up to this many slices")
    p.add_argument("--jitter-seed", type=int, default=0)
    p.add_argument("--schema")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("review-plan", help="build a blinded review plan")
    p.add_argument("--manifest", required=True)
    p.add_argument("--raters", nargs="+", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--schema")
    p.add_argument("--no-check-files", action="store_true")
    p.set_defaults(func=cmd_review_plan)

    p = sub.add_parser("serve", help="serve the blinded review HTTP API")
    p.add_argument("--plan", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ratings", help="rating log path (default: ratings.jsonl next to plan)")
    p.add_argument("--data-root",
                   help="root for relative volume paths (default: $LEVELQA_DATA_ROOT or plan dir)")
    p.add_argument("--schema")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (LevelQAError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
