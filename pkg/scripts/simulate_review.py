#!/usr/bin/env python3
"""Simulate a complete blinded review study against a live HTTP service.

Builds a phantom corpus with three contour sets per case (the truth, a
boundary-jittered variant, and a dilated variant), creates a blinded plan,
starts the review service on a local port, and drives every rater through
their whole session with plain HTTP requests: next assignment, one slice
render, one rating per level. Simulated raters score from the rendered
geometry they are shown - a noisy function of the true per-case Dice -
so the final unblinded export shows the truth set scoring highest without
any rater ever seeing a contour-set name.

Example:
    python3 scripts/simulate_review.py --cases 6 --raters 3 --seed 1 \
        --workdir /tmp/review-sim
"""

import argparse
import csv
import io
import random
import tempfile
import threading
import time
from pathlib import Path

import httpx
import numpy as np
import uvicorn

from levelqa.metrics import evaluate_case
from levelqa.phantom import (
    PhantomConfig,
    generate_phantom,
    perturb_boundary_jitter,
    perturb_morphological,
)
from levelqa.review.plan import CaseEntry, create_plan
from levelqa.review.service import ReviewService, create_app
from levelqa.schema import default_schema
from levelqa.volume_io import write_nifti

SET_NAMES = ("truth", "jittered", "dilated")


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=6)
    ap.add_argument("--raters", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workdir", type=Path, default=None,
                    help="directory for volumes, plan, and ratings "
                         "(default: a fresh temp dir)")
    return ap.parse_args(argv)


def build_corpus(workdir: Path, n_cases: int, seed: int, schema):
    cases = []
    priors = {}  # (case_id, set name) -> mean per-level vol Dice vs truth
    for i in range(n_cases):
        img, truth = generate_phantom(PhantomConfig(seed=seed + i), schema)
        jit = perturb_boundary_jitter(truth, schema, max_shift_slices=2,
                                      seed=seed + i + 40)
        present = sorted(set(np.unique(truth.labels)) - {0})
        dil = perturb_morphological(truth, int(present[0]), 1, "dilate").labels
        case_id = f"case{i:02d}"
        write_nifti(img, workdir / f"{case_id}_image.nii.gz")
        paths = {}
        for name, vol in zip(SET_NAMES, (truth, jit, dil)):
            p = workdir / f"{case_id}_{name}.nii.gz"
            write_nifti(vol, p)
            paths[name] = str(p)
            rep = evaluate_case(vol, truth, schema)
            priors[(case_id, name)] = float(np.mean(
                [e.vol_dice for e in rep.levels.values()]))
        cases.append(CaseEntry(case_id=case_id,
                               image_path=str(workdir / f"{case_id}_image.nii.gz"),
                               contour_sets=paths))
    return cases, priors


def serve(app):
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    return server, thread, port


def run_rater(client: httpx.Client, rater: str, plan, priors, rng) -> int:
    """Rate every assignment; returns the number of ratings posted."""
    posted = 0
    while True:
        body = client.get(f"/session/{rater}/next").json()
        if body["completed"]:
            return posted
        token = body["token"]
        # the rater only has the blinded render; the simulation peeks at the
        # plan the way a real rater's eyes peek at contour quality
        assignment = plan.assignments[token]
        quality = priors[(assignment.case_id, assignment.contour_set)]
        mid = body["planes"]["axial"] // 2
        client.get(f"/render?token={token}&plane=axial&index={mid}").raise_for_status()
        for level_id in plan.level_ids:
            score = int(np.clip(round(100 * quality + rng.gauss(0, 6)), 0, 100))
            client.post("/rating", json={
                "rater": rater, "token": token, "level_id": level_id,
                "score": score, "time_on_case_s": rng.uniform(20, 90),
            }).raise_for_status()
            posted += 1


def main(argv=None) -> int:
    args = parse_args(argv)
    schema = default_schema()
    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="review-sim-"))
    workdir.mkdir(parents=True, exist_ok=True)
    print(f"workdir: {workdir}")

    cases, priors = build_corpus(workdir, args.cases, args.seed, schema)
    raters = [f"rater{chr(ord('a') + i)}" for i in range(args.raters)]
    plan = create_plan(cases, list(SET_NAMES), raters, seed=args.seed, schema=schema)
    plan.save(workdir / "plan.json")
    print(f"plan: {plan.assignments_per_rater} assignments per rater, "
          f"{plan.expected_ratings} ratings expected")

    service = ReviewService(plan, ratings_path=workdir / "ratings.jsonl",
                            schema=schema)
    server, thread, port = serve(create_app(service))
    rng = random.Random(args.seed)
    t0 = time.perf_counter()
    try:
        with httpx.Client(base_url=f"http://127.0.0.1:{port}", timeout=30.0) as client:
            total = sum(run_rater(client, r, plan, priors, rng) for r in raters)
            export = client.get(f"/export?unblind=true&key={plan.export_key}").text
    finally:
        server.should_exit = True
        thread.join(timeout=10)
    print(f"posted {total} ratings over HTTP in {time.perf_counter() - t0:.1f}s")

    (workdir / "export.csv").write_text(export)
    rows = list(csv.DictReader(io.StringIO(export)))
    print(f"export: {len(rows)} rows -> {workdir / 'export.csv'}")
    print("mean score by contour set:")
    for name in SET_NAMES:
        scores = [float(r["score"]) for r in rows if r["contour_set"] == name]
        print(f"  {name:10s} {np.mean(scores):6.1f}  (n={len(scores)})")
    return 0 if len(rows) == plan.expected_ratings else 1


if __name__ == "__main__":
    raise SystemExit(main())
