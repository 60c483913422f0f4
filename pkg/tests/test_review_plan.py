"""Blinded review planning: assignment construction, token blinding,
rating bands."""

import hashlib
import json
import re

import pytest

from levelqa.errors import PlanError
from levelqa.review.plan import (
    RATING_BANDS,
    Assignment,
    CaseEntry,
    ReviewPlan,
    band_for,
    category_for,
    create_plan,
)


def _cases(n=4, sets=("expert", "model")):
    return [
        CaseEntry(
            case_id=f"case{i:02d}",
            image_path=f"case{i:02d}/image.nii.gz",
            contour_sets={s: f"case{i:02d}/{s}.nii.gz" for s in sets},
        )
        for i in range(n)
    ]


def test_rating_bands_verbatim_captions():
    captions = [b.caption for b in RATING_BANDS]
    assert captions == [
        "complete recontouring of segmentation necessary",
        "major manual editing necessary",
        "minor manual editing necessary",
        "segmentation clinically usable",
    ]


def test_band_boundaries():
    assert band_for(0).slug == "complete recontouring"
    assert band_for(25).slug == "complete recontouring"
    assert band_for(25.5).slug == "major editing"
    assert band_for(50).slug == "major editing"
    assert band_for(50.5).slug == "minor editing"
    assert band_for(75).slug == "minor editing"
    assert band_for(75.5).slug == "clinically usable"
    assert band_for(100).slug == "clinically usable"
    assert category_for(80) == "clinically usable"
    with pytest.raises(ValueError):
        band_for(-0.1)
    with pytest.raises(ValueError):
        band_for(100.1)


def test_plan_counts(schema):
    plan = create_plan(_cases(4), ["expert", "model"], ["r1", "r2", "r3"],
                       seed=1, schema=schema, check_files=False)
    assert plan.assignments_per_rater == 8
    assert plan.expected_ratings == 3 * 8 * 20
    for rater in plan.raters:
        seq = plan.sequences[rater]
        assert len(seq) == 8
        pairs = {(plan.assignments[t].case_id, plan.assignments[t].contour_set)
                 for t in seq}
        assert len(pairs) == 8  # every (case, set) exactly once


def test_tokens_are_opaque_and_unique(schema):
    plan = create_plan(_cases(5), ["expert", "model"], ["a", "b"],
                       seed=2, schema=schema, check_files=False)
    tokens = [t for r in plan.raters for t in plan.sequences[r]]
    assert len(tokens) == len(set(tokens)) == 20
    for t in tokens:
        assert re.fullmatch(r"[0-9a-f]{32}", t)
        a = plan.assignments[t]
        assert a.case_id not in t and a.contour_set not in t


def test_plan_deterministic_per_seed(schema):
    p1 = create_plan(_cases(4), ["expert", "model"], ["r1", "r2"],
                     seed=5, schema=schema, check_files=False)
    p2 = create_plan(_cases(4), ["expert", "model"], ["r1", "r2"],
                     seed=5, schema=schema, check_files=False)
    assert p1.to_dict() == p2.to_dict()
    p3 = create_plan(_cases(4), ["expert", "model"], ["r1", "r2"],
                     seed=6, schema=schema, check_files=False)
    assert p1.sequences != p3.sequences


def test_raters_get_independent_orders(schema):
    plan = create_plan(_cases(8), ["expert", "model"], ["r1", "r2"],
                       seed=3, schema=schema, check_files=False)
    order = lambda r: [
        (plan.assignments[t].case_id, plan.assignments[t].contour_set)
        for t in plan.sequences[r]
    ]
    assert order("r1") != order("r2")
    assert sorted(order("r1")) == sorted(order("r2"))


def test_export_key_is_seed_derived(schema):
    plan = create_plan(_cases(2), ["expert", "model"], ["r"], seed=9,
                       schema=schema, check_files=False)
    expected = hashlib.sha256(b"9|export-key").hexdigest()[:32]
    assert plan.export_key == expected


def test_plan_round_trip(tmp_path, schema):
    plan = create_plan(_cases(3), ["expert", "model"], ["r1", "r2"],
                       seed=4, schema=schema, check_files=False)
    p = tmp_path / "plan.json"
    plan.save(p)
    again = ReviewPlan.load(p)
    assert again.to_dict() == plan.to_dict()
    assert isinstance(json.loads(p.read_text()), dict)


def test_plan_validation_errors(tmp_path, schema):
    with pytest.raises(PlanError):
        create_plan([], ["expert"], ["r"], schema=schema, check_files=False)
    with pytest.raises(PlanError):
        create_plan(_cases(2), ["expert"], [], schema=schema, check_files=False)
    with pytest.raises(PlanError):
        create_plan(_cases(2), [], ["r"], schema=schema, check_files=False)
    with pytest.raises(PlanError):  # duplicate rater
        create_plan(_cases(2), ["expert"], ["r", "r"], schema=schema,
                    check_files=False)
    cases = _cases(2) + _cases(1)  # duplicate case id
    with pytest.raises(PlanError):
        create_plan(cases, ["expert"], ["r"], schema=schema, check_files=False)
    missing = _cases(2, sets=("expert",))
    with pytest.raises(PlanError) as exc:  # case missing a requested set
        create_plan(missing, ["expert", "model"], ["r"], schema=schema,
                    check_files=False)
    assert "case0" in str(exc.value)


def test_plan_checks_files_when_asked(tmp_path, schema):
    case = CaseEntry(
        case_id="c0",
        image_path=str(tmp_path / "img.nii.gz"),
        contour_sets={"expert": str(tmp_path / "exp.nii.gz")},
    )
    with pytest.raises(PlanError) as exc:
        create_plan([case], ["expert"], ["r"], schema=schema, check_files=True)
    assert "c0" in str(exc.value)
