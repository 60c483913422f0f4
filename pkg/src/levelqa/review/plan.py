"""Blinded review plans: who rates what, in which order, behind which token.

Tokens are the only identifier a rater ever sees. The token -> (case,
contour set) mapping lives in the plan file on the server and in the
unblinded export, nowhere else.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
from dataclasses import dataclass, field

from ..errors import PlanError
from ..schema import LevelSchema, default_schema


@dataclass(frozen=True)
class RatingBand:
    lo: float
    hi: float
    caption: str
    slug: str


# Score anchors of the rating protocol. The first band includes both ends;
# the others exclude their lower edge, so 50 is "major", 75 "minor".
RATING_BANDS = (
    RatingBand(0.0, 25.0, "complete recontouring of segmentation necessary", "complete recontouring"),
    RatingBand(25.0, 50.0, "major manual editing necessary", "major editing"),
    RatingBand(50.0, 75.0, "minor manual editing necessary", "minor editing"),
    RatingBand(75.0, 100.0, "segmentation clinically usable", "clinically usable"),
)


def band_for(score: float) -> RatingBand:
    if not 0.0 <= score <= 100.0:
        raise ValueError(f"score {score} outside [0, 100]")
    for b in RATING_BANDS:
        if score <= b.hi:
            return b
    return RATING_BANDS[-1]


def category_for(score: float) -> str:
    """Short category label used in exports, e.g. 'clinically usable'."""
    return band_for(score).slug


@dataclass(frozen=True)
class CaseEntry:
    case_id: str
    image_path: str
    contour_sets: dict  # set name -> label volume path

    def __post_init__(self):
        object.__setattr__(self, "contour_sets", dict(self.contour_sets))


@dataclass(frozen=True)
class Assignment:
    token: str
    rater: str
    case_id: str
    contour_set: str


@dataclass
class ReviewPlan:
    seed: int
    raters: tuple[str, ...]
    cases: list[CaseEntry]
    contour_sets: tuple[str, ...]
    level_ids: tuple[int, ...]
    assignments: dict[str, Assignment] = field(default_factory=dict)
    sequences: dict[str, list[str]] = field(default_factory=dict)
    export_key: str = ""
    schema_id: str = "hn-levels-20"

    @property
    def assignments_per_rater(self) -> int:
        return len(self.cases) * len(self.contour_sets)

    @property
    def expected_ratings(self) -> int:
        return len(self.raters) * self.assignments_per_rater * len(self.level_ids)

    def case_by_id(self, case_id: str) -> CaseEntry:
        for c in self.cases:
            if c.case_id == case_id:
                return c
        raise PlanError(f"unknown case {case_id!r}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "raters": list(self.raters),
            "cases": [
                {"case_id": c.case_id, "image": c.image_path, "sets": dict(c.contour_sets)}
                for c in self.cases
            ],
            "contour_sets": list(self.contour_sets),
            "level_ids": list(self.level_ids),
            "assignments": {
                t: {"rater": a.rater, "case_id": a.case_id, "contour_set": a.contour_set}
                for t, a in self.assignments.items()
            },
            "sequences": {r: list(seq) for r, seq in self.sequences.items()},
            "export_key": self.export_key,
            "schema_id": self.schema_id,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ReviewPlan":
        assignments = {
            t: Assignment(token=t, rater=a["rater"], case_id=a["case_id"],
                          contour_set=a["contour_set"])
            for t, a in raw["assignments"].items()
        }
        return cls(
            seed=int(raw["seed"]),
            raters=tuple(raw["raters"]),
            cases=[
                CaseEntry(case_id=c["case_id"], image_path=c["image"], contour_sets=c["sets"])
                for c in raw["cases"]
            ],
            contour_sets=tuple(raw["contour_sets"]),
            level_ids=tuple(int(i) for i in raw["level_ids"]),
            assignments=assignments,
            sequences={r: list(seq) for r, seq in raw["sequences"].items()},
            export_key=raw["export_key"],
            schema_id=raw.get("schema_id", "hn-levels-20"),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ReviewPlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _rater_rng(seed: int, rater: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}|{rater}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def create_plan(
    cases: list[CaseEntry],
    contour_sets: list[str],
    raters: list[str],
    seed: int = 0,
    schema: LevelSchema | None = None,
    check_files: bool = True,
) -> ReviewPlan:
    """Build a blinded review plan.

    Every rater gets every (case, contour set) pair exactly once, in a
    permutation drawn from an rng seeded by (seed, rater); tokens are
    128-bit hex, unique across the plan, and carry no case or set
    information. Missing contour-set files fail the build naming the case.
    """
    schema = schema or default_schema()
    if not cases or not contour_sets or not raters:
        raise PlanError("need at least one case, contour set, and rater")
    if len(set(c.case_id for c in cases)) != len(cases):
        raise PlanError("duplicate case ids")
    if len(set(raters)) != len(raters):
        raise PlanError("duplicate rater ids")

    for case in cases:
        missing = [s for s in contour_sets if s not in case.contour_sets]
        if missing:
            raise PlanError(f"case {case.case_id!r} missing contour sets {missing}")
        if check_files:
            if not os.path.exists(case.image_path):
                raise PlanError(f"case {case.case_id!r}: image file {case.image_path} not found")
            for s in contour_sets:
                if not os.path.exists(case.contour_sets[s]):
                    raise PlanError(
                        f"case {case.case_id!r}: contour set {s!r} file "
                        f"{case.contour_sets[s]} not found"
                    )

    plan = ReviewPlan(
        seed=seed,
        raters=tuple(raters),
        cases=list(cases),
        contour_sets=tuple(contour_sets),
        level_ids=tuple(schema.level_ids),
        export_key=hashlib.sha256(f"{seed}|export-key".encode()).hexdigest()[:32],
        schema_id=schema.schema_id,
    )
    used_tokens: set[str] = set()
    for rater in raters:
        rng = _rater_rng(seed, rater)
        pairs = [(c.case_id, s) for c in cases for s in contour_sets]
        rng.shuffle(pairs)
        sequence = []
        for case_id, set_name in pairs:
            token = f"{rng.getrandbits(128):032x}"
            while token in used_tokens:
                token = f"{rng.getrandbits(128):032x}"
            used_tokens.add(token)
            plan.assignments[token] = Assignment(
                token=token, rater=rater, case_id=case_id, contour_set=set_name
            )
            sequence.append(token)
        plan.sequences[rater] = sequence
    return plan
