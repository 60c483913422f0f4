"""The blinded-rating HTTP backend.

State is an immutable plan plus an append-only JSONL rating log; the log
is replayed on startup, so a killed and restarted server presents the
identical effective rating set. Raters address everything by opaque
assignment token; no rater-facing payload carries a contour-set identity.
"""

from __future__ import annotations

import csv
import io
import json
import os
import threading
from datetime import datetime, timezone

from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from ..schema import LevelSchema, default_schema
from ..volume_io import read_nifti
from . import render
from .plan import RATING_BANDS, ReviewPlan, category_for


class RatingLog:
    """Append-only line-delimited JSON log with replay and fsync appends."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._records: list[dict] = []
        self._effective: dict[tuple[str, str, int], dict] = {}
        if os.path.exists(path):
            with open(path) as fh:
                lines = fh.readlines()
            for i, line in enumerate(lines):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # A torn final line is what a mid-append kill leaves behind;
                    # the client never saw that submission acknowledged, so skip
                    # it.  Anywhere else it is corruption, not a torn tail.
                    if i == len(lines) - 1:
                        break
                    raise
                self._records.append(rec)
                self._effective[self._key(rec)] = rec

    @staticmethod
    def _key(rec: dict) -> tuple[str, str, int]:
        return (rec["rater"], rec["token"], int(rec["level_id"]))

    def append(self, record: dict) -> dict:
        with self._lock:
            record = {**record, "seq": len(self._records)}
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._records.append(record)
            self._effective[self._key(record)] = record
            return record

    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)

    def effective(self) -> dict[tuple[str, str, int], dict]:
        """Latest record per (rater, token, level id); resubmission supersedes."""
        with self._lock:
            return dict(self._effective)


class ReviewService:
    def __init__(
        self,
        plan: ReviewPlan,
        ratings_path: str,
        schema: LevelSchema | None = None,
        data_root: str | None = None,
    ):
        self.plan = plan
        self.schema = schema or default_schema()
        if self.schema.schema_id != plan.schema_id:
            raise ValueError(
                f"plan built for schema {plan.schema_id!r}, serving {self.schema.schema_id!r}"
            )
        self.log = RatingLog(ratings_path)
        self.data_root = data_root or os.environ.get("LEVELQA_DATA_ROOT", "")
        self._volumes: dict[tuple[str, str], object] = {}
        self._vol_lock = threading.Lock()
        self._level_meta = [
            {"id": l.id, "name": l.name, "color": render.palette(self.schema)[l.id]}
            for l in self.schema.levels
        ]
        self._bands = [
            {"lo": b.lo, "hi": b.hi, "caption": b.caption} for b in RATING_BANDS
        ]

    # -- volume access ------------------------------------------------------

    def _resolve(self, path: str) -> str:
        if os.path.isabs(path) or not self.data_root:
            return path
        return os.path.join(self.data_root, path)

    def _image(self, case_id: str):
        key = ("image", case_id)
        with self._vol_lock:
            if key not in self._volumes:
                case = self.plan.case_by_id(case_id)
                self._volumes[key] = read_nifti(self._resolve(case.image_path), kind="image")
            return self._volumes[key]

    def _labels(self, case_id: str, contour_set: str):
        key = (f"labels:{contour_set}", case_id)
        with self._vol_lock:
            if key not in self._volumes:
                case = self.plan.case_by_id(case_id)
                self._volumes[key] = read_nifti(
                    self._resolve(case.contour_sets[contour_set]), kind="label"
                )
            return self._volumes[key]

    # -- rating state -------------------------------------------------------

    def _rated_by_token(self, rater: str) -> dict[str, set[int]]:
        out: dict[str, set[int]] = {}
        for (r, t, lid) in self.log.effective():
            if r == rater:
                out.setdefault(t, set()).add(lid)
        return out

    def _rated_levels(self, rater: str, token: str) -> set[int]:
        return self._rated_by_token(rater).get(token, set())

    def _sequence(self, rater: str) -> list[str]:
        if rater not in self.plan.sequences:
            raise KeyError(f"unknown rater {rater!r}")
        return self.plan.sequences[rater]

    # -- endpoints ----------------------------------------------------------

    def next_assignment(self, rater: str) -> dict:
        """Earliest token in the rater's sequence with an unrated level."""
        seq = self._sequence(rater)
        rated = self._rated_by_token(rater)
        all_levels = set(self.plan.level_ids)
        for pos, token in enumerate(seq):
            if rated.get(token, set()) >= all_levels:
                continue
            image = self._image(self.plan.assignments[token].case_id)
            nx, ny, nz = image.grid.dims
            return {
                "completed": False,
                "token": token,
                "position": pos + 1,
                "total": len(seq),
                "dims": [nx, ny, nz],
                "spacing_mm": list(image.grid.spacing_mm),
                "planes": {"axial": nz, "coronal": ny, "sagittal": nx},
                "levels": self._level_meta,
                "rating_bands": self._bands,
                "window_presets": list(render.WINDOW_PRESETS),
                "rated_levels": sorted(rated.get(token, set())),
            }
        return {"completed": True, "position": len(seq), "total": len(seq)}

    def progress(self, rater: str) -> dict:
        seq = self._sequence(rater)
        rated = self._rated_by_token(rater)
        all_levels = set(self.plan.level_ids)
        rated_levels = sum(len(v) for v in rated.values())
        rated_assignments = sum(1 for t in seq if rated.get(t, set()) >= all_levels)
        return {
            "rater": rater,
            "rated_assignments": rated_assignments,
            "total_assignments": len(seq),
            "rated_levels": rated_levels,
            "total_levels": len(seq) * len(self.plan.level_ids),
        }

    def submit_rating(
        self, rater: str, token: str, level_id: int, score: float,
        time_on_case_s: float = 0.0,
    ) -> dict:
        if rater not in self.plan.sequences:
            raise KeyError(f"unknown rater {rater!r}")
        if token not in self.plan.assignments:
            raise KeyError(f"unknown token {token!r}")
        if self.plan.assignments[token].rater != rater:
            raise PermissionError(f"token not assigned to rater {rater!r}")
        if level_id not in self.plan.level_ids:
            raise ValueError(f"level id {level_id} not in schema")
        if not 0.0 <= score <= 100.0:
            raise ValueError(f"score {score} outside [0, 100]")
        if time_on_case_s < 0:
            raise ValueError(f"time_on_case_s {time_on_case_s} negative")
        self.log.append(
            {
                "rater": rater,
                "token": token,
                "level_id": int(level_id),
                "score": float(score),
                "time_on_case_s": float(time_on_case_s),
                "submitted_at": datetime.now(timezone.utc).isoformat(),
            }
        )
        rated = self._rated_levels(rater, token)
        return {
            "status": "ok",
            "rated_levels": len(rated),
            "assignment_complete": rated >= set(self.plan.level_ids),
        }

    def render_png(self, token: str, plane: str, index: int, wc: float, ww: float) -> bytes:
        if token not in self.plan.assignments:
            raise KeyError(f"unknown token {token!r}")
        if plane not in render.PLANES:
            raise ValueError(f"plane must be one of {render.PLANES}, got {plane!r}")
        a = self.plan.assignments[token]
        image = self._image(a.case_id)
        labels = self._labels(a.case_id, a.contour_set)
        rgb = render.render_slice(image, labels, plane, index, wc, ww)
        return render.encode_png(rgb)

    def export_csv(self, unblind: bool = False, key: str = "") -> str:
        if unblind and key != self.plan.export_key:
            raise PermissionError("unblinding requires the plan's export key")
        eff = self.log.effective()
        rows = []
        for (rater, token, level_id), rec in eff.items():
            a = self.plan.assignments.get(token)
            if a is None:
                continue
            rows.append(
                {
                    "rater": rater,
                    "case": a.case_id,
                    "contour_set": a.contour_set if unblind else token,
                    "level": self.schema.by_id(level_id).name,
                    "level_id": level_id,
                    "score": rec["score"],
                    "category": category_for(rec["score"]),
                    "submitted_at": rec["submitted_at"],
                    "time_on_case_s": rec["time_on_case_s"],
                }
            )
        rows.sort(key=lambda r: (r["rater"], r["case"], r["contour_set"], r["level_id"]))
        buf = io.StringIO()
        fieldnames = [
            "rater", "case", "contour_set", "level", "score", "category",
            "submitted_at", "time_on_case_s",
        ]
        writer = csv.DictWriter(buf, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()


class RatingIn(BaseModel):
    rater: str
    token: str
    level_id: int
    score: float
    time_on_case_s: float = 0.0


def create_app(service: ReviewService) -> FastAPI:
    app = FastAPI(title="blinded level review")
    # the browser client may be opened from disk or another host; every
    # endpoint is already rater-scoped and blinded, so open CORS is safe
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except PermissionError as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/session/{rater}/next")
    def session_next(rater: str):
        return guard(service.next_assignment, rater)

    @app.get("/progress/{rater}")
    def progress(rater: str):
        return guard(service.progress, rater)

    @app.get("/render")
    def render_endpoint(token: str, plane: str = "axial", index: int = 0,
                        wc: float = 40.0, ww: float = 400.0):
        png = guard(service.render_png, token, plane, index, wc, ww)
        return Response(content=png, media_type="image/png")

    @app.post("/rating")
    def rating(body: RatingIn):
        return guard(
            service.submit_rating, body.rater, body.token, body.level_id,
            body.score, body.time_on_case_s,
        )

    @app.get("/export")
    def export(unblind: bool = False, key: str = ""):
        text = guard(service.export_csv, unblind, key)
        return Response(content=text, media_type="text/csv")

    return app
