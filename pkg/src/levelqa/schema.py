"""The 20-level head-and-neck taxonomy: names, laterality, mirror partners,
and the per-slice exclusion groups that drive slice-plane adjustment."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaValidationError

DEFAULT_SCHEMA_ID = "hn-levels-20"

_MIDLINE = ("Ia", "VIa", "VIb", "VIIa")
_BILATERAL = ("Ib", "II", "III", "IVa", "IVb", "V", "VIIb", "VIII")

# Craniocaudally adjacent neighbours that may never share an axial slice:
# the lateral chain II-III-IVa-IVb per side, and the midline chain Ia-VIa-VIb.
_DEFAULT_EXCLUSIONS = (
    ("II", "III"),
    ("III", "IVa"),
    ("IVa", "IVb"),
)
_DEFAULT_MIDLINE_EXCLUSIONS = (
    ("Ia", "VIa"),
    ("VIa", "VIb"),
)


@dataclass(frozen=True)
class LevelDef:
    id: int
    name: str
    laterality: str  # "left" | "right" | "midline"
    mirror_partner: int  # level id; self for midline levels


@dataclass(frozen=True)
class LevelSchema:
    """Validated level taxonomy. Immutable after construction."""

    levels: tuple[LevelDef, ...]
    exclusion_groups: tuple[tuple[int, ...], ...]
    background_id: int = 0
    schema_id: str = DEFAULT_SCHEMA_ID
    _by_id: dict = field(init=False, repr=False, compare=False)
    _by_name: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(
            self, "exclusion_groups",
            tuple(tuple(sorted(g)) for g in self.exclusion_groups),
        )
        object.__setattr__(self, "_by_id", {l.id: l for l in self.levels})
        object.__setattr__(self, "_by_name", {l.name: l for l in self.levels})
        problems = self._validate()
        if problems:
            raise SchemaValidationError(
                f"invalid schema ({len(problems)} violations): " + "; ".join(problems)
            )

    def _validate(self) -> list[str]:
        problems = []
        seen_ids: set[int] = set()
        seen_names: set[str] = set()
        for lv in self.levels:
            if lv.id in seen_ids:
                problems.append(f"duplicate id {lv.id}")
            seen_ids.add(lv.id)
            if lv.name in seen_names:
                problems.append(f"duplicate name {lv.name!r}")
            seen_names.add(lv.name)
            if lv.id == self.background_id:
                problems.append(f"level id {lv.id} equals background id")
            if not 0 <= lv.id <= 255:
                problems.append(f"level id {lv.id} outside uint8 range")
            if lv.laterality not in ("left", "right", "midline"):
                problems.append(f"{lv.name}: unknown laterality {lv.laterality!r}")
        for lv in self.levels:
            partner = self._by_id.get(lv.mirror_partner)
            if partner is None:
                problems.append(f"{lv.name}: dangling mirror partner id {lv.mirror_partner}")
                continue
            if partner.mirror_partner != lv.id:
                problems.append(
                    f"{lv.name}: mirror relation not an involution "
                    f"(partner({partner.name}) = {partner.mirror_partner})"
                )
            if lv.laterality == "midline" and partner.id != lv.id:
                problems.append(f"{lv.name}: midline level must be its own partner")
            if lv.laterality == "left" and partner.laterality != "right":
                problems.append(f"{lv.name}: left level partnered to {partner.laterality}")
            if lv.laterality == "right" and partner.laterality != "left":
                problems.append(f"{lv.name}: right level partnered to {partner.laterality}")
        for g in self.exclusion_groups:
            if len(g) < 2:
                problems.append(f"exclusion group {g} has fewer than 2 members")
            if len(set(g)) != len(g):
                problems.append(f"exclusion group {g} has repeated members")
            for member in g:
                if member not in self._by_id:
                    problems.append(f"exclusion group {g}: dangling member id {member}")
        return problems

    @property
    def level_ids(self) -> tuple[int, ...]:
        return tuple(l.id for l in self.levels)

    def by_id(self, level_id: int) -> LevelDef:
        return self._by_id[level_id]

    def by_name(self, name: str) -> LevelDef:
        return self._by_name[name]

    def partner_of(self, level_id: int) -> int:
        return self._by_id[level_id].mirror_partner

    def mirror_lut(self) -> np.ndarray:
        """uint8 lookup table mapping each id to its mirror partner."""
        lut = np.arange(256, dtype=np.uint8)
        for lv in self.levels:
            lut[lv.id] = lv.mirror_partner
        return lut

    def class_count(self) -> int:
        """Number of classes including background."""
        return len(self.levels) + 1


def default_schema() -> LevelSchema:
    """The shipped 20-level taxonomy: ids 1..4 midline (Ia, VIa, VIb, VIIa),
    ids 5..20 the bilateral levels as left/right pairs in the stable order
    Ib, II, III, IVa, IVb, V, VIIb, VIII."""
    levels: list[LevelDef] = []
    for idx, name in enumerate(_MIDLINE):
        lid = idx + 1
        levels.append(LevelDef(id=lid, name=name, laterality="midline", mirror_partner=lid))
    next_id = len(_MIDLINE) + 1
    for name in _BILATERAL:
        left_id, right_id = next_id, next_id + 1
        levels.append(
            LevelDef(id=left_id, name=f"{name}_left", laterality="left", mirror_partner=right_id)
        )
        levels.append(
            LevelDef(id=right_id, name=f"{name}_right", laterality="right", mirror_partner=left_id)
        )
        next_id += 2

    by_name = {l.name: l.id for l in levels}
    groups: list[tuple[int, ...]] = []
    for side in ("left", "right"):
        for a, b in _DEFAULT_EXCLUSIONS:
            groups.append((by_name[f"{a}_{side}"], by_name[f"{b}_{side}"]))
    for a, b in _DEFAULT_MIDLINE_EXCLUSIONS:
        groups.append((by_name[a], by_name[b]))

    return LevelSchema(levels=tuple(levels), exclusion_groups=tuple(groups))


def default_schema_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "default_levels.json")


def load_schema(path: str | os.PathLike) -> LevelSchema:
    """Load and fully validate a schema config (JSON, see data/default_levels.json).

    Mirror partners and exclusion groups are written by level name in the
    config; ids are resolved at load. All violations are collected into a
    single error rather than failing on the first.
    """
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaValidationError(f"schema config is not valid JSON: {exc}") from exc

    problems: list[str] = []
    levels_raw = raw.get("levels")
    if not isinstance(levels_raw, list) or not levels_raw:
        raise SchemaValidationError("schema config missing non-empty 'levels' array")

    name_to_id: dict[str, int] = {}
    for entry in levels_raw:
        name = entry.get("name")
        lid = entry.get("id")
        if not isinstance(name, str) or not isinstance(lid, int):
            problems.append(f"level entry {entry!r} needs string name and integer id")
            continue
        if name in name_to_id:
            problems.append(f"duplicate name {name!r}")
        name_to_id[name] = lid

    levels: list[LevelDef] = []
    for entry in levels_raw:
        name = entry.get("name")
        lid = entry.get("id")
        if not isinstance(name, str) or not isinstance(lid, int):
            continue
        partner_name = entry.get("mirror_partner", name)
        if partner_name not in name_to_id:
            problems.append(f"{name}: dangling mirror partner {partner_name!r}")
            partner_id = lid
        else:
            partner_id = name_to_id[partner_name]
        levels.append(
            LevelDef(
                id=lid,
                name=name,
                laterality=entry.get("laterality", "midline"),
                mirror_partner=partner_id,
            )
        )

    groups: list[tuple[int, ...]] = []
    for g in raw.get("exclusion_groups", []):
        if len(g) < 2:
            problems.append(f"exclusion group {g} has fewer than 2 members")
        ids = []
        for member in g:
            if member not in name_to_id:
                problems.append(f"exclusion group {g}: dangling member {member!r}")
            else:
                ids.append(name_to_id[member])
        if len(ids) >= 2:
            groups.append(tuple(ids))

    if problems:
        raise SchemaValidationError(
            f"invalid schema config ({len(problems)} violations): " + "; ".join(problems)
        )
    return LevelSchema(
        levels=tuple(levels),
        exclusion_groups=tuple(groups),
        background_id=int(raw.get("background_id", 0)),
        schema_id=str(raw.get("schema_id", DEFAULT_SCHEMA_ID)),
    )


def schema_to_config(schema: LevelSchema) -> dict:
    """Inverse of load_schema, for writing config files."""
    return {
        "schema_id": schema.schema_id,
        "background_id": schema.background_id,
        "levels": [
            {
                "id": l.id,
                "name": l.name,
                "laterality": l.laterality,
                "mirror_partner": schema.by_id(l.mirror_partner).name,
            }
            for l in schema.levels
        ],
        "exclusion_groups": [
            [schema.by_id(i).name for i in g] for g in schema.exclusion_groups
        ],
    }
