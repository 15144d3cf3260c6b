"""Administrative hierarchy, template-generated place names and profile resolution."""

from __future__ import annotations

import csv
import enum
import os
import re
import unicodedata
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Union


PathLike = Union[str, os.PathLike]


class Level(enum.Enum):
    MUNICIPALITY = "municipality"
    PROVINCE = "province"
    REGION = "region"
    COUNTRY = "country"

    @property
    def rank(self) -> int:
        return _LEVEL_ORDER.index(self)

    @property
    def parent_level(self) -> Optional["Level"]:
        if self is Level.COUNTRY:
            return None
        return _LEVEL_ORDER[self.rank + 1]

    @classmethod
    def parse(cls, value: Union[str, "Level"]) -> "Level":
        if isinstance(value, Level):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown level {value!r}") from None


_LEVEL_ORDER = (Level.MUNICIPALITY, Level.PROVINCE, Level.REGION, Level.COUNTRY)


class HierarchyError(ValueError):
    """Invalid location records. ``record`` holds the offending row."""

    def __init__(self, message: str, record: Optional[Mapping] = None):
        self.record = dict(record) if record is not None else None
        if record is not None:
            message = f"{message}: {self.record}"
        super().__init__(message)


@dataclass(frozen=True)
class AdminUnit:
    id: str
    name: str
    level: Level
    parent_id: Optional[str] = None


@dataclass(frozen=True)
class GeneratedName:
    surface: str
    target_id: str
    # 1-12 for template names, None for manually curated aliases
    template_id: Optional[int]


@dataclass(frozen=True)
class ResolvedLocation:
    unit_id: str
    level: Level


_SPACES = re.compile(r"\s+")
_COMMA = re.compile(r"\s*,\s*")


def _strip_edges(text: str) -> str:
    start, end = 0, len(text)
    while start < end and _is_edge_char(text[start]):
        start += 1
    while end > start and _is_edge_char(text[end - 1]):
        end -= 1
    return text[start:end]


def _is_edge_char(ch: str) -> bool:
    return ch.isspace() or unicodedata.category(ch).startswith("P")


def normalize(text: str) -> str:
    """Canonical matching form of a place string.

    Lowercased, NFC, whitespace collapsed, leading/trailing punctuation
    removed, commas written as ``", "``. Accents are kept.
    """
    text = unicodedata.normalize("NFC", unicodedata.normalize("NFC", text).lower())
    prev = None
    while prev != text:
        prev = text
        text = _SPACES.sub(" ", text)
        text = _strip_edges(text)
        text = _COMMA.sub(", ", text)
    return text


class LocationHierarchy:
    """Validated municipality -> province -> region -> country tree."""

    def __init__(self, units: Iterable[AdminUnit]):
        self._units: dict[str, AdminUnit] = {}
        for unit in units:
            self._units[unit.id] = unit
        self._by_name: dict[tuple[str, Level], list[str]] = defaultdict(list)
        self._children: dict[str, list[str]] = defaultdict(list)
        for unit in self._units.values():
            self._by_name[(normalize(unit.name), unit.level)].append(unit.id)
            if unit.parent_id is not None:
                self._children[unit.parent_id].append(unit.id)
        self.country = next(u for u in self._units.values() if u.level is Level.COUNTRY)

    def __len__(self) -> int:
        return len(self._units)

    def __iter__(self) -> Iterator[AdminUnit]:
        return iter(self._units.values())

    def __contains__(self, unit_id: object) -> bool:
        return unit_id in self._units

    def __getitem__(self, unit_id: str) -> AdminUnit:
        return self._units[unit_id]

    def get(self, unit_id: Optional[str]) -> Optional[AdminUnit]:
        if unit_id is None:
            return None
        return self._units.get(unit_id)

    def find(self, name: str, level: Union[Level, str]) -> list[AdminUnit]:
        ids = self._by_name.get((normalize(name), Level.parse(level)), [])
        return [self._units[i] for i in ids]

    def units_at(self, level: Union[Level, str]) -> list[AdminUnit]:
        level = Level.parse(level)
        return sorted((u for u in self._units.values() if u.level is level), key=lambda u: u.id)

    def children(self, unit_id: str) -> list[AdminUnit]:
        return [self._units[i] for i in self._children.get(unit_id, [])]

    def parent(self, unit_id: str) -> Optional[AdminUnit]:
        return self.get(self._units[unit_id].parent_id)

    def ancestor(self, unit_id: str, level: Union[Level, str]) -> Optional[AdminUnit]:
        """The unit at ``level`` enclosing ``unit_id`` (itself if already there).

        Returns None when ``unit_id`` sits above ``level``.
        """
        level = Level.parse(level)
        unit = self._units[unit_id]
        if unit.level.rank > level.rank:
            return None
        while unit.level is not level:
            unit = self._units[unit.parent_id]
        return unit

    def lineage(self, unit_id: str) -> dict[Level, AdminUnit]:
        out = {}
        unit: Optional[AdminUnit] = self._units[unit_id]
        while unit is not None:
            out[unit.level] = unit
            unit = self.get(unit.parent_id)
        return out

    def to_rows(self) -> list[dict[str, str]]:
        return [
            {"id": u.id, "name": u.name, "level": u.level.value, "parent_id": u.parent_id or ""}
            for u in self._units.values()
        ]


def _read_rows(source) -> list[dict]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    return [dict(row) for row in source]


def load_hierarchy(source: Union[PathLike, Iterable[Mapping]]) -> LocationHierarchy:
    """Build a hierarchy from a CSV path or an iterable of row mappings.

    Rows need ``id``, ``name``, ``level`` and ``parent_id`` (empty for the
    country). Raises HierarchyError on duplicate ids, dangling parents,
    cycles, level mismatches, or anything other than exactly one country.
    """
    rows = _read_rows(source)
    units: dict[str, AdminUnit] = {}
    records: dict[str, dict] = {}
    for row in rows:
        try:
            unit_id = str(row["id"]).strip()
            name = str(row["name"]).strip()
            raw_level = row["level"]
            parent = row.get("parent_id")
        except KeyError as exc:
            raise HierarchyError(f"missing column {exc.args[0]!r}", row) from None
        try:
            level = Level.parse(raw_level)
        except ValueError:
            raise HierarchyError("unknown level", row) from None
        parent_id = str(parent).strip() if parent not in (None, "") else None
        if not unit_id or not name:
            raise HierarchyError("empty id or name", row)
        if unit_id in units:
            raise HierarchyError("duplicate id", row)
        units[unit_id] = AdminUnit(unit_id, name, level, parent_id)
        records[unit_id] = row

    countries = [u for u in units.values() if u.level is Level.COUNTRY]
    if not countries:
        raise HierarchyError("no country unit")
    if len(countries) > 1:
        raise HierarchyError("multiple countries", records[countries[1].id])
    if countries[0].parent_id is not None:
        raise HierarchyError("country must not have a parent", records[countries[0].id])

    for unit in units.values():
        if unit.level is not Level.COUNTRY:
            if unit.parent_id is None:
                raise HierarchyError("missing parent", records[unit.id])
            if unit.parent_id not in units:
                raise HierarchyError("dangling parent", records[unit.id])

    for unit in units.values():
        seen = {unit.id}
        cur = unit
        while cur.parent_id is not None:
            if cur.parent_id in seen:
                raise HierarchyError("cycle", records[unit.id])
            seen.add(cur.parent_id)
            cur = units[cur.parent_id]

    for unit in units.values():
        if unit.parent_id is not None and units[unit.parent_id].level is not unit.level.parent_level:
            raise HierarchyError(
                f"parent level {units[unit.parent_id].level.value} does not enclose {unit.level.value}",
                records[unit.id],
            )
    return LocationHierarchy(units.values())


# (template id, level of the named unit, format over lineage names)
TEMPLATES: tuple[tuple[int, Level, str], ...] = (
    (1, Level.MUNICIPALITY, "{municipality}"),
    (2, Level.PROVINCE, "{province}"),
    (3, Level.MUNICIPALITY, "{municipality}, {province}"),
    (4, Level.PROVINCE, "{province}, {region}"),
    (5, Level.REGION, "{region}"),
    (6, Level.MUNICIPALITY, "{municipality}, {country}"),
    (7, Level.PROVINCE, "{province}, {country}"),
    (8, Level.REGION, "{region}, {country}"),
    (9, Level.MUNICIPALITY, "{municipality} de {country}"),
    (10, Level.PROVINCE, "{province} de {country}"),
    (11, Level.REGION, "{region} de {country}"),
    (12, Level.COUNTRY, "{country}"),
)


def expand_templates(h: LocationHierarchy) -> list[GeneratedName]:
    names = []
    for unit in sorted(h, key=lambda u: (u.level.rank, u.id)):
        lineage = {lvl.value: u.name for lvl, u in h.lineage(unit.id).items()}
        for template_id, level, fmt in TEMPLATES:
            if level is not unit.level:
                continue
            surface = normalize(fmt.format(**lineage))
            if surface:
                names.append(GeneratedName(surface, unit.id, template_id))
    return names


def load_aliases(source: Union[PathLike, Iterable[Mapping]], h: LocationHierarchy) -> list[GeneratedName]:
    """Manually curated ``surface,unit_id`` rows."""
    out = []
    for row in _read_rows(source):
        surface = normalize(str(row.get("surface", "")))
        unit_id = str(row.get("unit_id", "")).strip()
        if unit_id not in h:
            raise HierarchyError("alias targets unknown unit", row)
        if not surface:
            raise HierarchyError("empty alias surface", row)
        out.append(GeneratedName(surface, unit_id, None))
    return out


class NameIndex:
    """Exact-match lookup from normalized surfaces to hierarchy units."""

    def __init__(self, names: Iterable[GeneratedName], h: LocationHierarchy):
        self.hierarchy = h
        targets: dict[str, set[str]] = defaultdict(set)
        for name in names:
            if name.target_id not in h:
                raise HierarchyError(f"name {name.surface!r} targets unknown unit {name.target_id!r}")
            targets[name.surface].add(name.target_id)
        self._targets = {s: frozenset(ids) for s, ids in targets.items()}

    @classmethod
    def build(cls, h: LocationHierarchy, aliases: Optional[Iterable[GeneratedName]] = None) -> "NameIndex":
        names = expand_templates(h)
        if aliases:
            names.extend(aliases)
        return cls(names, h)

    def __len__(self) -> int:
        return len(self._targets)

    def __contains__(self, surface: object) -> bool:
        return surface in self._targets

    def targets(self, surface: str) -> frozenset[str]:
        return self._targets.get(normalize(surface), frozenset())

    def surfaces(self) -> list[str]:
        return sorted(self._targets)

    def is_ambiguous(self, surface: str) -> bool:
        return len(self.targets(surface)) > 1


def resolve(profile_text: Optional[str], names: NameIndex) -> Optional[ResolvedLocation]:
    """Resolve a self-reported profile location by whole-string match.

    Ambiguous surfaces (more than one distinct unit) and unknown ones
    resolve to None.
    """
    if not profile_text:
        return None
    ids = names.targets(profile_text)
    if len(ids) != 1:
        return None
    (unit_id,) = ids
    return ResolvedLocation(unit_id, names.hierarchy[unit_id].level)


def write_hierarchy_csv(h: LocationHierarchy, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["id", "name", "level", "parent_id"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(h.to_rows())
