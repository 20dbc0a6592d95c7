"""Class dictionaries, many-to-one aggregations between them, and
inter-legend binary relations.

A Legend is an ordered list of (code, acronym, name) entries; the order
is significant because it fixes the row/column order of every cross-tab
built over the legend. An AggregationMap coarsens one legend onto
another with a total, single-valued code mapping. A BinaryRelation is
the expert-selected subset of pairs (test code, reference code) that
count as agreement when scoring a cross-tab.

Relation and aggregation files identify classes by acronym; acronyms
are the stable public identifiers and are resolved to codes at load.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from ._util import iter_csv_rows
from .errors import ValidationError


class ClassDef(NamedTuple):
    code: int
    acronym: str
    name: str


@dataclass(frozen=True)
class Legend:
    """An ordered class dictionary for one categorical map."""

    id: str
    classes: tuple[ClassDef, ...]

    def __post_init__(self):
        if not self.classes:
            raise ValidationError(f"legend {self.id!r} is empty")
        object.__setattr__(self, "classes",
                           tuple(ClassDef(int(c), str(a), str(n))
                                 for c, a, n in self.classes))
        seen_codes: set[int] = set()
        seen_acronyms: set[str] = set()
        for entry in self.classes:
            if entry.code in seen_codes:
                raise ValidationError(
                    f"legend {self.id!r}: duplicate code {entry.code}")
            if entry.acronym in seen_acronyms:
                raise ValidationError(
                    f"legend {self.id!r}: duplicate acronym {entry.acronym!r}")
            seen_codes.add(entry.code)
            seen_acronyms.add(entry.acronym)

    def __len__(self) -> int:
        return len(self.classes)

    @cached_property
    def codes(self) -> tuple[int, ...]:
        return tuple(entry.code for entry in self.classes)

    @cached_property
    def acronyms(self) -> tuple[str, ...]:
        return tuple(entry.acronym for entry in self.classes)

    @cached_property
    def _code_index(self) -> Mapping[int, int]:
        return {entry.code: i for i, entry in enumerate(self.classes)}

    @cached_property
    def _acronym_index(self) -> Mapping[str, int]:
        return {entry.acronym: i for i, entry in enumerate(self.classes)}

    def index_of_code(self, code: int) -> int:
        try:
            return self._code_index[code]
        except KeyError:
            raise ValidationError(
                f"legend {self.id!r} has no code {code}") from None

    def index_of_acronym(self, acronym: str) -> int:
        try:
            return self._acronym_index[acronym]
        except KeyError:
            raise ValidationError(
                f"legend {self.id!r} has no acronym {acronym!r}") from None

    def code_of_acronym(self, acronym: str) -> int:
        return self.classes[self.index_of_acronym(acronym)].code

    def acronym_of_code(self, code: int) -> str:
        return self.classes[self.index_of_code(code)].acronym

    def __contains__(self, code: int) -> bool:
        return code in self._code_index


def load_legend(path, legend_id: str | None = None) -> Legend:
    """Load a legend CSV (`code,acronym,name`, header row required)."""
    path = Path(path)
    rows = list(iter_csv_rows(path))
    if not rows:
        raise ValidationError(f"{path}: empty legend file")
    header = [cell.strip().lower() for cell in rows[0]]
    if header[:3] != ["code", "acronym", "name"]:
        raise ValidationError(
            f"{path}: expected header 'code,acronym,name', got {rows[0]!r}")
    classes = []
    for row in rows[1:]:
        if len(row) < 3:
            raise ValidationError(f"{path}: short row {row!r}")
        try:
            code = int(row[0])
        except ValueError:
            raise ValidationError(
                f"{path}: non-integer code {row[0]!r}") from None
        classes.append(ClassDef(code, row[1].strip(), row[2].strip()))
    return Legend(legend_id or path.stem, tuple(classes))


@dataclass(frozen=True)
class AggregationMap:
    """A total, single-valued coarsening of `source` codes onto `target`."""

    source: Legend
    target: Legend
    mapping: Mapping[int, int] = field(hash=False)

    def __post_init__(self):
        object.__setattr__(self, "mapping", dict(self.mapping))
        missing = [c for c in self.source.codes if c not in self.mapping]
        if missing:
            raise ValidationError(
                f"aggregation {self.source.id!r} -> {self.target.id!r} is "
                f"not totally exhaustive: source codes {missing} uncovered")
        for code, target_code in self.mapping.items():
            if code not in self.source:
                raise ValidationError(
                    f"aggregation maps unknown source code {code}")
            if target_code not in self.target:
                raise ValidationError(
                    f"aggregation maps code {code} to unknown target "
                    f"code {target_code}")
        covered = set(self.mapping.values())
        unused = [c for c in self.target.codes if c not in covered]
        if unused:
            raise ValidationError(
                f"aggregation {self.source.id!r} -> {self.target.id!r}: "
                f"target codes {unused} have no preimage")

    def apply(self, code: int) -> int:
        return self.mapping[code]

    @cached_property
    def index_mapping(self) -> tuple[int, ...]:
        """source class index -> target class index, in legend order."""
        return tuple(self.target.index_of_code(self.mapping[c])
                     for c in self.source.codes)

    @classmethod
    def identity(cls, legend: Legend) -> "AggregationMap":
        return cls(legend, legend, {c: c for c in legend.codes})


def build_aggregation(source: Legend, target: Legend,
                      groups: Iterable[tuple[int, int]]) -> AggregationMap:
    """Build an AggregationMap from (source code, target code) pairs.

    The pairs must cover every source code exactly once: an uncovered
    code makes the grouping not totally exhaustive, a code assigned
    twice makes it not mutually exclusive.
    """
    mapping: dict[int, int] = {}
    for source_code, target_code in groups:
        if source_code not in source:
            raise ValidationError(
                f"aggregation group names unknown source code {source_code}")
        if source_code in mapping:
            raise ValidationError(
                f"aggregation groups are not mutually exclusive: source "
                f"code {source_code} assigned twice")
        mapping[source_code] = target_code
    uncovered = [c for c in source.codes if c not in mapping]
    if uncovered:
        raise ValidationError(
            f"aggregation groups are not totally exhaustive: source codes "
            f"{uncovered} uncovered")
    return AggregationMap(source, target, mapping)


def load_aggregation(path, source: Legend, target: Legend) -> AggregationMap:
    """Load an aggregation CSV (`source_acronym,target_acronym`)."""
    path = Path(path)
    rows = list(iter_csv_rows(path))
    if not rows:
        raise ValidationError(f"{path}: empty aggregation file")
    header = [cell.strip().lower() for cell in rows[0]]
    if header[:2] != ["source_acronym", "target_acronym"]:
        raise ValidationError(
            f"{path}: expected header 'source_acronym,target_acronym', "
            f"got {rows[0]!r}")
    groups = []
    for row in rows[1:]:
        if len(row) < 2:
            raise ValidationError(f"{path}: short row {row!r}")
        groups.append((source.code_of_acronym(row[0].strip()),
                       target.code_of_acronym(row[1].strip())))
    return build_aggregation(source, target, groups)


@dataclass(frozen=True)
class BinaryRelation:
    """The subset of test x reference code pairs scored as agreement."""

    test_legend: Legend
    reference_legend: Legend
    pairs: frozenset[tuple[int, int]]

    def __post_init__(self):
        object.__setattr__(self, "pairs",
                           frozenset((int(t), int(r)) for t, r in self.pairs))
        for test_code, ref_code in self.pairs:
            if test_code not in self.test_legend:
                raise ValidationError(
                    f"relation pair ({test_code}, {ref_code}): unknown "
                    f"test code {test_code}")
            if ref_code not in self.reference_legend:
                raise ValidationError(
                    f"relation pair ({test_code}, {ref_code}): unknown "
                    f"reference code {ref_code}")

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: tuple[int, int]) -> bool:
        return pair in self.pairs

    def sorted_pairs(self) -> list[tuple[int, int]]:
        """Pairs in (test legend order, reference legend order)."""
        return sorted(self.pairs,
                      key=lambda p: (self.test_legend.index_of_code(p[0]),
                                     self.reference_legend.index_of_code(p[1])))

    def index_pairs(self) -> list[tuple[int, int]]:
        """Pairs expressed as (test class index, reference class index)."""
        return [(self.test_legend.index_of_code(t),
                 self.reference_legend.index_of_code(r))
                for t, r in self.sorted_pairs()]

    @classmethod
    def full(cls, test_legend: Legend,
             reference_legend: Legend) -> "BinaryRelation":
        """The all-pairs relation (every cell counts as agreement)."""
        pairs = frozenset((t, r) for t in test_legend.codes
                          for r in reference_legend.codes)
        return cls(test_legend, reference_legend, pairs)

    @classmethod
    def identity(cls, legend: Legend) -> "BinaryRelation":
        """The diagonal relation of a map compared against itself."""
        return cls(legend, legend, frozenset((c, c) for c in legend.codes))


def load_relation(path, test_legend: Legend,
                  reference_legend: Legend) -> BinaryRelation:
    """Load a relation CSV (`test_acronym,reference_acronym`).

    Unknown acronyms and duplicate pairs are rejected.
    """
    path = Path(path)
    rows = list(iter_csv_rows(path))
    if not rows:
        raise ValidationError(f"{path}: empty relation file")
    header = [cell.strip().lower() for cell in rows[0]]
    if header[:2] != ["test_acronym", "reference_acronym"]:
        raise ValidationError(
            f"{path}: expected header 'test_acronym,reference_acronym', "
            f"got {rows[0]!r}")
    pairs: set[tuple[int, int]] = set()
    for row in rows[1:]:
        if len(row) < 2:
            raise ValidationError(f"{path}: short row {row!r}")
        pair = (test_legend.code_of_acronym(row[0].strip()),
                reference_legend.code_of_acronym(row[1].strip()))
        if pair in pairs:
            raise ValidationError(
                f"{path}: duplicate pair ({row[0].strip()}, {row[1].strip()})")
        pairs.add(pair)
    return BinaryRelation(test_legend, reference_legend, frozenset(pairs))


def push_relation(relation: BinaryRelation,
                  agg_test: AggregationMap | None = None,
                  agg_ref: AggregationMap | None = None) -> BinaryRelation:
    """Re-express a relation over aggregated legends.

    The output contains (a', b') iff some input pair (a, b) maps to it;
    duplicates collapse. Passing None on a side leaves that legend
    unchanged.
    """
    if agg_test is not None and agg_test.source != relation.test_legend:
        raise ValidationError(
            "push_relation: test aggregation source does not match the "
            "relation's test legend")
    if agg_ref is not None and agg_ref.source != relation.reference_legend:
        raise ValidationError(
            "push_relation: reference aggregation source does not match "
            "the relation's reference legend")
    map_test = agg_test.apply if agg_test is not None else (lambda c: c)
    map_ref = agg_ref.apply if agg_ref is not None else (lambda c: c)
    pairs = frozenset((map_test(t), map_ref(r)) for t, r in relation.pairs)
    return BinaryRelation(
        agg_test.target if agg_test is not None else relation.test_legend,
        agg_ref.target if agg_ref is not None else relation.reference_legend,
        pairs)
