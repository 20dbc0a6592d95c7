"""Thematic quality indicators derived from a CrossTab.

Everything here is a pure function over immutable inputs: overall
agreement guided by a binary relation, class-conditional probability
tables (with top-k match reports), association indices behind a
registry, per-class frequencies, temporal-consistency statistics over
a map time-series, and box-and-whisker summaries of conditional
probabilities across strata.

Overall agreement is computed wall-to-wall (every valid pixel), so its
sampling uncertainty is zero by construction; reports carry that as an
explicit +/-0 rather than omitting it.
"""

from __future__ import annotations

import importlib.util
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .crosstab import _CodeIndex, CrossTab
from .errors import ValidationError
from .legend import BinaryRelation, Legend
from .raster import DEFAULT_TILE_SIZE, CategoricalRaster, TileGrid, read_tile

DEFAULT_QUARTILE_RULE = "linear"  # numpy's interpolation between order stats


# -- overall agreement -------------------------------------------------

def _check_relation(ct: CrossTab, relation: BinaryRelation) -> None:
    if (relation.test_legend != ct.test_legend
            or relation.reference_legend != ct.reference_legend):
        raise ValidationError(
            "relation legends do not match the cross-tab legends")


def relation_mask(ct: CrossTab, relation: BinaryRelation) -> np.ndarray:
    """Boolean cell mask of the relation over the cross-tab's shape."""
    _check_relation(ct, relation)
    mask = np.zeros(ct.shape, dtype=bool)
    for i, j in relation.index_pairs():
        mask[i, j] = True
    return mask


def agreement_count(ct: CrossTab, relation: BinaryRelation) -> int:
    """Number of valid pixels falling in cells of the relation."""
    return int(ct.counts[relation_mask(ct, relation)].sum())


def overall_agreement(ct: CrossTab, relation: BinaryRelation) -> float:
    """Percentage of valid pixels in agreement cells (exact, +/-0)."""
    if ct.valid_total == 0:
        raise ValidationError("no valid pixels: overall agreement undefined")
    return 100.0 * agreement_count(ct, relation) / ct.valid_total


# -- conditional probabilities ------------------------------------------

@dataclass(frozen=True)
class ConditionalTable:
    """Cellwise conditional probabilities, column- or row-normalized.

    direction "given-reference": values[t, r] = p(t | r), each column
    sums to 1 unless its marginal is zero; "given-test": values[t, r]
    = p(r | t), rows sum to 1 likewise. Conditioning classes with a
    zero marginal are emitted as all-zero and listed in
    zero_marginals.
    """

    direction: str
    test_legend: Legend
    reference_legend: Legend
    values: np.ndarray = field(hash=False)
    zero_marginals: tuple[str, ...] = ()

    def __post_init__(self):
        if self.direction not in ("given-reference", "given-test"):
            raise ValidationError(
                f"unknown conditional direction {self.direction!r}")
        values = np.asarray(self.values, dtype=np.float64).copy()
        expected = (len(self.test_legend), len(self.reference_legend))
        if values.shape != expected:
            raise ValidationError(
                f"values shape {values.shape} does not match legends "
                f"{expected}")
        axis = 0 if self.direction == "given-reference" else 1
        sums = values.sum(axis=axis)
        labels = (self.reference_legend.acronyms if axis == 0
                  else self.test_legend.acronyms)
        for label, total in zip(labels, sums):
            expected_sum = 0.0 if label in self.zero_marginals else 1.0
            if abs(total - expected_sum) > 1e-9:
                raise ValidationError(
                    f"conditional column/row {label!r} sums to {total!r}, "
                    f"expected {expected_sum}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def conditioning_legend(self) -> Legend:
        return (self.reference_legend if self.direction == "given-reference"
                else self.test_legend)

    @property
    def partner_legend(self) -> Legend:
        return (self.test_legend if self.direction == "given-reference"
                else self.reference_legend)

    def column(self, acronym: str) -> np.ndarray:
        """Probability vector of one conditioning class, partner order."""
        if self.direction == "given-reference":
            return self.values[:, self.reference_legend.index_of_acronym(acronym)]
        return self.values[self.test_legend.index_of_acronym(acronym), :]


def _conditional(ct: CrossTab, axis: int, direction: str) -> ConditionalTable:
    counts = ct.counts.astype(np.float64)
    margins = counts.sum(axis=axis)
    safe = np.where(margins == 0, 1.0, margins)
    if axis == 0:
        values = counts / safe[np.newaxis, :]
        flagged = tuple(a for a, m in
                        zip(ct.reference_legend.acronyms, margins) if m == 0)
    else:
        values = counts / safe[:, np.newaxis]
        flagged = tuple(a for a, m in
                        zip(ct.test_legend.acronyms, margins) if m == 0)
    return ConditionalTable(direction, ct.test_legend, ct.reference_legend,
                            values, flagged)


def conditional_given_reference(ct: CrossTab) -> ConditionalTable:
    """p(test class | reference class): column-normalized counts."""
    return _conditional(ct, axis=0, direction="given-reference")


def conditional_given_test(ct: CrossTab) -> ConditionalTable:
    """p(reference class | test class): row-normalized counts."""
    return _conditional(ct, axis=1, direction="given-test")


def top_k_matches(cond: ConditionalTable,
                  k: int) -> dict[str, list[tuple[str, float]]]:
    """Per conditioning class, the k best-matching partner classes.

    Ties break by partner legend order, so the report is
    deterministic. Keys follow conditioning legend order.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    partners = cond.partner_legend.acronyms
    result: dict[str, list[tuple[str, float]]] = {}
    for acronym in cond.conditioning_legend.acronyms:
        probs = cond.column(acronym)
        order = sorted(range(len(partners)), key=lambda i: (-probs[i], i))
        result[acronym] = [(partners[i], float(probs[i]))
                           for i in order[:k]]
    return result


# -- association indices -------------------------------------------------

@dataclass(frozen=True)
class AssociationResult:
    method: str
    value: float

    def __post_init__(self):
        if not -1e-9 <= self.value <= 1 + 1e-9:
            raise ValidationError(
                f"association value {self.value} outside [0, 1]")
        object.__setattr__(self, "value",
                           float(min(1.0, max(0.0, self.value))))


def _cramers_v(ct: CrossTab, relation: BinaryRelation) -> float:
    """Bias-uncorrected Cramer's V over the counts.

    Relation-independent by definition. This is NOT the CVPAI2 index:
    that formula is not published here and must be supplied through
    the "cvpai2-plugin" method.
    """
    counts = ct.counts.astype(np.float64)
    counts = counts[counts.sum(axis=1) > 0][:, counts.sum(axis=0) > 0]
    n = counts.sum()
    if n == 0:
        raise ValidationError("no valid pixels: association undefined")
    r, c = counts.shape
    if min(r, c) < 2:
        # a single occupied row or column carries no measurable association
        return 0.0
    expected = np.outer(counts.sum(axis=1), counts.sum(axis=0)) / n
    chi2 = ((counts - expected) ** 2 / expected).sum()
    return math.sqrt(max(chi2 / n / min(r - 1, c - 1), 0.0))


def _load_cvpai2(definition_path) -> "callable":
    spec = importlib.util.spec_from_file_location(
        "maptally_cvpai2_definition", definition_path)
    if spec is None or spec.loader is None:
        raise ValidationError(
            f"cannot load cvpai2 definition from {definition_path}")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    formula = getattr(module, "cvpai2", None)
    if not callable(formula):
        raise ValidationError(
            f"{definition_path}: definition file must define a callable "
            f"'cvpai2(counts, relation_mask)'")
    return formula


ASSOCIATION_METHODS = ("cramers-v", "cvpai2-plugin")


def association_index(ct: CrossTab, relation: BinaryRelation, method: str,
                      definition_path=None) -> AssociationResult:
    """Compute a registered association index over the cross-tab.

    "cramers-v" is always available. "cvpai2-plugin" is a slot for an
    externally supplied formula; without a definition file it errors
    rather than returning a counterfeit value. The result records the
    method identity.
    """
    _check_relation(ct, relation)
    if method == "cramers-v":
        return AssociationResult(method, _cramers_v(ct, relation))
    if method == "cvpai2-plugin":
        if definition_path is None:
            raise ValidationError(
                "method 'cvpai2-plugin' requires a definition file "
                "supplying the formula; none was given")
        formula = _load_cvpai2(definition_path)
        value = float(formula(ct.counts.copy(),
                              relation_mask(ct, relation)))
        return AssociationResult(method, value)
    raise ValidationError(
        f"unknown association method {method!r}; "
        f"registered: {ASSOCIATION_METHODS}")


def semantic_gap(result: AssociationResult) -> float:
    """1 - association value: how much the relation fails to bind."""
    return 1.0 - result.value


# -- class frequencies ----------------------------------------------------

def class_frequencies(source, axis: str = "test",
                      tile_size: int = DEFAULT_TILE_SIZE) -> dict[str, float]:
    """Per-class proportions over valid pixels, summing to 1.

    `source` is a CrossTab (axis "test" uses row margins, "reference"
    column margins) or a CategoricalRaster (streamed tile by tile,
    nodata excluded).
    """
    if isinstance(source, CrossTab):
        if source.valid_total == 0:
            raise ValidationError("no valid pixels")
        if axis == "test":
            legend, margins = source.test_legend, source.row_margins()
        elif axis == "reference":
            legend, margins = source.reference_legend, source.col_margins()
        else:
            raise ValidationError(f"unknown axis {axis!r}")
        return {a: int(m) / source.valid_total
                for a, m in zip(legend.acronyms, margins)}
    if isinstance(source, CategoricalRaster):
        return _raster_frequencies(source, tile_size)
    raise ValidationError(
        f"class_frequencies expects a CrossTab or CategoricalRaster, "
        f"got {type(source).__name__}")


def _raster_frequencies(raster: CategoricalRaster,
                        tile_size: int) -> dict[str, float]:
    index = _CodeIndex(raster.legend, raster.nodata_code)
    grid = TileGrid.for_raster(raster, tile_size)
    tallies = np.zeros(len(raster.legend), dtype=np.int64)
    for idx in grid.indices():
        tile = read_tile(raster, grid, idx, validate=False)
        codes, lut = index.prepare(tile.data)
        mapped = lut.take(codes, mode="clip")
        bad = np.flatnonzero(mapped == -1)
        if bad.size:
            raise ValidationError(
                f"pixel code {int(tile.data.ravel()[bad[0]])} absent from "
                f"legend {raster.legend.id!r} and not nodata")
        valid = mapped >= 0
        tallies += np.bincount(mapped[valid], minlength=tallies.size)
    total = int(tallies.sum())
    if total == 0:
        raise ValidationError("no valid pixels")
    return {a: int(t) / total
            for a, t in zip(raster.legend.acronyms, tallies)}


# -- temporal consistency --------------------------------------------------

@dataclass(frozen=True)
class TemporalRow:
    label: str
    series: tuple[float, ...]
    mean: float
    std: float
    is_group: bool = False


@dataclass(frozen=True)
class TemporalStats:
    epochs: int
    rows: tuple[TemporalRow, ...]

    def by_label(self) -> dict[str, TemporalRow]:
        return {row.label: row for row in self.rows}


def temporal_consistency(series: Sequence[Sequence[float]],
                         labels: Sequence[str],
                         groups: Mapping[str, Iterable[str]] | None = None,
                         ) -> TemporalStats:
    """Per-class mean and sample (n-1) standard deviation across epochs.

    `series` holds one per-class frequency vector per epoch, aligned
    to `labels`. Group rows sum the member classes per epoch first,
    then summarize the summed series, so a group's std reflects the
    group total's stability rather than the sum of member stds.
    """
    matrix = np.asarray(series, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValidationError("temporal statistics need at least two epochs")
    if matrix.shape[1] != len(labels):
        raise ValidationError(
            f"legend mismatch: epochs carry {matrix.shape[1]} classes, "
            f"labels name {len(labels)}")
    label_index = {label: i for i, label in enumerate(labels)}
    if len(label_index) != len(labels):
        raise ValidationError("duplicate class label")

    def summarize(label: str, values: np.ndarray,
                  is_group: bool) -> TemporalRow:
        return TemporalRow(label, tuple(float(v) for v in values),
                           float(values.mean()),
                           float(values.std(ddof=1)), is_group)

    rows = [summarize(label, matrix[:, i], False)
            for i, label in enumerate(labels)]
    for name, members in (groups or {}).items():
        try:
            cols = [label_index[m] for m in members]
        except KeyError as exc:
            raise ValidationError(
                f"group {name!r} names unknown class {exc.args[0]!r}"
            ) from None
        rows.append(summarize(name, matrix[:, cols].sum(axis=1), True))
    return TemporalStats(matrix.shape[0], tuple(rows))


# -- boxplot summaries -------------------------------------------------------

@dataclass(frozen=True)
class BoxplotSummary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    lower_whisker: float
    upper_whisker: float
    outliers: tuple[float, ...]
    quartile_rule: str = DEFAULT_QUARTILE_RULE

    def __post_init__(self):
        ordered = (self.min, self.lower_whisker, self.q1, self.median,
                   self.q3, self.upper_whisker, self.max)
        for a, b in zip(ordered, ordered[1:]):
            if a > b + 1e-12:
                raise ValidationError(
                    f"boxplot summary out of order: {ordered}")


def boxplot_summary(values,
                    quartile_rule: str = DEFAULT_QUARTILE_RULE,
                    ) -> BoxplotSummary:
    """Five-number summary with 1.5*IQR whiskers.

    Whiskers stop at the data extreme or the 1.5*IQR fence, whichever
    comes first; points beyond the fences are listed as outliers. The
    quartile interpolation rule is numpy's `method` name and is
    recorded on the summary so reports can state it.
    """
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ValidationError("boxplot of an empty value set")
    try:
        q1, median, q3 = (float(q) for q in
                          np.quantile(data, (0.25, 0.5, 0.75),
                                      method=quartile_rule))
    except (TypeError, ValueError) as exc:
        raise ValidationError(
            f"unknown quartile rule {quartile_rule!r}: {exc}") from None
    iqr = q3 - q1
    low_fence = q1 - 1.5 * iqr
    high_fence = q3 + 1.5 * iqr
    inliers = data[(data >= low_fence) & (data <= high_fence)]
    if inliers.size:
        lower_whisker, upper_whisker = float(inliers.min()), float(inliers.max())
    else:  # degenerate: every point beyond a fence; pin whiskers to the box
        lower_whisker, upper_whisker = q1, q3
    outliers = tuple(float(v) for v in
                     np.sort(data[(data < low_fence) | (data > high_fence)]))
    return BoxplotSummary(float(data.min()), q1, median, q3,
                          float(data.max()), lower_whisker, upper_whisker,
                          outliers, quartile_rule)


@dataclass(frozen=True)
class StratumBoxplots:
    """Distribution of p(test class | reference class) across strata."""

    reference_acronym: str
    per_class: Mapping[str, BoxplotSummary]
    used_strata: tuple[int, ...]
    skipped_strata: tuple[int, ...]
    quartile_rule: str


def stratum_boxplots(per_stratum: Mapping[int, CrossTab],
                     reference_class,
                     quartile_rule: str = DEFAULT_QUARTILE_RULE,
                     ) -> StratumBoxplots:
    """Summarize conditional probabilities per test class across strata.

    `reference_class` is a code or acronym of the reference legend.
    Strata whose marginal for that class is zero cannot condition on
    it; they are skipped and reported in skipped_strata.
    """
    if not per_stratum:
        raise ValidationError("no strata given")
    tables = list(per_stratum.values())
    first = tables[0]
    for ct in tables[1:]:
        if (ct.test_legend != first.test_legend
                or ct.reference_legend != first.reference_legend):
            raise ValidationError("strata cross-tabs mix legends")
    legend = first.reference_legend
    if isinstance(reference_class, str):
        ref_idx = legend.index_of_acronym(reference_class)
    else:
        ref_idx = legend.index_of_code(reference_class)
    acronym = legend.acronyms[ref_idx]

    used: list[int] = []
    skipped: list[int] = []
    samples: list[np.ndarray] = []
    for code, ct in per_stratum.items():
        margin = int(ct.counts[:, ref_idx].sum())
        if margin == 0:
            skipped.append(code)
            continue
        used.append(code)
        samples.append(ct.counts[:, ref_idx] / margin)
    per_class = {}
    if samples:
        stacked = np.vstack(samples)  # strata x test classes
        for i, test_acr in enumerate(first.test_legend.acronyms):
            per_class[test_acr] = boxplot_summary(stacked[:, i],
                                                  quartile_rule)
    return StratumBoxplots(acronym, per_class, tuple(used), tuple(skipped),
                           quartile_rule)
