"""Cross-tabulation of co-registered categorical map pairs.

The central product is a CrossTab: a dense test x reference count
matrix over two legends (row/column order fixed by legend order),
together with the valid-pixel total and the count of pixels excluded
because either map held nodata. It generalizes the confusion matrix to
maps whose legends differ.

Construction streams tile pairs through a TallyAccumulator, a merge
monoid: tallies may be built per tile (or per thread) in any grouping
and merged, and the result is independent of tile size and processing
order. Counts are 64-bit integers throughout; proportions are derived
only at reporting time.

Stratified mode keys tallies by the code of a third raster (the
stratum mask). Valid map pixels whose stratum is nodata are tracked in
a separate nodata-stratum tally, so that the per-stratum tables plus
that tally always merge to the unstratified total, cellwise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Mapping

import numpy as np

from . import _kernels
from ._util import format_percent, read_labeled_matrix, write_labeled_matrix
from .errors import ValidationError
from .legend import AggregationMap, Legend
from .raster import (DEFAULT_TILE_SIZE, CategoricalRaster, Tile, TileGrid,
                     read_tile, validate_alignment)

_LUT_CODE_LIMIT = 1 << 20  # direct-LUT ceiling; larger codes use searchsorted


class _CodeIndex:
    """Maps raw code arrays to kernel inputs (codes plus class-index LUT).

    LUT entries: class index, -1 outside the legend, -2 nodata. A
    trailing -1 sentinel makes clip-mode lookups safe for any code.
    Legends whose codes exceed the direct-LUT ceiling go through a
    searchsorted pre-pass that rewrites codes as shifted indices.
    """

    def __init__(self, legend: Legend, nodata_code: int):
        if nodata_code in legend:
            raise ValidationError(
                f"nodata code {nodata_code} collides with a code of "
                f"legend {legend.id!r}")
        self.legend = legend
        self.nodata_code = int(nodata_code)
        codes = np.asarray(legend.codes, dtype=np.int64)
        top = max(int(codes.max()), self.nodata_code)
        if top < _LUT_CODE_LIMIT:
            lut = np.full(top + 2, -1, dtype=np.int32)
            lut[codes] = np.arange(len(codes), dtype=np.int32)
            lut[self.nodata_code] = -2
            self._lut = lut
            self._sorted_codes = None
        else:
            order = np.argsort(codes, kind="stable")
            self._sorted_codes = codes[order]
            self._order = order.astype(np.int64)
            # shifted-index LUT: slot 0 = nodata, slot 1 = invalid
            self._lut = np.concatenate(
                [np.array([-2, -1], dtype=np.int32),
                 np.arange(len(codes), dtype=np.int32)])

    def prepare(self, data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flat = data.ravel()
        if self._sorted_codes is None:
            return flat, self._lut
        pos = np.searchsorted(self._sorted_codes, flat)
        pos_c = np.minimum(pos, self._sorted_codes.size - 1)
        found = self._sorted_codes[pos_c] == flat
        idx = np.where(found, self._order[pos_c], np.int64(-1))
        idx[flat == np.uint64(self.nodata_code)] = -2
        return (idx + 2).astype(np.uint32), self._lut


def _raise_bad_codes(bad_test: int, bad_ref: int, bad_strat: int,
                     acc: "TallyAccumulator") -> None:
    if bad_strat >= 0:
        raise ValidationError(
            f"stratum code {bad_strat} absent from legend "
            f"{acc.strata_legend.id!r} and not nodata")
    if bad_test >= 0:
        raise ValidationError(
            f"test map code {bad_test} absent from legend "
            f"{acc.test_legend.id!r} and not nodata")
    if bad_ref >= 0:
        raise ValidationError(
            f"reference map code {bad_ref} absent from legend "
            f"{acc.reference_legend.id!r} and not nodata")


class TallyAccumulator:
    """Mergeable tally: commutative, associative, zero() as identity."""

    def __init__(self, *, test_legend: Legend, reference_legend: Legend,
                 test_nodata: int, ref_nodata: int,
                 strata_legend: Legend | None = None,
                 strata_nodata: int | None = None,
                 counts: np.ndarray | None = None,
                 valid=None, excluded=None):
        self.test_legend = test_legend
        self.reference_legend = reference_legend
        self.test_nodata = int(test_nodata)
        self.ref_nodata = int(ref_nodata)
        self.strata_legend = strata_legend
        self.strata_nodata = (None if strata_legend is None
                              else int(strata_nodata if strata_nodata
                                       is not None else 0))
        tc, rc = len(test_legend), len(reference_legend)
        if strata_legend is None:
            shape = (tc, rc)
            self.counts = (np.zeros(shape, dtype=np.int64) if counts is None
                           else np.asarray(counts, dtype=np.int64).copy())
            self.valid = int(valid or 0)
            self.excluded = int(excluded or 0)
        else:
            buckets = len(strata_legend) + 1  # trailing nodata-stratum bucket
            shape = (buckets, tc, rc)
            self.counts = (np.zeros(shape, dtype=np.int64) if counts is None
                           else np.asarray(counts, dtype=np.int64).copy())
            self.valid = (np.zeros(buckets, dtype=np.int64) if valid is None
                          else np.asarray(valid, dtype=np.int64).copy())
            self.excluded = (np.zeros(buckets, dtype=np.int64)
                             if excluded is None
                             else np.asarray(excluded, dtype=np.int64).copy())
        if self.counts.shape != shape:
            raise ValidationError(
                f"accumulator counts shape {self.counts.shape} does not "
                f"match legends {shape}")
        self._idx_test = _CodeIndex(test_legend, self.test_nodata)
        self._idx_ref = _CodeIndex(reference_legend, self.ref_nodata)
        self._idx_strat = (None if strata_legend is None
                           else _CodeIndex(strata_legend, self.strata_nodata))

    @classmethod
    def zero(cls, test_legend: Legend, reference_legend: Legend, *,
             test_nodata: int = 0, ref_nodata: int = 0,
             strata_legend: Legend | None = None,
             strata_nodata: int = 0) -> "TallyAccumulator":
        return cls(test_legend=test_legend, reference_legend=reference_legend,
                   test_nodata=test_nodata, ref_nodata=ref_nodata,
                   strata_legend=strata_legend, strata_nodata=strata_nodata)

    @property
    def stratified(self) -> bool:
        return self.strata_legend is not None

    def same_keying(self, other: "TallyAccumulator") -> bool:
        return (self.test_legend == other.test_legend
                and self.reference_legend == other.reference_legend
                and self.test_nodata == other.test_nodata
                and self.ref_nodata == other.ref_nodata
                and self.strata_legend == other.strata_legend
                and self.strata_nodata == other.strata_nodata)

    def to_crosstab(self) -> "CrossTab":
        if self.stratified:
            raise ValidationError(
                "stratified accumulator: use to_stratified()")
        return CrossTab(self.test_legend, self.reference_legend,
                        self.counts, self.valid, self.excluded)

    def to_stratified(self) -> "StratifiedCrossTab":
        if not self.stratified:
            raise ValidationError("accumulator carries no strata")
        per_stratum = {}
        for i, code in enumerate(self.strata_legend.codes):
            per_stratum[code] = CrossTab(
                self.test_legend, self.reference_legend, self.counts[i],
                int(self.valid[i]), int(self.excluded[i]))
        nodata_ct = CrossTab(self.test_legend, self.reference_legend,
                             self.counts[-1], int(self.valid[-1]),
                             int(self.excluded[-1]))
        total = CrossTab(self.test_legend, self.reference_legend,
                         self.counts.sum(axis=0), int(self.valid.sum()),
                         int(self.excluded.sum()))
        return StratifiedCrossTab(self.strata_legend, per_stratum,
                                  nodata_ct, total)


def tally_tile(tile_test: Tile, tile_ref: Tile, tile_stratum: Tile | None,
               acc: TallyAccumulator) -> TallyAccumulator:
    """Tally one tile pair (plus optional stratum tile) into acc, in place.

    The tiles must cover the identical pixel window. Codes outside
    their legends (other than nodata) abort with the offending code.
    """
    windows = [tile_test, tile_ref]
    if acc.stratified:
        if tile_stratum is None:
            raise ValidationError(
                "stratified accumulator requires a stratum tile")
        windows.append(tile_stratum)
    elif tile_stratum is not None:
        raise ValidationError(
            "stratum tile given but accumulator carries no strata")
    for other in windows[1:]:
        if (other.origin_x != tile_test.origin_x
                or other.origin_y != tile_test.origin_y
                or other.data.shape != tile_test.data.shape):
            raise ValidationError(
                f"window mismatch: {other.data.shape} at "
                f"({other.origin_x}, {other.origin_y}) vs "
                f"{tile_test.data.shape} at "
                f"({tile_test.origin_x}, {tile_test.origin_y})")

    test_codes, lut_t = acc._idx_test.prepare(tile_test.data)
    ref_codes, lut_r = acc._idx_ref.prepare(tile_ref.data)
    if not acc.stratified:
        valid, excluded, bad_t, bad_r = _kernels.tally_flat(
            test_codes, ref_codes, lut_t, lut_r, acc.counts)
        _raise_bad_codes(bad_t, bad_r, -1, acc)
        acc.valid += valid
        acc.excluded += excluded
    else:
        strat_codes, lut_s = acc._idx_strat.prepare(tile_stratum.data)
        bad_t, bad_r, bad_s = _kernels.tally_stratified(
            test_codes, ref_codes, strat_codes, lut_t, lut_r, lut_s,
            acc.counts, acc.valid, acc.excluded)
        _raise_bad_codes(bad_t, bad_r, bad_s, acc)
    return acc


def merge(a: TallyAccumulator, b: TallyAccumulator) -> TallyAccumulator:
    """Elementwise sum of two accumulators with identical keying."""
    if not a.same_keying(b):
        raise ValidationError(
            "cannot merge accumulators with different legends, nodata "
            "codes or stratum keying")
    if a.counts.shape != b.counts.shape:
        raise ValidationError(
            f"shape mismatch: {a.counts.shape} vs {b.counts.shape}")
    merged = TallyAccumulator(
        test_legend=a.test_legend, reference_legend=a.reference_legend,
        test_nodata=a.test_nodata, ref_nodata=a.ref_nodata,
        strata_legend=a.strata_legend, strata_nodata=a.strata_nodata,
        counts=a.counts + b.counts,
        valid=a.valid + b.valid, excluded=a.excluded + b.excluded)
    return merged


@dataclass(frozen=True)
class CrossTab:
    """Dense test x reference count matrix over two legends."""

    test_legend: Legend
    reference_legend: Legend
    counts: np.ndarray = field(hash=False)
    valid_total: int
    excluded_total: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).copy()
        expected = (len(self.test_legend), len(self.reference_legend))
        if counts.shape != expected:
            raise ValidationError(
                f"counts shape {counts.shape} does not match legends "
                f"{expected}")
        if counts.min(initial=0) < 0:
            raise ValidationError("negative count")
        if int(counts.sum()) != int(self.valid_total):
            raise ValidationError(
                f"counts sum {int(counts.sum())} != valid_total "
                f"{self.valid_total}")
        if self.excluded_total < 0:
            raise ValidationError("negative excluded_total")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "valid_total", int(self.valid_total))
        object.__setattr__(self, "excluded_total", int(self.excluded_total))

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def proportions(self) -> np.ndarray:
        """counts / valid_total; all zeros when there are no valid pixels."""
        if self.valid_total == 0:
            return np.zeros(self.shape, dtype=np.float64)
        return self.counts / self.valid_total

    def percentages(self) -> np.ndarray:
        return self.proportions() * 100.0

    def row_margins(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_margins(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @classmethod
    def from_percentages(cls, test_legend: Legend, reference_legend: Legend,
                         cells_pct, unit: int = 100) -> "CrossTab":
        """Build integer counts from a percentage matrix.

        Each percent is turned into round(pct * unit) counts; the
        default unit of 100 resolves one count per hundredth of a
        percent. valid_total is the resulting sum, so printed tables
        whose cells do not total exactly 100 stay internally
        consistent (the discrepancy moves into the margins).
        """
        cells = np.asarray(cells_pct, dtype=np.float64)
        if (cells < 0).any():
            raise ValidationError("negative percentage cell")
        counts = np.rint(cells * unit).astype(np.int64)
        return cls(test_legend, reference_legend, counts,
                   int(counts.sum()), 0)


@dataclass(frozen=True)
class StratumSet:
    """A stratum mask raster plus the legend naming its strata."""

    strata_raster: CategoricalRaster
    strata_legend: Legend | None = None

    def __post_init__(self):
        if self.strata_legend is None:
            object.__setattr__(self, "strata_legend",
                               self.strata_raster.legend)
        elif self.strata_legend != self.strata_raster.legend:
            raise ValidationError(
                "strata legend does not match the strata raster's legend")


@dataclass(frozen=True)
class StratifiedCrossTab:
    """Per-stratum tables, the nodata-stratum table, and their total."""

    strata_legend: Legend
    per_stratum: Mapping[int, CrossTab]
    nodata_stratum: CrossTab
    total: CrossTab


def crosstab_streamed(test: CategoricalRaster, ref: CategoricalRaster,
                      strata: StratumSet | None = None, *,
                      tile_size=DEFAULT_TILE_SIZE, threads: int = 1):
    """Cross-tabulate two rasters in one linear pass over their tiles.

    Returns a CrossTab, or a StratifiedCrossTab when strata are given.
    The result is independent of tile size and processing order.
    tile_size may be an int (square tiles) or a (width, height) pair.
    With threads > 1, tiles are tallied into thread-private
    accumulators (the numba kernels release the GIL) and merged.
    """
    report = validate_alignment(test, ref)
    if not report.same_dimensions:
        raise ValidationError(f"alignment failure: {report.notes}")
    if strata is not None:
        sreport = validate_alignment(test, strata.strata_raster)
        if not sreport.same_dimensions:
            raise ValidationError(
                f"alignment failure (strata): {sreport.notes}")

    if isinstance(tile_size, int):
        tile_w = tile_h = tile_size
    else:
        tile_w, tile_h = tile_size
    grid = TileGrid.for_raster(test, tile_w, tile_h)

    def make_zero() -> TallyAccumulator:
        return TallyAccumulator.zero(
            test.legend, ref.legend,
            test_nodata=test.nodata_code, ref_nodata=ref.nodata_code,
            strata_legend=None if strata is None else strata.strata_legend,
            strata_nodata=(0 if strata is None
                           else strata.strata_raster.nodata_code))

    def tally_range(indices) -> TallyAccumulator:
        acc = make_zero()
        for idx in indices:
            tile_t = read_tile(test, grid, idx, validate=False)
            tile_r = read_tile(ref, grid, idx, validate=False)
            tile_s = (read_tile(strata.strata_raster, grid, idx,
                                validate=False)
                      if strata is not None else None)
            tally_tile(tile_t, tile_r, tile_s, acc)
        return acc

    indices = list(grid.indices())
    if threads <= 1 or len(indices) < 2:
        acc = tally_range(indices)
    else:
        workers = min(threads, len(indices))
        chunks = [indices[i::workers] for i in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(tally_range, chunks))
        acc = parts[0]
        for part in parts[1:]:
            acc = merge(acc, part)

    return acc.to_stratified() if strata is not None else acc.to_crosstab()


def aggregate_crosstab(ct: CrossTab,
                       agg_rows: AggregationMap | None = None,
                       agg_cols: AggregationMap | None = None) -> CrossTab:
    """Sum counts over aggregation preimages; valid_total is unchanged.

    Pure integer arithmetic, so mass is conserved exactly.
    """
    counts = ct.counts
    test_legend = ct.test_legend
    reference_legend = ct.reference_legend
    if agg_rows is not None:
        if agg_rows.source != ct.test_legend:
            raise ValidationError(
                "row aggregation source does not match the cross-tab's "
                "test legend")
        out = np.zeros((len(agg_rows.target), counts.shape[1]),
                       dtype=np.int64)
        for src_idx, dst_idx in enumerate(agg_rows.index_mapping):
            out[dst_idx] += counts[src_idx]
        counts = out
        test_legend = agg_rows.target
    if agg_cols is not None:
        if agg_cols.source != ct.reference_legend:
            raise ValidationError(
                "column aggregation source does not match the cross-tab's "
                "reference legend")
        out = np.zeros((counts.shape[0], len(agg_cols.target)),
                       dtype=np.int64)
        for src_idx, dst_idx in enumerate(agg_cols.index_mapping):
            out[:, dst_idx] += counts[:, src_idx]
        counts = out
        reference_legend = agg_cols.target
    return CrossTab(test_legend, reference_legend, counts,
                    ct.valid_total, ct.excluded_total)


def write_crosstab_csv(ct: CrossTab, path, percent: bool = False) -> Path:
    """Serialize a CrossTab: reference acronyms across, test acronyms down.

    Cells are integer counts, or with percent=True proportions as
    2-decimal half-up percentages of the valid total.
    """
    path = Path(path)
    if percent:
        total = ct.valid_total
        rows = [[format_percent(Decimal(100 * int(c)) / total if total
                               else Decimal(0)) for c in row]
                for row in ct.counts]
    else:
        rows = [[int(c) for c in row] for row in ct.counts]
    write_labeled_matrix(path, ct.test_legend.acronyms,
                         ct.reference_legend.acronyms, rows)
    return path


def load_crosstab_csv(path, test_legend: Legend,
                      reference_legend: Legend) -> CrossTab:
    """Read a cross-tab CSV back into a CrossTab.

    Rows and columns may appear in any order but must cover the
    legends exactly. Integer cells are taken as counts; fractional
    cells are taken as percentages and ingested at a resolution of
    0.01% per count (see CrossTab.from_percentages). The excluded
    total is not part of this layout and loads as 0.
    """
    row_labels, col_labels, cells = read_labeled_matrix(path)
    if sorted(row_labels) != sorted(test_legend.acronyms):
        raise ValidationError(
            f"{path}: row labels do not match legend "
            f"{test_legend.id!r} acronyms")
    if sorted(col_labels) != sorted(reference_legend.acronyms):
        raise ValidationError(
            f"{path}: column labels do not match legend "
            f"{reference_legend.id!r} acronyms")
    row_order = [row_labels.index(a) for a in test_legend.acronyms]
    col_order = [col_labels.index(a) for a in reference_legend.acronyms]
    cells = cells[np.ix_(row_order, col_order)]
    if (cells < 0).any():
        raise ValidationError(f"{path}: negative cell")
    if np.array_equal(cells, np.rint(cells)):
        counts = cells.astype(np.int64)
        return CrossTab(test_legend, reference_legend, counts,
                        int(counts.sum()), 0)
    return CrossTab.from_percentages(test_legend, reference_legend, cells)
