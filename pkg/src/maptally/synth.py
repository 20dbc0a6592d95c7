"""Synthetic map pairs with known joint distributions, plus the
brute-force oracle the streaming cross-tab is verified against.

Cell counts are apportioned from the joint proportions by the
largest-remainder method, so a generated pair realizes its target
table exactly rather than in expectation; only the spatial placement
of the pixels is random. All randomness flows through one 64-bit
seeded PCG64 generator (algorithm id recorded in outputs), so fixtures
regenerate identically across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import read_key_values, read_labeled_matrix, write_labeled_matrix
from .crosstab import CrossTab
from .errors import ValidationError
from .legend import Legend
from .raster import CategoricalRaster, from_array

RNG_ALGORITHM = "pcg64"


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def free_code(legend: Legend) -> int:
    """A code outside the legend, usable as nodata (0 when free)."""
    return 0 if 0 not in legend else max(legend.codes) + 1


def largest_remainder(weights, total: int) -> np.ndarray:
    """Apportion `total` integer units proportionally to `weights`.

    Floors the exact quotas, then hands the leftover units to the
    cells with the largest fractional parts; ties break by cell index.
    The result always sums to `total` exactly.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if (weights < 0).any():
        raise ValidationError("negative weight")
    total = int(total)
    if total < 0:
        raise ValidationError("negative total")
    mass = weights.sum()
    if mass == 0:
        if total:
            raise ValidationError("cannot apportion units to zero weights")
        return np.zeros(weights.shape, dtype=np.int64)
    quotas = weights * (total / mass)
    base = np.floor(quotas).astype(np.int64)
    leftover = total - int(base.sum())
    if leftover:
        fractions = quotas - base
        by_largest = np.argsort(-fractions, kind="stable")
        base[by_largest[:leftover]] += 1
    return base


@dataclass(frozen=True)
class JointSpec:
    """A target joint distribution for a synthetic map pair."""

    test_legend: Legend
    reference_legend: Legend
    joint: np.ndarray = field(hash=False)
    total_pixels: int = 0
    seed: int = 0

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=np.float64).copy()
        expected = (len(self.test_legend), len(self.reference_legend))
        if joint.shape != expected:
            raise ValidationError(
                f"joint shape {joint.shape} does not match legends "
                f"{expected}")
        if (joint < 0).any():
            raise ValidationError("negative joint proportion")
        if abs(joint.sum() - 1.0) > 1e-12:
            raise ValidationError(
                f"joint proportions sum to {joint.sum()!r}, not 1")
        if self.total_pixels < 1:
            raise ValidationError("total_pixels must be positive")
        joint.flags.writeable = False
        object.__setattr__(self, "joint", joint)
        object.__setattr__(self, "total_pixels", int(self.total_pixels))
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_matrix(cls, test_legend: Legend, reference_legend: Legend,
                    cells, total_pixels: int, seed: int,
                    normalize: bool = False) -> "JointSpec":
        """Build a spec from a proportion matrix.

        With normalize=True the cells are divided by their sum first,
        which is how percentage tables (summing to about 100) and
        printed tables with accumulated rounding (e.g. 99.91) are
        ingested.
        """
        cells = np.asarray(cells, dtype=np.float64)
        if normalize:
            mass = cells.sum()
            if mass <= 0:
                raise ValidationError("cannot normalize an all-zero matrix")
            cells = cells / mass
        return cls(test_legend, reference_legend, cells, total_pixels, seed)

    def save(self, path, sidecar_path=None) -> tuple[Path, Path]:
        """Write the joint matrix CSV and its key-value sidecar."""
        path = Path(path)
        sidecar = (Path(sidecar_path) if sidecar_path is not None
                   else Path(str(path) + ".meta"))
        write_labeled_matrix(path, self.test_legend.acronyms,
                             self.reference_legend.acronyms,
                             [[repr(float(v)) for v in row]
                              for row in self.joint])
        sidecar.write_text(
            f"total_pixels={self.total_pixels}\n"
            f"seed={self.seed}\n"
            f"rng={RNG_ALGORITHM}\n", encoding="utf-8")
        return path, sidecar

    @classmethod
    def load(cls, path, test_legend: Legend, reference_legend: Legend,
             sidecar_path=None, total_pixels: int | None = None,
             seed: int | None = None) -> "JointSpec":
        """Read a joint matrix CSV plus sidecar.

        Cells summing to about 100 are taken as percentages, to about
        1 as proportions; both are normalized to sum exactly 1.
        Explicit total_pixels/seed arguments override the sidecar.
        """
        path = Path(path)
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
        mass = cells.sum()
        if not (0.5 <= mass <= 1.5 or 50.0 <= mass <= 150.0):
            raise ValidationError(
                f"{path}: cells sum to {mass!r}; expected proportions "
                f"(about 1) or percentages (about 100)")
        if total_pixels is None or seed is None:
            sidecar = (Path(sidecar_path) if sidecar_path is not None
                       else Path(str(path) + ".meta"))
            try:
                meta = read_key_values(sidecar)
            except ValueError as exc:
                raise ValidationError(str(exc)) from None
            if total_pixels is None:
                if "total_pixels" not in meta:
                    raise ValidationError(
                        f"{sidecar}: missing total_pixels")
                total_pixels = int(meta["total_pixels"])
            if seed is None:
                seed = int(meta.get("seed", 0))
        return cls.from_matrix(test_legend, reference_legend, cells,
                               total_pixels, seed, normalize=True)


def generate_pair(spec: JointSpec) -> tuple[CategoricalRaster,
                                            CategoricalRaster]:
    """Realize a joint spec as a co-registered raster pair.

    The pair's exact cross-tab equals the largest-remainder rounding
    of joint * total_pixels; pixel placement is a seed-determined
    permutation. When total_pixels is not a perfect rectangle the
    layout is the smallest near-square grid, padded with nodata in
    both maps (padding counts as excluded, never as agreement).
    """
    nonzero = int(np.count_nonzero(spec.joint))
    if spec.total_pixels < nonzero:
        raise ValidationError(
            f"infeasible apportionment: {spec.total_pixels} pixels cannot "
            f"realize {nonzero} nonzero cells")
    counts = largest_remainder(spec.joint.ravel(), spec.total_pixels)

    test_codes = np.asarray(spec.test_legend.codes, dtype=np.int64)
    ref_codes = np.asarray(spec.reference_legend.codes, dtype=np.int64)
    cell_test = np.repeat(test_codes, len(ref_codes))
    cell_ref = np.tile(ref_codes, len(test_codes))
    pixel_test = np.repeat(cell_test, counts)
    pixel_ref = np.repeat(cell_ref, counts)

    order = _rng(spec.seed).permutation(spec.total_pixels)
    pixel_test = pixel_test[order]
    pixel_ref = pixel_ref[order]

    width = math.isqrt(spec.total_pixels)
    if width * width < spec.total_pixels:
        width += 1
    height = math.ceil(spec.total_pixels / width)
    pad = width * height - spec.total_pixels
    nodata_test = free_code(spec.test_legend)
    nodata_ref = free_code(spec.reference_legend)
    if pad:
        pixel_test = np.concatenate(
            [pixel_test, np.full(pad, nodata_test, dtype=np.int64)])
        pixel_ref = np.concatenate(
            [pixel_ref, np.full(pad, nodata_ref, dtype=np.int64)])
    return (from_array(pixel_test.reshape(height, width), nodata_test,
                       spec.test_legend),
            from_array(pixel_ref.reshape(height, width), nodata_ref,
                       spec.reference_legend))


def brute_force_crosstab(test, ref, *, test_legend: Legend | None = None,
                         reference_legend: Legend | None = None,
                         test_nodata: int | None = None,
                         ref_nodata: int | None = None) -> CrossTab:
    """Naive double-loop cross-tab: the reference semantics.

    Accepts two rasters, or two full arrays with the legend/nodata
    keywords. Deliberately uses plain Python loops and no shared code
    with the streaming path, so the two implementations can check each
    other. Test-scale inputs only.
    """
    if isinstance(test, CategoricalRaster):
        test_legend = test.legend
        test_nodata = test.nodata_code
        test = test.to_array()
    if isinstance(ref, CategoricalRaster):
        reference_legend = ref.legend
        ref_nodata = ref.nodata_code
        ref = ref.to_array()
    if None in (test_legend, reference_legend, test_nodata, ref_nodata):
        raise ValidationError(
            "array inputs need test_legend/reference_legend and nodata codes")
    test = np.asarray(test)
    ref = np.asarray(ref)
    if test.shape != ref.shape:
        raise ValidationError(
            f"shape mismatch: {test.shape} vs {ref.shape}")
    t_index = {code: i for i, code in enumerate(test_legend.codes)}
    r_index = {code: i for i, code in enumerate(reference_legend.codes)}
    counts = [[0] * len(reference_legend) for _ in range(len(test_legend))]
    valid = 0
    excluded = 0
    for t_code, r_code in zip(test.ravel().tolist(), ref.ravel().tolist()):
        if t_code == test_nodata or r_code == ref_nodata:
            excluded += 1
            continue
        if t_code not in t_index:
            raise ValidationError(
                f"test map code {t_code} absent from legend "
                f"{test_legend.id!r} and not nodata")
        if r_code not in r_index:
            raise ValidationError(
                f"reference map code {r_code} absent from legend "
                f"{reference_legend.id!r} and not nodata")
        counts[t_index[t_code]][r_index[r_code]] += 1
        valid += 1
    return CrossTab(test_legend, reference_legend,
                    np.asarray(counts, dtype=np.int64), valid, excluded)


def perturb(truth: CategoricalRaster, confusion, seed: int,
            ) -> CategoricalRaster:
    """Resample each pixel's class per its row of a confusion matrix.

    confusion[i, j] is the probability that a pixel of the i-th legend
    class comes out as the j-th (legend order). Rows must sum to 1.
    Nodata pixels pass through unchanged. Deterministic given seed.
    """
    legend = truth.legend
    confusion = np.asarray(confusion, dtype=np.float64)
    k = len(legend)
    if confusion.shape != (k, k):
        raise ValidationError(
            f"confusion matrix shape {confusion.shape} does not match the "
            f"{k}-class legend")
    if (confusion < 0).any() or (abs(confusion.sum(axis=1) - 1.0) > 1e-9).any():
        raise ValidationError("confusion matrix is not row-stochastic")

    source = truth.to_array()
    result = source.copy()
    codes = np.asarray(legend.codes)
    rng = _rng(seed)
    for i, code in enumerate(legend.codes):
        positions = source == code
        n = int(positions.sum())
        if n == 0:
            continue
        row = confusion[i] / confusion[i].sum()
        result[positions] = rng.choice(codes, size=n, p=row).astype(
            source.dtype)
    return from_array(result, truth.nodata_code, legend,
                      code_width=truth.code_width)


def generate_truth(legend: Legend, width: int, height: int, seed: int, *,
                   probs=None, nodata_code: int | None = None,
                   nodata_fraction: float = 0.0) -> CategoricalRaster:
    """An i.i.d. random categorical raster (test fixture generator)."""
    if width < 1 or height < 1:
        raise ValidationError("zero dimension")
    if not 0.0 <= nodata_fraction < 1.0:
        raise ValidationError("nodata_fraction must be in [0, 1)")
    codes = np.asarray(legend.codes)
    if probs is not None:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (len(codes),) or (probs < 0).any():
            raise ValidationError("class probabilities do not fit the legend")
        probs = probs / probs.sum()
    rng = _rng(seed)
    data = rng.choice(codes, size=(height, width), p=probs)
    if nodata_code is None:
        nodata_code = free_code(legend)
    if nodata_fraction > 0.0:
        holes = rng.random((height, width)) < nodata_fraction
        data = np.where(holes, nodata_code, data)
    return from_array(data, nodata_code, legend)
