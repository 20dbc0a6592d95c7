"""Tally kernels: the per-pixel hot loops behind cross-tabulation.

Two interchangeable backends implement the same contract:

* "numba": @njit(cache=True, nogil=True) loops, compiled lazily per
  input dtype. nogil lets thread pools tally tiles in parallel.
* "numpy": vectorized bincount over fused class indices. Used when
  numba is unavailable or explicitly disabled.

The backend is chosen at import time: set the environment variable
MAPTALLY_NO_NUMBA=1 to force the numpy path. set_backend() switches at
runtime (used by the benchmark and the test suite to exercise both).

A kernel maps raw codes through per-legend lookup tables whose entries
are the class index, -1 for a code outside the legend, or -2 for the
nodata code. Contract per pixel: if either map's code is nodata the
pixel is excluded; otherwise a code outside its legend is an error;
otherwise counts[test_index, ref_index] += 1. The stratified variant
adds a stratum LUT; pixels whose stratum is nodata land in the extra
trailing bucket, and a stratum code outside the strata legend is an
error.

Kernels return the first offending code per input rather than raising,
so the numba path stays nopython; callers in crosstab raise.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = "MAPTALLY_NO_NUMBA"

try:
    from numba import njit

    _NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on environment
    njit = None
    _NUMBA_AVAILABLE = False


# -- pure-python reference implementations (numba-compilable) ---------

def _tally_flat_py(test, ref, lut_t, lut_r, counts):
    nt = lut_t.shape[0]
    nr = lut_r.shape[0]
    valid = 0
    excluded = 0
    bad_test = -1
    bad_ref = -1
    for i in range(test.shape[0]):
        ct = np.int64(test[i])
        cr = np.int64(ref[i])
        it = lut_t[ct] if ct < nt else -1
        ir = lut_r[cr] if cr < nr else -1
        if it == -2 or ir == -2:
            excluded += 1
        elif it == -1:
            if bad_test < 0:
                bad_test = ct
        elif ir == -1:
            if bad_ref < 0:
                bad_ref = cr
        else:
            counts[it, ir] += 1
            valid += 1
    return valid, excluded, bad_test, bad_ref


def _tally_strat_py(test, ref, strat, lut_t, lut_r, lut_s,
                    counts, valid, excluded):
    nt = lut_t.shape[0]
    nr = lut_r.shape[0]
    ns = lut_s.shape[0]
    nodata_bucket = counts.shape[0] - 1
    bad_test = -1
    bad_ref = -1
    bad_strat = -1
    for i in range(test.shape[0]):
        cs = np.int64(strat[i])
        ks = lut_s[cs] if cs < ns else -1
        if ks == -1:
            if bad_strat < 0:
                bad_strat = cs
            continue
        bucket = nodata_bucket if ks == -2 else ks
        ct = np.int64(test[i])
        cr = np.int64(ref[i])
        it = lut_t[ct] if ct < nt else -1
        ir = lut_r[cr] if cr < nr else -1
        if it == -2 or ir == -2:
            excluded[bucket] += 1
        elif it == -1:
            if bad_test < 0:
                bad_test = ct
        elif ir == -1:
            if bad_ref < 0:
                bad_ref = cr
        else:
            counts[bucket, it, ir] += 1
            valid[bucket] += 1
    return bad_test, bad_ref, bad_strat


if _NUMBA_AVAILABLE:
    _tally_flat_jit = njit(cache=True, nogil=True)(_tally_flat_py)
    _tally_strat_jit = njit(cache=True, nogil=True)(_tally_strat_py)


# -- numpy backend -----------------------------------------------------

def _first_code(codes, mask):
    hits = np.flatnonzero(mask)
    return int(codes[hits[0]]) if hits.size else -1


def _tally_flat_numpy(test, ref, lut_t, lut_r, counts):
    # LUTs carry a trailing -1 sentinel, so clip-mode take maps any
    # out-of-domain code to "outside legend"
    it = lut_t.take(test, mode="clip")
    ir = lut_r.take(ref, mode="clip")
    nodata = (it == -2) | (ir == -2)
    bad_test_mask = (it == -1) & ~nodata
    bad_ref_mask = (ir == -1) & ~nodata & ~bad_test_mask
    valid_mask = ~(nodata | (it < 0) | (ir < 0))
    rc = counts.shape[1]
    fused = it[valid_mask].astype(np.int64) * rc + ir[valid_mask]
    counts += np.bincount(fused, minlength=counts.size).reshape(counts.shape)
    return (int(valid_mask.sum()), int(nodata.sum()),
            _first_code(test, bad_test_mask), _first_code(ref, bad_ref_mask))


def _tally_strat_numpy(test, ref, strat, lut_t, lut_r, lut_s,
                       counts, valid, excluded):
    ks = lut_s.take(strat, mode="clip")
    bad_strat_mask = ks == -1
    it = lut_t.take(test, mode="clip")
    ir = lut_r.take(ref, mode="clip")
    buckets = counts.shape[0]
    bucket = np.where(ks == -2, buckets - 1, ks)
    usable = ~bad_strat_mask
    nodata = ((it == -2) | (ir == -2)) & usable
    bad_test_mask = (it == -1) & usable & ~nodata
    bad_ref_mask = (ir == -1) & usable & ~nodata & ~bad_test_mask
    valid_mask = usable & ~(nodata | (it < 0) | (ir < 0))
    tc, rc = counts.shape[1], counts.shape[2]
    fused = ((bucket[valid_mask].astype(np.int64) * tc + it[valid_mask]) * rc
             + ir[valid_mask])
    counts += np.bincount(fused, minlength=counts.size).reshape(counts.shape)
    excluded += np.bincount(bucket[nodata], minlength=buckets)
    valid += np.bincount(bucket[valid_mask], minlength=buckets)
    return (_first_code(test, bad_test_mask), _first_code(ref, bad_ref_mask),
            _first_code(strat, bad_strat_mask))


# -- backend selection -------------------------------------------------

_BACKENDS = {"numpy": (_tally_flat_numpy, _tally_strat_numpy)}
if _NUMBA_AVAILABLE:
    _BACKENDS["numba"] = (_tally_flat_jit, _tally_strat_jit)

_DEFAULT = ("numpy" if os.environ.get(_ENV_FLAG, "").strip() not in ("", "0")
            or not _NUMBA_AVAILABLE else "numba")
_current = _DEFAULT


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def backend() -> str:
    """Name of the active backend ("numba" or "numpy")."""
    return _current


def set_backend(name: str) -> str:
    """Switch the tally backend at runtime; returns the previous name."""
    global _current
    if name not in _BACKENDS:
        raise ValueError(
            f"unknown backend {name!r}; available: {available_backends()}")
    previous = _current
    _current = name
    return previous


def tally_flat(test, ref, lut_t, lut_r, counts):
    """Tally one flat window. Returns (valid, excluded, bad_test, bad_ref)."""
    return _BACKENDS[_current][0](test, ref, lut_t, lut_r, counts)


def tally_stratified(test, ref, strat, lut_t, lut_r, lut_s,
                     counts, valid, excluded):
    """Tally one stratified window in place.

    Returns (bad_test, bad_ref, bad_stratum) first-offender codes,
    -1 when clean.
    """
    return _BACKENDS[_current][1](test, ref, strat, lut_t, lut_r, lut_s,
                                  counts, valid, excluded)
