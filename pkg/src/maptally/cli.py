"""Command-line surface: batch validation runs and report emission.

Subcommands: crosstab, metrics, bounds, temporal, stratify, synth,
convert. Exit codes: 0 success, 1 usage error, 2 I/O error,
3 validation error.

A plain key=value config file (--config) may stand in for any long
flag of the subcommand (keys use underscores: tile_size=512); flags
given on the command line override the file.

Every JSON report embeds the tool version, the sha256 digests of its
inputs, tile size and method identifiers where applicable, so a rerun
of the same config reproduces the report byte-identically apart from
the generated_at timestamp.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from ._util import (ensure_dir, format_percent, read_key_values,
                    read_labeled_matrix, sha256_file)
from .bounds import AccuracyInput, propagate_interval, propagate_symbolic
from .crosstab import (CrossTab, StratumSet, crosstab_streamed,
                       load_crosstab_csv, write_crosstab_csv)
from .errors import ValidationError
from .legend import Legend, load_aggregation, load_legend, load_relation
from .metrics import (DEFAULT_QUARTILE_RULE, association_index,
                      class_frequencies, conditional_given_reference,
                      conditional_given_test, overall_agreement,
                      semantic_gap, stratum_boxplots, temporal_consistency,
                      top_k_matches)
from .raster import (DEFAULT_TILE_SIZE, TileGrid, open_raster, read_tile)
from .synth import RNG_ALGORITHM, JointSpec, generate_pair


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1, not 2."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


# -- option resolution ---------------------------------------------------

def _to_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"cannot parse {raw!r} as a boolean")


class _Options:
    """Merged view of command-line flags over a key=value config file."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        config_path = getattr(args, "config", None)
        self.config = read_key_values(config_path) if config_path else {}

    def get(self, key: str, default=None, convert=None):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        raw = self.config.get(key)
        if raw is None:
            return default
        return convert(raw) if convert else raw

    def require(self, key: str, convert=None):
        value = self.get(key, None, convert)
        if value is None:
            raise _UsageError(
                f"missing required option --{key.replace('_', '-')} "
                f"(or config key {key})")
        return value

    def get_list(self, key: str) -> list[str] | None:
        value = getattr(self.args, key, None)
        if value is not None:
            return list(value)
        raw = self.config.get(key)
        if raw is None:
            return None
        return [part.strip() for part in raw.split(",") if part.strip()]


@dataclass(frozen=True)
class RunConfig:
    """Resolved inputs of a pipeline run (the raster-driven commands)."""

    test_paths: tuple[Path, ...]
    reference_path: Path | None
    test_legend: Legend
    reference_legend: Legend
    relation_path: Path | None = None
    strata_path: Path | None = None
    strata_legend: Legend | None = None
    out_dir: Path | None = None
    tile_size: int = DEFAULT_TILE_SIZE
    threads: int = 1
    methods: tuple[str, ...] = ()


def _timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _json_default(value):
    if isinstance(value, Decimal):
        return str(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _write_report(path: Path, payload: dict) -> Path:
    document = {"tool": "maptally", "version": __version__,
                "generated_at": _timestamp(), **payload}
    text = json.dumps(document, sort_keys=True, indent=2,
                      default=_json_default) + "\n"
    path.write_text(text, encoding="utf-8")
    return path


def _digests(paths: dict) -> dict:
    return {name: sha256_file(p) for name, p in paths.items()
            if p is not None}


def _load_legend_opt(options: _Options, key: str) -> Legend:
    return load_legend(options.require(key))


# -- crosstab / stratify ---------------------------------------------------

def _add_raster_pair_options(parser: _Parser, strata: bool):
    parser.add_argument("--test", help="test map (CMAP/CMAPA)")
    parser.add_argument("--reference", help="reference map (CMAP/CMAPA)")
    parser.add_argument("--test-legend", dest="test_legend")
    parser.add_argument("--reference-legend", dest="reference_legend")
    if strata:
        parser.add_argument("--strata", help="stratum mask raster")
        parser.add_argument("--strata-legend", dest="strata_legend")
    parser.add_argument("--tile-size", dest="tile_size", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--config", help="key=value config file")


def _stream_pair(options: _Options, with_strata: bool):
    test_legend = _load_legend_opt(options, "test_legend")
    reference_legend = _load_legend_opt(options, "reference_legend")
    test_path = Path(options.require("test"))
    ref_path = Path(options.require("reference"))
    tile_size = options.get("tile_size", DEFAULT_TILE_SIZE, int)
    threads = options.get("threads", 1, int)
    strata_path = options.get("strata")
    strata = None
    strata_legend = None
    if with_strata and strata_path is not None:
        strata_legend = _load_legend_opt(options, "strata_legend")
        strata = StratumSet(open_raster(Path(strata_path), strata_legend))
    with open_raster(test_path, test_legend) as test, \
            open_raster(ref_path, reference_legend) as ref:
        result = crosstab_streamed(test, ref, strata,
                                   tile_size=tile_size, threads=threads)
    if strata is not None:
        strata.strata_raster.close()
    inputs = {"test": test_path, "reference": ref_path,
              "test_legend": Path(options.require("test_legend")),
              "reference_legend": Path(options.require("reference_legend"))}
    if strata_path is not None:
        inputs["strata"] = Path(strata_path)
        inputs["strata_legend"] = Path(options.require("strata_legend"))
    return result, inputs, tile_size, threads, strata_legend


def _crosstab_provenance(inputs, tile_size, threads) -> dict:
    return {"inputs": _digests(inputs), "tile_size": tile_size,
            "threads": threads, "tally_backend": _kernels.backend()}


def cmd_crosstab(args: argparse.Namespace) -> int:
    options = _Options(args)
    out_dir = ensure_dir(options.require("out"))
    percent = bool(options.get("percent", False, _to_bool))
    result, inputs, tile_size, threads, strata_legend = _stream_pair(
        options, with_strata=True)
    payload = _crosstab_provenance(inputs, tile_size, threads)
    files: list[Path] = []
    if isinstance(result, CrossTab):
        files.append(write_crosstab_csv(result, out_dir / "crosstab.csv",
                                        percent=percent))
        payload["valid_total"] = result.valid_total
        payload["excluded_total"] = result.excluded_total
    else:
        files.append(write_crosstab_csv(result.total,
                                        out_dir / "crosstab_total.csv",
                                        percent=percent))
        for code, ct in result.per_stratum.items():
            acr = strata_legend.acronym_of_code(code)
            files.append(write_crosstab_csv(
                ct, out_dir / f"crosstab_{acr}.csv", percent=percent))
        files.append(write_crosstab_csv(
            result.nodata_stratum, out_dir / "crosstab_nodata_stratum.csv",
            percent=percent))
        payload["valid_total"] = result.total.valid_total
        payload["excluded_total"] = result.total.excluded_total
        payload["strata"] = list(strata_legend.acronyms)
    payload["files"] = [f.name for f in sorted(files)]
    _write_report(out_dir / "crosstab.json", payload)
    print(f"wrote {len(files)} cross-tab file(s) to {out_dir}")
    return 0


def cmd_stratify(args: argparse.Namespace) -> int:
    options = _Options(args)
    out_dir = ensure_dir(options.require("out"))
    percent = bool(options.get("percent", False, _to_bool))
    quartile_rule = options.get("quartile_rule", DEFAULT_QUARTILE_RULE)
    result, inputs, tile_size, threads, strata_legend = _stream_pair(
        options, with_strata=True)
    if isinstance(result, CrossTab):
        raise _UsageError("stratify requires --strata and --strata-legend")
    files = [write_crosstab_csv(result.total, out_dir / "crosstab_total.csv",
                                percent=percent)]
    for code, ct in result.per_stratum.items():
        acr = strata_legend.acronym_of_code(code)
        files.append(write_crosstab_csv(ct, out_dir / f"crosstab_{acr}.csv",
                                        percent=percent))
    files.append(write_crosstab_csv(result.nodata_stratum,
                                    out_dir / "crosstab_nodata_stratum.csv",
                                    percent=percent))

    wanted = options.get_list("boxplot_classes")
    reference_legend = result.total.reference_legend
    targets = (list(reference_legend.acronyms) if wanted is None
               else wanted)
    boxplot_meta = {}
    for acr in targets:
        summary = stratum_boxplots(result.per_stratum, acr,
                                   quartile_rule=quartile_rule)
        path = out_dir / f"boxplot_{acr}.csv"
        _write_boxplot_csv(path, summary, strata_legend, result.per_stratum,
                           reference_legend.index_of_acronym(acr))
        files.append(path)
        boxplot_meta[acr] = {
            "strata_used": len(summary.used_strata),
            "strata_skipped_zero_marginal": len(summary.skipped_strata),
        }
    payload = _crosstab_provenance(inputs, tile_size, threads)
    payload.update({
        "strata": list(strata_legend.acronyms),
        "quartile_rule": quartile_rule,
        "boxplots": boxplot_meta,
        "valid_total": result.total.valid_total,
        "excluded_total": result.total.excluded_total,
        "files": [f.name for f in sorted(files)],
    })
    _write_report(out_dir / "stratify.json", payload)
    print(f"wrote {len(files)} file(s) to {out_dir}")
    return 0


def _write_boxplot_csv(path: Path, summary, strata_legend, per_stratum,
                       ref_idx) -> None:
    """Plot-ready long format: class,stratum,statistic,value."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["class", "stratum", "statistic", "value"])
        for code in summary.used_strata:
            ct = per_stratum[code]
            margin = int(ct.counts[:, ref_idx].sum())
            stratum_acr = strata_legend.acronym_of_code(code)
            for class_acr, count in zip(ct.test_legend.acronyms,
                                        ct.counts[:, ref_idx]):
                writer.writerow([class_acr, stratum_acr, "value",
                                 f"{int(count) / margin:.6f}"])
        for class_acr, box in summary.per_class.items():
            stats = [("min", box.min), ("q1", box.q1),
                     ("median", box.median), ("q3", box.q3),
                     ("max", box.max),
                     ("lower_whisker", box.lower_whisker),
                     ("upper_whisker", box.upper_whisker)]
            for name, value in stats:
                writer.writerow([class_acr, "", name, f"{value:.6f}"])
            for value in box.outliers:
                writer.writerow([class_acr, "", "outlier", f"{value:.6f}"])


# -- metrics -----------------------------------------------------------------

def cmd_metrics(args: argparse.Namespace) -> int:
    options = _Options(args)
    out_dir = ensure_dir(options.require("out"))
    test_legend = _load_legend_opt(options, "test_legend")
    reference_legend = _load_legend_opt(options, "reference_legend")
    relation_path = Path(options.require("relation"))
    relation = load_relation(relation_path, test_legend, reference_legend)
    top_k = options.get("top_k", 5, int)
    methods = tuple(options.get_list("methods") or ("cramers-v",))
    definition = options.get("cvpai2_definition")

    inputs = {"test_legend": Path(options.require("test_legend")),
              "reference_legend": Path(options.require("reference_legend")),
              "relation": relation_path}
    crosstab_path = options.get("crosstab")
    if crosstab_path is not None:
        ct = load_crosstab_csv(Path(crosstab_path), test_legend,
                               reference_legend)
        inputs["crosstab"] = Path(crosstab_path)
        tile_size = None
        threads = None
    else:
        result, pair_inputs, tile_size, threads, _ = _stream_pair(
            options, with_strata=False)
        ct = result
        inputs.update(pair_inputs)
        write_crosstab_csv(ct, out_dir / "crosstab.csv")

    oa = overall_agreement(ct, relation)
    given_ref = conditional_given_reference(ct)
    given_test = conditional_given_test(ct)
    _write_conditional_csv(out_dir / "conditional_given_reference.csv",
                           given_ref)
    _write_conditional_csv(out_dir / "conditional_given_test.csv",
                           given_test)
    _write_topk_csv(out_dir / "top_matches_given_reference.csv",
                    top_k_matches(given_ref, top_k))
    _write_topk_csv(out_dir / "top_matches_given_test.csv",
                    top_k_matches(given_test, top_k))

    association = []
    for method in methods:
        result = association_index(ct, relation, method,
                                   definition_path=definition)
        association.append({"method": result.method, "value": result.value,
                            "semantic_gap": semantic_gap(result)})

    frequencies = class_frequencies(ct, axis="test")
    payload = {
        "inputs": _digests(inputs),
        "relation_digest": sha256_file(relation_path),
        "relation_pairs": len(relation),
        "methods": list(methods),
        "overall_agreement": {
            "percent": oa,
            "formatted": f"{format_percent(oa)}% ±0%",
            "uncertainty_percent": 0,
        },
        "association": association,
        "top_k": top_k,
        "zero_marginal_reference": list(given_ref.zero_marginals),
        "zero_marginal_test": list(given_test.zero_marginals),
        "class_frequencies_test": {a: v for a, v in frequencies.items()},
        "valid_total": ct.valid_total,
        "excluded_total": ct.excluded_total,
        "tolerances": {"conditional_sum_abs": 1e-9, "percent_decimals": 2},
    }
    if tile_size is not None:
        payload["tile_size"] = tile_size
        payload["threads"] = threads
        payload["tally_backend"] = _kernels.backend()
    _write_report(out_dir / "metrics.json", payload)
    print(f"OA = {format_percent(oa)}% ±0%")
    return 0


def _write_conditional_csv(path: Path, cond) -> None:
    rows = [[f"{v:.6f}" for v in row] for row in cond.values]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["class", *cond.reference_legend.acronyms])
        for acr, row in zip(cond.test_legend.acronyms, rows):
            writer.writerow([acr, *row])


def _write_topk_csv(path: Path, ranked: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["conditioning_class", "rank", "partner_class",
                         "probability"])
        for conditioning, matches in ranked.items():
            for rank, (partner, prob) in enumerate(matches, start=1):
                writer.writerow([conditioning, rank, partner, f"{prob:.6f}"])


# -- bounds ----------------------------------------------------------------

def cmd_bounds(args: argparse.Namespace) -> int:
    options = _Options(args)
    oa_test_ref = options.require("oa_test_ref")
    oa_ref_truth = options.require("oa_ref_truth")
    inp = AccuracyInput.parse(str(oa_test_ref), str(oa_ref_truth))
    payload: dict = {"inputs": {
        "oa_test_vs_ref": str(inp.oa_test_vs_ref),
        "oa_test_vs_ref_uncertainty": str(inp.oa_test_vs_ref_uncertainty),
        "oa_ref_vs_truth": (str(inp.oa_ref_vs_truth)
                            if inp.oa_ref_vs_truth is not None else None),
        "ref_is_lower_bound": inp.ref_is_lower_bound,
    }}
    if inp.ref_is_lower_bound:
        symbolic = propagate_symbolic(inp)
        payload["symbolic"] = {
            "half_width": str(symbolic.half_width),
            "lower": symbolic.lower_expr,
            "upper": symbolic.upper_expr,
            "clamp_rule": symbolic.clamp_rule,
        }
        if symbolic.known_lower_bound is not None:
            at_bound = symbolic.substitute(symbolic.known_lower_bound)
            payload["at_lower_bound"] = _interval_payload(at_bound)
    else:
        payload["interval"] = _interval_payload(propagate_interval(inp))
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _interval_payload(interval) -> dict:
    return {"lower": str(interval.lower), "upper": str(interval.upper),
            "lower_clamped": interval.lower_clamped,
            "upper_clamped": interval.upper_clamped,
            "width": str(interval.width)}


# -- temporal ----------------------------------------------------------------

def cmd_temporal(args: argparse.Namespace) -> int:
    options = _Options(args)
    out_dir = ensure_dir(options.require("out"))
    groups_path = options.get("groups")
    groups = _load_groups(Path(groups_path)) if groups_path else None

    series_path = options.get("series")
    inputs = {}
    if series_path is not None:
        labels, epoch_names, matrix = _load_series(Path(series_path))
        inputs["series"] = Path(series_path)
    else:
        epochs = options.get_list("test")
        if not epochs or len(epochs) < 2:
            raise _UsageError(
                "temporal needs --series, or --test with at least two "
                "epoch maps")
        test_legend = _load_legend_opt(options, "test_legend")
        tile_size = options.get("tile_size", DEFAULT_TILE_SIZE, int)
        labels = list(test_legend.acronyms)
        epoch_names = [Path(p).stem for p in epochs]
        rows = []
        for p in epochs:
            with open_raster(Path(p), test_legend) as raster:
                freq = class_frequencies(raster, tile_size=tile_size)
            rows.append([freq[a] * 100.0 for a in labels])
            inputs[f"epoch_{Path(p).stem}"] = Path(p)
        matrix = np.asarray(rows)
    if matrix.shape[0] < 2:
        raise _UsageError("temporal needs at least two epochs")
    if groups_path:
        inputs["groups"] = Path(groups_path)

    stats = temporal_consistency(matrix, labels, groups)
    csv_path = out_dir / "temporal.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["class", *epoch_names, "mean", "std"])
        for row in stats.rows:
            writer.writerow([row.label,
                             *[format_percent(v) for v in row.series],
                             format_percent(row.mean),
                             format_percent(row.std)])
    payload = {
        "inputs": _digests(inputs),
        "epochs": list(epoch_names),
        "rows": [{"label": r.label, "mean": r.mean, "std": r.std,
                  "is_group": r.is_group} for r in stats.rows],
        "std_denominator": "n-1",
    }
    _write_report(out_dir / "temporal.json", payload)
    print(f"wrote temporal statistics for {len(stats.rows)} rows "
          f"({matrix.shape[0]} epochs) to {out_dir}")
    return 0


def _load_series(path: Path):
    """Rows = classes, columns = epochs; returns epochs-major matrix."""
    labels, epoch_names, matrix = read_labeled_matrix(path)
    if matrix.shape[1] < 2:
        raise _UsageError(
            f"{path}: {matrix.shape[1]} epoch column(s); need at least two")
    return labels, epoch_names, matrix.T.copy()


def _load_groups(path: Path) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    rows = list(_iter_group_rows(path))
    if not rows or [c.lower() for c in rows[0][:2]] != ["group_name",
                                                        "acronym"]:
        raise ValidationError(
            f"{path}: expected header 'group_name,acronym'")
    for row in rows[1:]:
        if len(row) < 2:
            raise ValidationError(f"{path}: short row {row!r}")
        groups.setdefault(row[0].strip(), []).append(row[1].strip())
    return groups


def _iter_group_rows(path: Path):
    from ._util import iter_csv_rows
    yield from iter_csv_rows(path)


# -- synth -------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    options = _Options(args)
    out_dir = ensure_dir(options.require("out"))
    test_legend = _load_legend_opt(options, "test_legend")
    reference_legend = _load_legend_opt(options, "reference_legend")
    joint_path = Path(options.require("joint"))
    spec = JointSpec.load(
        joint_path, test_legend, reference_legend,
        sidecar_path=options.get("sidecar"),
        total_pixels=options.get("total_pixels", None, int),
        seed=options.get("seed", None, int))
    test, ref = generate_pair(spec)
    ascii_out = bool(options.get("ascii", False, _to_bool))
    from .raster import write_cmap, write_cmapa

    writer = write_cmapa if ascii_out else write_cmap
    suffix = "cmapa" if ascii_out else "cmap"
    test_path = writer(out_dir / f"test.{suffix}", test.to_array(),
                       test.nodata_code)
    ref_path = writer(out_dir / f"reference.{suffix}", ref.to_array(),
                      ref.nodata_code)
    payload = {
        "inputs": _digests({"joint": joint_path}),
        "rng": RNG_ALGORITHM,
        "seed": spec.seed,
        "total_pixels": spec.total_pixels,
        "dimensions": [test.width, test.height],
        "outputs": _digests({"test": test_path, "reference": ref_path}),
    }
    _write_report(out_dir / "synth.json", payload)
    print(f"wrote {test_path} and {ref_path}")
    return 0


# -- convert -----------------------------------------------------------------

def cmd_convert(args: argparse.Namespace) -> int:
    options = _Options(args)
    legend = _load_legend_opt(options, "legend")
    in_path = Path(options.require("input"))
    out_path = Path(options.require("output"))
    target = options.require("to")
    if target not in ("cmap", "cmapa"):
        raise _UsageError(f"--to must be cmap or cmapa, got {target!r}")
    with open_raster(in_path, legend) as raster:
        grid = TileGrid.for_raster(raster, raster.width, 1024)
        with open(out_path, "wb") as handle:
            magic = "CMAP" if target == "cmap" else "CMAPA"
            handle.write(
                f"{magic} 1 {raster.width} {raster.height} "
                f"{raster.nodata_code} {raster.code_width}\n".encode("ascii"))
            for index in grid.indices():
                tile = read_tile(raster, grid, index)
                if target == "cmap":
                    handle.write(np.ascontiguousarray(tile.data).tobytes())
                else:
                    for row in tile.data:
                        line = " ".join(str(int(c)) for c in row)
                        handle.write(line.encode("ascii") + b"\n")
    print(f"wrote {out_path}")
    return 0


# -- parser ------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="maptally",
                     description="Wall-to-wall comparison of categorical "
                                 "raster maps")
    parser.add_argument("--version", action="version",
                        version=f"maptally {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("crosstab",
                       help="stream a map pair into a cross-tab")
    _add_raster_pair_options(p, strata=True)
    p.add_argument("--percent", action="store_true", default=None,
                   help="emit 2-decimal percentages instead of counts")
    p.set_defaults(func=cmd_crosstab)

    p = sub.add_parser("metrics",
                       help="agreement and association metrics")
    _add_raster_pair_options(p, strata=False)
    p.add_argument("--crosstab", help="precomputed cross-tab CSV "
                                      "(alternative to --test/--reference)")
    p.add_argument("--relation", help="binary relation CSV")
    p.add_argument("--methods", nargs="+",
                   help="association methods (cramers-v, cvpai2-plugin)")
    p.add_argument("--cvpai2-definition", dest="cvpai2_definition",
                   help="python file defining cvpai2(counts, relation_mask)")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bounds",
                       help="propagate accuracy intervals")
    p.add_argument("--oa-test-ref", dest="oa_test_ref",
                   help="test-vs-reference agreement, percent")
    p.add_argument("--oa-ref-truth", dest="oa_ref_truth",
                   help="reference-vs-truth accuracy, percent or '>=XX'")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("temporal",
                       help="per-class mean/std across epochs")
    p.add_argument("--series",
                   help="per-class frequency series CSV (classes x epochs)")
    p.add_argument("--test", nargs="+",
                   help="epoch maps (alternative to --series)")
    p.add_argument("--test-legend", dest="test_legend")
    p.add_argument("--groups", help="group membership CSV")
    p.add_argument("--tile-size", dest="tile_size", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_temporal)

    p = sub.add_parser("stratify",
                       help="per-stratum cross-tabs and boxplot summaries")
    _add_raster_pair_options(p, strata=True)
    p.add_argument("--percent", action="store_true", default=None)
    p.add_argument("--quartile-rule", dest="quartile_rule")
    p.add_argument("--boxplot-classes", dest="boxplot_classes", nargs="+",
                   help="reference classes to summarize (default: all)")
    p.set_defaults(func=cmd_stratify)

    p = sub.add_parser("synth",
                       help="generate a synthetic pair from a joint spec")
    p.add_argument("--joint", help="joint matrix CSV")
    p.add_argument("--sidecar", help="key=value sidecar "
                                     "(default: <joint>.meta)")
    p.add_argument("--test-legend", dest="test_legend")
    p.add_argument("--reference-legend", dest="reference_legend")
    p.add_argument("--total-pixels", dest="total_pixels", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ascii", action="store_true", default=None,
                   help="write CMAPA/1 text instead of CMAP/1 binary")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert CMAP/1 <-> CMAPA/1")
    p.add_argument("--input", help="source raster")
    p.add_argument("--output", help="destination path")
    p.add_argument("--to", help="target format: cmap or cmapa")
    p.add_argument("--legend", help="legend CSV for code validation")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_convert)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:  # includes ValidationError
        print(f"validation error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
