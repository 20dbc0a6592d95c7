"""End-to-end runs of the command-line interface, in process."""

import json

import numpy as np
import pytest

from maptally import (ClassDef, Legend, from_array, load_crosstab_csv,
                      open_raster, write_cmap)
from maptally.cli import main


def write_legend(path, pairs):
    lines = ["code,acronym,name"]
    lines += [f"{c},{a},{a} class" for c, a in pairs]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def world(tmp_path):
    """A tiny co-registered map pair with legends and a relation."""
    tl = Legend("t", (ClassDef(1, "A", "a"), ClassDef(2, "B", "b")))
    rl = Legend("r", (ClassDef(5, "X", "x"), ClassDef(6, "Y", "y")))
    rng = np.random.default_rng(55)
    t = rng.choice([1, 2], size=(24, 18), p=[0.7, 0.3]).astype(np.uint8)
    agree = rng.random((24, 18)) < 0.9
    r = np.where((t == 1) & agree, 5, 6).astype(np.uint8)
    t[0, 0] = 0
    r[1, 1] = 0
    s = rng.choice([1, 2, 9], size=(24, 18)).astype(np.uint8)

    paths = {
        "test": write_cmap(tmp_path / "test.cmap", t, 0),
        "reference": write_cmap(tmp_path / "ref.cmap", r, 0),
        "strata": write_cmap(tmp_path / "strata.cmap", s, 9),
        "test_legend": write_legend(tmp_path / "tl.csv", [(1, "A"),
                                                          (2, "B")]),
        "reference_legend": write_legend(tmp_path / "rl.csv", [(5, "X"),
                                                               (6, "Y")]),
        "strata_legend": write_legend(tmp_path / "sl.csv", [(1, "N"),
                                                            (2, "S")]),
    }
    relation = tmp_path / "relation.csv"
    relation.write_text("test_acronym,reference_acronym\nA,X\nB,Y\n")
    paths["relation"] = relation
    paths["dir"] = tmp_path
    paths["arrays"] = (t, r)
    return paths


class TestCrosstab:
    def test_writes_table_and_report(self, world, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["crosstab", "--test", str(world["test"]),
                     "--reference", str(world["reference"]),
                     "--test-legend", str(world["test_legend"]),
                     "--reference-legend", str(world["reference_legend"]),
                     "--tile-size", "7", "--out", str(out)])
        assert code == 0
        tl = Legend("t", (ClassDef(1, "A", "a"), ClassDef(2, "B", "b")))
        rl = Legend("r", (ClassDef(5, "X", "x"), ClassDef(6, "Y", "y")))
        ct = load_crosstab_csv(out / "crosstab.csv", tl, rl)
        assert ct.valid_total == 24 * 18 - 2
        report = json.loads((out / "crosstab.json").read_text())
        assert report["tile_size"] == 7
        assert report["valid_total"] == 24 * 18 - 2
        assert set(report["inputs"]) >= {"test", "reference"}

    def test_stratified_outputs_one_file_per_stratum(self, world,
                                                     tmp_path):
        out = tmp_path / "out"
        code = main(["crosstab", "--test", str(world["test"]),
                     "--reference", str(world["reference"]),
                     "--test-legend", str(world["test_legend"]),
                     "--reference-legend", str(world["reference_legend"]),
                     "--strata", str(world["strata"]),
                     "--strata-legend", str(world["strata_legend"]),
                     "--out", str(out)])
        assert code == 0
        names = {p.name for p in out.glob("*.csv")}
        assert names == {"crosstab_total.csv", "crosstab_N.csv",
                         "crosstab_S.csv", "crosstab_nodata_stratum.csv"}

    def test_percent_flag(self, world, tmp_path):
        out = tmp_path / "out"
        main(["crosstab", "--test", str(world["test"]),
              "--reference", str(world["reference"]),
              "--test-legend", str(world["test_legend"]),
              "--reference-legend", str(world["reference_legend"]),
              "--percent", "--out", str(out)])
        body = (out / "crosstab.csv").read_text().splitlines()
        assert "." in body[1].split(",")[1]  # cells are percentages

    def test_reports_reproduce_modulo_timestamp(self, world, tmp_path):
        outs = []
        for name in ("first", "second"):
            out = tmp_path / name
            main(["crosstab", "--test", str(world["test"]),
                  "--reference", str(world["reference"]),
                  "--test-legend", str(world["test_legend"]),
                  "--reference-legend", str(world["reference_legend"]),
                  "--out", str(out)])
            doc = json.loads((out / "crosstab.json").read_text())
            doc.pop("generated_at")
            outs.append(doc)
        assert outs[0] == outs[1]


class TestExitCodes:
    def test_usage_error_is_1(self, world, capsys):
        code = main(["crosstab", "--test", str(world["test"])])
        assert code == 1
        assert "usage error" in capsys.readouterr().err

    def test_unknown_flag_is_1(self, capsys):
        assert main(["bounds", "--frobnicate"]) == 1

    def test_missing_file_is_2(self, world, tmp_path, capsys):
        code = main(["crosstab", "--test", str(world["dir"] / "nope.cmap"),
                     "--reference", str(world["reference"]),
                     "--test-legend", str(world["test_legend"]),
                     "--reference-legend", str(world["reference_legend"]),
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "i/o error" in capsys.readouterr().err

    def test_validation_error_is_3(self, world, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("class,Q,Z\nA,1,2\nB,3,4\n")
        code = main(["metrics", "--crosstab", str(bad),
                     "--test-legend", str(world["test_legend"]),
                     "--reference-legend", str(world["reference_legend"]),
                     "--relation", str(world["relation"]),
                     "--out", str(tmp_path / "out")])
        assert code == 3
        assert "validation error" in capsys.readouterr().err

    def test_no_subcommand_is_1(self, capsys):
        assert main([]) == 1

    def test_version_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert "maptally" in capsys.readouterr().out


class TestConfigMerge:
    def test_flags_override_config(self, world, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text(
            f"test={world['test']}\n"
            f"reference={world['reference']}\n"
            f"test_legend={world['test_legend']}\n"
            f"reference_legend={world['reference_legend']}\n"
            f"tile_size=5\n"
            f"out={tmp_path / 'from_config'}\n")
        code = main(["crosstab", "--config", str(config)])
        assert code == 0
        report = json.loads(
            (tmp_path / "from_config" / "crosstab.json").read_text())
        assert report["tile_size"] == 5

        override = tmp_path / "override"
        code = main(["crosstab", "--config", str(config),
                     "--tile-size", "9", "--out", str(override)])
        assert code == 0
        report = json.loads((override / "crosstab.json").read_text())
        assert report["tile_size"] == 9
        assert not (tmp_path / "from_config" / "nonsense").exists()


class TestMetrics:
    def run(self, world, out, extra=()):
        return main(["metrics", "--test", str(world["test"]),
                     "--reference", str(world["reference"]),
                     "--test-legend", str(world["test_legend"]),
                     "--reference-legend", str(world["reference_legend"]),
                     "--relation", str(world["relation"]),
                     "--out", str(out), *extra])

    def test_oa_line_and_report(self, world, tmp_path, capsys):
        out = tmp_path / "out"
        assert self.run(world, out) == 0
        line = capsys.readouterr().out.strip()
        assert line.startswith("OA = ") and line.endswith("% ±0%")
        report = json.loads((out / "metrics.json").read_text())
        t, r = world["arrays"]
        both = (t != 0) & (r != 0)
        agree = (((t == 1) & (r == 5)) | ((t == 2) & (r == 6))) & both
        expected = 100.0 * agree.sum() / both.sum()
        assert report["overall_agreement"]["percent"] == pytest.approx(
            expected)
        assert report["methods"] == ["cramers-v"]
        assert report["association"][0]["value"] == pytest.approx(
            1.0 - report["association"][0]["semantic_gap"])
        for name in ("conditional_given_reference.csv",
                     "conditional_given_test.csv",
                     "top_matches_given_reference.csv",
                     "top_matches_given_test.csv", "crosstab.csv"):
            assert (out / name).exists()

    def test_top_k_limits_rows(self, world, tmp_path):
        out = tmp_path / "out"
        assert self.run(world, out, ["--top-k", "1"]) == 0
        lines = (out / "top_matches_given_reference.csv").read_text()
        assert len(lines.splitlines()) == 1 + 2  # header + one per class

    def test_plugin_method_without_definition_fails(self, world, tmp_path,
                                                    capsys):
        out = tmp_path / "out"
        code = self.run(world, out, ["--methods", "cvpai2-plugin"])
        assert code == 3
        assert "definition" in capsys.readouterr().err


class TestBounds:
    def test_numeric_interval(self, capsys):
        assert main(["bounds", "--oa-test-ref", "96.88",
                     "--oa-ref-truth", "78"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["interval"]["lower"] == "74.88"
        assert doc["interval"]["upper"] == "81.12"

    def test_symbolic_interval(self, capsys):
        assert main(["bounds", "--oa-test-ref", "93.09",
                     "--oa-ref-truth", ">=XX"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["symbolic"]["half_width"] == "6.91"

    def test_out_of_range_is_validation_error(self, capsys):
        assert main(["bounds", "--oa-test-ref", "101",
                     "--oa-ref-truth", "78"]) == 3


class TestTemporal:
    def test_series_csv(self, tmp_path, capsys):
        series = tmp_path / "series.csv"
        series.write_text("class,2006,2007,2008\n"
                          "A,10.00,12.00,11.00\n"
                          "B,90.00,88.00,89.00\n")
        groups = tmp_path / "groups.csv"
        groups.write_text("group_name,acronym\nAll,A\nAll,B\n")
        out = tmp_path / "out"
        code = main(["temporal", "--series", str(series),
                     "--groups", str(groups), "--out", str(out)])
        assert code == 0
        body = (out / "temporal.csv").read_text().splitlines()
        assert body[0] == "class,2006,2007,2008,mean,std"
        assert body[1] == "A,10.00,12.00,11.00,11.00,1.00"
        assert body[3].startswith("All,100.00,100.00,100.00,100.00,0.00")

    def test_single_epoch_is_usage_error(self, tmp_path, capsys):
        series = tmp_path / "series.csv"
        series.write_text("class,2006\nA,10.00\nB,90.00\n")
        code = main(["temporal", "--series", str(series),
                     "--out", str(tmp_path / "out")])
        assert code == 1

    def test_epochs_from_rasters(self, world, tmp_path):
        out = tmp_path / "out"
        code = main(["temporal",
                     "--test", str(world["test"]), str(world["test"]),
                     "--test-legend", str(world["test_legend"]),
                     "--out", str(out)])
        assert code == 0
        report = json.loads((out / "temporal.json").read_text())
        for row in report["rows"]:
            assert row["std"] == pytest.approx(0.0)  # identical epochs


class TestStratify:
    def test_boxplot_long_format(self, world, tmp_path):
        out = tmp_path / "out"
        code = main(["stratify", "--test", str(world["test"]),
                     "--reference", str(world["reference"]),
                     "--test-legend", str(world["test_legend"]),
                     "--reference-legend", str(world["reference_legend"]),
                     "--strata", str(world["strata"]),
                     "--strata-legend", str(world["strata_legend"]),
                     "--boxplot-classes", "X", "--out", str(out)])
        assert code == 0
        lines = (out / "boxplot_X.csv").read_text().splitlines()
        assert lines[0] == "class,stratum,statistic,value"
        raw = [l for l in lines[1:] if ",value," in l]
        # one raw row per test class per usable stratum
        assert len(raw) == 2 * 2
        stats = {l.split(",")[2] for l in lines[1:] if ",value," not in l}
        assert {"min", "q1", "median", "q3", "max"} <= stats
        report = json.loads((out / "stratify.json").read_text())
        assert report["quartile_rule"] == "linear"
        assert report["boxplots"]["X"]["strata_used"] == 2

    def test_requires_strata(self, world, tmp_path):
        code = main(["stratify", "--test", str(world["test"]),
                     "--reference", str(world["reference"]),
                     "--test-legend", str(world["test_legend"]),
                     "--reference-legend", str(world["reference_legend"]),
                     "--out", str(tmp_path / "out")])
        assert code == 1


class TestSynthAndConvert:
    def test_synth_then_crosstab_recovers_joint(self, world, tmp_path,
                                                capsys):
        joint = tmp_path / "joint.csv"
        joint.write_text("class,X,Y\nA,0.58,0.05\nB,0.07,0.30\n")
        out = tmp_path / "synth"
        code = main(["synth", "--joint", str(joint),
                     "--test-legend", str(world["test_legend"]),
                     "--reference-legend", str(world["reference_legend"]),
                     "--total-pixels", "10000", "--seed", "13",
                     "--out", str(out)])
        assert code == 0
        report = json.loads((out / "synth.json").read_text())
        assert report["rng"] == "pcg64"
        assert report["seed"] == 13

        ct_out = tmp_path / "ct"
        assert main(["crosstab", "--test", str(out / "test.cmap"),
                     "--reference", str(out / "reference.cmap"),
                     "--test-legend", str(world["test_legend"]),
                     "--reference-legend", str(world["reference_legend"]),
                     "--out", str(ct_out)]) == 0
        tl = Legend("t", (ClassDef(1, "A", "a"), ClassDef(2, "B", "b")))
        rl = Legend("r", (ClassDef(5, "X", "x"), ClassDef(6, "Y", "y")))
        ct = load_crosstab_csv(ct_out / "crosstab.csv", tl, rl)
        realized = ct.counts / ct.valid_total
        assert np.abs(realized - [[0.58, 0.05], [0.07, 0.30]]).max() < 1e-4

    def test_convert_round_trip(self, world, tmp_path):
        tl = Legend("t", (ClassDef(1, "A", "a"), ClassDef(2, "B", "b")))
        ascii_path = tmp_path / "test.cmapa"
        assert main(["convert", "--input", str(world["test"]),
                     "--output", str(ascii_path), "--to", "cmapa",
                     "--legend", str(world["test_legend"])]) == 0
        binary_path = tmp_path / "back.cmap"
        assert main(["convert", "--input", str(ascii_path),
                     "--output", str(binary_path), "--to", "cmap",
                     "--legend", str(world["test_legend"])]) == 0
        with open_raster(binary_path, tl) as back:
            assert np.array_equal(back.to_array(), world["arrays"][0])
        assert binary_path.read_bytes() == world["test"].read_bytes()
