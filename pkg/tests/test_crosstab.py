import numpy as np
import pytest

from maptally import (ClassDef, CrossTab, Legend, StratumSet,
                      TallyAccumulator, TileGrid, ValidationError,
                      aggregate_crosstab, build_aggregation,
                      crosstab_streamed, from_array, load_crosstab_csv,
                      merge, read_tile, tally_tile, write_crosstab_csv)


def make_legend(id_, *pairs):
    return Legend(id_, tuple(ClassDef(c, a, a.lower()) for c, a in pairs))


@pytest.fixture
def tl():
    return make_legend("t", (1, "A"), (2, "B"), (3, "C"))


@pytest.fixture
def rl():
    return make_legend("r", (5, "X"), (6, "Y"))


@pytest.fixture
def sl():
    return make_legend("s", (1, "N"), (2, "S"))


def random_pair(tl, rl, shape, seed, nodata_share=0.05):
    rng = np.random.default_rng(seed)
    t = rng.choice(tl.codes, size=shape).astype(np.uint16)
    r = rng.choice(rl.codes, size=shape).astype(np.uint16)
    t[rng.random(shape) < nodata_share] = 0
    r[rng.random(shape) < nodata_share] = 0
    return from_array(t, 0, tl), from_array(r, 0, rl)


class TestAccumulator:
    def test_tile_tally_and_conversion(self, tl, rl):
        test = from_array(np.array([[1, 2], [0, 3]], dtype=np.uint8), 0, tl)
        ref = from_array(np.array([[5, 5], [6, 6]], dtype=np.uint8), 0, rl)
        acc = TallyAccumulator.zero(tl, rl)
        grid = TileGrid.for_raster(test, 2)
        tally_tile(read_tile(test, grid, (0, 0)),
                   read_tile(ref, grid, (0, 0)), None, acc)
        ct = acc.to_crosstab()
        assert ct.counts.tolist() == [[1, 0], [1, 0], [0, 1]]
        assert ct.valid_total == 3 and ct.excluded_total == 1

    def test_window_mismatch_rejected(self, tl, rl):
        test = from_array(np.ones((4, 4), dtype=np.uint8), 0, tl)
        ref = from_array(np.full((4, 4), 5, dtype=np.uint8), 0, rl)
        acc = TallyAccumulator.zero(tl, rl)
        g2 = TileGrid.for_raster(test, 2)
        g4 = TileGrid.for_raster(ref, 4)
        with pytest.raises(ValidationError):
            tally_tile(read_tile(test, g2, (0, 0)),
                       read_tile(ref, g4, (0, 0)), None, acc)

    def test_alien_code_names_the_map(self, tl, rl):
        test = from_array(np.array([[9]], dtype=np.uint8), 0, tl,
                          code_width=1)
        ref = from_array(np.array([[5]], dtype=np.uint8), 0, rl)
        acc = TallyAccumulator.zero(tl, rl)
        grid = TileGrid.for_raster(test)
        with pytest.raises(ValidationError,
                           match="test map code 9 absent"):
            tally_tile(read_tile(test, grid, (0, 0), validate=False),
                       read_tile(ref, grid, (0, 0)), None, acc)

    def test_merge_is_a_monoid(self, tl, rl):
        rng = np.random.default_rng(23)
        accs = []
        for seed in range(3):
            test, ref = random_pair(tl, rl, (8, 9), seed)
            acc = TallyAccumulator.zero(tl, rl)
            grid = TileGrid.for_raster(test, 4)
            for idx in grid.indices():
                tally_tile(read_tile(test, grid, idx),
                           read_tile(ref, grid, idx), None, acc)
            accs.append(acc)
        a, b, c = accs
        left = merge(merge(a, b), c)
        right = merge(a, merge(b, c))
        assert np.array_equal(left.counts, right.counts)
        assert left.valid == right.valid
        swapped = merge(b, a)
        assert np.array_equal(swapped.counts, merge(a, b).counts)
        zero = TallyAccumulator.zero(tl, rl)
        assert np.array_equal(merge(a, zero).counts, a.counts)

    def test_merge_rejects_different_keying(self, tl, rl):
        a = TallyAccumulator.zero(tl, rl)
        b = TallyAccumulator.zero(tl, rl, test_nodata=255)
        with pytest.raises(ValidationError, match="merge"):
            merge(a, b)


class TestStreamed:
    def test_tile_size_invariance(self, tl, rl):
        test, ref = random_pair(tl, rl, (31, 45), seed=7)
        baseline = crosstab_streamed(test, ref, tile_size=(45, 31))
        for tile_size in (1, 3, 8, (5, 2), 64):
            ct = crosstab_streamed(test, ref, tile_size=tile_size)
            assert np.array_equal(ct.counts, baseline.counts)
            assert ct.valid_total == baseline.valid_total
            assert ct.excluded_total == baseline.excluded_total

    def test_thread_invariance(self, tl, rl):
        test, ref = random_pair(tl, rl, (64, 51), seed=8)
        baseline = crosstab_streamed(test, ref, tile_size=16)
        threaded = crosstab_streamed(test, ref, tile_size=16, threads=4)
        assert np.array_equal(threaded.counts, baseline.counts)

    def test_alignment_failure(self, tl, rl):
        test, _ = random_pair(tl, rl, (10, 10), seed=1)
        _, ref = random_pair(tl, rl, (10, 11), seed=1)
        with pytest.raises(ValidationError, match="alignment failure"):
            crosstab_streamed(test, ref)

    def test_every_pixel_lands_somewhere(self, tl, rl):
        test, ref = random_pair(tl, rl, (40, 40), seed=9, nodata_share=0.3)
        ct = crosstab_streamed(test, ref, tile_size=13)
        assert ct.valid_total + ct.excluded_total == 1600


class TestStratifiedStream:
    def test_strata_partition_the_total(self, tl, rl, sl):
        test, ref = random_pair(tl, rl, (33, 27), seed=11)
        rng = np.random.default_rng(12)
        s = rng.choice([1, 2, 9], size=(33, 27)).astype(np.uint8)
        strata = StratumSet(from_array(s, 9, sl))
        result = crosstab_streamed(test, ref, strata, tile_size=10)
        assert sorted(result.per_stratum) == [1, 2]
        stacked = sum(ct.counts for ct in result.per_stratum.values())
        stacked = stacked + result.nodata_stratum.counts
        assert np.array_equal(stacked, result.total.counts)
        valid = sum(ct.valid_total for ct in result.per_stratum.values())
        assert valid + result.nodata_stratum.valid_total \
            == result.total.valid_total

    def test_stratum_alignment_checked(self, tl, rl, sl):
        test, ref = random_pair(tl, rl, (10, 10), seed=2)
        s = np.ones((9, 10), dtype=np.uint8)
        strata = StratumSet(from_array(s, 9, sl))
        with pytest.raises(ValidationError, match="alignment failure"):
            crosstab_streamed(test, ref, strata)


class TestCrossTab:
    def test_counts_must_sum_to_valid_total(self, tl, rl):
        counts = np.array([[1, 2], [3, 4], [5, 6]], dtype=np.int64)
        with pytest.raises(ValidationError):
            CrossTab(tl, rl, counts, valid_total=22, excluded_total=0)

    def test_counts_are_frozen(self, tl, rl):
        counts = np.array([[1, 2], [3, 4], [5, 6]], dtype=np.int64)
        ct = CrossTab(tl, rl, counts, 21, 0)
        with pytest.raises((ValueError, RuntimeError)):
            ct.counts[0, 0] = 99

    def test_margins_and_proportions(self, tl, rl):
        counts = np.array([[10, 0], [0, 30], [5, 5]], dtype=np.int64)
        ct = CrossTab(tl, rl, counts, 50, 7)
        assert ct.row_margins().tolist() == [10, 30, 10]
        assert ct.col_margins().tolist() == [15, 35]
        assert ct.percentages()[1, 1] == pytest.approx(60.0)

    def test_zero_total_proportions(self, tl, rl):
        ct = CrossTab(tl, rl, np.zeros((3, 2), dtype=np.int64), 0, 4)
        assert not ct.proportions().any()

    def test_from_percentages(self, tl, rl):
        cells = [[25.0, 0.0], [0.0, 50.0], [12.5, 12.5]]
        ct = CrossTab.from_percentages(tl, rl, cells, unit=10)
        assert ct.counts.tolist() == [[250, 0], [0, 500], [125, 125]]
        assert ct.valid_total == 1000


class TestAggregate:
    def test_columns(self, tl, rl):
        one = make_legend("one", (0, "ALL"))
        agg = build_aggregation(rl, one, [(5, 0), (6, 0)])
        counts = np.array([[1, 2], [3, 4], [5, 6]], dtype=np.int64)
        ct = CrossTab(tl, rl, counts, 21, 3)
        out = aggregate_crosstab(ct, agg_cols=agg)
        assert out.counts.tolist() == [[3], [7], [11]]
        assert out.valid_total == 21 and out.excluded_total == 3
        assert out.reference_legend is one

    def test_rows(self, tl, rl):
        pair = make_legend("pair", (10, "AB"), (11, "CC"))
        agg = build_aggregation(tl, pair, [(1, 10), (2, 10), (3, 11)])
        counts = np.array([[1, 2], [3, 4], [5, 6]], dtype=np.int64)
        ct = CrossTab(tl, rl, counts, 21, 0)
        out = aggregate_crosstab(ct, agg_rows=agg)
        assert out.counts.tolist() == [[4, 6], [5, 6]]

    def test_source_mismatch(self, tl, rl):
        one = make_legend("one", (0, "ALL"))
        agg = build_aggregation(rl, one, [(5, 0), (6, 0)])
        counts = np.array([[1, 2], [3, 4], [5, 6]], dtype=np.int64)
        ct = CrossTab(tl, rl, counts, 21, 0)
        with pytest.raises(ValidationError, match="does not match"):
            aggregate_crosstab(ct, agg_rows=agg)


class TestCsv:
    def test_count_round_trip(self, tl, rl, tmp_path):
        counts = np.array([[10, 0], [7, 30], [5, 5]], dtype=np.int64)
        ct = CrossTab(tl, rl, counts, 57, 0)
        path = write_crosstab_csv(ct, tmp_path / "ct.csv")
        loaded = load_crosstab_csv(path, tl, rl)
        assert np.array_equal(loaded.counts, counts)
        assert loaded.valid_total == 57

    def test_percent_cells_are_half_up(self, tl, rl, tmp_path):
        counts = np.array([[1, 0], [0, 1], [0, 198]], dtype=np.int64)
        ct = CrossTab(tl, rl, counts, 200, 0)
        path = write_crosstab_csv(ct, tmp_path / "ct.csv", percent=True)
        body = path.read_text().splitlines()
        assert body[1] == "A,0.50,0.00"  # 1/200 is exactly 0.5%
        assert body[3] == "C,0.00,99.00"

    def test_percent_table_loads_scaled(self, tl, rl, tmp_path):
        path = tmp_path / "pct.csv"
        path.write_text("class,X,Y\nA,12.34,0.00\nB,0.00,55.55\n"
                        "C,16.05,16.06\n")
        ct = load_crosstab_csv(path, tl, rl)
        assert ct.counts.tolist() == [[1234, 0], [0, 5555], [1605, 1606]]
        assert ct.valid_total == 10000

    def test_loader_reorders_labels(self, tl, rl, tmp_path):
        path = tmp_path / "shuffled.csv"
        path.write_text("class,Y,X\nC,6,5\nA,2,1\nB,4,3\n")
        ct = load_crosstab_csv(path, tl, rl)
        assert ct.counts.tolist() == [[1, 2], [3, 4], [5, 6]]

    def test_loader_rejects_label_mismatch(self, tl, rl, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("class,X,Y\nA,1,2\nB,3,4\n")
        with pytest.raises(ValidationError, match="row labels"):
            load_crosstab_csv(path, tl, rl)
