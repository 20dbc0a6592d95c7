from decimal import Decimal

import pytest

from maptally import (AccuracyInput, ValidationError,
                      legend_coarsening_check, propagate_interval,
                      propagate_symbolic)
from maptally.bounds import as_percent


class TestAsPercent:
    def test_accepts_str_float_decimal(self):
        assert as_percent("96.88", "x") == Decimal("96.88")
        assert as_percent(78.0, "x") == Decimal("78.0")
        assert as_percent(Decimal("5"), "x") == Decimal("5")

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError, match="x"):
            as_percent("100.01", "x")
        with pytest.raises(ValidationError):
            as_percent(-0.5, "y")

    def test_rejects_garbage(self):
        with pytest.raises(ValidationError):
            as_percent("ninety", "x")


class TestParse:
    def test_numeric(self):
        inp = AccuracyInput.parse("96.88", "78")
        assert inp.oa_ref_vs_truth == Decimal("78")
        assert not inp.ref_is_lower_bound

    def test_numeric_lower_bound(self):
        inp = AccuracyInput.parse("93.09", ">= 84")
        assert inp.ref_is_lower_bound
        assert inp.oa_ref_vs_truth == Decimal("84")

    def test_symbolic_lower_bound(self):
        inp = AccuracyInput.parse("93.09", ">=XX")
        assert inp.ref_is_lower_bound
        assert inp.oa_ref_vs_truth is None

    def test_symbolic_requires_flag(self):
        with pytest.raises(ValidationError):
            AccuracyInput(Decimal("90"), None)


class TestInterval:
    def test_exact_decimal_arithmetic(self):
        interval = propagate_interval(AccuracyInput.parse("96.88", "78"))
        assert (interval.lower, interval.upper) == (Decimal("74.88"),
                                                    Decimal("81.12"))
        assert not interval.lower_clamped and not interval.upper_clamped
        assert interval.width == Decimal("6.24")

    def test_width_is_twice_the_complement(self):
        for oa_t, oa_r in (("97.28", "78"), ("95.41", "78"),
                           ("93.09", "84")):
            interval = propagate_interval(AccuracyInput.parse(oa_t, oa_r))
            assert interval.width == 2 * (Decimal("100") - Decimal(oa_t))

    def test_truth_value_inside(self):
        interval = propagate_interval(AccuracyInput.parse("96.88", "78"))
        assert Decimal("78") in interval
        assert Decimal("74.88") in interval  # bounds are inclusive
        assert Decimal("74.87") not in interval

    def test_lower_clamp(self):
        interval = propagate_interval(AccuracyInput.parse("60", "30"))
        assert interval.lower == Decimal("0")
        assert interval.lower_clamped
        assert interval.upper == Decimal("70")

    def test_upper_clamp(self):
        interval = propagate_interval(AccuracyInput.parse("99", "99.5"))
        assert interval.upper == Decimal("100")
        assert interval.upper_clamped
        assert interval.lower == Decimal("98.5")

    def test_uncertainty_widens_both_sides(self):
        base = propagate_interval(AccuracyInput.parse("96.88", "78"))
        widened = propagate_interval(AccuracyInput(
            Decimal("96.88"), Decimal("78"),
            oa_test_vs_ref_uncertainty=Decimal("0.5")))
        assert widened.lower == base.lower - Decimal("0.5")
        assert widened.upper == base.upper + Decimal("0.5")

    def test_symbolic_input_rejected(self):
        inp = AccuracyInput.parse("93.09", ">=XX")
        with pytest.raises(ValidationError, match="propagate_symbolic"):
            propagate_interval(inp)


class TestSymbolic:
    def test_half_width_and_expressions(self):
        symbolic = propagate_symbolic(AccuracyInput.parse("93.09", ">=XX"))
        assert symbolic.half_width == Decimal("6.91")
        assert symbolic.lower_expr == "XX - 6.91"
        assert symbolic.upper_expr == "XX + 6.91"
        assert "clamp" in symbolic.clamp_rule

    def test_substitute(self):
        symbolic = propagate_symbolic(AccuracyInput.parse("93.09", ">=XX"))
        interval = symbolic.substitute("84")
        assert interval.lower == Decimal("77.09")
        assert interval.upper == Decimal("90.91")
        clamped = symbolic.substitute("96")
        assert clamped.upper == Decimal("100") and clamped.upper_clamped

    def test_known_lower_bound_carried(self):
        symbolic = propagate_symbolic(AccuracyInput.parse("93.09", ">=84"))
        assert symbolic.known_lower_bound == Decimal("84")

    def test_numeric_input_rejected(self):
        with pytest.raises(ValidationError, match="propagate_interval"):
            propagate_symbolic(AccuracyInput.parse("96.88", "78"))


class TestCoarseningCheck:
    def test_non_decreasing_passes(self):
        assert legend_coarsening_check([(19, "93.09"), (4, "93.11")])

    def test_decreasing_oa_fails(self):
        assert not legend_coarsening_check([(19, "95"), (4, "94")])

    def test_cardinality_must_strictly_decrease(self):
        with pytest.raises(ValidationError, match="strictly decrease"):
            legend_coarsening_check([(4, "90"), (4, "91")])
