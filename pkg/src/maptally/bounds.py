"""Worst-case propagation of overall-accuracy intervals.

Given the wall-to-wall agreement between a test map and a reference
map (oa_test_vs_ref, known exactly, +/-0) and the accuracy of the
reference map against an ultimate ground truth (oa_ref_vs_truth, a
number or a symbolic ">= XX" lower bound), the superposition argument
bounds the unknown test-vs-truth accuracy:

    lower = oa_test_vs_ref - (100 - oa_ref_vs_truth)
    upper = oa_ref_vs_truth + (100 - oa_test_vs_ref)

clamped into [0, 100]. The unclamped interval is centered on
oa_ref_vs_truth with width exactly 2 * (100 - oa_test_vs_ref).

All percentages are carried as decimal.Decimal, so values parsed from
printed tables propagate bit-exactly at the second decimal place (the
arithmetic involves only addition and subtraction, which Decimal
performs exactly at any scale). Floats are accepted and converted
through repr.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from .errors import ValidationError

_ZERO = Decimal(0)
_HUNDRED = Decimal(100)


def as_percent(value, name: str = "percentage") -> Decimal:
    """Convert to Decimal and require it to lie in [0, 100]."""
    if isinstance(value, Decimal):
        dec = value
    elif isinstance(value, float):
        dec = Decimal(repr(value))
    else:
        try:
            dec = Decimal(value)
        except (InvalidOperation, TypeError, ValueError):
            raise ValidationError(
                f"{name}: cannot parse {value!r} as a percentage") from None
    if not _ZERO <= dec <= _HUNDRED:
        raise ValidationError(f"{name}: {dec} outside [0, 100]")
    return dec


@dataclass(frozen=True)
class Interval:
    """A closed percentage interval with its clamping provenance."""

    lower: Decimal
    upper: Decimal
    lower_clamped: bool = False
    upper_clamped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lower", as_percent(self.lower, "lower"))
        object.__setattr__(self, "upper", as_percent(self.upper, "upper"))
        if self.lower > self.upper:
            raise ValidationError(
                f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> Decimal:
        return self.upper - self.lower

    def __contains__(self, value) -> bool:
        return self.lower <= as_percent(value, "value") <= self.upper


@dataclass(frozen=True)
class AccuracyInput:
    """The two accuracies feeding the superposition bound.

    oa_test_vs_ref carries an explicit uncertainty field: wall-to-wall
    agreement is exact, so it is 0 by construction, but a sampled OA
    could later supply a nonzero half-width delta (the bound then uses
    oa_test_vs_ref - delta, the worst case for both endpoints).
    oa_ref_vs_truth is either a number or a symbolic lower bound
    (ref_is_lower_bound=True); a fully symbolic ">= XX" with unknown
    XX leaves it as None.
    """

    oa_test_vs_ref: Decimal
    oa_ref_vs_truth: Decimal | None = None
    ref_is_lower_bound: bool = False
    oa_test_vs_ref_uncertainty: Decimal = _ZERO

    def __post_init__(self):
        object.__setattr__(self, "oa_test_vs_ref",
                           as_percent(self.oa_test_vs_ref, "oa_test_vs_ref"))
        if self.oa_ref_vs_truth is not None:
            object.__setattr__(self, "oa_ref_vs_truth",
                               as_percent(self.oa_ref_vs_truth,
                                          "oa_ref_vs_truth"))
        elif not self.ref_is_lower_bound:
            raise ValidationError(
                "oa_ref_vs_truth missing and not marked symbolic")
        delta = as_percent(self.oa_test_vs_ref_uncertainty,
                           "oa_test_vs_ref_uncertainty")
        object.__setattr__(self, "oa_test_vs_ref_uncertainty", delta)
        if delta > self.oa_test_vs_ref:
            raise ValidationError(
                "uncertainty exceeds oa_test_vs_ref")

    @classmethod
    def parse(cls, oa_test_vs_ref: str,
              oa_ref_vs_truth: str) -> "AccuracyInput":
        """Parse CLI-style inputs; oa_ref_vs_truth accepts '>=XX' forms.

        The token after '>=' may be a number or a symbol (e.g. 'XX'),
        the latter meaning the lower bound itself is unknown.
        """
        text = oa_ref_vs_truth.strip()
        if text.startswith(">="):
            value = text[2:].strip()
            try:
                ref = as_percent(value, "oa_ref_vs_truth")
            except ValidationError:
                if value and value.replace(".", "").isalpha():
                    ref = None  # symbolic placeholder such as XX
                else:
                    raise
            return cls(as_percent(oa_test_vs_ref, "oa_test_vs_ref"),
                       ref, ref_is_lower_bound=True)
        return cls(as_percent(oa_test_vs_ref, "oa_test_vs_ref"),
                   as_percent(text, "oa_ref_vs_truth"))

    @property
    def worst_case_oa_test(self) -> Decimal:
        return self.oa_test_vs_ref - self.oa_test_vs_ref_uncertainty


def propagate_interval(inp: AccuracyInput) -> Interval:
    """The clamped superposition interval for numeric inputs."""
    if inp.ref_is_lower_bound or inp.oa_ref_vs_truth is None:
        raise ValidationError(
            "oa_ref_vs_truth is a symbolic lower bound: use "
            "propagate_symbolic")
    oa_t = inp.worst_case_oa_test
    oa_r = inp.oa_ref_vs_truth
    lower_raw = oa_t - (_HUNDRED - oa_r)
    upper_raw = oa_r + (_HUNDRED - oa_t)
    lower_clamped = lower_raw < _ZERO
    upper_clamped = upper_raw > _HUNDRED
    return Interval(max(_ZERO, lower_raw), min(_HUNDRED, upper_raw),
                    lower_clamped, upper_clamped)


@dataclass(frozen=True)
class SymbolicInterval:
    """The bound as an affine pair [XX - hw, XX + hw] in the unknown XX.

    half_width = 100 - oa_test_vs_ref (after uncertainty widening).
    The clamp rule is recorded rather than applied, since XX is
    unknown; substitute() applies it for a concrete XX.
    """

    half_width: Decimal
    known_lower_bound: Decimal | None = None

    @property
    def lower_expr(self) -> str:
        return f"XX - {self.half_width}"

    @property
    def upper_expr(self) -> str:
        return f"XX + {self.half_width}"

    @property
    def clamp_rule(self) -> str:
        return (f"lower clamps to 0 when XX < {self.half_width}; "
                f"upper clamps to 100 when XX > {_HUNDRED - self.half_width}")

    def substitute(self, xx) -> Interval:
        xx = as_percent(xx, "XX")
        lower_raw = xx - self.half_width
        upper_raw = xx + self.half_width
        return Interval(max(_ZERO, lower_raw), min(_HUNDRED, upper_raw),
                        lower_raw < _ZERO, upper_raw > _HUNDRED)


def propagate_symbolic(inp: AccuracyInput) -> SymbolicInterval:
    """The bound when oa_ref_vs_truth is only a lower bound '>= XX'."""
    if not inp.ref_is_lower_bound:
        raise ValidationError(
            "oa_ref_vs_truth is numeric: use propagate_interval")
    return SymbolicInterval(_HUNDRED - inp.worst_case_oa_test,
                            inp.oa_ref_vs_truth)


def legend_coarsening_check(oas) -> bool:
    """True iff accuracy is non-decreasing as legends coarsen.

    `oas` is an ordered list of (legend cardinality, oa_ref_vs_truth)
    with strictly decreasing cardinalities; used as a data-sanity gate
    before chaining bounds across aggregation levels.
    """
    entries = [(int(card), as_percent(oa, f"oa at cardinality {card}"))
               for card, oa in oas]
    for (card_a, _), (card_b, _) in zip(entries, entries[1:]):
        if card_b >= card_a:
            raise ValidationError(
                "legend cardinalities must strictly decrease "
                f"({card_a} followed by {card_b})")
    return all(oa_a <= oa_b
               for (_, oa_a), (_, oa_b) in zip(entries, entries[1:]))
