"""Exhaustive cell-by-cell comparison of categorical raster maps.

The package streams aligned map pairs tile by tile into integer
cross-tabulations, derives agreement and association metrics that
respect many-to-many legend relations, propagates accuracy intervals
when the reference map is itself imperfect, and synthesizes test pairs
with known joint distributions for verification.
"""

__version__ = "0.1.0"

from .errors import ValidationError
from .legend import (AggregationMap, BinaryRelation, ClassDef, Legend,
                     build_aggregation, load_aggregation, load_legend,
                     load_relation, push_relation)
from .raster import (CategoricalRaster, Tile, TileGrid, from_array,
                     open_raster, read_tile, validate_alignment, write_cmap,
                     write_cmapa)
from .crosstab import (CrossTab, StratifiedCrossTab, StratumSet,
                       TallyAccumulator, aggregate_crosstab,
                       crosstab_streamed, load_crosstab_csv, merge,
                       tally_tile, write_crosstab_csv)
from .metrics import (AssociationResult, BoxplotSummary, ConditionalTable,
                      StratumBoxplots, TemporalStats, association_index,
                      boxplot_summary, class_frequencies,
                      conditional_given_reference, conditional_given_test,
                      overall_agreement, semantic_gap, stratum_boxplots,
                      temporal_consistency, top_k_matches)
from .bounds import (AccuracyInput, Interval, SymbolicInterval,
                     legend_coarsening_check, propagate_interval,
                     propagate_symbolic)
from .synth import (JointSpec, brute_force_crosstab, generate_pair,
                    generate_truth, largest_remainder, perturb)
from ._kernels import available_backends, backend, set_backend

__all__ = [
    "__version__",
    "ValidationError",
    "ClassDef", "Legend", "AggregationMap", "BinaryRelation",
    "load_legend", "build_aggregation", "load_aggregation",
    "load_relation", "push_relation",
    "CategoricalRaster", "Tile", "TileGrid", "open_raster", "from_array",
    "read_tile", "validate_alignment", "write_cmap", "write_cmapa",
    "CrossTab", "StratifiedCrossTab", "StratumSet", "TallyAccumulator",
    "tally_tile", "merge", "crosstab_streamed", "aggregate_crosstab",
    "write_crosstab_csv", "load_crosstab_csv",
    "AssociationResult", "BoxplotSummary", "ConditionalTable",
    "StratumBoxplots", "TemporalStats",
    "overall_agreement", "conditional_given_reference",
    "conditional_given_test", "top_k_matches", "association_index",
    "semantic_gap", "class_frequencies", "temporal_consistency",
    "boxplot_summary", "stratum_boxplots",
    "AccuracyInput", "Interval", "SymbolicInterval",
    "propagate_interval", "propagate_symbolic", "legend_coarsening_check",
    "JointSpec", "generate_pair", "generate_truth", "brute_force_crosstab",
    "perturb", "largest_remainder",
    "available_backends", "backend", "set_backend",
]
