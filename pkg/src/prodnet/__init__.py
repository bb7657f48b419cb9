"""prodnet: reconstruction and shock analysis of firm-level production networks.

The workflow surface is re-exported here; each piece also lives in its own
module: graph containers in ``network``, the synthetic economy generator in
``synth``, trimming and proxy aggregation in ``sampling``, weight
reconstruction in ``recon``, input-output coefficients in ``coeffs``, shock
propagation in ``shocks``, accounting harmonization in ``harmonize``, scoring
helpers in ``metrics``, and the replication pipeline in ``pipeline`` with its
command line in ``cli``.
"""

from __future__ import annotations

from .coeffs import (
    allocation_coefficients,
    influence_from_shares,
    influence_vector,
    input_shares,
    output_multipliers,
    technical_coefficients,
)
from .errors import ProdnetError
from .harmonize import (
    clean_accounting,
    fit_labour_share,
    heldout_rmse,
    split_cogs,
)
from .io import load_economy
from .metrics import (
    ci_coverage,
    cosine_similarity,
    normalized_errors,
    powerlaw_fit,
)
from .network import (
    NodeAccounts,
    Topology,
    WeightedNetwork,
    build_network,
    build_topology,
    degrees,
    strengths,
    validate_accounts,
)
from .pipeline import RunConfig, parse_config, run_pipeline
from .recon import (
    ReconstructionResult,
    fit_crem,
    ipf_balance,
    maxent_prescription,
    sample_ensemble,
    weight_confidence_interval,
)
from .sampling import (
    TrimPlan,
    aggregate_proxy,
    impute_from_sectors,
    select_top_firms,
    trim_links,
)
from .shocks import (
    aggregate_volatility,
    draw_shock_panel,
    proxied_panel,
    variance_shares,
)
from .synth import GroundTruth, SynthConfig, derive_sector_table, generate_ground_truth

__version__ = "0.1.0"

__all__ = [
    "ProdnetError",
    "Topology",
    "WeightedNetwork",
    "NodeAccounts",
    "build_topology",
    "build_network",
    "strengths",
    "degrees",
    "validate_accounts",
    "SynthConfig",
    "GroundTruth",
    "generate_ground_truth",
    "derive_sector_table",
    "TrimPlan",
    "select_top_firms",
    "trim_links",
    "aggregate_proxy",
    "impute_from_sectors",
    "ReconstructionResult",
    "maxent_prescription",
    "ipf_balance",
    "fit_crem",
    "weight_confidence_interval",
    "sample_ensemble",
    "technical_coefficients",
    "allocation_coefficients",
    "input_shares",
    "output_multipliers",
    "influence_vector",
    "influence_from_shares",
    "draw_shock_panel",
    "proxied_panel",
    "aggregate_volatility",
    "variance_shares",
    "fit_labour_share",
    "split_cogs",
    "clean_accounting",
    "heldout_rmse",
    "normalized_errors",
    "cosine_similarity",
    "ci_coverage",
    "powerlaw_fit",
    "load_economy",
    "RunConfig",
    "parse_config",
    "run_pipeline",
    "__version__",
]
