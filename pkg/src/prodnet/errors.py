"""Exception hierarchy for prodnet.

Every error raised by the package derives from :class:`ProdnetError` so
callers can catch one base class at CLI boundaries.
"""

from __future__ import annotations


class ProdnetError(Exception):
    """Base class for all package errors."""


# --- network construction ---------------------------------------------------

class DuplicateEdgeError(ProdnetError):
    """Two edges share the same (src, dst) pair."""


class SelfLoopError(ProdnetError):
    """A self-loop on a node that is not the designated proxy."""


class EdgeIndexError(ProdnetError):
    """An edge endpoint falls outside [0, n_nodes)."""


class NonPositiveWeightError(ProdnetError):
    """An edge weight is zero, negative, or not finite."""


class SizeMismatchError(ProdnetError):
    """Array arguments disagree on length."""


# --- synthetic economies ----------------------------------------------------

class InfeasibleConfigError(ProdnetError):
    """Generator configuration cannot produce a valid economy."""


class UnlabeledNodeError(ProdnetError):
    """A node is missing a sector label."""


# --- sampling / test-network construction -----------------------------------

class EmptySelectionError(ProdnetError):
    """No firm survives the selection filters."""


class TargetExceedsEdgesError(ProdnetError):
    """Requested kept-edge count exceeds the edges available."""


class ZeroSectorDenominatorError(ProdnetError):
    """A sector ratio has a zero denominator but live members."""


# --- reconstruction ---------------------------------------------------------

class UnbalancedTotalsError(ProdnetError):
    """Row and column totals disagree beyond tolerance."""


class InfeasibleSupportError(ProdnetError):
    """A node has a positive target but no usable incident edges."""


class InvalidConfidenceLevelError(ProdnetError):
    """Interval mass parameters outside their admissible range."""


# --- coefficients and centralities ------------------------------------------

class ZeroTotalCostError(ProdnetError):
    """A node with incoming edges has zero total cost."""


class ZeroTotalSalesError(ProdnetError):
    """A node with outgoing edges has zero total sales."""


class NonStochasticColumnsError(ProdnetError):
    """Input-share columns do not sum to one where they should."""


class DivergentSeriesError(ProdnetError):
    """The multiplier series does not converge."""


# --- shocks -----------------------------------------------------------------

class PartitionError(ProdnetError):
    """A node partition is not a partition."""


class OverlappingPartitionError(PartitionError):
    """Two partition groups share a node."""


# --- financial-statement harmonization --------------------------------------

class ZeroDenominatorError(ProdnetError):
    """A labour-share ratio has a zero denominator."""


class EmptySectorWindowError(ProdnetError):
    """No disclosing firm in a sector's estimation window."""


class UncoveredSectorYearError(ProdnetError):
    """A fitted share model does not cover the requested sector-year."""


class RatioOutOfRangeError(ProdnetError):
    """Sector ratios leave no room for a non-negative remainder."""


# --- metrics ----------------------------------------------------------------

class DegenerateRangeError(ProdnetError):
    """Normalization span is zero: all empirical values equal."""


class ZeroVectorError(ProdnetError):
    """Cosine similarity of a zero vector is undefined."""


class EdgeSetMismatchError(ProdnetError):
    """Aligned edge arrays disagree on length or keys."""


class EmptyInputError(ProdnetError):
    """An operation received an empty sample."""


class InsufficientTailError(ProdnetError):
    """Too few tail points for a power-law fit."""


# --- pipeline / CLI ---------------------------------------------------------

class ConfigError(ProdnetError):
    """Invalid run configuration."""


class UnknownKeyError(ConfigError):
    """Configuration contains a key the schema does not define."""


class ConfigTypeError(ConfigError):
    """Configuration value has the wrong type."""


class ConfigRangeError(ConfigError):
    """Configuration value outside its allowed range."""


class InputUnreadableError(ProdnetError):
    """An input file is missing or cannot be parsed."""


class ReplicateFailureError(ProdnetError):
    """One or more pipeline replicates failed."""
