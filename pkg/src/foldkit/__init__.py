"""Iterative bipartite token reduction and the instruments used to study it."""

__version__ = "0.1.0"

from .aggregation import AggregationScheme, aggregate, aggregate_rows
from .analysis import (
    EnergyProfile,
    TransportPlan,
    aggregation_sweep,
    emd,
    energy,
    energy_sweep,
    min_tokens,
    propagation_profile,
    propagation_sweep,
    schedule_sweep,
)
from .encoder import (
    EncoderConfig,
    ReductionSchedule,
    forward,
    forward_unhooked,
    init_encoder,
    make_schedule,
    parse_schedule,
)
from .errors import (
    ArgumentError,
    CapacityError,
    ConfigurationError,
    DomainError,
    FoldkitError,
    FormatError,
    ShapeError,
)
from .folder import FoldTrace, fold_once, folder_reduce, simplified_reduce
from .linalg import svd
from .matching import MatchContext, best_matches, get_scorer
from .synthetic import generate_tokens
from .tokenseq import TokenSequence, new_sequence
