"""Post-selected nonlinear qutrit protocol and quantum state identification."""

__version__ = "0.1.0"

from .core import (
    EPS_ZERO,
    CoeffPair,
    DegenerateState,
    QutritError,
    QutritState,
    TwoQutritState,
    ZeroProbability,
    make_state,
    coeffs_of,
)
from .protocol import (
    AttractorLabel,
    ZeroCoefficient,
    circuit_step,
    classify,
    iterate_map,
    map_step,
    p1_after,
    survival_prob,
)
from .qsi import (
    CandidateSet,
    DecisionMode,
    DegenerateThetas,
    Indeterminate,
    NonConvergence,
    identify,
    success_probability,
)
