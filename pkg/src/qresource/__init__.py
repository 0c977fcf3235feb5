"""Convex resource quantifiers for quantum states, channels and tuples.

Modules
-------
linalg, quantum
    Hermitian linear algebra, states, channels (Choi representation).
sdp
    Dense primal-dual interior-point solver for block SDPs.
freesets
    Free sets and their cone descriptions.
measures
    Generalized/free robustness, convex weight, max-relative entropy.
games
    Input-output games built from dual witnesses.
approx
    Truncation schemes and approximate quantifier sweeps.
"""

from .approx import TruncationScheme, approximate_quantifier
from .freesets import (
    CompatibleTuple,
    EntanglementBreakingPpt,
    GroupSymmetric,
    Incoherent,
    MarginalCompatible,
    PptSeparable,
)
from .games import QuantumGame, payoff, verify_advantage, verify_weight_advantage, witness_to_game
from .linalg import NumericalError, ValidationError
from .measures import e_max, max_relative_entropy, robustness, tuple_robustness, tuple_weight, weight
from .quantum import ChoiChannel

__version__ = "0.1.0"
