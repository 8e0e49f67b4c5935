"""Population protocols on trees: 2-hop colouring, orientation, and token applications."""
from ._jit import NUMBA_ENABLED
from .engine import (
    CompositionError,
    Configuration,
    ProtocolLayer,
    ProtocolStack,
    RoundTracker,
    RunRecord,
    Schedule,
    Simulation,
    advance_round_tracker,
    compose,
    run_until_stable,
    step,
)
from .graph import Graph, GraphDescriptor, InvalidParameter
from .stacks import make_stack

__version__ = "0.1.0"
