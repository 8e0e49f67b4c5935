"""Named protocol stacks used by the CLI and the experiments."""
from __future__ import annotations

from .apps import counting_layer, leader_layer, majority_layer, two_colour_layer
from .coloring import ALPHA, colouring_layer
from .engine import ProtocolStack, compose
from .graph import InvalidParameter
from .orientation import orientation_layer

STACK_NAMES = ("coloring", "orientation", "leader", "majority", "two-colour", "count", "full")


def make_stack(name: str, alpha: int = ALPHA, root: int = 0) -> ProtocolStack:
    """Build a named stack.

    ``orientation`` runs over a fixed greedy colouring; ``majority`` runs on a
    tree pre-oriented toward ``root``; ``leader``, ``two-colour`` and ``count``
    run on top of colouring and orientation; ``full`` is colouring +
    orientation + majority.
    """
    key = name.lower().replace("_", "-")
    if key in ("colouring", "coloring"):
        layers = [colouring_layer()]
    elif key == "orientation":
        layers = [orientation_layer()]
    elif key == "majority":
        layers = [majority_layer()]
    elif key == "leader":
        layers = [colouring_layer(), orientation_layer(), leader_layer()]
    elif key in ("two-colour", "two-color"):
        layers = [colouring_layer(), orientation_layer(), two_colour_layer()]
    elif key == "count":
        layers = [colouring_layer(), orientation_layer(), counting_layer()]
    elif key == "full":
        layers = [colouring_layer(), orientation_layer(), majority_layer()]
    else:
        raise InvalidParameter(f"unknown stack {name!r}; choose from {', '.join(STACK_NAMES)}")
    return compose(layers, name=key, alpha=alpha, root=root)
