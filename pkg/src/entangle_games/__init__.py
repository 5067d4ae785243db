"""Entanglement-distribution games on fixed quantum network topologies.

Library layout:

- ``topology``: network construction (leader mesh, two-tree network,
  distance-decay random links), validation, JSON schema
- ``quantum``: dense state/density-matrix engine, noise channels, CHSH,
  the quantized 2x2 game, coin-flip consensus
- ``coalition``: multiplayer coalition formation for a source-destination
  path, classical merge-and-split and the entangled referee variant
- ``consensus``: per-node two-way next-hop selection, classical and
  coin/entanglement-assisted rounds
- ``equilibrium``: best-response Nash solver and Wardrop latency equalization
- ``simulation``: time-stepped distribution trials and metric sweeps
- ``cli``: the ``entangle-games`` command-line front end
"""

from .errors import CapacityError, ParameterError, UnreachableError

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "ParameterError",
    "UnreachableError",
    "__version__",
]
