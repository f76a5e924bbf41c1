"""Sidecar scoring service for the lattice decoding engine.

Serves next-token log-probabilities over newline-delimited JSON on
stdio: ops ``hello``, ``score``, ``bye``. Backends: an exact table
replayer (for tests and cross-checks) and a lazy wrapper around
pretrained sequence-to-sequence checkpoints.
"""

from .backends import TableBackend
from .server import PROTOCOL_VERSION, serve

__all__ = ["PROTOCOL_VERSION", "TableBackend", "serve"]
