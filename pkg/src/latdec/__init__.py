"""Lattice decoding for sequence generation.

Best-first search with depth-first path completion and hypothesis
recombination builds compact lattices encoding many generation options;
baseline decoders and a metric suite quantify the diversity/quality
trade-offs at matched model-call budgets.
"""

from .bridge import BridgeModel
from .errors import (BudgetExhausted, ConfigError, LatdecError, ModelError,
                     ParseError, StructuralError)
from .lattice import GEN, MRG, Lattice, LatticeNode, Path
from .models import (BudgetMeter, MarkovModel, MeteredScorer, TableModel,
                     TokenDistribution, train_markov)
from .recomb import (MergeEvent, MergeIndex, RecombConfig, do_recomb_rcb,
                     do_recomb_zip, is_recomb, validate_merges,
                     zbeam_candidates)
from .search import (SearchConfig, SearchResult, decode, decode_beam,
                     decode_bfs, decode_diverse_beam, decode_greedy,
                     decode_sampling, effective_budget)

__all__ = [
    "BridgeModel", "BudgetExhausted", "BudgetMeter", "ConfigError", "GEN",
    "Lattice", "LatticeNode", "LatdecError", "MarkovModel", "MergeEvent",
    "MergeIndex", "MeteredScorer", "ModelError", "MRG", "ParseError", "Path",
    "RecombConfig", "SearchConfig", "SearchResult", "StructuralError",
    "TableModel", "TokenDistribution", "decode", "decode_beam", "decode_bfs",
    "decode_diverse_beam", "decode_greedy", "decode_sampling",
    "do_recomb_rcb", "do_recomb_zip", "effective_budget", "is_recomb",
    "train_markov", "validate_merges", "zbeam_candidates",
]
