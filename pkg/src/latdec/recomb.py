"""Merge criterion and merge strategies for hypothesis recombination.

A popped hypothesis merges into an existing node when their canonical
paths share a token n-gram suffix and their lengths differ by less than
a tolerance. Three strategies realize the merge:

* ``zbeam`` -- beam-search-local: targets restricted to nodes on the
  current beam's canonical paths; one node absorbed per merge.
* ``rcb`` -- global: targets found through a suffix hash index over all
  explored nodes; one node absorbed per merge.
* ``zip`` -- like ``rcb`` but the merge propagates backwards through the
  lattice, unifying up to n node pairs and deleting the absorbed chain
  together with its unexplored frontier successors.

Merges never call the scoring model, so they cost no search budget.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError
from .lattice import Lattice, Path

STRATEGIES = ("none", "zbeam", "rcb", "zip")


@dataclass(frozen=True)
class RecombConfig:
    strategy: str = "none"
    suffix_n: int = 4
    alpha: int = 2

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown recombination strategy {self.strategy!r}")
        if self.suffix_n < 1:
            raise ConfigError("suffix_n must be >= 1")
        if self.alpha < 1:
            raise ConfigError("alpha must be >= 1")

    @property
    def enabled(self) -> bool:
        return self.strategy != "none"


@dataclass
class MergeEvent:
    """Record of one doRecomb invocation (accepted or rejected)."""

    popped: int
    target: int
    strategy: str
    merged: tuple[int, ...]
    popped_tokens: tuple[int, ...]
    target_tokens: tuple[int, ...]
    expansion_index: int
    accepted: bool
    reason: str | None = None
    deduped_successors: int = 0

    @property
    def merged_count(self) -> int:
        return len(self.merged)

    def to_json_dict(self) -> dict:
        return {
            "popped": self.popped, "target": self.target, "strategy": self.strategy,
            "merged": list(self.merged), "merged_count": self.merged_count,
            "popped_tokens": list(self.popped_tokens),
            "target_tokens": list(self.target_tokens),
            "expansion_index": self.expansion_index, "accepted": self.accepted,
            "reason": self.reason, "deduped_successors": self.deduped_successors,
        }


def _tokens_of(path_or_tokens) -> tuple[int, ...]:
    if isinstance(path_or_tokens, Path):
        return path_or_tokens.tokens
    return tuple(path_or_tokens)


def is_recomb(a, b, config: RecombConfig) -> bool:
    """Merge criterion: equal last-n tokens and length gap below alpha.

    Paths shorter than the suffix length simply fail the check. There is
    deliberately no constraint on model scores.
    """
    ta, tb = _tokens_of(a), _tokens_of(b)
    n = config.suffix_n
    if len(ta) < n or len(tb) < n:
        return False
    if abs(len(ta) - len(tb)) >= config.alpha:
        return False
    return ta[-n:] == tb[-n:]


class MergeIndex:
    """Hash index from n-gram canonical suffixes to live node ids.

    Candidate lists keep insertion order; entries for merged-away nodes
    are purged lazily on lookup.
    """

    def __init__(self, lattice: Lattice, n: int):
        self.lattice = lattice
        self.n = n
        self._by_suffix: dict[tuple[int, ...], list[int]] = {}

    def add(self, node_id: int) -> None:
        key = self.lattice.canonical_suffix(node_id, self.n)
        if key is not None:
            self._by_suffix.setdefault(key, []).append(node_id)

    def candidates(self, suffix: tuple[int, ...]) -> list[int]:
        bucket = self._by_suffix.get(suffix)
        if not bucket:
            return []
        live = [i for i in bucket if self.lattice.is_live(i)]
        if len(live) != len(bucket):
            self._by_suffix[suffix] = live
        return list(live)

    def __len__(self) -> int:
        return sum(len(b) for b in self._by_suffix.values())


def find_merge_target(lattice: Lattice, index: MergeIndex, node_id: int,
                      config: RecombConfig, restrict: set[int] | None = None) -> int | None:
    """Earliest-inserted live node satisfying the merge criterion.

    The index bucket already guarantees the shared suffix, so only the
    length gate remains. ``restrict`` narrows the candidate set (used by
    the beam-local strategy).
    """
    suffix = lattice.canonical_suffix(node_id, config.suffix_n)
    if suffix is None:
        return None
    depth = lattice.node(node_id).depth
    for cand in index.candidates(suffix):
        if cand == node_id:
            continue
        if restrict is not None and cand not in restrict:
            continue
        if abs(depth - lattice.node(cand).depth) < config.alpha:
            return cand
    return None


def zbeam_candidates(lattice: Lattice, beam_nodes) -> set[int]:
    """Nodes on the canonical paths of the current beam hypotheses."""
    allowed: set[int] = set()
    for tip in beam_nodes:
        nid = lattice.resolve(tip)
        while nid is not None and nid not in allowed:
            if nid != lattice.sos:
                allowed.add(nid)
            nid = lattice.gen_parent_of(nid) if nid != lattice.sos else None
    return allowed


def do_recomb_rcb(lattice: Lattice, index: MergeIndex, popped: int, target: int,
                  expansion_index: int = 0, strategy: str = "rcb") -> MergeEvent:
    """Absorb the popped node into the target: one MRG edge from the
    popped node's parent, one node removed, no model call."""
    popped = lattice.resolve(popped)
    target = lattice.resolve(target)
    popped_tokens = lattice.canonical_path(popped).tokens
    target_tokens = lattice.canonical_path(target).tokens
    parent = lattice.gen_parent_of(popped)
    accepted = lattice.add_mrg_edge(parent, target)
    if accepted:
        lattice.absorb_node(popped, target)
        return MergeEvent(popped, target, strategy, (popped,),
                          popped_tokens, target_tokens, expansion_index, True)
    return MergeEvent(popped, target, strategy, (),
                      popped_tokens, target_tokens, expansion_index, False, "cycle")


def _reaches_with_aliases(lattice: Lattice, start: int, goal: int,
                          alias: dict[int, int]) -> bool:
    """Reachability in the graph that will exist after unifying the alias
    pairs (each key treated as its value, edges translated accordingly)."""
    co: dict[int, list[int]] = {}
    for dead, live in alias.items():
        co.setdefault(live, []).append(dead)

    def translate(x: int) -> int:
        return alias.get(x, x)

    start, goal = translate(start), translate(goal)
    if start == goal:
        return True
    seen = {start}
    queue = deque((start,))
    while queue:
        u = queue.popleft()
        sources = [u] + co.get(u, [])
        for s in sources:
            for v, _ in lattice.out_edges(s):
                v = translate(v)
                if v == goal:
                    return True
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
    return False


def do_recomb_zip(lattice: Lattice, index: MergeIndex, popped: int, target: int,
                  config: RecombConfig, expansion_index: int = 0) -> MergeEvent:
    """Backward-propagating merge: walk the two GEN chains in lockstep
    while tokens match, unify up to n pairs, and attach the earliest
    matched pair's parent to its target-side counterpart with one MRG edge.

    The walk also stops at chain convergence and at any popped-side node
    that still has other live GEN children: absorbing such a node would
    re-root an explored branch onto a different history, silently changing
    its canonical scores. Stopping there keeps every surviving canonical
    path byte-identical to its pre-merge value.
    """
    popped = lattice.resolve(popped)
    target = lattice.resolve(target)
    popped_tokens = lattice.canonical_path(popped).tokens
    target_tokens = lattice.canonical_path(target).tokens

    pairs: list[tuple[int, int]] = [(popped, target)]
    p_side, q_side = {popped}, {target}
    while len(pairs) < config.suffix_n:
        prev_p, prev_q = pairs[-1]
        p = lattice.gen_parent_of(prev_p)
        q = lattice.gen_parent_of(prev_q)
        if p is None or q is None or p == lattice.sos or q == lattice.sos:
            break
        if p == q or p in q_side or q in p_side:
            break
        if lattice.node(p).token != lattice.node(q).token:
            break
        others = [c for c in lattice.gen_children_of(p) if c != prev_p]
        if others:
            break
        pairs.append((p, q))
        p_side.add(p)
        q_side.add(q)

    last_p, last_q = pairs[-1]
    attach_src = lattice.gen_parent_of(last_p)
    alias = dict(pairs)
    if _reaches_with_aliases(lattice, last_q, attach_src, alias):
        lattice.rejected_merges += 1
        return MergeEvent(popped, target, "zip", (),
                          popped_tokens, target_tokens, expansion_index, False, "cycle")
    for p, q in pairs:
        lattice.absorb_node(p, q)
    linked = lattice.add_mrg_edge(attach_src, last_q)
    assert linked, "feasibility pre-check guarantees the merge edge"
    return MergeEvent(popped, target, "zip", tuple(p for p, _ in pairs),
                      popped_tokens, target_tokens, expansion_index, True)


def validate_merges(model, events: Sequence[MergeEvent], horizon: int) -> float:
    """Exact-match fraction of greedy continuations after each merge.

    Both pre-merge canonical prefixes are greedily continued for
    ``horizon`` tokens with an unmetered model; the fraction of events
    whose continuations coincide estimates how often merged hypotheses
    were weakly equivalent.
    """
    accepted = [e for e in events if e.accepted]
    if not accepted:
        raise ConfigError("no accepted merge events to validate")
    matches = 0
    for event in accepted:
        ca = _greedy_continuation(model, event.popped_tokens, horizon)
        cb = _greedy_continuation(model, event.target_tokens, horizon)
        matches += ca == cb
    return matches / len(accepted)


def _greedy_continuation(model, tokens: tuple[int, ...], horizon: int) -> tuple[int, ...]:
    ids = (model.sos_id,) + tuple(tokens)
    out = []
    for _ in range(horizon):
        if ids[-1] == model.eos_id:
            break
        t = model.score(ids).argmax()
        out.append(t)
        ids = ids + (t,)
    return tuple(out)
