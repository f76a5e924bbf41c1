"""Decoding strategies: greedy, beam, diverse beam, sampling, and
best-first search with depth-first path completion.

Every decoder emits a lattice and draws model calls through one budget
meter, so strategies are comparable at a fixed number of expansions. The
best-first decoder pushes each expansion's greedy child at a dedicated
top-priority tier, which drives every partial hypothesis to an end token
and keeps its pruning waste at zero.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from heapq import heappop, heappush
from random import Random

from .errors import BudgetExhausted, ConfigError
from .lattice import DEFAULT_PATH_CAP, Lattice
from .models import BudgetMeter, MeteredScorer
from .recomb import (MergeIndex, RecombConfig, do_recomb_rcb, do_recomb_zip,
                     find_merge_target, zbeam_candidates)

ALGORITHMS = ("greedy", "beam", "dbs", "nucleus", "temp", "bfs")

# Which recombination strategies each decoder supports.
_RECOMB_SUPPORT = {
    "greedy": ("none",),
    "beam": ("none", "zbeam", "rcb"),
    "dbs": ("none", "zbeam", "rcb"),
    "nucleus": ("none", "rcb"),
    "temp": ("none", "rcb"),
    "bfs": ("none", "rcb", "zip"),
}


@dataclass(frozen=True)
class SearchConfig:
    algorithm: str = "bfs"
    k: int = 1
    budget: int | None = None
    top_k: int = 5
    length_reward: float = 0.0
    nucleus_p: float = 0.9
    temperature: float = 1.5
    groups: int | None = None
    div_strength: float = 1.5
    max_len: int = 32
    seed: int = 0
    recomb: RecombConfig = field(default_factory=RecombConfig)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.k < 1 or self.top_k < 1 or self.max_len < 1:
            raise ConfigError("k, top_k and max_len must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if not 0.0 < self.nucleus_p <= 1.0:
            raise ConfigError("nucleus p must be in (0, 1]")
        if self.temperature <= 0.0:
            raise ConfigError("temperature must be > 0")
        if self.groups is not None and self.groups < 1:
            raise ConfigError("groups must be >= 1")
        if self.recomb.strategy not in _RECOMB_SUPPORT[self.algorithm]:
            raise ConfigError(
                f"recombination {self.recomb.strategy!r} is not supported "
                f"with algorithm {self.algorithm!r}")


@dataclass
class SearchResult:
    lattice: Lattice
    completed_paths: int
    expanded: int
    pruned: int
    diagnostics: dict

    @property
    def merge_events(self):
        return self.diagnostics.get("merge_events", [])


def effective_budget(profile: str, k: int, max_len: int,
                     multiplier: float = 1.0) -> tuple[int, int]:
    """Budget-fairness correction: baselines get an enlarged beam while
    budget-metered methods get ``k * max_len`` model calls."""
    factors = {"translation": 1.5, "summarization": 1.25, "custom": multiplier}
    if profile not in factors:
        raise ConfigError(f"unknown task profile {profile!r}")
    return int(round(k * factors[profile])), k * max_len


def decode(model, source, config: SearchConfig) -> SearchResult:
    fn = {
        "greedy": decode_greedy,
        "beam": decode_beam,
        "dbs": decode_diverse_beam,
        "nucleus": decode_sampling,
        "temp": decode_sampling,
        "bfs": decode_bfs,
    }[config.algorithm]
    return fn(model, source, config)


# ----------------------------------------------------------------------
# shared machinery
# ----------------------------------------------------------------------

class _Run:
    """Per-search mutable state shared by the decoders."""

    def __init__(self, model, config: SearchConfig, budget: int | None):
        self.model = model
        self.config = config
        self.meter = BudgetMeter(budget)
        self.scorer = MeteredScorer(model, self.meter, config.top_k)
        self.lattice = Lattice(model.sos_id, model.token_text(model.sos_id))
        self.index = (MergeIndex(self.lattice, config.recomb.suffix_n)
                      if config.recomb.enabled else None)
        self.events = []
        self.scored: set[int] = set()
        self.forced_nodes: list[int] = []
        self.cum: dict[int, float] = {self.lattice.sos: 0.0}

    def score_node(self, node: int, source):
        path = self.lattice.canonical_path(node)
        dist = self.scorer.score((self.model.sos_id,) + path.tokens, source)
        self.scored.add(node)
        return dist

    def child(self, parent: int, token: int, log_prob: float) -> tuple[int, bool]:
        """Get or create the GEN child of ``parent`` carrying ``token``.

        Reuse keeps identical returned sequences on one path; the model is
        pure, so a shared prefix always stores the same log-probability.
        """
        lat = self.lattice
        is_eos = token == self.model.eos_id
        for c in lat.gen_children_of(parent):
            n = lat.node(c)
            if n.token == token and n.is_eos == is_eos:
                return c, False
        node = lat.add_gen_child(parent, token, self.model.token_text(token),
                                 log_prob, is_eos)
        self.cum[node] = self.cum[parent] + log_prob
        return node, True

    def force_complete(self, node: int) -> int:
        """Terminate a chain without a model call; the ending is flagged."""
        eos = self.model.eos_id
        for c in self.lattice.gen_children_of(node):
            n = self.lattice.node(c)
            if n.is_eos and n.token == eos and n.log_prob == 0.0:
                return c
        fid = self.lattice.add_gen_child(node, eos, self.model.token_text(eos),
                                         0.0, is_eos=True)
        self.forced_nodes.append(fid)
        return fid

    def try_merge(self, node: int, restrict=None) -> bool:
        """Run the merge check on a freshly materialized node.

        Returns True when the node was absorbed; a cycle rejection leaves
        the node in place and the caller expands it normally.
        """
        if self.index is None:
            return False
        target = find_merge_target(self.lattice, self.index, node,
                                   self.config.recomb, restrict=restrict)
        if target is None:
            return False
        if self.config.recomb.strategy == "zip":
            event = do_recomb_zip(self.lattice, self.index, node, target,
                                  self.config.recomb, self.meter.spent)
        else:
            event = do_recomb_rcb(self.lattice, self.index, node, target,
                                  self.meter.spent,
                                  strategy=self.config.recomb.strategy)
        self.events.append(event)
        return event.accepted

    def result(self, diagnostics: dict) -> SearchResult:
        lat = self.lattice
        _, total, saturated = lat.count_paths(DEFAULT_PATH_CAP)
        on_paths = sum(1 for s in self.scored
                       if lat.is_live(lat.remap.find(s)))
        diagnostics.setdefault("merge_events", self.events)
        diagnostics["forced_completions"] = len(self.forced_nodes)
        diagnostics["forced_nodes"] = list(self.forced_nodes)
        diagnostics["path_count_saturated"] = saturated
        diagnostics["rejected_merges"] = lat.rejected_merges
        return SearchResult(lattice=lat, completed_paths=total,
                            expanded=self.meter.spent,
                            pruned=self.meter.spent - on_paths,
                            diagnostics=diagnostics)


# ----------------------------------------------------------------------
# greedy
# ----------------------------------------------------------------------

def decode_greedy(model, source, config: SearchConfig) -> SearchResult:
    run = _Run(model, config, config.budget)
    node = run.lattice.sos
    truncated = False
    for _ in range(config.max_len):
        try:
            dist = run.score_node(node, source)
        except BudgetExhausted:
            run.force_complete(node)
            truncated = True
            break
        token, lp = dist[0]
        node, _ = run.child(node, token, lp)
        if token == model.eos_id:
            break
    else:
        run.force_complete(node)
        truncated = True
    return run.result({"truncated": truncated})


# ----------------------------------------------------------------------
# beam search and diverse beam search
# ----------------------------------------------------------------------

def decode_beam(model, source, config: SearchConfig) -> SearchResult:
    return _beam_engine(model, source, config, n_groups=1, strength=0.0)


def decode_diverse_beam(model, source, config: SearchConfig) -> SearchResult:
    n_groups = config.groups if config.groups is not None else config.k
    return _beam_engine(model, source, config, n_groups=n_groups,
                        strength=config.div_strength)


def _beam_engine(model, source, config: SearchConfig, n_groups: int,
                 strength: float) -> SearchResult:
    if config.k % n_groups:
        raise ConfigError(f"beam size {config.k} not divisible by {n_groups} groups")
    group_size = config.k // n_groups
    lam = config.length_reward
    run = _Run(model, config, None)
    eos = model.eos_id
    zbeam = config.recomb.strategy == "zbeam"

    live: list[list[tuple[int, float]]] = [[(run.lattice.sos, 0.0)]
                                           for _ in range(n_groups)]
    finished: list[list[tuple[float, int]]] = [[] for _ in range(n_groups)]

    for step in range(1, config.max_len + 1):
        if not any(live):
            break
        step_tokens: Counter = Counter()
        for g in range(n_groups):
            if not live[g]:
                continue
            allowed = (zbeam_candidates(run.lattice, [h[0] for h in live[g]])
                       if zbeam else None)
            candidates = []
            order = 0
            for node, cum_lp in live[g]:
                dist = run.score_node(node, source)
                for token, lp in dist:
                    cand_cum = cum_lp + lp
                    adjusted = cand_cum + lam * step - strength * step_tokens[token]
                    candidates.append((-adjusted, order, node, token, lp, cand_cum))
                    order += 1
            candidates.sort()
            next_live = []
            chosen = []
            for _, _, node, token, lp, cand_cum in candidates:
                if len(next_live) >= group_size:
                    break
                child, created = run.child(node, token, lp)
                if token == eos:
                    # completed: moves off the beam without occupying a slot
                    finished[g].append((cand_cum, child))
                    if created and run.index is not None:
                        run.index.add(child)
                    chosen.append(token)
                    continue
                if created:
                    if run.try_merge(child, restrict=allowed):
                        continue
                    if run.index is not None:
                        run.index.add(child)
                next_live.append((child, cand_cum))
                chosen.append(token)
            live[g] = next_live
            for t in chosen:
                step_tokens[t] += 1
            if len(finished[g]) >= group_size and live[g]:
                # no live prefix can beat the worst hypothesis we would return
                best_live = max(c + lam * step for _, c in live[g])
                fin_adj = sorted((c + lam * run.lattice.node(n).depth
                                  for c, n in finished[g]), reverse=True)
                if best_live <= fin_adj[group_size - 1]:
                    live[g] = []

    returned: list[int] = []
    seen_tips: set[int] = set()
    for g in range(n_groups):
        if not finished[g]:
            for node, _cum in live[g]:
                fid = run.force_complete(node)
                finished[g].append((_cum, fid))
        ranked = sorted(range(len(finished[g])),
                        key=lambda i: (-finished[g][i][0], i))
        taken = 0
        for i in ranked:
            if taken >= group_size:
                break
            tip = finished[g][i][1]
            if tip in seen_tips:
                continue
            seen_tips.add(tip)
            returned.append(tip)
            taken += 1

    pruned_nodes = run.lattice.prune_dangling(set(returned))
    return run.result({
        "returned_paths": len(returned),
        "returned_tips": returned,
        "groups": n_groups,
        "pruned_nodes": pruned_nodes,
    })


# ----------------------------------------------------------------------
# sampling (nucleus / temperature)
# ----------------------------------------------------------------------

def decode_sampling(model, source, config: SearchConfig) -> SearchResult:
    run = _Run(model, config, config.budget)
    rng = Random(config.seed)
    eos = model.eos_id
    truncated = 0
    merged_chains = 0

    for _chain in range(config.k):
        node = run.lattice.sos
        for _step in range(config.max_len):
            try:
                dist = run.score_node(node, source)
            except BudgetExhausted:
                run.force_complete(node)
                truncated += 1
                break
            if config.algorithm == "nucleus":
                weighted = nucleus_slice(dist, config.nucleus_p)
            else:
                weighted = temperature_weights(dist, config.temperature)
            token, lp = _weighted_choice(weighted, rng)
            child, created = run.child(node, token, lp)
            if token == eos:
                break
            if created and run.try_merge(child):
                merged_chains += 1
                break
            node = child
        else:
            run.force_complete(node)
            truncated += 1
    return run.result({"truncated_chains": truncated,
                       "merged_chains": merged_chains})


def nucleus_slice(dist, p: float):
    """Smallest top slice of the sorted distribution with mass >= p.

    Sampling weights are the true probabilities of the kept tokens; the
    stored log-probabilities stay untouched.
    """
    out = []
    acc = 0.0
    for token, lp in dist:
        prob = math.exp(lp)
        out.append((token, lp, prob))
        acc += prob
        if acc >= p:
            break
    return out


def temperature_weights(dist, tau: float):
    """Reshape sampling weights by dividing log-probabilities by tau."""
    return [(token, lp, math.exp(lp / tau)) for token, lp in dist]


def _weighted_choice(weighted, rng: Random):
    total = sum(w for _, _, w in weighted)
    r = rng.random() * total
    acc = 0.0
    for token, lp, w in weighted:
        acc += w
        if r < acc:
            return token, lp
    return weighted[-1][0], weighted[-1][1]


# ----------------------------------------------------------------------
# best-first search with depth-first completion
# ----------------------------------------------------------------------

def decode_bfs(model, source, config: SearchConfig) -> SearchResult:
    """Pop the best frontier entry, try to merge it, otherwise expand it;
    each expansion pushes its greedy child at the top priority tier so the
    current chain runs to an end token before anything else is explored."""
    if config.budget is None:
        raise ConfigError("best-first search requires an explicit budget")
    run = _Run(model, config, config.budget)
    lat = run.lattice
    eos = model.eos_id
    lam = config.length_reward
    stale = 0
    pending: dict[int, int] = {}

    # heap entries: (tier, -score, seq, parent, token, logprob);
    # tier 0 is the dedicated above-all priority with FIFO tie-breaks.
    heap: list[tuple] = [(0, 0.0, 0, -1, model.sos_id, 0.0)]
    seq = 0

    while heap:
        if run.meter.spent >= config.budget:
            break
        tier, _, _, parent, token, lp = heappop(heap)
        if parent < 0:
            node = lat.sos
        else:
            if not lat.is_live(parent):
                stale += 1
                continue
            if parent in pending:
                pending[parent] -= 1
            node = lat.add_gen_child(parent, token, model.token_text(token), lp,
                                     is_eos=token == eos)
            run.cum[node] = run.cum[parent] + lp
            if run.index is not None and run.try_merge(node):
                event = run.events[-1]
                event.deduped_successors = sum(pending.pop(m, 0)
                                               for m in event.merged)
                continue
        info = lat.node(node)
        if info.is_eos:
            if run.index is not None:
                run.index.add(node)
            continue
        if info.depth >= config.max_len:
            run.force_complete(node)
            if run.index is not None:
                run.index.add(node)
            continue
        dist = run.score_node(node, source)
        if run.index is not None:
            run.index.add(node)
        greedy_token = dist.argmax()
        base = run.cum[node]
        for token, lp in dist:
            seq += 1
            if token == greedy_token:
                heappush(heap, (0, 0.0, seq, node, token, lp))
            else:
                score = base + lp + lam * (info.depth + 1)
                heappush(heap, (1, -score, seq, node, token, lp))
            pending[node] = pending.get(node, 0) + 1

    frontier_exhausted = not heap
    # Budget ran out mid-chain: close the one dangling greedy descent
    # without spending model calls, so every expanded node still ends on
    # a complete (flagged) path.
    while heap:
        tier, _, _, parent, token, lp = heappop(heap)
        if tier != 0 or parent < 0 or not lat.is_live(parent):
            continue
        info = lat.node(parent)
        if not info.is_eos:
            run.force_complete(parent)

    return run.result({"stale_entries": stale,
                       "frontier_exhausted": frontier_exhausted})
