"""Token lattice: a DAG whose root-to-end paths each encode one candidate sequence.

Edges come in two kinds. GEN edges are created when the search extends a
node with a model prediction; they always form a tree rooted at the
start-of-sequence node, so every node has exactly one GEN-only path from
the root (its *canonical path*, the prefix used for model scoring). MRG
edges are added by hypothesis recombination and never change any
canonical path. Nodes deleted by merges are tombstoned and remapped
through a union-find, so stale ids keep resolving to a live survivor.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from heapq import heappop, heappush
from random import Random
from typing import Iterator

from .errors import ParseError, StructuralError
from .unionfind import UnionFind

GEN = "GEN"
MRG = "MRG"

# Per-node path counts saturate here by default.
DEFAULT_PATH_CAP = 10_000


@dataclass(frozen=True)
class LatticeNode:
    id: int
    token: int
    text: str
    log_prob: float
    is_eos: bool
    depth: int


@dataclass(frozen=True)
class Path:
    """A root-to-node walk. ``tokens`` excludes the start node's token."""

    node_ids: tuple[int, ...]
    tokens: tuple[int, ...]
    total_log_prob: float

    def __len__(self) -> int:
        return len(self.tokens)


class Lattice:
    """Single-writer token lattice with GEN/MRG edges and id remapping."""

    def __init__(self, sos_token: int = 0, sos_text: str = "<s>"):
        self._nodes: list[LatticeNode] = []
        self._alive: list[bool] = []
        self._gen_parent: list[int | None] = []
        self._gen_children: list[list[int]] = []
        self._mrg_out: list[list[int]] = []
        self._mrg_in: list[list[int]] = []
        self.remap = UnionFind()
        self.eos_nodes: set[int] = set()
        self.rejected_merges = 0
        self.sos = self._new_node(sos_token, sos_text, 0.0, False, 0, None)

    # ------------------------------------------------------------------
    # node bookkeeping
    # ------------------------------------------------------------------

    def _new_node(self, token, text, log_prob, is_eos, depth, parent) -> int:
        node_id = len(self._nodes)
        self._nodes.append(LatticeNode(node_id, token, text, log_prob, is_eos, depth))
        self._alive.append(True)
        self._gen_parent.append(parent)
        self._gen_children.append([])
        self._mrg_out.append([])
        self._mrg_in.append([])
        if is_eos:
            self.eos_nodes.add(node_id)
        return node_id

    def resolve(self, node_id: int) -> int:
        """Map a possibly merged-away id to its live representative."""
        if not 0 <= node_id < len(self._nodes):
            raise StructuralError(f"unknown node id {node_id}")
        rep = self.remap.find(node_id)
        if not self._alive[rep]:
            raise StructuralError(f"node {node_id} resolves to dead node {rep}")
        return rep

    def is_live(self, node_id: int) -> bool:
        return 0 <= node_id < len(self._nodes) and self._alive[node_id]

    def node(self, node_id: int) -> LatticeNode:
        return self._nodes[self.resolve(node_id)]

    def live_ids(self) -> list[int]:
        return [i for i, a in enumerate(self._alive) if a]

    @property
    def num_live(self) -> int:
        return sum(self._alive)

    def gen_parent_of(self, node_id: int) -> int | None:
        return self._gen_parent[self.resolve(node_id)]

    def gen_children_of(self, node_id: int) -> list[int]:
        return list(self._gen_children[self.resolve(node_id)])

    def out_edges(self, node_id: int) -> list[tuple[int, str]]:
        nid = self.resolve(node_id)
        edges = [(c, GEN) for c in self._gen_children[nid]]
        edges.extend((d, MRG) for d in self._mrg_out[nid])
        return edges

    # ------------------------------------------------------------------
    # mutation
    # ------------------------------------------------------------------

    def add_gen_child(self, parent: int, token: int, text: str, log_prob: float,
                      is_eos: bool = False) -> int:
        """Extend ``parent`` with one generated token; returns the new node id."""
        pid = self.resolve(parent)
        child = self._new_node(token, text, log_prob, is_eos,
                               self._nodes[pid].depth + 1, pid)
        self._gen_children[pid].append(child)
        return child

    def add_mrg_edge(self, src: int, dst: int) -> bool:
        """Add a merge edge unless it would create a cycle.

        Returns whether the edge is represented afterwards: an already
        existing (src, dst) edge of either kind counts as success, while a
        cycle-creating request is rejected and counted.
        """
        s, d = self.resolve(src), self.resolve(dst)
        if d in self._gen_children[s] or d in self._mrg_out[s]:
            return True
        if self._reaches(d, s):
            self.rejected_merges += 1
            return False
        self._mrg_out[s].append(d)
        self._mrg_in[d].append(s)
        return True

    def _reaches(self, src: int, dst: int) -> bool:
        """True when ``dst`` is reachable from ``src`` over live edges."""
        if src == dst:
            return True
        seen = {src}
        queue = deque((src,))
        while queue:
            u = queue.popleft()
            for v in self._gen_children[u]:
                if v == dst:
                    return True
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
            for v in self._mrg_out[u]:
                if v == dst:
                    return True
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return False

    def absorb_node(self, node_id: int, survivor: int) -> None:
        """Tombstone one node, remapping its id and MRG edges to ``survivor``.

        The node must have no live GEN children: merges only ever absorb
        nodes whose generated subtree is empty or already absorbed, which
        is what keeps every surviving canonical path intact.
        """
        nid, rep = self.resolve(node_id), self.resolve(survivor)
        if nid == rep:
            raise StructuralError("cannot absorb a node into itself")
        if nid == self.sos:
            raise StructuralError("cannot absorb the start node")
        if self._gen_children[nid]:
            raise StructuralError(
                f"node {nid} still has live GEN children {self._gen_children[nid]}")
        parent = self._gen_parent[nid]
        if parent is not None:
            self._gen_children[parent].remove(nid)
        self._alive[nid] = False
        self.eos_nodes.discard(nid)
        for dst in self._mrg_out[nid]:
            self._mrg_in[dst].remove(nid)
            self._reroute_mrg(rep, dst)
        for src in self._mrg_in[nid]:
            self._mrg_out[src].remove(nid)
            self._reroute_mrg(src, rep)
        self._mrg_out[nid] = []
        self._mrg_in[nid] = []
        self.remap.absorb(nid, rep)

    def _reroute_mrg(self, src: int, dst: int) -> None:
        # Dropped silently when the rerouted edge would duplicate or cycle.
        if src == dst:
            return
        if dst in self._gen_children[src] or dst in self._mrg_out[src]:
            return
        if self._reaches(dst, src):
            return
        self._mrg_out[src].append(dst)
        self._mrg_in[dst].append(src)

    def remove_subtree(self, root: int, representative: int) -> int:
        """Remove ``root`` and its GEN descendants, remapping all removed ids.

        Incident MRG edges are rerouted to the representative, or dropped
        when rerouting would duplicate an edge or create a cycle.
        """
        rid, rep = self.resolve(root), self.resolve(representative)
        if rid == self.sos:
            raise StructuralError("cannot remove the start node's subtree")
        subtree = []
        stack = [rid]
        while stack:
            u = stack.pop()
            subtree.append(u)
            stack.extend(self._gen_children[u])
        removed = set(subtree)
        if rep in removed:
            raise StructuralError("representative lies inside the removed subtree")
        parent = self._gen_parent[rid]
        if parent is not None:
            self._gen_children[parent].remove(rid)
        for n in subtree:
            self._alive[n] = False
            self.eos_nodes.discard(n)
        for n in subtree:
            for dst in self._mrg_out[n]:
                if self._alive[dst]:
                    self._mrg_in[dst].remove(n)
                    self._reroute_mrg(rep, dst)
            for src in self._mrg_in[n]:
                if self._alive[src]:
                    self._mrg_out[src].remove(n)
                    self._reroute_mrg(src, rep)
            self._mrg_out[n] = []
            self._mrg_in[n] = []
            self._gen_children[n] = []
            self.remap.absorb(n, rep)
        return len(subtree)

    def prune_dangling(self, targets: set[int]) -> int:
        """Drop live nodes that cannot reach any target node.

        Used by beam-style decoders to discard explored-but-evicted
        hypotheses before returning the lattice. Pruned ids are *not*
        remapped: they are search waste, not merge survivors.
        """
        keep = set()
        queue = deque()
        for t in targets:
            t = self.resolve(t)
            if t not in keep:
                keep.add(t)
                queue.append(t)
        while queue:
            u = queue.popleft()
            preds = list(self._mrg_in[u])
            p = self._gen_parent[u]
            if p is not None:
                preds.append(p)
            for v in preds:
                if v not in keep:
                    keep.add(v)
                    queue.append(v)
        if self.sos not in keep:
            raise StructuralError("no target is reachable from the start node")
        removed = [i for i in self.live_ids() if i not in keep]
        for n in removed:
            self._alive[n] = False
            self.eos_nodes.discard(n)
        for n in removed:
            p = self._gen_parent[n]
            if p is not None and self._alive[p]:
                self._gen_children[p].remove(n)
            for dst in self._mrg_out[n]:
                if self._alive[dst]:
                    self._mrg_in[dst].remove(n)
            for src in self._mrg_in[n]:
                if self._alive[src]:
                    self._mrg_out[src].remove(n)
            self._gen_children[n] = []
            self._mrg_out[n] = []
            self._mrg_in[n] = []
        return len(removed)

    # ------------------------------------------------------------------
    # canonical paths, counting, sampling
    # ------------------------------------------------------------------

    def canonical_path(self, node_id: int) -> Path:
        """The unique GEN-only path from the start node to ``node_id``."""
        nid = self.resolve(node_id)
        ids = []
        while nid is not None:
            ids.append(nid)
            nid = self._gen_parent[nid]
        ids.reverse()
        tokens = tuple(self._nodes[i].token for i in ids[1:])
        total = sum(self._nodes[i].log_prob for i in ids[1:])
        return Path(tuple(ids), tokens, total)

    def canonical_suffix(self, node_id: int, n: int) -> tuple[int, ...] | None:
        """Last ``n`` canonical-path tokens, or None when the path is shorter."""
        nid = self.resolve(node_id)
        if self._nodes[nid].depth < n:
            return None
        out = []
        for _ in range(n):
            out.append(self._nodes[nid].token)
            nid = self._gen_parent[nid]
        out.reverse()
        return tuple(out)

    def _topo_order(self) -> list[int]:
        indeg = {}
        for i in self.live_ids():
            d = 0 if self._gen_parent[i] is None else 1
            indeg[i] = d + len(self._mrg_in[i])
        queue = deque(i for i, d in indeg.items() if d == 0)
        order = []
        while queue:
            u = queue.popleft()
            order.append(u)
            for v in self._gen_children[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(v)
            for v in self._mrg_out[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(v)
        if len(order) != len(indeg):
            raise StructuralError("cycle detected in lattice")
        return order

    def count_paths(self, cap: int = DEFAULT_PATH_CAP):
        """Count root-to-node paths with saturating arithmetic.

        Returns ``(per_node, total, saturated)`` where ``total`` sums the
        counts of end-of-sequence nodes and every count is clipped at
        ``cap`` as soon as it would exceed it.
        """
        order = self._topo_order()
        counts = {i: 0 for i in order}
        counts[self.sos] = 1
        saturated = False
        for u in order:
            cu = counts[u]
            if cu == 0:
                continue
            for v in self._gen_children[u]:
                c = counts[v] + cu
                if c > cap:
                    c = cap
                    saturated = True
                counts[v] = c
            for v in self._mrg_out[u]:
                c = counts[v] + cu
                if c > cap:
                    c = cap
                    saturated = True
                counts[v] = c
        total = 0
        for e in self.eos_nodes:
            total += counts[e]
            if total > cap:
                total = cap
                saturated = True
        return counts, total, saturated

    def sample_path(self, rng: Random) -> Path:
        """Uniform random walk over outgoing edges until an end node."""
        u = self.sos
        ids = [u]
        total = 0.0
        while u not in self.eos_nodes:
            outs = self._gen_children[u] + self._mrg_out[u]
            if not outs:
                raise StructuralError(f"dead-end node {u}: completion invariant violated")
            u = outs[rng.randrange(len(outs))]
            ids.append(u)
            total += self._nodes[u].log_prob
        tokens = tuple(self._nodes[i].token for i in ids[1:])
        return Path(tuple(ids), tokens, total)

    def iter_complete_paths(self, limit: int | None = None) -> Iterator[Path]:
        """Depth-first enumeration of all root-to-end paths."""
        emitted = 0
        stack = [(self.sos, (self.sos,), 0.0)]
        while stack:
            u, ids, total = stack.pop()
            if u in self.eos_nodes:
                tokens = tuple(self._nodes[i].token for i in ids[1:])
                yield Path(ids, tokens, total)
                emitted += 1
                if limit is not None and emitted >= limit:
                    return
                continue
            outs = self._gen_children[u] + self._mrg_out[u]
            for v in reversed(outs):
                stack.append((v, ids + (v,), total + self._nodes[v].log_prob))

    def best_paths(self, limit: int) -> list[Path]:
        """Highest-scoring complete paths, best-first.

        Token log-probabilities are non-positive, so a prefix score bounds
        every completion and the first ``limit`` finished pops are global.
        """
        heap = []
        seq = 0
        heappush(heap, (0.0, seq, self.sos, (self.sos,)))
        out = []
        while heap and len(out) < limit:
            neg, _, u, ids = heappop(heap)
            if u in self.eos_nodes:
                tokens = tuple(self._nodes[i].token for i in ids[1:])
                out.append(Path(ids, tokens, -neg))
                continue
            for v in self._gen_children[u] + self._mrg_out[u]:
                seq += 1
                heappush(heap, (neg - self._nodes[v].log_prob, seq, v, ids + (v,)))
        return out

    # ------------------------------------------------------------------
    # invariants
    # ------------------------------------------------------------------

    def validate(self) -> None:
        """Check the structural invariants, raising StructuralError on failure.

        Every live non-root node must have exactly one live GEN parent one
        depth above it (which forces a unique canonical path), adjacency
        must be consistent, and the full edge set must be acyclic.
        """
        alive = self._alive
        if not alive[self.sos] or self._gen_parent[self.sos] is not None:
            raise StructuralError("start node corrupted")
        for i in self.live_ids():
            p = self._gen_parent[i]
            if i == self.sos:
                continue
            if p is None:
                raise StructuralError(f"live node {i} has no GEN parent")
            if not alive[p]:
                raise StructuralError(f"node {i} has dead GEN parent {p}")
            if self._nodes[i].depth != self._nodes[p].depth + 1:
                raise StructuralError(f"node {i} depth inconsistent with parent {p}")
            if self._gen_children[p].count(i) != 1:
                raise StructuralError(f"GEN edge {p}->{i} missing or duplicated")
        for i in self.live_ids():
            for c in self._gen_children[i]:
                if not alive[c] or self._gen_parent[c] != i:
                    raise StructuralError(f"stale GEN child {c} under {i}")
            seen = set()
            for d in self._mrg_out[i]:
                if not alive[d] or (i, d) in seen:
                    raise StructuralError(f"bad MRG edge {i}->{d}")
                seen.add((i, d))
                if self._mrg_in[d].count(i) != 1:
                    raise StructuralError(f"asymmetric MRG edge {i}->{d}")
        for e in self.eos_nodes:
            if not alive[e] or not self._nodes[e].is_eos:
                raise StructuralError(f"bad eos registration {e}")
        self._topo_order()  # raises on cycles

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------

    def to_json_dict(self) -> dict:
        nodes = []
        edges = []
        for i in self.live_ids():
            n = self._nodes[i]
            nodes.append({"id": n.id, "token": n.token, "text": n.text,
                          "logprob": n.log_prob, "eos": n.is_eos, "depth": n.depth})
            for c in self._gen_children[i]:
                edges.append({"src": i, "dst": c, "kind": GEN})
            for d in self._mrg_out[i]:
                edges.append({"src": i, "dst": d, "kind": MRG})
        return {"nodes": nodes, "edges": edges, "sos": self.sos,
                "eos": sorted(self.eos_nodes)}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_dot(self) -> str:
        lines = ["digraph lattice {", "  rankdir=LR;"]
        for i in self.live_ids():
            n = self._nodes[i]
            label = f"{n.text}\\n{n.log_prob:.3f}"
            shape = ", shape=doublecircle" if n.is_eos else ""
            lines.append(f'  n{i} [label="{label}"{shape}];')
        for i in self.live_ids():
            for c in self._gen_children[i]:
                lines.append(f"  n{i} -> n{c};")
            for d in self._mrg_out[i]:
                lines.append(f"  n{i} -> n{d} [style=dashed];")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def serialize(self, fmt: str = "json") -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "dot":
            return self.to_dot()
        raise ValueError(f"unknown serialization format {fmt!r}")

    @classmethod
    def from_json(cls, text: str) -> "Lattice":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
        for key in ("nodes", "edges", "sos", "eos"):
            if key not in data:
                raise ParseError(f"missing top-level key {key!r}")
        if not data["nodes"]:
            raise ParseError("lattice has no nodes")
        lat = cls.__new__(cls)
        max_id = max(n.get("id", -1) for n in data["nodes"])
        if max_id < 0:
            raise ParseError("node without an id")
        size = max_id + 1
        lat._nodes = [LatticeNode(i, 0, "", 0.0, False, 0) for i in range(size)]
        lat._alive = [False] * size
        lat._gen_parent = [None] * size
        lat._gen_children = [[] for _ in range(size)]
        lat._mrg_out = [[] for _ in range(size)]
        lat._mrg_in = [[] for _ in range(size)]
        lat.remap = UnionFind()
        lat.eos_nodes = set()
        lat.rejected_merges = 0
        for pos, n in enumerate(data["nodes"]):
            try:
                node = LatticeNode(int(n["id"]), int(n["token"]), str(n["text"]),
                                   float(n["logprob"]), bool(n["eos"]), int(n["depth"]))
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"bad node record at nodes[{pos}]: {e}") from e
            if lat._alive[node.id]:
                raise ParseError(f"duplicate node id {node.id} at nodes[{pos}]")
            lat._nodes[node.id] = node
            lat._alive[node.id] = True
        lat.sos = int(data["sos"])
        if not (0 <= lat.sos < size and lat._alive[lat.sos]):
            raise ParseError("sos does not name a node")
        for pos, e in enumerate(data["edges"]):
            try:
                src, dst, kind = int(e["src"]), int(e["dst"]), e["kind"]
            except (KeyError, TypeError, ValueError) as err:
                raise ParseError(f"bad edge record at edges[{pos}]: {err}") from err
            if not (0 <= src < size and lat._alive[src] and 0 <= dst < size and lat._alive[dst]):
                raise ParseError(f"edge at edges[{pos}] references unknown node")
            if kind == GEN:
                if lat._gen_parent[dst] is not None:
                    raise ParseError(f"node {dst} has two GEN parents (edges[{pos}])")
                lat._gen_parent[dst] = src
                lat._gen_children[src].append(dst)
            elif kind == MRG:
                lat._mrg_out[src].append(dst)
                lat._mrg_in[dst].append(src)
            else:
                raise ParseError(f"unknown edge kind {kind!r} at edges[{pos}]")
        for pos, e in enumerate(data["eos"]):
            e = int(e)
            if not (0 <= e < size and lat._alive[e]):
                raise ParseError(f"eos entry at eos[{pos}] references unknown node")
            lat.eos_nodes.add(e)
        lat.validate()
        return lat

    def structurally_equal(self, other: "Lattice") -> bool:
        return self.to_json_dict() == other.to_json_dict()
