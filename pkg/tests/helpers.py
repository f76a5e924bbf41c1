"""Shared test fixtures: random model/lattice generators and independent
oracles. The oracles deliberately re-derive answers from first principles
(brute-force DFS over serialized edges, chain-rule scoring) instead of
reusing the code paths they check."""

import json
import math
from random import Random

from latdec import Lattice, TableModel
from latdec.models import EOS_TEXT


# ----------------------------------------------------------------------
# independent oracles
# ----------------------------------------------------------------------

def brute_force_paths(lattice, limit=2_000_000):
    """Every root-to-end node-id path, by literal DFS over the JSON form."""
    data = json.loads(lattice.to_json())
    adj = {}
    for e in data["edges"]:
        adj.setdefault(e["src"], []).append(e["dst"])
    eos = set(data["eos"])
    paths = []
    stack = [(data["sos"], (data["sos"],))]
    while stack:
        u, acc = stack.pop()
        if u in eos:
            paths.append(acc)
            if len(paths) > limit:
                raise AssertionError("path explosion in brute-force oracle")
            continue
        for v in adj.get(u, []):
            stack.append((v, acc + (v,)))
    return paths


def sequence_score(model, tokens):
    """Chain-rule log-probability of a token sequence under the model."""
    ids = (model.sos_id,)
    total = 0.0
    for t in tokens:
        dist = dict(model.score(ids))
        assert t in dist, f"token {t} not scorable after {ids}"
        total += dist[t]
        ids = ids + (t,)
    return total


def enumerate_finished_sequences(model, max_len):
    """All sequences that emit eos within ``max_len`` tokens, with scores."""
    out = []
    stack = [((), 0.0)]
    while stack:
        tokens, score = stack.pop()
        if tokens and tokens[-1] == model.eos_id:
            out.append((tokens, score))
            continue
        if len(tokens) >= max_len:
            continue
        for t, lp in model.score((model.sos_id,) + tokens):
            stack.append((tokens + (t,), score + lp))
    return out


def recursive_edit_distance(a, b, memo=None):
    """Textbook recursive Levenshtein definition (memoized)."""
    if memo is None:
        memo = {}
    key = (a, b)
    if key in memo:
        return memo[key]
    if not a:
        d = len(b)
    elif not b:
        d = len(a)
    else:
        d = min(recursive_edit_distance(a[:-1], b, memo) + 1,
                recursive_edit_distance(a, b[:-1], memo) + 1,
                recursive_edit_distance(a[:-1], b[:-1], memo) + (a[-1] != b[-1]))
    memo[key] = d
    return d


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------

def random_lattice(rng: Random, n_nodes=30, n_mrg=10, eos_rate=0.3,
                   vocab=6) -> Lattice:
    """Random GEN tree plus random (cycle-checked) MRG edges."""
    lat = Lattice()
    live = [lat.sos]
    for _ in range(n_nodes - 1):
        parent = live[rng.randrange(len(live))]
        if lat.node(parent).is_eos:
            continue
        token = rng.randrange(2, vocab + 2)
        is_eos = rng.random() < eos_rate
        if is_eos:
            token = 1
        child = lat.add_gen_child(parent, token, f"t{token}",
                                  -rng.random() * 3 - 0.01, is_eos=is_eos)
        live.append(child)
    ids = lat.live_ids()
    for _ in range(n_mrg):
        src, dst = rng.choice(ids), rng.choice(ids)
        if src == dst or lat.node(src).is_eos:
            continue
        lat.add_mrg_edge(src, dst)
    return lat


def random_complete_lattice(rng: Random, n_nodes=20, n_mrg=6, vocab=5) -> Lattice:
    """Random lattice in which every node reaches an end node."""
    lat = random_lattice(rng, n_nodes, 0, eos_rate=0.25, vocab=vocab)
    for nid in lat.live_ids():
        if not lat.node(nid).is_eos and not lat.gen_children_of(nid):
            lat.add_gen_child(nid, 1, EOS_TEXT, -0.5, is_eos=True)
    ids = lat.live_ids()
    for _ in range(n_mrg):
        src, dst = rng.choice(ids), rng.choice(ids)
        if src == dst or lat.node(src).is_eos:
            continue
        lat.add_mrg_edge(src, dst)
    return lat


def random_table_data(rng: Random, n_words=3, max_len=4, min_eos=0.05) -> dict:
    """Random table in the table-file schema: every prefix up to
    ``max_len`` has a row giving positive probability to eos, so all
    sequences can finish."""
    words = [chr(ord("a") + i) for i in range(n_words)]
    rows = []

    def fill(prefix):
        if len(prefix) >= max_len:
            return
        weights = [rng.random() + 0.05 for _ in range(n_words + 1)]
        total = sum(weights)
        probs = [w / total for w in weights]
        if probs[0] < min_eos:
            probs[0] = min_eos
            rest = sum(probs[1:])
            probs = [probs[0]] + [p * (1 - min_eos) / rest for p in probs[1:]]
        pairs = [[EOS_TEXT, probs[0]]] + [[w, p] for w, p in zip(words, probs[1:])]
        rows.append({"prefix": " ".join(prefix), "next": pairs})
        for w in words:
            fill(prefix + (w,))

    fill(())
    return {"vocab": words, "rows": rows, "default": [[EOS_TEXT, 1.0]]}


def model_from_data(data: dict) -> TableModel:
    rows = {r["prefix"]: [(w, p) for w, p in r["next"]] for r in data["rows"]}
    default = [(w, p) for w, p in data["default"]] if data.get("default") else None
    return TableModel.from_rows(data["vocab"], rows, default)


def random_table_model(rng: Random, n_words=3, max_len=4, min_eos=0.05) -> TableModel:
    return model_from_data(random_table_data(rng, n_words, max_len, min_eos))


def chain_lattice(tokens, log_probs=None, eos=True) -> Lattice:
    """Linear chain sos -> t1 -> ... -> tn (-> eos)."""
    lat = Lattice()
    node = lat.sos
    lps = log_probs or [-0.5] * len(tokens)
    for t, lp in zip(tokens, lps):
        node = lat.add_gen_child(node, t, f"t{t}", lp)
    if eos:
        lat.add_gen_child(node, 1, EOS_TEXT, -0.2, is_eos=True)
    return lat


def repetitive_corpus(rng: Random, n_lines=40, vocab=("the", "cat", "dog",
                                                      "sat", "ran", "on",
                                                      "mat", "rug")):
    """Corpus with heavy phrase reuse so suffix merges fire often."""
    lines = []
    for _ in range(n_lines):
        length = rng.randrange(4, 9)
        lines.append(" ".join(rng.choice(vocab) for _ in range(length)))
    return lines


def markov_stats(model):
    """Row-sum normalization check material for a trained model."""
    sums = []
    for dist in model.rows.values():
        sums.append(sum(math.exp(lp) for _, lp in dist))
    return sums
