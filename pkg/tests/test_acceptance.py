"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Tolerances and runtime bounds are pinned here, not configurable.
"""

import math
import sys
import time
from pathlib import Path
from random import Random

import pytest

from helpers import (brute_force_paths, enumerate_finished_sequences,
                     random_table_data, model_from_data, random_table_model,
                     recursive_edit_distance, repetitive_corpus, sequence_score)
from latdec import (BridgeModel, Lattice, RecombConfig, SearchConfig,
                    TableModel, decode, decode_beam, decode_bfs, decode_greedy,
                    effective_budget, train_markov, validate_merges)
from latdec.metrics import (bleu, build_report, edit_distance, pearson,
                            pruning_ratio, rouge_l, rouge_n)

STUB = Path(__file__).parent / "stub_bridge.py"


def _pass(name: str) -> None:
    print(f"\n[PASS] {name}", flush=True)


# ----------------------------------------------------------------------
# 1. canonical-path invariant under randomized mutation
# ----------------------------------------------------------------------

def test_canonical_path_invariant_under_mutation():
    started = time.monotonic()
    total_mutations = 10_000
    per_lattice = 400
    done = 0
    seed = 0
    while done < total_mutations:
        rng = Random(seed)
        seed += 1
        lat = Lattice()
        for _ in range(min(per_lattice, total_mutations - done)):
            live = lat.live_ids()
            roll = rng.random()
            if roll < 0.62 or lat.num_live < 6:
                parents = [i for i in live if not lat.node(i).is_eos]
                parent = parents[rng.randrange(len(parents))]
                if lat.num_live >= 500:
                    continue
                is_eos = rng.random() < 0.15
                lat.add_gen_child(parent, 1 if is_eos else rng.randrange(2, 9),
                                  "t", -rng.random(), is_eos=is_eos)
            elif roll < 0.87:
                src, dst = rng.choice(live), rng.choice(live)
                if src != dst and not lat.node(src).is_eos:
                    lat.add_mrg_edge(src, dst)
            elif roll < 0.95:
                leaves = [i for i in live if i != lat.sos
                          and not lat.gen_children_of(i)]
                if len(leaves) >= 2:
                    victim = leaves[rng.randrange(len(leaves))]
                    rep = rng.choice([i for i in live if i != victim])
                    lat.absorb_node(victim, rep)
            else:
                candidates = [i for i in live if i != lat.sos]
                if candidates:
                    root = rng.choice(candidates)
                    subtree = set()
                    stack = [root]
                    while stack:
                        u = stack.pop()
                        subtree.add(u)
                        stack.extend(lat.gen_children_of(u))
                    outside = [i for i in live if i not in subtree]
                    if len(outside) > 1:
                        rep = rng.choice([i for i in outside if i != lat.sos]
                                         or outside)
                        lat.remove_subtree(root, rep)
            lat.validate()
            done += 1
    elapsed = time.monotonic() - started
    assert done == total_mutations
    assert elapsed < 30.0, f"invariant sweep took {elapsed:.1f}s"
    _pass(f"canonical-path invariant: {done} mutations validated "
          f"in {elapsed:.1f}s")


# ----------------------------------------------------------------------
# 2. path-count oracle and saturation
# ----------------------------------------------------------------------

def test_path_count_oracle_and_saturation():
    from helpers import random_complete_lattice
    started = time.monotonic()
    for seed in range(200):
        lat = random_complete_lattice(Random(seed), n_nodes=12, n_mrg=4)
        assert lat.num_live <= 24  # appended eos closures stay tiny
        _, total, saturated = lat.count_paths(10_000)
        assert not saturated
        assert total == len(brute_force_paths(lat))
    lat = Lattice()
    node = lat.sos
    for _ in range(20):  # 2**20 true paths
        left = lat.add_gen_child(node, 2, "l", -0.1)
        right = lat.add_gen_child(node, 3, "r", -0.1)
        join = lat.add_gen_child(left, 4, "j", -0.1)
        assert lat.add_mrg_edge(right, join)
        node = join
    lat.add_gen_child(node, 1, "</s>", -0.1, is_eos=True)
    _, total, saturated = lat.count_paths(10_000)
    assert total == 10_000 and saturated
    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"path-count oracle took {elapsed:.1f}s"
    _pass(f"path-count oracle: 200 lattices exact, saturation at 10^4 "
          f"({elapsed:.1f}s)")


# ----------------------------------------------------------------------
# 3. best-first completion guarantee (and the beam contrast)
# ----------------------------------------------------------------------

def _branching_eviction_model(p_a=0.4):
    return TableModel.from_rows(["a", "b", "c", "x"], {
        "": [("a", p_a), ("b", 0.9 - p_a), ("c", 0.1)],
        "a": [("</s>", 1.0)],
        "b": [("x", 1.0)],
    }, default=[("x", 1.0)])


def test_bfs_completion_guarantee():
    started = time.monotonic()
    for seed in range(500):
        rng = Random(seed)
        max_len = rng.randrange(3, 6)
        model = random_table_model(rng, n_words=rng.randrange(2, 4),
                                   max_len=max_len)
        budget = rng.randrange(max_len, 3 * max_len + 1)
        cfg = SearchConfig(algorithm="bfs", budget=budget, max_len=max_len,
                           top_k=4, seed=seed)
        result = decode_bfs(model, None, cfg)
        assert result.completed_paths >= 1
        assert result.pruned == 0
        assert pruning_ratio(result) == 0.0
    for i in range(10):
        model = _branching_eviction_model(0.36 + 0.01 * i)
        beam = decode_beam(model, None,
                           SearchConfig(algorithm="beam", k=2, top_k=4, max_len=2))
        assert pruning_ratio(beam) > 0.0
    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"completion sweep took {elapsed:.1f}s"
    _pass(f"best-first completion: 500 runs pruned-free, beam contrast > 0 "
          f"({elapsed:.1f}s)")


# ----------------------------------------------------------------------
# 4. budget parity across every algorithm
# ----------------------------------------------------------------------

class _CountingModel:
    def __init__(self, model):
        self.model = model
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self.model, name)

    def score(self, prefix, source=None):
        self.calls += 1
        return self.model.score(prefix, source)


def test_budget_parity_all_algorithms():
    lines = ["the cat sat on the mat", "the dog sat on the rug",
             "a cat ran to a mat", "the dog ran to the mat"]
    base = train_markov(lines, order=2, smoothing=0.1)
    settings = [
        ("greedy", {}),
        ("beam", {"k": 3}),
        ("dbs", {"k": 2, "groups": 2}),
        ("nucleus", {"k": 3}),
        ("temp", {"k": 3}),
        ("bfs", {"budget": 20}),
        ("bfs", {"budget": 20, "recomb": RecombConfig("rcb", 2, 3)}),
        ("bfs", {"budget": 20, "recomb": RecombConfig("zip", 2, 3)}),
        ("beam", {"k": 3, "recomb": RecombConfig("zbeam", 2, 3)}),
        ("nucleus", {"k": 3, "recomb": RecombConfig("rcb", 2, 3)}),
    ]
    merged_total = 0
    for algo, kwargs in settings:
        for seed in range(100):
            model = _CountingModel(base)
            cfg = SearchConfig(algorithm=algo, top_k=3, max_len=10,
                               seed=seed, **kwargs)
            result = decode(model, None, cfg)
            assert result.expanded == model.calls, (algo, seed)
            accepted = [e for e in result.merge_events if e.accepted]
            merged_total += len(accepted)
    assert merged_total > 0, "recombination settings never merged"
    _pass(f"budget parity: 10 settings x 100 runs exact "
          f"({merged_total} free merges)")


# ----------------------------------------------------------------------
# 5. beam exactness at full width
# ----------------------------------------------------------------------

def test_beam_exactness_at_full_width():
    for seed in range(50):
        rng = Random(seed)
        n_words = rng.randrange(2, 4)
        max_len = rng.randrange(2, 5)
        model = random_table_model(rng, n_words=n_words, max_len=max_len)
        finished = enumerate_finished_sequences(model, max_len)
        best_tokens, best_score = max(finished, key=lambda e: (e[1], e[0]))
        cfg = SearchConfig(algorithm="beam", k=n_words ** max_len,
                           top_k=n_words + 1, max_len=max_len)
        result = decode_beam(model, None, cfg)
        top = result.lattice.canonical_path(result.diagnostics["returned_tips"][0])
        assert top.tokens == best_tokens, seed
        assert top.total_log_prob == pytest.approx(best_score, abs=1e-12)
    _pass("beam exactness: 50 full-width searches matched exhaustive argmax")


# ----------------------------------------------------------------------
# 6. lossless merges on markov oracles
# ----------------------------------------------------------------------

def test_lossless_merges_on_markov_oracles():
    total_events = 0
    for seed in range(100):
        rng = Random(seed)
        order = 1 + seed % 2
        strategy = ("rcb", "zip")[(seed // 2) % 2]
        n = order + seed % 3  # n >= r
        lines = repetitive_corpus(rng, n_lines=30)
        model = train_markov(lines, order=order, smoothing=0.05)
        cfg = SearchConfig(algorithm="bfs", budget=45, max_len=16, top_k=3,
                           seed=seed,
                           recomb=RecombConfig(strategy, suffix_n=n, alpha=3))
        result = decode_bfs(model, None, cfg)
        lat = result.lattice
        forced = set(result.diagnostics["forced_nodes"])
        for nid in lat.live_ids():
            if nid == lat.sos or nid in forced:
                continue
            path = lat.canonical_path(nid)
            assert path.total_log_prob == pytest.approx(
                sequence_score(model, path.tokens), abs=1e-9), (seed, nid)
        accepted = [e for e in result.merge_events if e.accepted]
        total_events += len(accepted)
        if accepted:
            for horizon in range(11):
                em = validate_merges(model, accepted, horizon)
                assert em == 1.0, (seed, horizon)
    assert total_events >= 100, f"only {total_events} merges across the sweep"
    _pass(f"lossless merges: 100 runs, {total_events} merges, EM=1.0 for all "
          f"horizons <= 10, canonical scores exact to 1e-9")


# ----------------------------------------------------------------------
# 7. degenerate-row parity for greedy decoding
# ----------------------------------------------------------------------

def test_greedy_degenerate_row_parity():
    lines = ["the cat sat on the mat", "the dog ran to the rug"]
    model = train_markov(lines, order=2, smoothing=0.05)
    result = decode_greedy(model, None,
                           SearchConfig(algorithm="greedy", max_len=12))
    report = build_report(result, reference="the cat sat on the rug".split(),
                          metric="rouge2", seed=0)
    assert report.path_count == 1
    assert report.self_bleu == 100.0
    assert report.mean_edit_distance == 0.0
    assert report.oracle_match == report.sample_match
    assert report.pruned_ratio == 0.0
    _pass("degenerate row: greedy gives |path|=1, sBL=100, ED=0, "
          "oracle == sample")


# ----------------------------------------------------------------------
# 8. budget correction constants
# ----------------------------------------------------------------------

def test_budget_correction_constants():
    k_t, _ = effective_budget("translation", 8, 30)
    k_s, _ = effective_budget("summarization", 16, 30)
    assert k_t == 12
    assert k_s == 20
    assert effective_budget("custom", 7, 10, 1.0)[0] == 7
    _pass("budget correction: translation 8->12, summarization 16->20 exact")


# ----------------------------------------------------------------------
# 9. metric golden tests
# ----------------------------------------------------------------------

def test_metric_golden_values():
    cand, ref = "a b c".split(), "a c d".split()
    assert rouge_n(cand, ref, 1) == pytest.approx(2 / 3, abs=1e-9)
    assert rouge_n(cand, ref, 2) == pytest.approx(0.0, abs=1e-9)
    assert rouge_l(cand, ref) == pytest.approx(2 / 3, abs=1e-9)
    assert rouge_n(ref, ref, 2) == pytest.approx(1.0, abs=1e-9)
    golden = 100.0 * (5 / 6 * 2 / 3 * 2 / 5 * 1 / 4) ** 0.25
    assert bleu("the cat sat on the mat".split(),
                "the cat lay on the mat".split()) == pytest.approx(golden, abs=1e-9)
    assert bleu("a b".split(), "a b c d".split()) == \
        pytest.approx(100.0 * math.exp(-1.0), abs=1e-9)
    xs = [float(i) for i in range(10)]
    ys = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 10.0, 9.0]
    n = len(xs)
    expected = ((n * sum(x * y for x, y in zip(xs, ys)) - sum(xs) * sum(ys))
                / math.sqrt((n * sum(x * x for x in xs) - sum(xs) ** 2)
                            * (n * sum(y * y for y in ys) - sum(ys) ** 2)))
    assert pearson(xs, ys) == pytest.approx(expected, abs=1e-9)
    assert edit_distance(list("kitten"), list("sitting")) == 3
    _pass("metric goldens: rouge/bleu/pearson/edit-distance hand values "
          "match to 1e-9")


def test_edit_distance_exhaustive_small_alphabet():
    started = time.monotonic()
    sys.setrecursionlimit(10_000)
    seqs = [()]
    frontier = [()]
    for _ in range(6):
        frontier = [s + (t,) for s in frontier for t in range(3)]
        seqs.extend(frontier)
    assert len(seqs) == 1093
    memo = {}
    checked = 0
    for i, a in enumerate(seqs):
        for b in seqs[i:]:
            expected = recursive_edit_distance(a, b, memo)
            assert edit_distance(a, b) == expected
            checked += 1
    elapsed = time.monotonic() - started
    _pass(f"edit-distance DP == recursive definition on {checked} pairs "
          f"of length <= 6 sequences ({elapsed:.1f}s)")


# ----------------------------------------------------------------------
# 10. diversity ordering at equal budgets
# ----------------------------------------------------------------------

def test_diversity_ordering():
    for seed in range(50):
        rng = Random(seed)
        lines = repetitive_corpus(rng, n_lines=30)
        model = train_markov(lines, order=2, smoothing=0.1)
        budget = 50
        greedy = decode_greedy(model, None,
                               SearchConfig(algorithm="greedy", max_len=16,
                                            budget=budget, seed=seed))
        plain = decode_bfs(model, None,
                           SearchConfig(algorithm="bfs", budget=budget,
                                        max_len=16, top_k=3, seed=seed))
        merged = decode_bfs(model, None,
                            SearchConfig(algorithm="bfs", budget=budget,
                                         max_len=16, top_k=3, seed=seed,
                                         recomb=RecombConfig("rcb", 2, 3)))
        assert greedy.completed_paths == 1
        assert plain.completed_paths >= greedy.completed_paths, seed
        assert merged.completed_paths >= plain.completed_paths, seed
    _pass("diversity ordering: paths(bfs+rcb) >= paths(bfs) >= paths(greedy) "
          "on 50 seeded runs")


# ----------------------------------------------------------------------
# 11. bridge equivalence over the wire protocol  [secondary surface]
# ----------------------------------------------------------------------

def test_bridge_equivalence_byte_identical(tmp_path):
    import json as _json
    data = random_table_data(Random(99), n_words=3, max_len=4)
    table = model_from_data(data)
    path = tmp_path / "table.json"
    path.write_text(_json.dumps(data), encoding="utf-8")
    cmd = [sys.executable, str(STUB), str(path)]
    for seed in range(20):
        algo = ("bfs", "nucleus")[seed % 2]
        kwargs = {"budget": 12} if algo == "bfs" else {"k": 3}
        cfg = SearchConfig(algorithm=algo, top_k=4, max_len=4, seed=seed,
                           **kwargs)
        local = decode(table, None, cfg)
        with BridgeModel(cmd, top_k=4) as bridge:
            remote = decode(bridge, None, cfg)
        assert remote.lattice.to_json() == local.lattice.to_json(), seed
        assert remote.expanded == local.expanded
    _pass("bridge equivalence: 20 seeded runs byte-identical over the wire")


# ----------------------------------------------------------------------
# 12. optional checkpoint-scale smoke test (needs a real model)
# ----------------------------------------------------------------------

@pytest.mark.skipif("LATDEC_SMOKE_MODEL" not in __import__("os").environ,
                    reason="needs a sequence model checkpoint; set "
                           "LATDEC_SMOKE_MODEL to run")
def test_checkpoint_scale_smoke():
    import os
    model_id = os.environ["LATDEC_SMOKE_MODEL"]
    cmd = [sys.executable, "-m", "latbridge", "--hf", model_id, "--top-k", "5"]
    source = ("A regional steel plant has shut down after failing to pay "
              "its staff for several months .")
    k, max_len = 16, 40
    with BridgeModel(cmd, top_k=5, timeout=600.0) as bridge:
        cfg = SearchConfig(algorithm="bfs", budget=k * max_len, top_k=5,
                           max_len=max_len, recomb=RecombConfig("rcb", 4, 2))
        result = decode(bridge, source, cfg)
    assert result.completed_paths > 100
    _pass(f"checkpoint-scale smoke: {result.completed_paths} complete paths")
