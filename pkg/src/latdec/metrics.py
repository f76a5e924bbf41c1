"""Diversity and quality measurement over decoded lattices.

Reference-match metrics (ROUGE, BLEU) are self-contained so every value
is exactly testable; sampling-backed metrics are deterministic under a
fixed seed. Path-count style metrics operate on the lattice structure
itself, counting tokens on nodes and token pairs on edges (merge edges
included, since a sampler can walk them).
"""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass
from random import Random

from .lattice import DEFAULT_PATH_CAP, Lattice, Path
from .search import SearchResult

ORACLE_SAMPLE_FALLBACK = 1000
SAMPLE_MATCH_DRAWS = 1000
PAIR_SAMPLES = 5  # samples drawn for self-BLEU / edit-distance


# ----------------------------------------------------------------------
# reference-match metrics
# ----------------------------------------------------------------------

def _ngram_counts(tokens, order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1))


def rouge_n(candidate, reference, order: int) -> float:
    """N-gram overlap F1 with clipped match counts."""
    if order not in (1, 2):
        raise ValueError("rouge order must be 1 or 2")
    cand = _ngram_counts(candidate, order)
    ref = _ngram_counts(reference, order)
    if not cand or not ref:
        return 0.0
    match = sum(min(c, ref[g]) for g, c in cand.items())
    precision = match / sum(cand.values())
    recall = match / sum(ref.values())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _lcs_len(a, b) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> float:
    """Longest-common-subsequence F1."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_len(candidate, reference)
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def bleu(candidate, reference) -> float:
    """Sentence BLEU-4 in [0, 100].

    Geometric mean of clipped n-gram precisions with add-1 smoothing on
    orders above 1, times the exponential brevity penalty.
    """
    c, r = len(candidate), len(reference)
    if c == 0:
        return 0.0
    log_parts = []
    for order in range(1, 5):
        cand = _ngram_counts(candidate, order)
        ref = _ngram_counts(reference, order)
        match = sum(min(n, ref[g]) for g, n in cand.items())
        total = sum(cand.values())
        if order == 1:
            if match == 0:
                return 0.0
            p = match / total
        else:
            p = (match + 1) / (total + 1)
        log_parts.append(math.log(p))
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(sum(log_parts) / 4.0)


def edit_distance(a, b) -> int:
    """Token-level Levenshtein distance (iterative dynamic program)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def pearson(xs, ys) -> float | None:
    """Pearson correlation; None when either axis has zero variance."""
    n = len(xs)
    if n < 2 or n != len(ys):
        return None
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        return None
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


# ----------------------------------------------------------------------
# lattice-level metrics
# ----------------------------------------------------------------------

def content_texts(lattice: Lattice, path: Path) -> list[str]:
    """Surface tokens of a path, with end-of-sequence markers stripped."""
    out = []
    for nid in path.node_ids[1:]:
        node = lattice.node(nid)
        if not node.is_eos:
            out.append(node.text)
    return out


def path_count(lattice: Lattice, cap: int = DEFAULT_PATH_CAP):
    _, total, saturated = lattice.count_paths(cap)
    return total, saturated


def novel_ngrams(lattice: Lattice, order: int) -> int:
    """Distinct tokens over nodes (order 1) or token pairs over edges
    (order 2); start and end markers are not counted."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    content = {}
    for nid in lattice.live_ids():
        node = lattice.node(nid)
        if nid != lattice.sos and not node.is_eos:
            content[nid] = node.token
    if order == 1:
        return len(set(content.values()))
    pairs = set()
    for nid, token in content.items():
        for dst, _kind in lattice.out_edges(nid):
            if dst in content:
                pairs.add((token, content[dst]))
    return len(pairs)


def self_bleu(lattice: Lattice, m: int = PAIR_SAMPLES, rng: Random | None = None) -> float:
    """Mean pairwise BLEU over m random-walk samples; lower is more diverse."""
    if m < 2:
        raise ValueError("m must be >= 2")
    rng = rng or Random(0)
    samples = [content_texts(lattice, lattice.sample_path(rng)) for _ in range(m)]
    scores = [bleu(samples[i], samples[j])
              for i in range(m) for j in range(m) if i != j]
    return statistics.mean(scores)


def mean_edit_distance(lattice: Lattice, m: int = PAIR_SAMPLES,
                       rng: Random | None = None) -> float:
    if m < 2:
        raise ValueError("m must be >= 2")
    rng = rng or Random(0)
    samples = [content_texts(lattice, lattice.sample_path(rng)) for _ in range(m)]
    dists = [edit_distance(samples[i], samples[j])
             for i in range(m) for j in range(i + 1, m)]
    return statistics.mean(dists)


_METRICS = {
    "rouge1": lambda c, r: rouge_n(c, r, 1),
    "rouge2": lambda c, r: rouge_n(c, r, 2),
    "rougeL": rouge_l,
    "bleu": bleu,
}


def oracle_match(lattice: Lattice, reference, metric: str = "rouge2",
                 cap: int = DEFAULT_PATH_CAP, rng: Random | None = None):
    """Best reference-match score over lattice paths.

    Exact when the complete-path count fits under ``cap``; otherwise the
    maximum over the cap-many highest-scoring paths plus random samples,
    reported with an ``approximate`` flag.
    """
    fn = _METRICS[metric]
    _, total, saturated = lattice.count_paths(cap)
    if not saturated and total <= cap:
        best = max((fn(content_texts(lattice, p), reference)
                    for p in lattice.iter_complete_paths()), default=0.0)
        return best, False
    rng = rng or Random(0)
    pool = lattice.best_paths(cap)
    pool.extend(lattice.sample_path(rng) for _ in range(ORACLE_SAMPLE_FALLBACK))
    best = max(fn(content_texts(lattice, p), reference) for p in pool)
    return best, True


def sample_match(lattice: Lattice, reference, metric: str = "rouge2",
                 rng: Random | None = None, draws: int = SAMPLE_MATCH_DRAWS) -> float:
    """Mean reference-match score over paths sampled with replacement."""
    fn = _METRICS[metric]
    rng = rng or Random(0)
    scores = [fn(content_texts(lattice, lattice.sample_path(rng)), reference)
              for _ in range(draws)]
    return statistics.mean(scores)


def pruning_ratio(result: SearchResult) -> float | None:
    """Share of expanded nodes absent from every returned complete path."""
    if result.expanded == 0:
        return None
    return result.pruned / result.expanded


def score_quality_correlation(groups) -> float | None:
    """Pearson correlation between model-score gaps and metric gaps.

    ``groups`` holds one list of (model_score, metric_value) hypotheses
    per example; within each, every hypothesis is compared to the one
    with the best model score.
    """
    xs, ys = [], []
    for hyps in groups:
        if len(hyps) < 2:
            continue
        best = max(hyps, key=lambda h: h[0])
        for h in hyps:
            if h is best:
                continue
            xs.append(best[0] - h[0])
            ys.append(best[1] - h[1])
    if len(xs) < 3:
        return None
    return pearson(xs, ys)


# ----------------------------------------------------------------------
# per-example report
# ----------------------------------------------------------------------

@dataclass
class DecodeReport:
    path_count: int
    path_count_saturated: bool
    novel_unigrams: int
    novel_bigrams: int
    self_bleu: float
    mean_edit_distance: float
    oracle_match: float | None
    oracle_approximate: bool
    sample_match: float | None
    expanded: int
    pruned_ratio: float | None

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)

    FIELDS = ("path_count", "novel_unigrams", "novel_bigrams", "self_bleu",
              "mean_edit_distance", "oracle_match", "sample_match",
              "expanded", "pruned_ratio")


def build_report(result: SearchResult, reference=None, metric: str = "rouge2",
                 m: int = PAIR_SAMPLES, seed: int = 0,
                 cap: int = DEFAULT_PATH_CAP) -> DecodeReport:
    lat = result.lattice
    total, saturated = path_count(lat, cap)
    oracle = approx = sample = None
    if reference is not None:
        oracle, approx = oracle_match(lat, reference, metric, cap,
                                      Random(f"{seed}:oracle"))
        sample = sample_match(lat, reference, metric, Random(f"{seed}:sample"))
    return DecodeReport(
        path_count=total,
        path_count_saturated=saturated,
        novel_unigrams=novel_ngrams(lat, 1),
        novel_bigrams=novel_ngrams(lat, 2),
        self_bleu=self_bleu(lat, m, Random(f"{seed}:selfbleu")),
        mean_edit_distance=mean_edit_distance(lat, m, Random(f"{seed}:editdist")),
        oracle_match=oracle,
        oracle_approximate=bool(approx),
        sample_match=sample,
        expanded=result.expanded,
        pruned_ratio=pruning_ratio(result),
    )


def format_report_table(rows: list[tuple[str, DecodeReport]]) -> str:
    """Aligned text table, one row per example plus a mean row."""
    headers = ("example",) + DecodeReport.FIELDS

    def fmt(value):
        if value is None:
            return "-"
        if isinstance(value, bool):
            return str(value)
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    table = [[name] + [fmt(getattr(r, f)) for f in DecodeReport.FIELDS]
             for name, r in rows]
    if rows:
        means = ["mean"]
        for f in DecodeReport.FIELDS:
            vals = [getattr(r, f) for _, r in rows if getattr(r, f) is not None]
            means.append(fmt(sum(vals) / len(vals)) if vals else "-")
        table.append(means)
    widths = [max(len(h), *(len(row[i]) for row in table))
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    for row in table:
        lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    return "\n".join(lines)
