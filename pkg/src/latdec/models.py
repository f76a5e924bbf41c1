"""Pluggable next-token scoring oracles and the model-call budget meter.

Built-in models exist for exact verification: a TableModel replays
hand-written distributions, and a MarkovModel's future provably depends
only on its last ``order`` tokens, which makes merge losslessness exactly
testable. All scores are natural-log probabilities.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from typing import Iterable, Sequence

from .errors import BudgetExhausted, ConfigError, ModelError

SOS_ID = 0
EOS_ID = 1
SOS_TEXT = "<s>"
EOS_TEXT = "</s>"


class TokenDistribution:
    """Next-token candidates sorted by log-probability.

    The order is total and deterministic: descending log-probability with
    ties broken by the lower token id. Log-probabilities must be
    non-positive (tiny positive float noise is clamped to zero).
    """

    __slots__ = ("entries",)

    def __init__(self, entries: Iterable[tuple[int, float]]):
        cleaned = []
        for token, lp in entries:
            if lp > 1e-9:
                raise ValueError(f"positive log-probability {lp} for token {token}")
            cleaned.append((int(token), min(lp, 0.0)))
        cleaned.sort(key=lambda e: (-e[1], e[0]))
        self.entries = tuple(cleaned)

    def truncate(self, k: int) -> "TokenDistribution":
        if len(self.entries) <= k:
            return self
        out = TokenDistribution.__new__(TokenDistribution)
        out.entries = self.entries[:k]
        return out

    def argmax(self) -> int:
        return self.entries[0][0]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __eq__(self, other):
        return isinstance(other, TokenDistribution) and self.entries == other.entries


def _normalized_logprobs(pairs: list[tuple[int, float]]) -> list[tuple[int, float]]:
    """Convert a probability row to log space, checking normalization."""
    total = sum(p for _, p in pairs)
    if not pairs or abs(total - 1.0) > 1e-6:
        raise ConfigError(f"distribution does not sum to 1 (got {total})")
    return [(t, math.log(p / total)) for t, p in pairs if p > 0.0]


class TableModel:
    """Explicit prefix -> distribution lookup for hand-built test cases.

    Rows are keyed by the generated tokens (the start-of-sequence marker
    is stripped); unlisted prefixes fall back to ``default``.
    """

    def __init__(self, vocab: Sequence[str],
                 rows: dict[tuple[int, ...], TokenDistribution],
                 default: TokenDistribution | None = None):
        if len(vocab) < 2 or vocab[0] != SOS_TEXT or vocab[1] != EOS_TEXT:
            raise ConfigError("vocab must start with the sos and eos markers")
        self.vocab = list(vocab)
        self.rows = dict(rows)
        self.default = default
        self.sos_id = SOS_ID
        self.eos_id = EOS_ID
        self.vocab_size = len(self.vocab)

    @classmethod
    def from_rows(cls, words: Sequence[str],
                  rows: dict[str, list[tuple[str, float]]],
                  default: list[tuple[str, float]] | None = None) -> "TableModel":
        """Build from text keys and probability rows (for tests and files)."""
        vocab = [SOS_TEXT, EOS_TEXT] + list(words)
        ids = {w: i for i, w in enumerate(vocab)}
        def conv(pairs):
            return TokenDistribution(_normalized_logprobs([(ids[w], p) for w, p in pairs]))
        table = {}
        for key, pairs in rows.items():
            prefix = tuple(ids[w] for w in key.split()) if key else ()
            table[prefix] = conv(pairs)
        return cls(vocab, table, conv(default) if default is not None else None)

    @classmethod
    def from_file(cls, path: str) -> "TableModel":
        with open(path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"bad table file {path}: {e}") from e
        for key in ("vocab", "rows"):
            if key not in data:
                raise ConfigError(f"table file {path} missing key {key!r}")
        rows = {r["prefix"]: [(w, float(p)) for w, p in r["next"]] for r in data["rows"]}
        default = [(w, float(p)) for w, p in data["default"]] if data.get("default") else None
        return cls.from_rows(data["vocab"], rows, default)

    def token_text(self, token: int) -> str:
        return self.vocab[token]

    def score(self, prefix: Sequence[int], source=None) -> TokenDistribution:
        if not prefix or prefix[0] != self.sos_id:
            raise ModelError("prefix must begin with the start-of-sequence token")
        key = tuple(prefix[1:])
        dist = self.rows.get(key, self.default)
        if dist is None:
            raise ModelError(f"no distribution for prefix {key} and no default row")
        return dist


class MarkovModel:
    """Order-``r`` conditional model: the next token depends only on the
    last ``r`` tokens, so any two prefixes sharing that suffix score
    identically (the exact-verification backbone for recombination)."""

    def __init__(self, order: int, vocab: Sequence[str],
                 rows: dict[tuple[int, ...], TokenDistribution]):
        self.order = order
        self.vocab = list(vocab)
        self.rows = rows
        self.sos_id = SOS_ID
        self.eos_id = EOS_ID
        self.vocab_size = len(self.vocab)
        # delta=0 leaves unseen contexts without a row: uniform fallback
        # over every non-sos token.
        n_out = self.vocab_size - 1
        lp = -math.log(n_out)
        self._uniform = TokenDistribution([(t, lp) for t in range(1, self.vocab_size)])

    def token_text(self, token: int) -> str:
        return self.vocab[token]

    def score(self, prefix: Sequence[int], source=None) -> TokenDistribution:
        if not prefix or prefix[0] != self.sos_id:
            raise ModelError("prefix must begin with the start-of-sequence token")
        ctx = ((SOS_ID,) * self.order + tuple(prefix))[-self.order:]
        return self.rows.get(ctx, self._uniform)


def train_markov(corpus: Iterable[str], order: int, smoothing: float = 0.0) -> MarkovModel:
    """Count-based training over whitespace-tokenized lines with add-delta
    smoothing. Contexts shorter than ``order`` are left-padded with sos."""
    if order < 1:
        raise ConfigError("order must be >= 1")
    lines = [line.split() for line in corpus]
    lines = [toks for toks in lines if toks]
    if not lines:
        raise ConfigError("empty corpus")
    words = sorted({w for toks in lines for w in toks})
    vocab = [SOS_TEXT, EOS_TEXT] + words
    ids = {w: i for i, w in enumerate(vocab)}
    counts: dict[tuple[int, ...], Counter] = {}
    for toks in lines:
        ctx = (SOS_ID,) * order
        for w in toks:
            counts.setdefault(ctx, Counter())[ids[w]] += 1
            ctx = ctx[1:] + (ids[w],)
        counts.setdefault(ctx, Counter())[EOS_ID] += 1
    candidates = list(range(1, len(vocab)))  # every token except sos
    rows = {}
    for ctx, ctr in counts.items():
        total = sum(ctr.values()) + smoothing * len(candidates)
        probs = [(t, (ctr.get(t, 0) + smoothing) / total) for t in candidates]
        probs = [(t, p) for t, p in probs if p > 0.0]
        assert abs(sum(p for _, p in probs) - 1.0) < 1e-9
        rows[ctx] = TokenDistribution([(t, math.log(p)) for t, p in probs])
    return MarkovModel(order, vocab, rows)


class BudgetMeter:
    """Counts model calls against a fixed budget of node expansions."""

    def __init__(self, budget: int | None):
        if budget is not None and budget < 1:
            raise ConfigError("budget must be >= 1")
        self.budget = budget
        self.spent = 0

    @property
    def remaining(self) -> float:
        return math.inf if self.budget is None else self.budget - self.spent

    def charge(self) -> None:
        if self.budget is not None and self.spent >= self.budget:
            raise BudgetExhausted(f"budget of {self.budget} model calls exhausted")
        self.spent += 1


class MeteredScorer:
    """Binds a model to a per-search meter and a top-k truncation width.

    Every ``score`` call charges the meter exactly once; recombination
    checks never go through here, so they never spend budget.
    """

    def __init__(self, model, meter: BudgetMeter, top_k: int = 5):
        self.model = model
        self.meter = meter
        self.top_k = top_k

    @property
    def sos_id(self):
        return self.model.sos_id

    @property
    def eos_id(self):
        return self.model.eos_id

    def token_text(self, token: int) -> str:
        return self.model.token_text(token)

    def score(self, prefix: Sequence[int], source=None) -> TokenDistribution:
        self.meter.charge()
        return self.model.score(prefix, source).truncate(self.top_k)
