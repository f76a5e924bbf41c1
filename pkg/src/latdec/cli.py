"""Command-line harness: decode runs, sweeps, and merge validation."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .bridge import BridgeModel
from .errors import ConfigError, LatdecError
from .metrics import build_report, format_report_table
from .models import TableModel, train_markov
from .recomb import RecombConfig, validate_merges
from .search import ALGORITHMS, SearchConfig, decode, effective_budget

log = logging.getLogger("latdec")


def seed_for(root: int, example: int, purpose: str) -> int:
    """Counter-style seed split: adding an example never perturbs others."""
    digest = hashlib.sha256(f"{root}:{example}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _config_hash(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


@dataclass
class RunSpec:
    """Everything needed to reproduce one decode run byte-for-byte."""

    model: str | None
    corpus: str | None
    order: int
    smoothing: float
    bridge_cmd: str | None
    input: str
    refs: str | None
    out: str
    seed: int
    metric: str
    workers: int
    algo: str
    recomb: str
    k: int
    budget: int | None
    top_k: int
    length_reward: float
    nucleus_p: float
    tau: float
    groups: int | None
    div_strength: float
    max_len: int | None
    suffix_n: int
    alpha: int
    profile: str
    multiplier: float

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunSpec":
        return cls(**{f: getattr(args, f) for f in cls.__dataclass_fields__})

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="input file, one source per line")
    p.add_argument("--model", help="table-model JSON file")
    p.add_argument("--corpus", help="training corpus for a markov model")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--bridge-cmd", dest="bridge_cmd",
                   help="command line of an external scoring process")
    p.add_argument("--algo", default="bfs", choices=ALGORITHMS)
    p.add_argument("--recomb", default="none",
                   choices=("none", "zbeam", "rcb", "zip"))
    p.add_argument("-k", type=int, default=4, dest="k")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--top-k", type=int, default=5, dest="top_k")
    p.add_argument("--lambda", type=float, default=0.0, dest="length_reward")
    p.add_argument("-p", type=float, default=0.9, dest="nucleus_p")
    p.add_argument("--tau", type=float, default=1.5)
    p.add_argument("--groups", type=int, default=None)
    p.add_argument("--div-strength", type=float, default=1.5, dest="div_strength")
    p.add_argument("--max-len", type=int, default=None, dest="max_len")
    p.add_argument("--suffix-n", type=int, default=4, dest="suffix_n")
    p.add_argument("--alpha", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--refs", default=None)
    p.add_argument("--profile", default="custom",
                   choices=("translation", "summarization", "custom"))
    p.add_argument("--multiplier", type=float, default=1.0)
    p.add_argument("--metric", default="rouge2",
                   choices=("rouge1", "rouge2", "rougeL", "bleu"))
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="latdec",
        description="Lattice decoding with recombination, plus baselines and metrics")
    sub = ap.add_subparsers(dest="command", required=True)
    d = sub.add_parser("decode", help="decode every input line once")
    _add_common(d)
    s = sub.add_parser("sweep", help="repeat the run while varying one axis")
    _add_common(s)
    s.add_argument("--axis", required=True,
                   choices=("k", "budget", "suffix-n", "p", "tau", "max-len"))
    s.add_argument("--values", required=True, help="comma-separated axis values")
    v = sub.add_parser("validate-merges",
                       help="greedy-continuation exact-match check of merges")
    _add_common(v)
    v.add_argument("--horizons", default="2,4,6",
                   help="comma-separated continuation lengths")
    return ap


# ----------------------------------------------------------------------
# model and data loading
# ----------------------------------------------------------------------

def load_model(spec: RunSpec):
    given = [spec.model, spec.corpus, spec.bridge_cmd]
    if sum(x is not None for x in given) != 1:
        raise ConfigError("give exactly one of --model, --corpus, --bridge-cmd")
    if spec.model is not None:
        return TableModel.from_file(spec.model)
    if spec.corpus is not None:
        if not os.path.exists(spec.corpus):
            raise ConfigError(f"corpus file not found: {spec.corpus}")
        with open(spec.corpus, encoding="utf-8") as f:
            return train_markov(f, spec.order, spec.smoothing)
    return BridgeModel(spec.bridge_cmd, top_k=spec.top_k)


def load_examples(spec: RunSpec) -> list[tuple[str, str | None]]:
    if not os.path.exists(spec.input):
        raise ConfigError(f"input file not found: {spec.input}")
    with open(spec.input, encoding="utf-8") as f:
        sources = [line.rstrip("\n") for line in f]
    refs: list[str | None] = [None] * len(sources)
    if spec.refs is not None:
        if not os.path.exists(spec.refs):
            raise ConfigError(f"reference file not found: {spec.refs}")
        with open(spec.refs, encoding="utf-8") as f:
            ref_lines = [line.rstrip("\n") for line in f]
        if len(ref_lines) != len(sources):
            raise ConfigError(
                f"reference count {len(ref_lines)} != input count {len(sources)}")
        refs = list(ref_lines)
    return list(zip(sources, refs))


def make_search_config(spec: RunSpec, source: str, example_seed: int) -> SearchConfig:
    max_len = spec.max_len
    if max_len is None:
        max_len = max(1, 2 * len(source.split())) if spec.profile == "translation" else 32
    k_corrected, fair_budget = effective_budget(
        spec.profile, spec.k, max_len, spec.multiplier)
    k = spec.k
    budget = spec.budget
    if spec.algo in ("beam", "dbs", "nucleus", "temp"):
        k = k_corrected
    if spec.algo == "bfs" and budget is None:
        budget = fair_budget
    return SearchConfig(
        algorithm=spec.algo, k=k, budget=budget, top_k=spec.top_k,
        length_reward=spec.length_reward, nucleus_p=spec.nucleus_p,
        temperature=spec.tau, groups=spec.groups,
        div_strength=spec.div_strength, max_len=max_len, seed=example_seed,
        recomb=RecombConfig(spec.recomb, spec.suffix_n, spec.alpha))


# ----------------------------------------------------------------------
# running examples
# ----------------------------------------------------------------------

def decode_example(model, spec: RunSpec, idx: int, source: str, ref: str | None):
    config = make_search_config(spec, source, seed_for(spec.seed, idx, "search"))
    result = decode(model, source, config)
    reference = ref.split() if ref is not None else None
    report = build_report(result, reference, spec.metric,
                          seed=seed_for(spec.seed, idx, "metrics"))
    return result, report


_WORKER_MODEL = None
_WORKER_SPEC = None


def _pool_worker(payload):
    global _WORKER_MODEL, _WORKER_SPEC
    spec = RunSpec(**payload["spec"])
    if _WORKER_SPEC != payload["spec"]:
        _WORKER_MODEL = load_model(spec)
        _WORKER_SPEC = payload["spec"]
    idx, source, ref = payload["idx"], payload["source"], payload["ref"]
    result, report = decode_example(_WORKER_MODEL, spec, idx, source, ref)
    return (idx, report,
            result.lattice.to_json(), result.lattice.to_dot(),
            [e.to_json_dict() for e in result.merge_events])


def run_examples(spec: RunSpec, model=None, keep_results: bool = False):
    """Decode every example; returns (reports, results-or-None per example)."""
    examples = load_examples(spec)
    if spec.workers > 1 and spec.bridge_cmd is None and not keep_results:
        payloads = [{"spec": spec.to_json_dict(), "idx": i, "source": s, "ref": r}
                    for i, (s, r) in enumerate(examples)]
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = sorted(pool.map(_pool_worker, payloads))
        return [(i, rep, lj, ld, ev) for i, rep, lj, ld, ev in rows], None
    model = model if model is not None else load_model(spec)
    out_rows, results = [], []
    for idx, (source, ref) in enumerate(examples):
        result, report = decode_example(model, spec, idx, source, ref)
        out_rows.append((idx, report, result.lattice.to_json(),
                         result.lattice.to_dot(),
                         [e.to_json_dict() for e in result.merge_events]))
        results.append(result)
    return out_rows, results


def _write_outputs(spec: RunSpec, rows) -> None:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    for idx, report, lattice_json, lattice_dot, events in rows:
        stem = f"{idx:04d}"
        (out / f"{stem}.lattice.json").write_text(lattice_json, encoding="utf-8")
        (out / f"{stem}.lattice.dot").write_text(lattice_dot, encoding="utf-8")
        (out / f"{stem}.report.json").write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        if spec.recomb != "none":
            lines = "".join(json.dumps(e, sort_keys=True) + "\n" for e in events)
            (out / f"{stem}.events.jsonl").write_text(lines, encoding="utf-8")


def _write_aggregate(spec: RunSpec, rows) -> None:
    out = Path(spec.out)
    # hash only fields that shape the decode, not where results land
    hashed = {k: v for k, v in spec.to_json_dict().items()
              if k not in ("out", "workers")}
    payload = {
        "config": spec.to_json_dict(),
        "config_hash": _config_hash(hashed),
        "reports": {f"{idx:04d}": rep.to_json_dict() for idx, rep, *_ in rows},
    }
    (out / "aggregate.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_decode(args: argparse.Namespace) -> int:
    spec = RunSpec.from_args(args)
    rows, _ = run_examples(spec)
    _write_outputs(spec, rows)
    _write_aggregate(spec, rows)
    print(format_report_table([(f"{idx:04d}", rep) for idx, rep, *_ in rows]))
    return 0


_AXIS_FIELDS = {"k": ("k", int), "budget": ("budget", int),
                "suffix-n": ("suffix_n", int), "p": ("nucleus_p", float),
                "tau": ("tau", float), "max-len": ("max_len", int)}


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = RunSpec.from_args(args)
    field_name, conv = _AXIS_FIELDS[args.axis]
    try:
        values = [conv(v) for v in args.values.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"bad sweep values {args.values!r}: {e}") from e
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    from .metrics import DecodeReport
    header = ["axis", "value", "example", *DecodeReport.FIELDS]
    lines = [",".join(header)]
    for value in values:
        point = RunSpec(**{**spec.to_json_dict(), field_name: value,
                           "out": str(out / f"{args.axis}={value}")})
        try:
            rows, _ = run_examples(point)
        except LatdecError as e:
            log.error("sweep point %s=%s failed: %s", args.axis, value, e)
            lines.append(f"{args.axis},{value},error,{e}")
            continue
        _write_outputs(point, rows)
        # one row per example, then a per-axis aggregate row
        collected = {f: [] for f in DecodeReport.FIELDS}
        for idx, rep, *_ in rows:
            cells = [str(args.axis), str(value), f"{idx:04d}"]
            for f in DecodeReport.FIELDS:
                v = getattr(rep, f)
                cells.append("" if v is None else str(v))
                if v is not None:
                    collected[f].append(v)
            lines.append(",".join(cells))
        agg = [str(args.axis), str(value), "mean"]
        for f in DecodeReport.FIELDS:
            vals = collected[f]
            agg.append(str(sum(vals) / len(vals)) if vals else "")
        lines.append(",".join(agg))
    csv_text = "\n".join(lines) + "\n"
    (out / "sweep.csv").write_text(csv_text, encoding="utf-8")
    print(csv_text, end="")
    return 0


def cmd_validate_merges(args: argparse.Namespace) -> int:
    spec = RunSpec.from_args(args)
    try:
        horizons = [int(h) for h in args.horizons.split(",") if h.strip()]
    except ValueError as e:
        raise ConfigError(f"bad horizons {args.horizons!r}: {e}") from e
    model = load_model(spec)
    rows, results = run_examples(spec, model=model, keep_results=True)
    events = [e for r in results for e in r.merge_events if e.accepted]
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    table = {"events": len(events), "exact_match": {}}
    if not events:
        print("no merges occurred")
    else:
        print(f"{'L':>4}  {'EM':>8}  events={len(events)}")
        for h in horizons:
            em = validate_merges(model, events, h)
            table["exact_match"][str(h)] = em
            print(f"{h:>4}  {em:>8.4f}")
    (out / "merge_validation.json").write_text(
        json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LATTICE_LOG", "WARNING"))
    args = build_parser().parse_args(argv)
    handler = {"decode": cmd_decode, "sweep": cmd_sweep,
               "validate-merges": cmd_validate_merges}[args.command]
    try:
        return handler(args)
    except LatdecError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
