"""Request loop: one JSON object per line in, one per line out."""

from __future__ import annotations

import json
import sys

PROTOCOL_VERSION = 1


def serve(backend, top_k: int = 5, stdin=None, stdout=None) -> int:
    """Answer hello/score/bye requests until the peer says goodbye.

    Every request gets exactly one response line, in order. Unknown ops
    and scoring failures produce error responses but keep the session
    alive; only ``bye`` (or EOF) ends it. The hello request's ``k``
    overrides the starting truncation width.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def respond(obj) -> None:
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as e:
            respond({"ok": False, "error": f"bad request json: {e.msg}"})
            continue
        op = req.get("op")
        if op == "hello":
            top_k = int(req.get("k", top_k))
            resp = {"ok": True, "protocol": PROTOCOL_VERSION,
                    "vocab_size": backend.vocab_size,
                    "eos_id": backend.eos_id, "sos_id": backend.sos_id,
                    "deterministic": True}
            vocab = backend.hello_vocab()
            if vocab is not None:
                resp["vocab"] = vocab
            respond(resp)
        elif op == "score":
            prefix = req.get("prefix")
            if not isinstance(prefix, list) or not prefix:
                respond({"ok": False, "error": "score needs a non-empty prefix"})
                continue
            try:
                entries = backend.score(prefix, source=req.get("source"),
                                        source_text=req.get("source_text"),
                                        top_k=top_k)
            except LookupError as e:
                respond({"ok": False, "error": str(e)})
                continue
            respond({"ok": True, "next": entries})
        elif op == "bye":
            respond({"ok": True})
            return 0
        else:
            respond({"ok": False, "error": f"unknown op {op!r}"})
    return 0
