"""Client for external scoring processes speaking newline-delimited JSON.

The sidecar is any executable that answers ``hello``, ``score`` and
``bye`` requests on its standard streams, one JSON object per line. It
lets the engine drive real sequence models without taking a dependency
on them: from the search's point of view a BridgeModel is just another
scoring model, metered like the built-ins.
"""

from __future__ import annotations

import json
import select
import shlex
import subprocess
from typing import Sequence

from .errors import ModelError
from .models import TokenDistribution

PROTOCOL_VERSION = 1


class BridgeModel:
    """One bridge process serving one search at a time."""

    def __init__(self, cmd: str | list[str], top_k: int = 5, timeout: float = 60.0):
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.timeout = timeout
        self.top_k = top_k
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True)
        except OSError as e:
            raise ModelError(f"could not launch bridge {argv!r}: {e}") from e
        self._texts: dict[int, str] = {}
        hello = self._roundtrip({"op": "hello", "k": top_k,
                                 "protocol": PROTOCOL_VERSION, "deterministic": True})
        if hello.get("protocol") != PROTOCOL_VERSION:
            self.close()
            raise ModelError(
                f"protocol version mismatch: expected {PROTOCOL_VERSION}", payload=hello)
        try:
            self.vocab_size = int(hello["vocab_size"])
            self.eos_id = int(hello["eos_id"])
        except (KeyError, TypeError, ValueError) as e:
            self.close()
            raise ModelError(f"malformed hello response: {e}", payload=hello) from e
        self.sos_id = int(hello.get("sos_id", 0))
        vocab = hello.get("vocab")
        if vocab:
            self._texts.update((i, str(t)) for i, t in enumerate(vocab))

    def _send(self, obj: dict) -> None:
        if self._proc.poll() is not None:
            raise ModelError("bridge process exited")
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ModelError(f"bridge transport failure: {e}") from e

    def _recv(self) -> dict:
        ready, _, _ = select.select([self._proc.stdout], [], [], self.timeout)
        if not ready:
            raise ModelError(f"bridge timed out after {self.timeout}s")
        line = self._proc.stdout.readline()
        if not line:
            raise ModelError("bridge closed its output stream")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as e:
            raise ModelError(f"malformed bridge response: {e}", payload=line) from e
        if not isinstance(resp, dict) or not resp.get("ok", False):
            raise ModelError("bridge reported an error", payload=resp)
        return resp

    def _roundtrip(self, obj: dict) -> dict:
        self._send(obj)
        return self._recv()

    def token_text(self, token: int) -> str:
        return self._texts.get(token, str(token))

    def score(self, prefix: Sequence[int], source=None) -> TokenDistribution:
        req = {"op": "score", "prefix": list(prefix)}
        if isinstance(source, str):
            req["source_text"] = source
        elif source is not None:
            req["source"] = list(source)
        resp = self._roundtrip(req)
        entries = resp.get("next")
        if not isinstance(entries, list):
            raise ModelError("score response missing 'next'", payload=resp)
        pairs = []
        for item in entries:
            try:
                token, lp = int(item[0]), float(item[1])
            except (TypeError, ValueError, IndexError) as e:
                raise ModelError(f"bad score entry {item!r}: {e}", payload=resp) from e
            if len(item) > 2:
                self._texts[token] = str(item[2])
            pairs.append((token, lp))
        try:
            return TokenDistribution(pairs)
        except ValueError as e:
            raise ModelError(str(e), payload=resp) from e

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._send({"op": "bye"})
                self._recv()
            except ModelError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        if self._proc.stdin:
            self._proc.stdin.close()
        if self._proc.stdout:
            self._proc.stdout.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
