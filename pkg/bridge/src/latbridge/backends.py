"""Scoring backends for the bridge service."""

from __future__ import annotations

import json
import math


class TableBackend:
    """Replays a table-model JSON file (same schema the engine loads).

    Token ids follow the engine's convention: 0 is the start marker, 1 the
    end marker, then the vocabulary words in file order.
    """

    def __init__(self, path: str):
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        self.vocab = ["<s>", "</s>"] + list(data["vocab"])
        ids = {w: i for i, w in enumerate(self.vocab)}

        def row(pairs):
            total = sum(p for _, p in pairs)
            entries = [(ids[w], math.log(p / total)) for w, p in pairs if p > 0]
            entries.sort(key=lambda e: (-e[1], e[0]))
            return entries

        self.rows = {tuple(ids[w] for w in r["prefix"].split()): row(r["next"])
                     for r in data["rows"]}
        self.default = row(data["default"]) if data.get("default") else None

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    sos_id = 0
    eos_id = 1

    def hello_vocab(self):
        return self.vocab

    def score(self, prefix, source=None, source_text=None, top_k=5):
        dist = self.rows.get(tuple(prefix)[1:], self.default)
        if dist is None:
            raise LookupError(f"no distribution for prefix {list(prefix)}")
        return [[t, lp] for t, lp in dist[:top_k]]


class HFBackend:
    """Pretrained sequence-to-sequence checkpoint behind the protocol.

    Log-probabilities come from the full softmax and are truncated to
    top-k before transmission; forward passes run deterministically.
    Heavy imports happen here so the stub path stays dependency-free.
    """

    def __init__(self, model_id: str):
        import torch
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(model_id)
        self.model.eval()
        cfg = self.model.config
        self.sos_id = (cfg.decoder_start_token_id
                       if cfg.decoder_start_token_id is not None
                       else cfg.bos_token_id)
        self.eos_id = cfg.eos_token_id
        self.vocab_size = cfg.vocab_size
        self._encoder_cache: tuple[str, object] | None = None

    def hello_vocab(self):
        return None  # full vocabularies ride along per score entry instead

    def _encode_source(self, source_text: str):
        if self._encoder_cache is not None and self._encoder_cache[0] == source_text:
            return self._encoder_cache[1]
        inputs = self.tokenizer(source_text, return_tensors="pt")
        self._encoder_cache = (source_text, inputs)
        return inputs

    def score(self, prefix, source=None, source_text=None, top_k=5):
        torch = self._torch
        with torch.no_grad():
            if source_text is not None:
                inputs = self._encode_source(source_text)
                input_ids = inputs["input_ids"]
                attention = inputs.get("attention_mask")
            elif source is not None:
                input_ids = torch.tensor([list(source)], dtype=torch.long)
                attention = None
            else:
                raise LookupError("score request carries no source")
            decoder_ids = torch.tensor([list(prefix)], dtype=torch.long)
            out = self.model(input_ids=input_ids, attention_mask=attention,
                             decoder_input_ids=decoder_ids)
            logprobs = torch.log_softmax(out.logits[0, -1, :], dim=-1)
            values, indices = torch.topk(logprobs, top_k)
        entries = []
        for v, i in zip(values.tolist(), indices.tolist()):
            entries.append([i, min(v, 0.0),
                            self.tokenizer.convert_ids_to_tokens(i)])
        return entries
