"""Text-to-text model backends.

The trainer only talks to the ``ModelBackend`` protocol. ``TinySeq2Seq`` is
a character-level GRU encoder-decoder with dot-product attention, small
enough to train in seconds on a CPU; ``HFSeq2Seq`` wraps any Hugging Face
encoder-decoder (T5, FlanT5, ...).
"""

from __future__ import annotations

import copy
import string
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import torch
from torch import nn
import torch.nn.functional as F


@runtime_checkable
class ModelBackend(Protocol):
    identifier: str
    eos_text: str
    concurrent_inference_safe: bool

    def tokenize(self, text: str) -> list[int]: ...

    def teacher_forced_loss(self, inputs: Sequence[Sequence[int]], targets: Sequence[Sequence[int]]) -> torch.Tensor:
        """Per-sequence mean token cross-entropy, shape (batch,), differentiable."""

    def generate(self, inputs: Sequence[Sequence[int]], max_tokens: int) -> list[str]:
        """Greedy decoding, one output string per input sequence."""

    def configure_optimizer(self, learning_rate: float) -> None: ...

    def step(self, loss: torch.Tensor) -> None: ...

    def get_state(self) -> dict: ...

    def set_state(self, state: dict) -> None: ...

    def save(self, path: str | Path) -> None: ...

    def load(self, path: str | Path) -> None: ...


class BackendFailure(RuntimeError):
    pass


PAD, BOS, EOS, UNK = 0, 1, 2, 3
_CHARS = string.printable[:95]  # digits, letters, punctuation, space
_CHAR_IDS = {c: i + 4 for i, c in enumerate(_CHARS)}
VOCAB_SIZE = len(_CHARS) + 4


class _CharSeq2Seq(nn.Module):
    def __init__(self, vocab: int, emb: int, hidden: int):
        super().__init__()
        self.embed = nn.Embedding(vocab, emb, padding_idx=PAD)
        self.encoder = nn.GRU(emb, hidden, batch_first=True)
        self.decoder = nn.GRU(emb, hidden, batch_first=True)
        self.combine = nn.Linear(2 * hidden, hidden)
        self.out = nn.Linear(hidden, vocab)

    def encode(self, src: torch.Tensor, lengths: torch.Tensor):
        states, _ = self.encoder(self.embed(src))
        # Unidirectional: states at valid positions never see the padding.
        last = states[torch.arange(src.shape[0]), lengths - 1]
        mask = torch.arange(src.shape[1])[None, :] < lengths[:, None]
        return states, last.unsqueeze(0).contiguous(), mask

    def decode(self, tgt_in: torch.Tensor, states: torch.Tensor, mask: torch.Tensor, h: torch.Tensor):
        y, h = self.decoder(self.embed(tgt_in), h)
        scores = (y @ states.transpose(1, 2)).masked_fill(~mask[:, None, :], float("-inf"))
        context = scores.softmax(-1) @ states
        logits = self.out(torch.tanh(self.combine(torch.cat([y, context], -1))))
        return logits, h


def _pad(seqs: Sequence[Sequence[int]], value: int = PAD) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    return torch.tensor([list(s) + [value] * (width - len(s)) for s in seqs], dtype=torch.long)


class TinySeq2Seq:
    """Deterministic character-level encoder-decoder for CPU training."""

    identifier = "tiny"
    eos_text = "</s>"
    concurrent_inference_safe = True

    def __init__(self, seed: int = 0, emb: int = 32, hidden: int = 128, dtype: torch.dtype = torch.float32,
                 clip_norm: float | None = 1.0):
        self.seed = seed
        self.clip_norm = clip_norm
        self.dtype = dtype
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.model = _CharSeq2Seq(VOCAB_SIZE, emb, hidden).to(dtype)
        self.optimizer: torch.optim.Optimizer | None = None

    @property
    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.model.parameters())

    def tokenize(self, text: str) -> list[int]:
        return [_CHAR_IDS.get(c, UNK) for c in text]

    def detokenize(self, ids: Sequence[int]) -> str:
        return "".join(_CHARS[i - 4] if i >= 4 else "" for i in ids)

    @staticmethod
    def _sources(inputs):
        seqs = [list(s) or [UNK] for s in inputs]
        return _pad(seqs), torch.tensor([len(s) for s in seqs])

    def teacher_forced_loss(self, inputs, targets) -> torch.Tensor:
        if len(inputs) != len(targets) or not inputs:
            raise BackendFailure(f"bad batch: {len(inputs)} inputs, {len(targets)} targets")
        self.model.train()
        src, lengths = self._sources(inputs)
        tgt_in = _pad([[BOS, *t] for t in targets])
        labels = _pad([[*t, EOS] for t in targets], value=-100)
        states, h, mask = self.model.encode(src, lengths)
        logits, _ = self.model.decode(tgt_in, states, mask, h)
        token_loss = F.cross_entropy(logits.transpose(1, 2), labels, ignore_index=-100, reduction="none")
        valid = (labels != -100).to(token_loss.dtype)
        return (token_loss * valid).sum(1) / valid.sum(1)

    @torch.no_grad()
    def generate(self, inputs, max_tokens: int) -> list[str]:
        if not inputs:
            return []
        self.model.eval()
        src, lengths = self._sources(inputs)
        states, h, mask = self.model.encode(src, lengths)
        token = torch.full((len(inputs), 1), BOS, dtype=torch.long)
        done = torch.zeros(len(inputs), dtype=torch.bool)
        out: list[list[int]] = [[] for _ in inputs]
        for _ in range(max_tokens):
            logits, h = self.model.decode(token, states, mask, h)
            token = logits[:, -1].argmax(-1, keepdim=True)
            for i, t in enumerate(token[:, 0].tolist()):
                if not done[i]:
                    if t == EOS:
                        done[i] = True
                    else:
                        out[i].append(t)
            if bool(done.all()):
                break
        return [self.detokenize(o) for o in out]

    def configure_optimizer(self, learning_rate: float) -> None:
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=learning_rate)

    def step(self, loss: torch.Tensor) -> None:
        if self.optimizer is None:
            raise BackendFailure("configure_optimizer() must be called before step()")
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        if self.clip_norm is not None:
            nn.utils.clip_grad_norm_(self.model.parameters(), self.clip_norm)
        self.optimizer.step()

    def get_state(self) -> dict:
        return copy.deepcopy(self.model.state_dict())

    def set_state(self, state: dict) -> None:
        self.model.load_state_dict(state)

    def save(self, path) -> None:
        torch.save(self.model.state_dict(), path)

    def load(self, path) -> None:
        self.model.load_state_dict(torch.load(path, weights_only=True))


class HFSeq2Seq:
    """Adapter for Hugging Face encoder-decoder models such as T5 and FlanT5.

    ``model`` is either a hub id / local path or an already-built model, in
    which case ``tokenizer`` must be supplied too.
    """

    concurrent_inference_safe = False

    def __init__(self, model, tokenizer=None, device: str = "cpu"):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        if isinstance(model, (str, Path)):
            self.identifier = f"hf:{model}"
            tokenizer = tokenizer or AutoTokenizer.from_pretrained(model)
            model = AutoModelForSeq2SeqLM.from_pretrained(model)
        else:
            self.identifier = f"hf:{type(model).__name__}"
        if tokenizer is None:
            raise BackendFailure("a tokenizer is required when passing a model object")
        self.model = model.to(device)
        self.tokenizer = tokenizer
        self.device = device
        self.eos_text = tokenizer.eos_token or "</s>"
        self.optimizer: torch.optim.Optimizer | None = None

    def tokenize(self, text: str) -> list[int]:
        return self.tokenizer(text, add_special_tokens=True)["input_ids"]

    def _source(self, inputs):
        pad_id = self.tokenizer.pad_token_id or 0
        ids = _pad(inputs, value=pad_id).to(self.device)
        mask = _pad([[1] * len(s) for s in inputs], value=0).to(self.device)
        return ids, mask

    def teacher_forced_loss(self, inputs, targets) -> torch.Tensor:
        self.model.train()
        ids, mask = self._source(inputs)
        labels = _pad(targets, value=-100).to(self.device)
        logits = self.model(input_ids=ids, attention_mask=mask, labels=labels).logits
        token_loss = F.cross_entropy(logits.transpose(1, 2), labels, ignore_index=-100, reduction="none")
        valid = (labels != -100).to(token_loss.dtype)
        return (token_loss * valid).sum(1) / valid.sum(1).clamp_min(1)

    @torch.no_grad()
    def generate(self, inputs, max_tokens: int) -> list[str]:
        if not inputs:
            return []
        self.model.eval()
        ids, mask = self._source(inputs)
        out = self.model.generate(
            input_ids=ids, attention_mask=mask, max_new_tokens=max_tokens, do_sample=False, num_beams=1
        )
        return self.tokenizer.batch_decode(out, skip_special_tokens=True)

    def configure_optimizer(self, learning_rate: float) -> None:
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=learning_rate)

    def step(self, loss: torch.Tensor) -> None:
        if self.optimizer is None:
            raise BackendFailure("configure_optimizer() must be called before step()")
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()

    def get_state(self) -> dict:
        return {k: v.detach().clone() for k, v in self.model.state_dict().items()}

    def set_state(self, state: dict) -> None:
        self.model.load_state_dict(state)

    def save(self, path) -> None:
        torch.save(self.model.state_dict(), path)

    def load(self, path) -> None:
        self.model.load_state_dict(torch.load(path, weights_only=True, map_location=self.device))


def make_backend(identifier: str, seed: int = 0) -> ModelBackend:
    """``tiny`` or ``hf:<hub id or local path>``."""
    if identifier == "tiny":
        return TinySeq2Seq(seed=seed)
    if identifier.startswith("hf:"):
        torch.manual_seed(seed)
        return HFSeq2Seq(identifier[3:])
    raise ValueError(f"unknown backend identifier {identifier!r}")
