"""Training loop for the ST-FT, ST-CoT and MTL paradigms.

MTL steps combine the two task losses as
``alpha * stance_loss + (1 - alpha) * rationale_loss`` where each term is the
batch mean of per-sequence mean token cross-entropies.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .backends import BackendFailure, ModelBackend
from .codec import (
    ParseOutcome,
    Paradigm,
    TaskTag,
    TextFormat,
    TrainingInstance,
    encode_examples,
    parse_generation,
    prediction_input,
)
from .corpus import CorpusSplit, StanceExample, subsample
from .evaluator import score

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class MissingRationaleStore(TrainingError):
    pass


class NonFiniteLoss(ValueError):
    pass


class EmptyInstanceList(ValueError):
    pass


@dataclass
class TrainConfig:
    paradigm: Paradigm = Paradigm.ST_FT
    alpha: float = 0.5
    batch_size: int = 128
    learning_rate: float = 5e-5
    epochs: int = 30
    max_input_tokens: int = 512
    max_generation_tokens: int = 256
    seed: int = 42
    instructed_format: bool = False
    train_fraction: float = 1.0
    # Not part of the published setup; caps total optimizer steps when set.
    max_steps: int | None = None
    eval_each_epoch: bool = True

    def __post_init__(self):
        self.paradigm = Paradigm(self.paradigm)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("batch_size >= 1, epochs >= 0 and learning_rate > 0 are required")
        if not 0 < self.train_fraction <= 1:
            raise ValueError(f"train_fraction must lie in (0, 1], got {self.train_fraction}")

    @property
    def alpha_ignored(self) -> bool:
        return self.paradigm is not Paradigm.MTL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["paradigm"] = self.paradigm.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class LossBreakdown:
    stance_loss: float
    rationale_loss: float
    combined: float
    alpha: float


def _weighted(stance_loss, rationale_loss, alpha: float):
    return alpha * stance_loss + (1 - alpha) * rationale_loss


def mtl_combine_loss(stance_loss: float, rationale_loss: float, alpha: float) -> LossBreakdown:
    if not (math.isfinite(stance_loss) and math.isfinite(rationale_loss)):
        raise NonFiniteLoss(f"stance={stance_loss}, rationale={rationale_loss}")
    if stance_loss < 0 or rationale_loss < 0:
        raise ValueError("losses must be non-negative")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return LossBreakdown(stance_loss, rationale_loss, _weighted(stance_loss, rationale_loss, alpha), alpha)


@dataclass
class Batch:
    stance: list[TrainingInstance]
    rationale: list[TrainingInstance] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.stance) + len(self.rationale)


def _stream(items: Sequence, rng: np.random.Generator, length: int) -> list:
    """Seeded permutations of ``items``, concatenated until ``length`` is reached."""
    out: list = []
    while len(out) < length:
        out.extend(items[i] for i in rng.permutation(len(items)))
    return out[:length]


def build_batches(instances: Sequence[TrainingInstance], config: TrainConfig, epoch_seed: int) -> list[Batch]:
    """One epoch of batches.

    Single-task paradigms: a seeded shuffle cut into ``batch_size`` chunks.
    MTL: half of every batch comes from each task's own shuffled stream; the
    shorter stream is recycled until the longer one is used up. The stance
    stream uses the same RNG stream as ST-FT, so an MTL run with batch size
    ``2b`` sees the stance batches of an ST-FT run with batch size ``b``.
    """
    if not instances:
        raise EmptyInstanceList("no training instances")
    stance = [i for i in instances if i.task is TaskTag.STANCE]
    if config.paradigm is not Paradigm.MTL:
        order = _stream(stance, np.random.default_rng([epoch_seed, 0]), len(stance))
        b = config.batch_size
        return [Batch(order[k:k + b]) for k in range(0, len(order), b)]
    rationale = [i for i in instances if i.task is TaskTag.RATIONALE]
    if not stance or not rationale:
        raise EmptyInstanceList("MTL needs both stance and rationale instances")
    half = max(1, config.batch_size // 2)
    n = max(len(stance), len(rationale))
    s = _stream(stance, np.random.default_rng([epoch_seed, 0]), n)
    r = _stream(rationale, np.random.default_rng([epoch_seed, 1]), n)
    return [Batch(s[k:k + half], r[k:k + half]) for k in range(0, n, half)]


@dataclass
class EpochLog:
    epoch: int
    stance_loss: float
    rationale_loss: float
    combined: float
    val_f_avg: float | None
    seconds: float


@dataclass
class TrainRecord:
    config: dict
    epochs: list[EpochLog] = field(default_factory=list)
    steps: list[LossBreakdown] = field(default_factory=list)
    best_epoch: int | None = None
    best_checkpoint: str | None = None
    n_instances: int = 0
    excluded: int = 0
    alpha_ignored: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def write_log_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "stance_loss", "rationale_loss", "combined", "val_f_avg", "seconds"])
            for e in self.epochs:
                w.writerow([e.epoch, e.stance_loss, e.rationale_loss, e.combined,
                            "" if e.val_f_avg is None else e.val_f_avg, round(e.seconds, 3)])


def step_loss(backend: ModelBackend, stance_batch, rationale_batch, alpha: float = 1.0):
    """Differentiable training objective for one batch plus its float breakdown.

    Each batch argument is an ``(input_ids, target_ids)`` pair. With no
    rationale batch the objective is the stance loss alone.
    """
    stance = backend.teacher_forced_loss(*stance_batch).mean()
    if rationale_batch is None:
        return stance, mtl_combine_loss(stance.item(), 0.0, 1.0)
    rationale = backend.teacher_forced_loss(*rationale_batch).mean()
    loss = _weighted(stance, rationale, alpha)
    return loss, mtl_combine_loss(stance.item(), rationale.item(), alpha)


def _budget(backend: ModelBackend, config: TrainConfig):
    return (lambda text: len(backend.tokenize(text)), config.max_input_tokens)


def _text_format(backend: ModelBackend, config: TrainConfig, fmt: TextFormat | None) -> TextFormat:
    fmt = fmt or TextFormat(separator=getattr(backend, "eos_text", "</s>"))
    return replace(fmt, instructed=config.instructed_format)


def fit(
    backend: ModelBackend,
    instances: Sequence[TrainingInstance],
    config: TrainConfig,
    validate: Callable[[], float | None] | None = None,
    checkpoint_dir: str | Path | None = None,
    manifest: Mapping | None = None,
) -> TrainRecord:
    """Optimise ``backend`` on pre-encoded instances.

    After every epoch ``validate`` (if given) returns a validation F_avg; the
    best epoch (earliest on ties) is restored into the backend at the end.
    Without validation the final epoch is kept.
    """
    record = TrainRecord(config.to_dict(), n_instances=len(instances), alpha_ignored=config.alpha_ignored)
    if config.epochs == 0:
        return record
    if config.alpha_ignored and config.alpha != TrainConfig.alpha:
        log.warning("alpha=%s ignored for paradigm %s", config.alpha, config.paradigm.value)
    backend.configure_optimizer(config.learning_rate)
    cap = config.max_generation_tokens
    tokens = {}

    def ids(batch: list[TrainingInstance]):
        for inst in batch:
            if inst not in tokens:
                tokens[inst] = (backend.tokenize(inst.input_text), backend.tokenize(inst.target_text)[:cap])
        return [tokens[i][0] for i in batch], [tokens[i][1] for i in batch]

    mtl = config.paradigm is Paradigm.MTL
    alpha = config.alpha if mtl else 1.0
    best_state, best_f = None, None
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        epoch_steps: list[LossBreakdown] = []
        for batch in build_batches(instances, config, epoch_seed=config.seed * 1000 + epoch):
            try:
                loss, parts = step_loss(backend, ids(batch.stance), ids(batch.rationale) if mtl else None, alpha)
                backend.step(loss)
            except RuntimeError as e:
                raise BackendFailure(f"epoch {epoch}, step {len(record.steps) + 1}: {e}") from e
            epoch_steps.append(parts)
            record.steps.append(parts)
            if config.max_steps is not None and len(record.steps) >= config.max_steps:
                break
        val_f = validate() if (validate and config.eval_each_epoch) else None
        record.epochs.append(EpochLog(
            epoch,
            float(np.mean([s.stance_loss for s in epoch_steps])),
            float(np.mean([s.rationale_loss for s in epoch_steps])),
            float(np.mean([s.combined for s in epoch_steps])),
            val_f,
            time.perf_counter() - t0,
        ))
        if val_f is None or best_f is None or val_f > best_f:
            best_f, best_state, record.best_epoch = val_f, backend.get_state(), epoch
            if ckpt_dir is not None:
                _save_checkpoint(backend, ckpt_dir, config, epoch, val_f, manifest)
                record.best_checkpoint = str(ckpt_dir / "best.pt")
            else:
                record.best_checkpoint = f"epoch-{epoch}"
        if config.max_steps is not None and len(record.steps) >= config.max_steps:
            break
    if best_state is not None:
        backend.set_state(best_state)
    return record


def _save_checkpoint(backend, ckpt_dir: Path, config: TrainConfig, epoch: int, val_f, manifest) -> None:
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    backend.save(ckpt_dir / "best.pt")
    meta = {"config": config.to_dict(), "epoch": epoch, "validation_f_avg": val_f,
            "backend": getattr(backend, "identifier", "unknown"), **(manifest or {})}
    (ckpt_dir / "best.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def train(
    backend: ModelBackend,
    split: CorpusSplit,
    rationales: Mapping | None,
    config: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    fmt: TextFormat | None = None,
) -> TrainRecord:
    """Encode the split for ``config.paradigm`` and run :func:`fit` with validation each epoch."""
    if config.paradigm is not Paradigm.ST_FT and rationales is None:
        raise MissingRationaleStore(f"{config.paradigm.value} needs a rationale store")
    fmt = _text_format(backend, config, fmt)
    pool = split.train
    if config.train_fraction < 1:
        pool = subsample(pool, config.train_fraction, config.seed)
    instances, excluded = encode_examples(pool, config.paradigm, dict(rationales or {}), fmt, _budget(backend, config))
    if excluded:
        log.warning("%d training examples lack a usable rationale and were excluded", excluded)
    val = split.validation
    golds, topics = [e.gold for e in val], [e.topic for e in val]

    def validate() -> float:
        return score(golds, predict(backend, val, config.paradigm, config, fmt), topics).f_avg

    if config.epochs and not instances:
        raise EmptyInstanceList("no training instances after encoding")
    manifest = {"corpus_fingerprint": split.fingerprint()}
    record = fit(backend, instances, config, validate if val else None, checkpoint_dir, manifest)
    record.excluded = excluded
    if checkpoint_dir is not None and record.epochs:
        record.write_log_csv(Path(checkpoint_dir) / "train_log.csv")
    return record


def predict(
    backend: ModelBackend,
    examples: Sequence[StanceExample],
    paradigm: Paradigm,
    config: TrainConfig,
    fmt: TextFormat | None = None,
) -> list[ParseOutcome]:
    """Greedy-decode and parse one generation per example (stance-prefixed input for MTL)."""
    paradigm = Paradigm(paradigm)
    fmt = _text_format(backend, config, fmt)
    budget = _budget(backend, config)
    inputs = [backend.tokenize(prediction_input(ex, paradigm, fmt, budget)) for ex in examples]
    texts: list[str] = []
    for k in range(0, len(inputs), config.batch_size):
        texts.extend(backend.generate(inputs[k:k + config.batch_size], config.max_generation_tokens))
    return [parse_generation(t, paradigm, fmt) for t in texts]
