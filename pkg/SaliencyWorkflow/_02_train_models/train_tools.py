"""
Tools for language-model training.

Next-word cross-entropy over length-grouped batches, Adam with a plateau
schedule and global-norm clipping. The per-sentence losses are shared with
the distillation stage.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from BaseMachine.logger import get_logger
from SaliencyWorkflow.util.autodiff import Tape, backward
from SaliencyWorkflow.util.language_models import LanguageModel, Vocabulary
from SaliencyWorkflow.util.optim_utils import (
    Adam,
    LossTraceRow,
    TrainConfig,
    clip_global_norm,
    length_batches,
    make_scheduler,
)

logger = get_logger(__name__)


def encode_corpus(vocab: Vocabulary, sentences: Sequence[Sequence[str]]) -> List[List[int]]:
    return [vocab.encode(sentence) for sentence in sentences]


def check_corpus(corpus: Sequence[Sequence[int]], vocab_size: int) -> None:
    if not corpus:
        raise ValueError("training corpus is empty")
    for i, sentence in enumerate(corpus):
        if len(sentence) < 2:
            raise ValueError(f"sentence {i} has {len(sentence)} token(s); at least 2 are needed")
        if min(sentence) < 0 or max(sentence) >= vocab_size:
            raise ValueError(f"sentence {i} holds ids outside the vocabulary")


def vocab_logits(model: LanguageModel, tape: Tape, bound, inputs: np.ndarray) -> int:
    """Vocabulary logits at every position, shape (B, T, V)."""
    hidden = model.encode(tape, bound, model.embed(tape, bound, inputs))
    return model.head_logits(tape, bound, hidden, 'vocab')


def picked_log_probs(tape: Tape, logits: int, targets: np.ndarray) -> int:
    batch, steps = targets.shape
    log_probs = tape.log_softmax(logits, axis=-1)
    return tape.index(log_probs, (np.arange(batch)[:, None], np.arange(steps)[None, :], targets))


def next_word_loss(model: LanguageModel, tape: Tape, bound, batch: np.ndarray) -> int:
    """Mean next-word cross-entropy of a (B, T+1) id batch."""
    inputs, targets = batch[:, :-1], batch[:, 1:]
    picked = picked_log_probs(tape, vocab_logits(model, tape, bound, inputs), targets)
    return tape.scale(tape.sum(picked), -1.0 / targets.size)


def corpus_loss(model: LanguageModel, corpus: Sequence[Sequence[int]], batch_size: int = 64) -> float:
    """Token-weighted mean cross-entropy over a corpus, without gradients."""
    if not corpus:
        return math.nan
    total, tokens = 0.0, 0
    rng = np.random.default_rng(0)
    for rows in length_batches([len(s) for s in corpus], batch_size, rng):
        batch = np.array([corpus[i] for i in rows], dtype=np.int64)
        tape = Tape()
        loss = next_word_loss(model, tape, model.bind(tape), batch)
        n = batch[:, 1:].size
        total += float(tape.value(loss)) * n
        tokens += n
    return total / tokens


def run_epochs(model: LanguageModel, corpus: Sequence[Sequence[int]], config: TrainConfig,
               batch_loss, valid_loss, names: Optional[Sequence[str]] = None) -> List[LossTraceRow]:
    """
    Generic training loop: batch_loss(tape, bound, batch) -> scalar node.

    Only the parameters in names (all by default) are updated. The epoch's
    batch order comes from default_rng([seed, epoch]).
    """
    names = list(model.params if names is None else names)
    optimizer = Adam.from_config({n: model.params[n] for n in names}, config)
    scheduler = make_scheduler(optimizer, config)
    lengths = [len(s) for s in corpus]
    trace = []
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        total, tokens = 0.0, 0
        for rows in length_batches(lengths, config.batch_size, rng):
            batch = np.array([corpus[i] for i in rows], dtype=np.int64)
            tape = Tape()
            bound = model.bind(tape, trainable=True, names=names)
            loss = batch_loss(tape, bound, batch)
            grads_by_node = backward(tape, loss)
            grads = {name: grads_by_node[bound[name]] for name in names}
            clip_global_norm(grads, config.clip_norm)
            optimizer.step(grads)

            n = batch[:, 1:].size
            total += float(tape.value(loss)) * n
            tokens += n

        train = total / tokens
        valid = valid_loss()
        monitored = train if math.isnan(valid) else valid
        trace.append(LossTraceRow(epoch=epoch, train_loss=train, valid_loss=valid, learning_rate=optimizer.lr))
        scheduler.step(monitored)
        logger.info(f"[{model.model_id}] epoch {epoch}/{config.epochs} train={train:.4f} "
                    f"valid={valid:.4f} lr={optimizer.lr:.2e}")
    return trace


def train_lm(model: LanguageModel, corpus: Sequence[Sequence[int]], config: TrainConfig,
             valid_corpus: Sequence[Sequence[int]] = ()) -> Tuple[LanguageModel, List[LossTraceRow]]:
    """
    Train the body and vocabulary head on next-word prediction, in place.

    The probe head is left alone. Returns the model and its per-epoch trace;
    valid_loss is NaN when no validation corpus is given.
    """
    check_corpus(corpus, len(model.vocab))
    names = model.body_parameter_names()
    trace = run_epochs(
        model, corpus, config,
        batch_loss=lambda tape, bound, batch: next_word_loss(model, tape, bound, batch),
        valid_loss=lambda: corpus_loss(model, valid_corpus) if valid_corpus else math.nan,
        names=names,
    )
    return model, trace
