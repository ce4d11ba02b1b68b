"""
Tools for knowledge distillation.

The student is one layer shallower than the teacher (configurable for the
attention model) and, by default, starts from a copy of the teacher's
embedding, heads and lower layers. It is trained on
soft_weight * soft cross-entropy at the given temperature
plus (1 - soft_weight) * next-word cross-entropy.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from BaseMachine.logger import get_logger
from SaliencyWorkflow._02_train_models.train_tools import (
    check_corpus,
    picked_log_probs,
    run_epochs,
    vocab_logits,
)
from SaliencyWorkflow.util.autodiff import Tape
from SaliencyWorkflow.util.language_models import LanguageModel, shrink_model
from SaliencyWorkflow.util.optim_utils import LossTraceRow, TrainConfig, length_batches

logger = get_logger(__name__)


class DistillConfig(BaseModel):
    temperature: float = Field(2.0, gt=0.0, description="Softmax temperature of the soft targets")
    soft_weight: float = Field(0.5, ge=0.0, le=1.0, description="Weight of the soft-target term")
    student_layers: Optional[int] = Field(None, ge=1, description="Student depth; default teacher depth - 1")
    init_from_teacher: bool = Field(True, description="Copy embedding, heads and lower layers from the teacher")


def student_depth(teacher: LanguageModel, config: DistillConfig) -> int:
    depth = config.student_layers if config.student_layers is not None else teacher.num_layers - 1
    if depth < 1:
        raise ValueError(f"student depth must be at least 1 (teacher has {teacher.num_layers} layer(s))")
    return depth


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def soft_targets(teacher_logits: np.ndarray, temperature: float) -> np.ndarray:
    return np.exp(_log_softmax(np.asarray(teacher_logits, dtype=np.float64) / temperature))


def soft_target_loss(teacher_logits: np.ndarray, student_logits: np.ndarray, temperature: float) -> float:
    """Mean over positions of -sum_v p_teacher(v; T) log p_student(v; T)."""
    targets = soft_targets(teacher_logits, temperature)
    log_student = _log_softmax(np.asarray(student_logits, dtype=np.float64) / temperature)
    per_position = -(targets * log_student).sum(axis=-1)
    return float(per_position.mean())


def all_vocab_logits(model: LanguageModel, inputs: np.ndarray) -> np.ndarray:
    tape = Tape()
    return tape.value(vocab_logits(model, tape, model.bind(tape), inputs)).copy()


def distillation_loss(student: LanguageModel, teacher: LanguageModel, tape: Tape, bound,
                      batch: np.ndarray, config: DistillConfig) -> int:
    inputs, targets = batch[:, :-1], batch[:, 1:]
    logits = vocab_logits(student, tape, bound, inputs)
    n = targets.size

    soft = soft_targets(all_vocab_logits(teacher, inputs), config.temperature)
    log_student = tape.log_softmax(tape.scale(logits, 1.0 / config.temperature), axis=-1)
    soft_term = tape.scale(tape.sum(tape.mul(log_student, tape.constant(soft))), -config.soft_weight / n)

    hard_term = tape.scale(tape.sum(picked_log_probs(tape, logits, targets)), -(1.0 - config.soft_weight) / n)
    return tape.add(soft_term, hard_term)


def argmax_agreement(teacher: LanguageModel, student: LanguageModel, corpus: Sequence[Sequence[int]],
                     batch_size: int = 64) -> float:
    """Fraction of next-word positions where student and teacher argmax agree."""
    agree, total = 0, 0
    rng = np.random.default_rng(0)
    for rows in length_batches([len(s) for s in corpus], batch_size, rng):
        inputs = np.array([corpus[i] for i in rows], dtype=np.int64)[:, :-1]
        a = all_vocab_logits(teacher, inputs).argmax(axis=-1)
        b = all_vocab_logits(student, inputs).argmax(axis=-1)
        agree += int((a == b).sum())
        total += a.size
    return agree / total if total else math.nan


def distill_student(teacher: LanguageModel, corpus: Sequence[Sequence[int]], distill_config: DistillConfig,
                    train_config: TrainConfig, seed: int = 0, valid_corpus: Sequence[Sequence[int]] = (),
                    model_id: Optional[str] = None) -> Tuple[LanguageModel, List[LossTraceRow]]:
    """Build the shallower student and train its body and vocabulary head against the teacher."""
    check_corpus(corpus, len(teacher.vocab))
    student = shrink_model(teacher, student_depth(teacher, distill_config), seed,
                           copy_weights=distill_config.init_from_teacher,
                           model_id=model_id or f'{teacher.model_id}-student')
    logger.info(f"Distilling {teacher.model_id} ({teacher.num_layers} layers, {teacher.parameter_count()} params) "
                f"into {student.model_id} ({student.num_layers} layers, {student.parameter_count()} params)")

    def valid_loss():
        if not valid_corpus:
            return math.nan
        total, count = 0.0, 0
        for rows in length_batches([len(s) for s in valid_corpus], 64, np.random.default_rng(0)):
            batch = np.array([valid_corpus[i] for i in rows], dtype=np.int64)
            tape = Tape()
            loss = distillation_loss(student, teacher, tape, student.bind(tape), batch, distill_config)
            total += float(tape.value(loss)) * batch[:, 1:].size
            count += batch[:, 1:].size
        return total / count

    trace = run_epochs(
        student, corpus, train_config,
        batch_loss=lambda tape, bound, batch: distillation_loss(student, teacher, tape, bound, batch, distill_config),
        valid_loss=valid_loss,
        names=student.body_parameter_names(),
    )
    return student, trace
