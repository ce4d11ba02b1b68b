"""
Tools for probe fine-tuning: train only the two-class probe head on the
frozen body's final hidden states.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from BaseMachine.logger import get_logger
from SaliencyWorkflow._01_generate_data.data_tools import TAGS, TestInstance
from SaliencyWorkflow.util.autodiff import Tape, backward
from SaliencyWorkflow.util.language_models import LanguageModel, final_hidden_states, predict_tag
from SaliencyWorkflow.util.optim_utils import (
    Adam,
    LossTraceRow,
    TrainConfig,
    clip_global_norm,
    make_scheduler,
    split_holdout,
)

logger = get_logger(__name__)

PROBE_WEIGHT = 'probe.weight'
PROBE_BIAS = 'probe.bias'


def probe_examples(model: LanguageModel, instances: Sequence[TestInstance]) -> Tuple[List[List[int]], np.ndarray]:
    """Encoded prefixes and gold class indices in the model's probe tag order."""
    prefixes, labels = [], []
    for instance in instances:
        if instance.gold_tag not in model.probe_tags:
            raise ValueError(f"instance {instance.id}: tag {instance.gold_tag!r} not in probe tags {model.probe_tags}")
        prefixes.append(model.vocab.encode(instance.tokens))
        labels.append(model.probe_tags.index(instance.gold_tag))
    return prefixes, np.array(labels, dtype=np.int64)


def _probe_loss(tape: Tape, weight: int, bias: int, features: np.ndarray, labels: np.ndarray) -> int:
    logits = tape.add(tape.matmul(tape.constant(features), tape.transpose(weight)), bias)
    picked = tape.index(tape.log_softmax(logits, axis=-1), (np.arange(len(labels)), labels))
    return tape.scale(tape.sum(picked), -1.0 / len(labels))


def _feature_loss(params, features: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return math.nan
    tape = Tape()
    loss = _probe_loss(tape, tape.constant(params[PROBE_WEIGHT]), tape.constant(params[PROBE_BIAS]), features, labels)
    return float(tape.value(loss))


def probe_split(n: int, valid_fraction: float, seed: int):
    """(train, valid) rows of n probe examples, as train_probe_on_features splits them under seed."""
    return split_holdout(n, valid_fraction, np.random.default_rng([seed, 0]))


def heldout_probe_instances(instances: Sequence[TestInstance], valid_fraction: float, seed: int) -> List[TestInstance]:
    """The probe-tuning instances finetune_probe kept out of training under the same seed."""
    _, valid_rows = probe_split(len(instances), valid_fraction, seed)
    return [instances[i] for i in valid_rows]


def train_probe_on_features(params, features: np.ndarray, labels: np.ndarray, config: TrainConfig,
                            valid_fraction: float = 0.1, model_id: str = 'probe') -> List[LossTraceRow]:
    """Fit probe.weight / probe.bias in params (updated in place) on fixed features."""
    train_rows, valid_rows = probe_split(len(labels), valid_fraction, config.seed)
    optimizer = Adam.from_config({PROBE_WEIGHT: params[PROBE_WEIGHT], PROBE_BIAS: params[PROBE_BIAS]}, config)
    scheduler = make_scheduler(optimizer, config)

    trace = []
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(train_rows)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            rows = order[start:start + config.batch_size]
            tape = Tape()
            weight = tape.leaf(params[PROBE_WEIGHT], target=True)
            bias = tape.leaf(params[PROBE_BIAS], target=True)
            loss = _probe_loss(tape, weight, bias, features[rows], labels[rows])
            node_grads = backward(tape, loss)
            grads = {PROBE_WEIGHT: node_grads[weight], PROBE_BIAS: node_grads[bias]}
            clip_global_norm(grads, config.clip_norm)
            optimizer.step(grads)
            total += float(tape.value(loss)) * len(rows)

        train = total / max(len(order), 1)
        valid = _feature_loss(params, features[valid_rows], labels[valid_rows])
        scheduler.step(train if math.isnan(valid) else valid)
        trace.append(LossTraceRow(epoch=epoch, train_loss=train, valid_loss=valid, learning_rate=optimizer.lr))
        logger.debug(f"[{model_id}] probe epoch {epoch} train={train:.4f} valid={valid:.4f}")
    return trace


def finetune_probe(model: LanguageModel, instances: Sequence[TestInstance], config: TrainConfig,
                   valid_fraction: float = 0.1, model_id: Optional[str] = None) -> Tuple[LanguageModel, List[LossTraceRow]]:
    """
    A copy of model whose probe head is trained on the instances' gold tags.

    Every parameter outside the probe head is copied unchanged; the body is
    run once to collect final hidden states.
    """
    if not instances:
        raise ValueError("probe fine-tuning needs at least one instance")
    kinds = {instance.kind for instance in instances}
    tags = TAGS[kinds.pop()] if len(kinds) == 1 else None
    tuned = model.copy(model_id=model_id)
    if tags is not None and tuple(tuned.probe_tags) != tags:
        tuned.probe_tags = tags

    prefixes, labels = probe_examples(tuned, instances)
    if len(set(labels.tolist())) < 2:
        logger.warning(f"[{tuned.model_id}] probe data holds a single class ({len(labels)} instances); training anyway")
    features = final_hidden_states(tuned, prefixes)
    trace = train_probe_on_features(tuned.params, features, labels, config, valid_fraction, tuned.model_id)
    return tuned, trace


def probe_accuracy(model: LanguageModel, instances: Sequence[TestInstance]) -> float:
    if not instances:
        return math.nan
    prefixes, labels = probe_examples(model, instances)
    correct = sum(predict_tag(model, prefix)[0] == label for prefix, label in zip(prefixes, labels))
    return correct / len(labels)
