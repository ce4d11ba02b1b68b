"""
Optimization helpers: Adam, learning-rate schedules, gradient clipping,
deterministic batching and loss-trace CSV files.
"""

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

LOSS_TRACE_COLUMNS = ('epoch', 'train_loss', 'valid_loss', 'learning_rate')


class TrainConfig(BaseModel):
    epochs: int = Field(10, ge=0, description="Passes over the training data")
    batch_size: int = Field(32, ge=1, description="Sequences per optimizer step")
    learning_rate: float = Field(1e-3, ge=0.0, description="Initial Adam learning rate")
    beta1: float = Field(0.9, ge=0.0, lt=1.0, description="Adam first-moment decay")
    beta2: float = Field(0.999, ge=0.0, lt=1.0, description="Adam second-moment decay")
    eps: float = Field(1e-8, gt=0.0, description="Adam denominator stabilizer")
    schedule: Literal['plateau', 'constant'] = Field('plateau', description="Learning-rate schedule")
    plateau_factor: float = Field(0.5, gt=0.0, le=1.0, description="Multiplier applied on a plateau")
    plateau_patience: int = Field(2, ge=0, description="Epochs without improvement before reducing")
    clip_norm: Optional[float] = Field(1.0, gt=0.0, description="Global gradient-norm clip; none disables")
    seed: int = Field(0, description="Seed of the batch order")
    loss: Literal['cross_entropy', 'distillation'] = Field('cross_entropy', description="Training objective")


class Adam:
    """Adam over a dict of named float64 arrays, updated in place."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(value) for name, value in params.items()}
        self.v = {name: np.zeros_like(value) for name, value in params.items()}

    @classmethod
    def from_config(cls, params: Dict[str, np.ndarray], config: TrainConfig) -> 'Adam':
        return cls(params, lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    def step(self, grads: Dict[str, np.ndarray]):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name in sorted(grads):
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            self.params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class ConstantSchedule:
    def __init__(self, optimizer: Adam):
        self.optimizer = optimizer

    def step(self, metric: float):
        pass


class ReduceLROnPlateau:
    """Multiply the learning rate by factor after patience epochs without relative improvement."""

    def __init__(self, optimizer: Adam, factor: float = 0.5, patience: int = 2,
                 threshold: float = 1e-4, min_lr: float = 0.0):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.min_lr = min_lr
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, metric: float):
        if metric < self.best * (1.0 - self.threshold):
            self.best = metric
            self.bad_epochs = 0
            return
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.optimizer.lr = max(self.optimizer.lr * self.factor, self.min_lr)
            self.bad_epochs = 0


def make_scheduler(optimizer: Adam, config: TrainConfig):
    if config.schedule == 'plateau':
        return ReduceLROnPlateau(optimizer, factor=config.plateau_factor, patience=config.plateau_patience)
    return ConstantSchedule(optimizer)


def clip_global_norm(grads: Dict[str, np.ndarray], max_norm: Optional[float]) -> float:
    """Scale grads in place so their joint L2 norm is at most max_norm; returns the norm before clipping."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


def length_batches(lengths: Sequence[int], batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Shuffled batches of indices in which every sequence has the same length."""
    groups: Dict[int, List[int]] = {}
    for i, length in enumerate(lengths):
        groups.setdefault(length, []).append(i)
    batches = []
    for length in sorted(groups):
        members = np.array(groups[length])
        members = members[rng.permutation(len(members))]
        batches.extend(members[start:start + batch_size] for start in range(0, len(members), batch_size))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def split_holdout(n: int, fraction: float, rng: np.random.Generator):
    """Random (train, valid) index split; valid is empty when fraction is 0 or n < 2."""
    order = rng.permutation(n)
    n_valid = int(round(n * fraction)) if n >= 2 else 0
    n_valid = min(n_valid, n - 1) if n > 0 else 0
    return np.sort(order[n_valid:]), np.sort(order[:n_valid])


@dataclass
class LossTraceRow:
    epoch: int
    train_loss: float
    valid_loss: float
    learning_rate: float


def write_loss_trace(path, rows: Iterable[LossTraceRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=LOSS_TRACE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(row).items()})
    return path


def read_loss_trace(path) -> List[LossTraceRow]:
    with open(path, newline='', encoding='utf-8') as f:
        return [LossTraceRow(epoch=int(r['epoch']), train_loss=float(r['train_loss']),
                             valid_loss=float(r['valid_loss']), learning_rate=float(r['learning_rate']))
                for r in csv.DictReader(f)]
