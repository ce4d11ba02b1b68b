"""
Gradient saliency: Vanilla, SmoothGrad and Integrated Gradients, plus the
gradient-input and vector-norm word compositions.

Every method works on a scorer: something that can look up the embeddings
of a prefix and return scores and gradients for a batch of injected
embedding sequences. Language models are wrapped in a ModelScorer
automatically; tests may pass any object with the same interface.
"""

import hashlib
import math
from enum import Enum
from typing import List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from SaliencyWorkflow.util.language_models import (
    LanguageModel,
    input_gradient,
    lookup_embeddings,
    score_gradients,
    validate_prefix,
)


class SaliencyMethod(str, Enum):
    V = 'V'
    SG = 'SG'
    IG = 'IG'


class Composition(str, Enum):
    GI = 'GI'
    VN = 'VN'


class SaliencyConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    method: SaliencyMethod = Field(SaliencyMethod.V, description="Saliency method")
    composition: Composition = Field(Composition.GI, description="Word composition scheme")
    sg_samples: int = Field(30, ge=1, description="SmoothGrad sample count")
    sg_variance_coefficient: float = Field(0.15, ge=0.0, description="Noise variance as a multiple of the embedding-table norm")
    sg_seed: int = Field(0, description="Master seed of the SmoothGrad noise streams")
    ig_steps: int = Field(100, ge=1, description="Integrated Gradients step count")
    ig_baseline: Literal['zero'] = Field('zero', description="Integrated Gradients baseline")
    ig_scheme: Literal['right', 'midpoint'] = Field('right', description="Riemann sum scheme for Integrated Gradients")
    score: Literal['logit', 'log_prob'] = Field('logit', description="Differentiated score of the target class")
    head: Literal['vocab', 'probe'] = Field('probe', description="Head whose class is interpreted")
    batch_size: int = Field(50, ge=1, description="Noisy samples or path points evaluated per tape")


class SaliencyMap(BaseModel):
    tokens: List[str] = Field(description="Prefix tokens")
    scores: List[float] = Field(description="One signed score per prefix position")
    method: str = Field(description="Saliency method (V, SG, IG, or a baseline name)")
    composition: str = Field(description="Composition scheme (GI, VN, or '-' for baselines)")
    target: int = Field(description="Interpreted class index")
    model_id: str = Field(description="Identifier of the interpreted model")

    @model_validator(mode='after')
    def _check_scores(self):
        if len(self.scores) != len(self.tokens):
            raise ValueError(f"{len(self.scores)} scores for {len(self.tokens)} tokens")
        if not all(math.isfinite(s) for s in self.scores):
            raise ValueError("saliency scores must be finite")
        return self


def stable_hash(text: str) -> int:
    """64-bit hash that, unlike hash(), does not change between interpreter runs."""
    return int.from_bytes(hashlib.sha256(text.encode('utf-8')).digest()[:8], 'little')


class ModelScorer:
    """Adapter from a LanguageModel to the scorer interface."""

    def __init__(self, model: LanguageModel, head='probe', score='logit'):
        self.model = model
        self.head = head
        self.score = score
        self.model_id = model.model_id

    @property
    def embedding_table(self) -> np.ndarray:
        return self.model.params['embedding']

    def tokens(self, prefix) -> List[str]:
        return self.model.vocab.decode(validate_prefix(self.model, prefix))

    def embeddings(self, prefix) -> np.ndarray:
        return lookup_embeddings(self.model, prefix)

    def gradient(self, prefix, target_class) -> np.ndarray:
        return input_gradient(self.model, prefix, target_class, head=self.head, score=self.score)

    def gradients(self, batch: np.ndarray, target_class: int):
        return score_gradients(self.model, batch, target_class, head=self.head, score=self.score)


def as_scorer(model, config: Optional[SaliencyConfig] = None):
    config = config or SaliencyConfig()
    if isinstance(model, LanguageModel):
        return ModelScorer(model, head=config.head, score=config.score)
    return model


def _batched_gradients(scorer, points: np.ndarray, target_class: int, batch_size: int) -> np.ndarray:
    chunks = [scorer.gradients(points[start:start + batch_size], target_class)[1]
              for start in range(0, len(points), batch_size)]
    return np.concatenate(chunks, axis=0)


def vanilla(model, prefix: Sequence[int], target_class: int, config: Optional[SaliencyConfig] = None) -> np.ndarray:
    """Input gradient at every position, shape (T, d)."""
    return as_scorer(model, config).gradient(prefix, target_class)


def smoothgrad_sigma(embedding_table: np.ndarray, variance_coefficient: float) -> float:
    """Noise standard deviation: variance is the coefficient times the table's Frobenius norm."""
    return math.sqrt(variance_coefficient * float(np.linalg.norm(embedding_table)))


def smoothgrad(model, prefix: Sequence[int], target_class: int, config: SaliencyConfig,
               stream_id: str = '') -> np.ndarray:
    """
    Mean input gradient over sg_samples Gaussian-perturbed copies of the embeddings.

    Sample k draws its noise from default_rng([sg_seed, stable_hash(stream_id), k]),
    so the result does not depend on evaluation order or worker count.
    """
    scorer = as_scorer(model, config)
    embeddings = scorer.embeddings(prefix)
    sigma = smoothgrad_sigma(scorer.embedding_table, config.sg_variance_coefficient)
    stream = stable_hash(stream_id)

    noisy = np.empty((config.sg_samples,) + embeddings.shape)
    for k in range(config.sg_samples):
        rng = np.random.default_rng([config.sg_seed, stream, k])
        noisy[k] = embeddings + rng.normal(0.0, sigma, size=embeddings.shape)
    return _batched_gradients(scorer, noisy, target_class, config.batch_size).mean(axis=0)


def ig_alphas(steps: int, scheme: str = 'right') -> np.ndarray:
    k = np.arange(1, steps + 1, dtype=np.float64)
    if scheme == 'right':
        return k / steps
    if scheme == 'midpoint':
        return (k - 0.5) / steps
    raise ValueError(f"unknown Riemann scheme {scheme!r}")


def integrated_gradients(model, prefix: Sequence[int], target_class: int, config: SaliencyConfig) -> np.ndarray:
    """(e - b) * mean gradient along the straight path from the zero baseline b to e, shape (T, d)."""
    scorer = as_scorer(model, config)
    embeddings = scorer.embeddings(prefix)
    baseline = np.zeros_like(embeddings)
    alphas = ig_alphas(config.ig_steps, config.ig_scheme)
    path = baseline[None] + alphas[:, None, None] * (embeddings - baseline)[None]
    mean_grad = _batched_gradients(scorer, path, target_class, config.batch_size).mean(axis=0)
    return (embeddings - baseline) * mean_grad


def compose_gi(vectors: np.ndarray, embeddings: Optional[np.ndarray] = None, attribution: bool = False) -> np.ndarray:
    """
    Gradient-input word scores.

    Gradient vectors are dotted with the embeddings. Attribution vectors
    (Integrated Gradients) already carry the input factor and are summed.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError(f"expected (positions, d) vectors, got shape {vectors.shape}")
    if attribution:
        return vectors.sum(axis=1)
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape != vectors.shape:
        raise ValueError(f"dimension mismatch: vectors {vectors.shape} vs embeddings {embeddings.shape}")
    return np.einsum('td,td->t', embeddings, vectors)


def compose_vn(vectors: np.ndarray, d: Optional[int] = None) -> np.ndarray:
    """Scaled L1 norm per word: (1/d) * sum |vector|; never negative."""
    vectors = np.asarray(vectors, dtype=np.float64)
    d = vectors.shape[-1] if d is None else d
    if d <= 0:
        raise ValueError(f"d must be positive, got {d}")
    return np.abs(vectors).sum(axis=-1) / d


def word_saliency(model, prefix: Sequence[int], target_class: int, config: SaliencyConfig,
                  stream_id: Optional[str] = None) -> SaliencyMap:
    """Run the configured method, then the configured composition."""
    scorer = as_scorer(model, config)
    if stream_id is None:
        stream_id = ' '.join(str(i) for i in prefix)

    if config.method is SaliencyMethod.V:
        vectors = vanilla(scorer, prefix, target_class, config)
    elif config.method is SaliencyMethod.SG:
        vectors = smoothgrad(scorer, prefix, target_class, config, stream_id=f'{stream_id}:SG')
    else:
        vectors = integrated_gradients(scorer, prefix, target_class, config)

    if config.composition is Composition.GI:
        scores = compose_gi(vectors, scorer.embeddings(prefix), attribution=config.method is SaliencyMethod.IG)
    else:
        scores = compose_vn(vectors)

    return SaliencyMap(
        tokens=scorer.tokens(prefix),
        scores=[float(s) for s in scores],
        method=config.method.value,
        composition=config.composition.value,
        target=int(target_class),
        model_id=scorer.model_id,
    )
