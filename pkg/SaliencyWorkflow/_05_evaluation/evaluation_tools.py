"""
Tools for evaluating saliency interpretations.

Plausibility: does the interpretation rank the cue above the attractor
(expected scenario) or the attractor above the cue (alternative scenario)?
Faithfulness: are interpretations consistent across interpretation-preserving
input substitutions and across a distilled copy of the model?
"""

import math
from enum import Enum
from typing import Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from BaseMachine.logger import get_logger
from SaliencyWorkflow._01_generate_data.data_tools import PerturbationPair, TestInstance
from SaliencyWorkflow.util.language_models import LanguageModel, predict_tag
from SaliencyWorkflow.util.parallel_utils import ordered_map
from SaliencyWorkflow.util.saliency_methods import SaliencyConfig, SaliencyMap, stable_hash, word_saliency

logger = get_logger(__name__)

BASELINE_COMPOSITION = '-'
CORRELATION_TOLERANCE = 1e-12


class EmptyAnnotationError(ValueError):
    """An instance has an empty cue or attractor set."""


class UndefinedCorrelationError(ValueError):
    """Pearson correlation is undefined because a score vector is constant."""


class Scenario(str, Enum):
    EXPECTED = 'Expected'
    ALTERNATIVE = 'Alternative'


class BaselineConfig(BaseModel):
    name: Literal['Random', 'Nearest'] = Field(description="Baseline interpretation")
    seed: int = Field(0, description="Master seed of the Random baseline")


Interpretation = Union[SaliencyConfig, BaselineConfig]


# ----------------------------------------------------------------------------
# Records and aggregation
# ----------------------------------------------------------------------------

class PlausibilityRecord(BaseModel):
    instance_id: str = Field(description="Evaluated instance")
    scenario: Scenario = Field(description="Scenario of the model's prediction")
    predicted_tag: str = Field(description="Argmax probe tag")
    gold_tag: str = Field(description="Gold agreement tag")
    passed: bool = Field(description="Whether the interpretation passes the plausibility test")
    max_cue: float = Field(description="Largest cue score")
    max_attractor: float = Field(description="Largest attractor score")
    cues: List[int] = Field(description="Cue positions")
    attractors: List[int] = Field(description="Attractor positions")
    saliency: SaliencyMap = Field(description="Interpretation that was tested")

    @model_validator(mode='after')
    def _check_verdict(self):
        expected = (self.max_cue > self.max_attractor if self.scenario is Scenario.EXPECTED
                    else self.max_attractor > self.max_cue)
        if expected != self.passed:
            raise ValueError(f"{self.instance_id}: verdict {self.passed} contradicts the scores")
        return self


class ConsistencyRecord(BaseModel):
    item_id: str = Field(description="Pair id (first:second) or instance id")
    scenario: Scenario = Field(description="Scenario of the first pair member, or of the teacher")
    pearson_r: float = Field(description="Correlation of the two score vectors")
    first: SaliencyMap = Field(description="Interpretation of the first member / the teacher")
    second: SaliencyMap = Field(description="Interpretation of the second member / the student")

    @model_validator(mode='after')
    def _check_r(self):
        if not abs(self.pearson_r) <= 1.0 + CORRELATION_TOLERANCE:
            raise ValueError(f"{self.item_id}: correlation {self.pearson_r} outside [-1, 1]")
        return self


class AggregateReport(BaseModel):
    all: Optional[float] = Field(description="Mean over all counted items")
    exp: Optional[float] = Field(description="Mean over expected-scenario items")
    alt: Optional[float] = Field(description="Mean over alternative-scenario items")
    occ_exp: Optional[float] = Field(description="Fraction of counted items in the expected scenario")
    occ_alt: Optional[float] = Field(description="Fraction of counted items in the alternative scenario")
    n: int = Field(description="Counted items")
    n_exp: int = Field(description="Counted expected-scenario items")
    n_alt: int = Field(description="Counted alternative-scenario items")
    excluded: int = Field(0, description="Items excluded (empty annotations, undefined correlation, failures)")


def aggregate(values: Sequence[Tuple[Scenario, float]], excluded: int = 0) -> AggregateReport:
    """Mean value overall and per scenario; all is the occurrence-weighted mean of exp and alt."""
    exp_values = [v for s, v in values if s is Scenario.EXPECTED]
    alt_values = [v for s, v in values if s is Scenario.ALTERNATIVE]
    n = len(exp_values) + len(alt_values)
    if n == 0:
        return AggregateReport(all=None, exp=None, alt=None, occ_exp=None, occ_alt=None,
                               n=0, n_exp=0, n_alt=0, excluded=excluded)
    exp = math.fsum(exp_values) / len(exp_values) if exp_values else None
    alt = math.fsum(alt_values) / len(alt_values) if alt_values else None
    occ_exp = len(exp_values) / n
    occ_alt = len(alt_values) / n
    overall = (occ_exp * exp if exp is not None else 0.0) + (occ_alt * alt if alt is not None else 0.0)
    return AggregateReport(all=overall, exp=exp, alt=alt, occ_exp=occ_exp, occ_alt=occ_alt,
                           n=n, n_exp=len(exp_values), n_alt=len(alt_values), excluded=excluded)


# ----------------------------------------------------------------------------
# Rules and metrics
# ----------------------------------------------------------------------------

def classify_scenario(predicted_tag: str, gold_tag: str) -> Scenario:
    return Scenario.EXPECTED if predicted_tag == gold_tag else Scenario.ALTERNATIVE


def _annotated_maxima(scores: Sequence[float], cues: Sequence[int], attractors: Sequence[int]) -> Tuple[float, float]:
    if not cues or not attractors:
        raise EmptyAnnotationError(f"cue set {list(cues)} or attractor set {list(attractors)} is empty")
    for position in list(cues) + list(attractors):
        if not 0 <= position < len(scores):
            raise ValueError(f"annotated position {position} outside {len(scores)} scores")
    return max(scores[i] for i in cues), max(scores[i] for i in attractors)


def plausibility_test(scores: Union[SaliencyMap, Sequence[float]], cues: Sequence[int], attractors: Sequence[int],
                      scenario: Scenario) -> bool:
    """Strict comparison of the cue and attractor maxima; a tie fails in both scenarios."""
    if isinstance(scores, SaliencyMap):
        scores = scores.scores
    max_cue, max_attractor = _annotated_maxima(scores, cues, attractors)
    if Scenario(scenario) is Scenario.EXPECTED:
        return max_cue > max_attractor
    return max_attractor > max_cue


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation, clipped to [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"pearson needs two equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("pearson needs at least two values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant score vector")
    return float(np.clip(np.dot(dx, dy) / math.sqrt(sxx * syy), -1.0, 1.0))


# ----------------------------------------------------------------------------
# Interpretations
# ----------------------------------------------------------------------------

def baseline_random(instance: TestInstance, seed: int, target: Optional[int] = None) -> SaliencyMap:
    """I.i.d. uniform scores from a stream keyed by (seed, instance id)."""
    rng = np.random.default_rng([seed, stable_hash(instance.id)])
    return SaliencyMap(
        tokens=list(instance.tokens),
        scores=rng.random(len(instance.tokens)).tolist(),
        method='Random',
        composition=BASELINE_COMPOSITION,
        target=instance.gold_class if target is None else int(target),
        model_id='baseline',
    )


def baseline_nearest(instance: TestInstance, target: Optional[int] = None) -> SaliencyMap:
    """Score 1 on the annotated position closest to the prediction point, 0 elsewhere."""
    annotated = instance.cues + instance.attractors
    if not annotated:
        raise EmptyAnnotationError(f"{instance.id}: no cue or attractor to score")
    scores = [0.0] * len(instance.tokens)
    scores[max(annotated)] = 1.0
    return SaliencyMap(
        tokens=list(instance.tokens),
        scores=scores,
        method='Nearest',
        composition=BASELINE_COMPOSITION,
        target=instance.gold_class if target is None else int(target),
        model_id='baseline',
    )


def method_label(method: Interpretation) -> Tuple[str, str]:
    if isinstance(method, BaselineConfig):
        return method.name, BASELINE_COMPOSITION
    return method.method.value, method.composition.value


def interpret(model: LanguageModel, instance: TestInstance, target: int, method: Interpretation) -> SaliencyMap:
    if isinstance(method, BaselineConfig):
        if method.name == 'Random':
            return baseline_random(instance, method.seed, target)
        return baseline_nearest(instance, target)
    prefix = model.vocab.encode(instance.tokens)
    return word_saliency(model, prefix, target, method, stream_id=instance.id)


def predicted_scenario(model: LanguageModel, instance: TestInstance) -> Tuple[int, str, Scenario]:
    predicted, _ = predict_tag(model, model.vocab.encode(instance.tokens))
    tag = model.probe_tags[predicted]
    return predicted, tag, classify_scenario(tag, instance.gold_tag)


# ----------------------------------------------------------------------------
# Tests
# ----------------------------------------------------------------------------

def _guarded(fn: Callable, label: str) -> Callable:
    """Wrap a per-item evaluation so that a failure becomes a counted exclusion."""
    def run(item):
        try:
            return fn(item), None
        except (EmptyAnnotationError, UndefinedCorrelationError) as e:
            return None, type(e).__name__
        except Exception as e:  # noqa: BLE001  per-item failures are never fatal
            item_id = getattr(item, 'id', None) or getattr(getattr(item, 'first', None), 'id', '?')
            logger.error(f"[{label}] {item_id}: {type(e).__name__}: {e}")
            return None, type(e).__name__
    return run


def _collect(outcomes, label: str):
    records = [record for record, _ in outcomes if record is not None]
    reasons = {}
    for record, reason in outcomes:
        if record is None:
            reasons[reason] = reasons.get(reason, 0) + 1
    excluded = sum(reasons.values())
    if excluded:
        logger.warning(f"[{label}] excluded {excluded} item(s): {reasons}")
    return records, excluded


def evaluate_plausibility_instance(model: LanguageModel, instance: TestInstance,
                                   method: Interpretation) -> PlausibilityRecord:
    if not instance.cues or not instance.attractors:
        raise EmptyAnnotationError(f"{instance.id}: empty cue or attractor set")
    predicted, tag, scenario = predicted_scenario(model, instance)
    saliency = interpret(model, instance, predicted, method)
    max_cue, max_attractor = _annotated_maxima(saliency.scores, instance.cues, instance.attractors)
    return PlausibilityRecord(
        instance_id=instance.id,
        scenario=scenario,
        predicted_tag=tag,
        gold_tag=instance.gold_tag,
        passed=plausibility_test(saliency.scores, instance.cues, instance.attractors, scenario),
        max_cue=max_cue,
        max_attractor=max_attractor,
        cues=instance.cues,
        attractors=instance.attractors,
        saliency=saliency,
    )


def run_plausibility(model: LanguageModel, method: Interpretation, instances: Sequence[TestInstance],
                     threads: int = 1) -> Tuple[List[PlausibilityRecord], AggregateReport]:
    """Interpret the argmax probe prediction of every instance and test it for plausibility."""
    label = f"plausibility {model.model_id} {'/'.join(method_label(method))}"
    outcomes = ordered_map(_guarded(lambda inst: evaluate_plausibility_instance(model, inst, method), label),
                           instances, threads)
    records, excluded = _collect(outcomes, label)
    report = aggregate([(r.scenario, 1.0 if r.passed else 0.0) for r in records], excluded)
    return records, report


def evaluate_pair(model: LanguageModel, pair: PerturbationPair, method: Interpretation) -> ConsistencyRecord:
    first, second = pair.first, pair.second
    if len(first.tokens) != len(second.tokens):
        raise ValueError(f"pair {first.id}/{second.id}: prefix lengths differ")
    predicted_first, _, scenario = predicted_scenario(model, first)
    predicted_second, _, _ = predicted_scenario(model, second)
    map_first = interpret(model, first, predicted_first, method)
    map_second = interpret(model, second, predicted_second, method)
    return ConsistencyRecord(
        item_id=f'{first.id}:{second.id}',
        scenario=scenario,
        pearson_r=pearson(map_first.scores, map_second.scores),
        first=map_first,
        second=map_second,
    )


def input_consistency(model: LanguageModel, method: Interpretation, pairs: Sequence[PerturbationPair],
                      threads: int = 1) -> Tuple[List[ConsistencyRecord], AggregateReport]:
    """Correlate the interpretations of both pair members, each for its own argmax prediction."""
    label = f"input-consistency {model.model_id} {'/'.join(method_label(method))}"
    outcomes = ordered_map(_guarded(lambda pair: evaluate_pair(model, pair, method), label), pairs, threads)
    records, excluded = _collect(outcomes, label)
    return records, aggregate([(r.scenario, r.pearson_r) for r in records], excluded)


def evaluate_model_pair(teacher: LanguageModel, student: LanguageModel, instance: TestInstance,
                        method: Interpretation) -> ConsistencyRecord:
    predicted_teacher, _, scenario = predicted_scenario(teacher, instance)
    predicted_student, _, _ = predicted_scenario(student, instance)
    map_teacher = interpret(teacher, instance, predicted_teacher, method)
    map_student = interpret(student, instance, predicted_student, method)
    return ConsistencyRecord(
        item_id=instance.id,
        scenario=scenario,
        pearson_r=pearson(map_teacher.scores, map_student.scores),
        first=map_teacher,
        second=map_student,
    )


def model_consistency(teacher: LanguageModel, student: LanguageModel, method: Interpretation,
                      instances: Sequence[TestInstance], threads: int = 1
                      ) -> Tuple[List[ConsistencyRecord], AggregateReport]:
    """Correlate teacher and student interpretations; scenarios follow the teacher's prediction."""
    if teacher.vocab.tokens != student.vocab.tokens:
        raise ValueError(f"{teacher.model_id} and {student.model_id} do not share a vocabulary")
    label = f"model-consistency {teacher.model_id}->{student.model_id} {'/'.join(method_label(method))}"
    outcomes = ordered_map(
        _guarded(lambda inst: evaluate_model_pair(teacher, student, inst, method), label), instances, threads)
    records, excluded = _collect(outcomes, label)
    return records, aggregate([(r.scenario, r.pearson_r) for r in records], excluded)


def mean_correlation(records: Sequence[ConsistencyRecord]) -> float:
    """Mean r recomputed from the serialized score vectors of each record."""
    values = [pearson(r.first.scores, r.second.scores) for r in records]
    return math.fsum(values) / len(values) if values else math.nan
