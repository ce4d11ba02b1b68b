"""
Run configuration: the typed view of a flat `key = value` config file.
"""

import os
import typing
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from BaseMachine.config_loader import ConfigError, load_flat_config
from SaliencyWorkflow._04_distillation.distill_tools import DistillConfig
from SaliencyWorkflow._05_evaluation.evaluation_tools import BaselineConfig, Interpretation
from SaliencyWorkflow.util.language_models import AttentionSpec, RecurrentSpec
from SaliencyWorkflow.util.optim_utils import TrainConfig
from SaliencyWorkflow.util.saliency_methods import Composition, SaliencyConfig, SaliencyMethod, stable_hash

RESULTS_DIR_ENV = 'SALIENCY_RESULTS_DIR'
BUILTIN_DATASETS = ('number', 'gender', 'gender_nearest', 'ptb')


def _is_list_field(model_cls, name: str) -> bool:
    field = model_cls.model_fields.get(name)
    if field is None:
        return False
    annotation = field.annotation
    if typing.get_origin(annotation) is typing.Union:
        annotation = next(a for a in typing.get_args(annotation) if a is not type(None))
    return typing.get_origin(annotation) in (list, List)


def _coerce_flat_values(model_cls, data):
    """Single flat values become one-item lists where a list is expected; empty values become None."""
    if not isinstance(data, dict):
        return data
    coerced = {}
    for key, value in data.items():
        if value == '':
            value = [] if _is_list_field(model_cls, key) else None
        elif isinstance(value, str) and _is_list_field(model_cls, key):
            value = [value]
        coerced[key] = value
    return coerced


class Section(BaseModel):
    model_config = ConfigDict(extra='forbid')

    @model_validator(mode='before')
    @classmethod
    def _flat_values(cls, data):
        return _coerce_flat_values(cls, data)


class PathsSection(Section):
    data: str = Field('workspace/data', description="Generated datasets")
    checkpoints: str = Field('workspace/checkpoints', description="Model checkpoints and loss traces")
    results: str = Field('workspace/results', description="Reports, tables and renderings")


class SeedsSection(Section):
    master: int = Field(0, description="Master seed; every other seed is derived from it")


class ModelSection(Section):
    architectures: List[Literal['lstm', 'transformer']] = Field(['lstm', 'transformer'], min_length=1,
                                                                 description="Architectures to train and evaluate")
    embedding_dim: int = Field(32, ge=1, description="Embedding dimension shared by both architectures")


class LstmSection(Section):
    hidden_size: int = Field(64, ge=1, description="LSTM hidden size")
    num_layers: int = Field(2, ge=1, description="Stacked LSTM layers")


class TransformerSection(Section):
    num_heads: int = Field(2, ge=1, description="Attention heads")
    ffn_dim: int = Field(64, ge=1, description="Feed-forward width")
    num_layers: int = Field(2, ge=1, description="Transformer blocks")
    positions: Literal['sinusoidal', 'learned'] = Field('sinusoidal', description="Position encoding")
    max_positions: int = Field(64, ge=1, description="Longest supported prefix")


class DataSection(Section):
    number_instances: int = Field(500, ge=1, description="Number-agreement evaluation instances")
    gender_instances: int = Field(500, ge=1, description="Gender-agreement evaluation instances")
    corpus_sentences: int = Field(4000, ge=2, description="LM training sentences")
    valid_fraction: float = Field(0.1, ge=0.0, lt=1.0, description="Held-out share of corpus and probe data")
    probe_instances: int = Field(1000, ge=2, description="Probe-tuning instances per agreement kind")
    tagged_corpus: Optional[str] = Field(None, description="POS-tagged JSONL corpus for the natural-data filter")
    extra_instances: List[str] = Field([], description="Additional TestInstance JSONL files to evaluate")


class TrainSection(TrainConfig):
    model_config = ConfigDict(extra='forbid')

    @model_validator(mode='before')
    @classmethod
    def _flat_values(cls, data):
        return _coerce_flat_values(cls, data)


class ProbeSection(TrainSection):
    epochs: int = Field(40, ge=0, description="Passes over the probe data")
    learning_rate: float = Field(1e-2, ge=0.0, description="Initial Adam learning rate")
    batch_size: int = Field(64, ge=1, description="Instances per optimizer step")


class DistillSection(DistillConfig):
    model_config = ConfigDict(extra='forbid')

    architectures: List[Literal['lstm', 'transformer']] = Field(['lstm'], description="Teachers to distill")

    @model_validator(mode='before')
    @classmethod
    def _flat_values(cls, data):
        return _coerce_flat_values(cls, data)


class SaliencySection(Section):
    methods: List[SaliencyMethod] = Field([SaliencyMethod.V, SaliencyMethod.SG, SaliencyMethod.IG],
                                          description="Gradient methods")
    compositions: List[Composition] = Field([Composition.GI, Composition.VN], description="Word compositions")
    baselines: List[Literal['Random', 'Nearest']] = Field(['Random', 'Nearest'], description="Baselines")
    sg_samples: int = Field(30, ge=1)
    sg_variance_coefficient: float = Field(0.15, ge=0.0)
    ig_steps: int = Field(100, ge=1)
    ig_scheme: Literal['right', 'midpoint'] = Field('right')
    score: Literal['logit', 'log_prob'] = Field('logit')
    batch_size: int = Field(50, ge=1)

    @model_validator(mode='after')
    def _check_grid(self):
        if not (self.methods and self.compositions) and not self.baselines:
            raise ValueError("select at least one method (with a composition) or one baseline")
        return self


class EvaluateSection(Section):
    datasets: List[str] = Field(['number', 'gender', 'gender_nearest'], min_length=1, description="Datasets to evaluate")
    plausibility: bool = Field(True)
    input_consistency: bool = Field(True)
    model_consistency: bool = Field(True)
    threads: int = Field(1, ge=1, description="Worker threads for instance-level evaluation")


class RenderSection(Section):
    examples: int = Field(20, ge=0, description="Rendered instances per page")


class RunConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    paths: PathsSection = PathsSection()
    seeds: SeedsSection = SeedsSection()
    model: ModelSection = ModelSection()
    lstm: LstmSection = LstmSection()
    transformer: TransformerSection = TransformerSection()
    data: DataSection = DataSection()
    train: TrainSection = TrainSection()
    probe: ProbeSection = ProbeSection()
    distill: DistillSection = DistillSection()
    saliency: SaliencySection = SaliencySection()
    evaluate: EvaluateSection = EvaluateSection()
    render: RenderSection = RenderSection()

    @field_validator('evaluate')
    @classmethod
    def _check_datasets(cls, section: EvaluateSection):
        for name in section.datasets:
            if not name.replace('_', '').replace('-', '').isalnum():
                raise ValueError(f"invalid dataset name {name!r}")
        return section

    @model_validator(mode='after')
    def _check_cross_sections(self):
        if 'transformer' in self.model.architectures and self.model.embedding_dim % self.transformer.num_heads:
            raise ValueError(f"model.embedding_dim {self.model.embedding_dim} is not divisible by "
                             f"transformer.num_heads {self.transformer.num_heads}")
        missing = [a for a in self.distill.architectures if a not in self.model.architectures]
        if missing:
            raise ValueError(f"distill.architectures {missing} are not in model.architectures")
        if 'ptb' in self.evaluate.datasets and not self.data.tagged_corpus:
            raise ValueError("dataset 'ptb' needs data.tagged_corpus")
        return self

    def seed_for(self, label: str) -> int:
        """A seed derived from the master seed and a stable label."""
        return int(np.random.default_rng([self.seeds.master, stable_hash(label)]).integers(2 ** 31))

    def architecture_spec(self, arch: str):
        if arch == 'lstm':
            return RecurrentSpec(embedding_dim=self.model.embedding_dim, **self.lstm.model_dump())
        return AttentionSpec(embedding_dim=self.model.embedding_dim, **self.transformer.model_dump())

    def interpretations(self) -> List[Interpretation]:
        """Methods x compositions, then baselines, in config order."""
        grid: List[Interpretation] = []
        for method in self.saliency.methods:
            for composition in self.saliency.compositions:
                grid.append(SaliencyConfig(
                    method=method,
                    composition=composition,
                    sg_samples=self.saliency.sg_samples,
                    sg_variance_coefficient=self.saliency.sg_variance_coefficient,
                    sg_seed=self.seed_for('smoothgrad'),
                    ig_steps=self.saliency.ig_steps,
                    ig_scheme=self.saliency.ig_scheme,
                    score=self.saliency.score,
                    batch_size=self.saliency.batch_size,
                ))
        for name in self.saliency.baselines:
            grid.append(BaselineConfig(name=name, seed=self.seed_for('random-baseline')))
        return grid

    def extra_dataset_names(self) -> List[str]:
        return [os.path.splitext(os.path.basename(p))[0] for p in self.data.extra_instances]

    # Config sections each stage depends on
    def data_fingerprint_sections(self) -> Tuple:
        return (self.seeds, self.data)

    def train_fingerprint_sections(self) -> Tuple:
        return self.data_fingerprint_sections() + (self.model, self.lstm, self.transformer, self.train)

    def probe_fingerprint_sections(self) -> Tuple:
        return self.train_fingerprint_sections() + (self.probe,)

    def distill_fingerprint_sections(self) -> Tuple:
        return self.probe_fingerprint_sections() + (self.distill,)

    def evaluate_fingerprint_sections(self) -> Tuple:
        return self.distill_fingerprint_sections() + (self.saliency, self.evaluate.model_copy(update={'threads': 1}))

    def render_fingerprint_sections(self) -> Tuple:
        return self.evaluate_fingerprint_sections() + (self.render,)


def _resolve(path: str, base_dir: str) -> str:
    path = os.path.expanduser(path)
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


def _error_line(loc: Tuple, key_lines: Dict[str, int]) -> int:
    """Line of the most specific configured key on an error location."""
    parts = [str(p) for p in loc if not isinstance(p, int)]
    for end in range(len(parts), 0, -1):
        line = key_lines.get('.'.join(parts[:end]))
        if line:
            return line
    return 0


def _validation_diagnostics(error: ValidationError, key_lines: Dict[str, int]) -> List[Tuple[int, str]]:
    diagnostics = []
    for item in error.errors():
        key = '.'.join(str(p) for p in item['loc'] if not isinstance(p, int)) or '<root>'
        diagnostics.append((_error_line(item['loc'], key_lines), f"{key}: {item['msg']}"))
    return diagnostics


def load_run_config(path, seed: Optional[int] = None, threads: Optional[int] = None,
                    environ: Optional[Dict[str, str]] = None) -> RunConfig:
    """
    Parse and validate a config file, apply overrides and resolve paths.

    Relative paths are resolved against the config file's directory. Raises
    ConfigError with one diagnostic per problem, each naming its line.
    """
    environ = os.environ if environ is None else environ
    nested, key_lines = load_flat_config(path)
    try:
        config = RunConfig.model_validate(nested)
    except ValidationError as e:
        raise ConfigError(path, _validation_diagnostics(e, key_lines)) from e

    base_dir = os.path.dirname(os.path.abspath(path))
    updates: Dict[str, Any] = {}
    paths = config.paths.model_copy(update={
        'data': _resolve(config.paths.data, base_dir),
        'checkpoints': _resolve(config.paths.checkpoints, base_dir),
        'results': _resolve(environ.get(RESULTS_DIR_ENV) or config.paths.results, base_dir),
    })
    updates['paths'] = paths

    data_updates: Dict[str, Any] = {}
    diagnostics: List[Tuple[int, str]] = []
    if config.data.tagged_corpus:
        tagged = _resolve(config.data.tagged_corpus, base_dir)
        if not os.path.isfile(tagged):
            diagnostics.append((key_lines.get('data.tagged_corpus', 0), f"data.tagged_corpus: no such file {tagged}"))
        data_updates['tagged_corpus'] = tagged
    extras = [_resolve(p, base_dir) for p in config.data.extra_instances]
    for extra in extras:
        if not os.path.isfile(extra):
            diagnostics.append((key_lines.get('data.extra_instances', 0),
                                f"data.extra_instances: no such file {extra}"))
    names = [os.path.splitext(os.path.basename(p))[0] for p in extras]
    clashes = sorted({n for n in names if names.count(n) > 1 or n in BUILTIN_DATASETS})
    if clashes:
        diagnostics.append((key_lines.get('data.extra_instances', 0),
                            f"data.extra_instances: dataset names {clashes} are taken"))
    data_updates['extra_instances'] = extras
    updates['data'] = config.data.model_copy(update=data_updates)

    known = set(BUILTIN_DATASETS) | set(names)
    unknown = [d for d in config.evaluate.datasets if d not in known]
    if unknown:
        diagnostics.append((key_lines.get('evaluate.datasets', 0), f"evaluate.datasets: unknown dataset(s) {unknown}"))
    if diagnostics:
        raise ConfigError(path, diagnostics)

    if seed is not None:
        updates['seeds'] = config.seeds.model_copy(update={'master': seed})
    if threads is not None:
        if threads < 1:
            raise ConfigError(path, [(0, f"--threads must be at least 1, got {threads}")])
        updates['evaluate'] = config.evaluate.model_copy(update={'threads': threads})
    return config.model_copy(update=updates)
