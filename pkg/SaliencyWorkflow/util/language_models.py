"""
Tiny recurrent and self-attention language models on top of the tape.

Both architectures share an embedding table, a vocabulary head for
next-word prediction and a two-class probe head for agreement tags.
Models keep their parameters in a flat name -> ndarray dict; every
computation builds a fresh Tape, so a model is safe to read from several
threads at once.
"""

from dataclasses import dataclass
from typing import Annotated, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from SaliencyWorkflow.util.autodiff import Tape, backward

UNK = '<unk>'
PAD = '<pad>'
EOS = '<eos>'
RESERVED_TOKENS = (UNK, PAD, EOS)

Head = Literal['vocab', 'probe']
ScoreKind = Literal['logit', 'log_prob']

LAYER_NORM_EPS = 1e-5
MASK_VALUE = -1e9


class Vocabulary(BaseModel):
    """Bijective token <-> id mapping; ids 0, 1, 2 are <unk>, <pad>, <eos>."""

    tokens: List[str] = Field(description="Token strings in id order")
    _index: Dict[str, int] = PrivateAttr(default_factory=dict)

    @model_validator(mode='after')
    def _check_tokens(self):
        if tuple(self.tokens[:len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise ValueError(f"vocabulary must start with {RESERVED_TOKENS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        return self

    def model_post_init(self, __context):
        self._index = {token: i for i, token in enumerate(self.tokens)}

    @classmethod
    def build(cls, words: Iterable[str]) -> 'Vocabulary':
        extra = sorted(set(words) - set(RESERVED_TOKENS))
        return cls(tokens=list(RESERVED_TOKENS) + extra)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def id(self, token: str) -> int:
        return self._index.get(token, 0)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.id(token) for token in tokens]

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self.tokens[i] for i in ids]


class RecurrentSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    kind: Literal['lstm'] = 'lstm'
    embedding_dim: int = Field(32, ge=1, description="Embedding dimension d")
    hidden_size: int = Field(64, ge=1, description="LSTM hidden size h")
    num_layers: int = Field(2, ge=1, description="Number of stacked LSTM layers")


class AttentionSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    kind: Literal['transformer'] = 'transformer'
    embedding_dim: int = Field(32, ge=1, description="Model width d (also the hidden size)")
    num_heads: int = Field(2, ge=1, description="Attention heads per layer")
    ffn_dim: int = Field(64, ge=1, description="Feed-forward inner width")
    num_layers: int = Field(2, ge=1, description="Number of transformer blocks")
    positions: Literal['sinusoidal', 'learned'] = Field('sinusoidal', description="Position encoding")
    max_positions: int = Field(64, ge=1, description="Longest supported prefix")

    @model_validator(mode='after')
    def _check_heads(self):
        if self.embedding_dim % self.num_heads:
            raise ValueError(f"embedding_dim {self.embedding_dim} not divisible by num_heads {self.num_heads}")
        return self


ArchitectureSpec = Annotated[Union[RecurrentSpec, AttentionSpec], Field(discriminator='kind')]


@dataclass
class ModelOutput:
    logits: np.ndarray         # (classes,) at the final prefix position
    hidden_states: np.ndarray  # (len(prefix), hidden)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class LanguageModel:
    """Parameters plus the architecture-specific encoder."""

    def __init__(self, spec, vocab: Vocabulary, params: Dict[str, np.ndarray],
                 probe_tags: Tuple[str, str] = ('SINGULAR', 'PLURAL'), model_id: str = 'model'):
        self.spec = spec
        self.vocab = vocab
        self.params = {name: np.asarray(value, dtype=np.float64) for name, value in params.items()}
        self.probe_tags = tuple(probe_tags)
        self.model_id = model_id
        self._check_params()

    # ----- shape facts -----

    @property
    def embedding_dim(self) -> int:
        return self.spec.embedding_dim

    @property
    def hidden_size(self) -> int:
        raise NotImplementedError

    @property
    def num_layers(self) -> int:
        return self.spec.num_layers

    def num_classes(self, head: Head) -> int:
        return len(self.vocab) if head == 'vocab' else 2

    def parameter_count(self) -> int:
        return int(sum(value.size for value in self.params.values()))

    def probe_parameter_names(self) -> List[str]:
        return [name for name in self.params if name.startswith('probe.')]

    def body_parameter_names(self) -> List[str]:
        return [name for name in self.params if not name.startswith('probe.')]

    def _check_params(self):
        v, d, h = len(self.vocab), self.embedding_dim, self.hidden_size
        expected = {
            'embedding': (v, d),
            'vocab_head.weight': (v, h),
            'vocab_head.bias': (v,),
            'probe.weight': (2, h),
            'probe.bias': (2,),
        }
        for name, shape in expected.items():
            if name not in self.params:
                raise ValueError(f"{self.model_id}: missing parameter '{name}'")
            if self.params[name].shape != shape:
                raise ValueError(f"{self.model_id}: '{name}' has shape {self.params[name].shape}, expected {shape}")
        if len(self.probe_tags) != 2:
            raise ValueError(f"probe head needs exactly two tags, got {self.probe_tags}")

    def copy(self, model_id: Optional[str] = None) -> 'LanguageModel':
        return type(self)(self.spec, self.vocab, {k: v.copy() for k, v in self.params.items()},
                          probe_tags=self.probe_tags, model_id=model_id or self.model_id)

    # ----- tape construction -----

    def bind(self, tape: Tape, trainable: bool = False, names: Optional[Iterable[str]] = None) -> Dict[str, int]:
        """Put parameters on the tape; trainable ones become target leaves."""
        train_names = set(self.params if names is None else names) if trainable else set()
        return {
            name: tape.leaf(value, target=True) if name in train_names else tape.constant(value)
            for name, value in self.params.items()
        }

    def embed(self, tape: Tape, bound: Dict[str, int], ids: np.ndarray, per_occurrence: bool = False) -> int:
        """Look up (B, T) ids; per_occurrence makes every looked-up row a gradient target."""
        return tape.gather(bound['embedding'], np.asarray(ids, dtype=np.int64), accumulate=not per_occurrence)

    def encode(self, tape: Tape, bound: Dict[str, int], embedded: int) -> int:
        """Map injected embeddings (B, T, d) to hidden states (B, T, h)."""
        raise NotImplementedError

    def head_logits(self, tape: Tape, bound: Dict[str, int], hidden: int, head: Head) -> int:
        prefix = 'vocab_head' if head == 'vocab' else 'probe'
        weight_t = tape.transpose(bound[f'{prefix}.weight'])
        return tape.add(tape.matmul(hidden, weight_t), bound[f'{prefix}.bias'])

    def final_logits(self, tape: Tape, bound: Dict[str, int], hidden: int, head: Head) -> int:
        last = tape.slice(hidden, (slice(None), -1, slice(None)))
        return self.head_logits(tape, bound, last, head)


class RecurrentLanguageModel(LanguageModel):
    """Stacked LSTM; gate blocks are ordered input, forget, cell, output."""

    @property
    def hidden_size(self) -> int:
        return self.spec.hidden_size

    @classmethod
    def initialize(cls, spec: RecurrentSpec, vocab: Vocabulary, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        v, d, h = len(vocab), spec.embedding_dim, spec.hidden_size
        params = {'embedding': rng.normal(0.0, 0.1, size=(v, d))}
        for layer in range(spec.num_layers):
            in_dim = d if layer == 0 else h
            params[f'lstm.{layer}.w_ih'] = _uniform(rng, (in_dim, 4 * h), h)
            params[f'lstm.{layer}.w_hh'] = _uniform(rng, (h, 4 * h), h)
            bias = np.zeros(4 * h)
            bias[h:2 * h] = 1.0
            params[f'lstm.{layer}.bias'] = bias
        params['vocab_head.weight'] = _uniform(rng, (v, h), h)
        params['vocab_head.bias'] = np.zeros(v)
        params['probe.weight'] = _uniform(rng, (2, h), h)
        params['probe.bias'] = np.zeros(2)
        return params

    def encode(self, tape, bound, embedded):
        h = self.hidden_size
        seq_len = tape.value(embedded).shape[1]
        layer_input = embedded
        for layer in range(self.num_layers):
            projected = tape.add(tape.matmul(layer_input, bound[f'lstm.{layer}.w_ih']), bound[f'lstm.{layer}.bias'])
            state_h = state_c = None
            outputs = []
            for t in range(seq_len):
                z = tape.slice(projected, (slice(None), t, slice(None)))
                if state_h is not None:
                    z = tape.add(z, tape.matmul(state_h, bound[f'lstm.{layer}.w_hh']))
                gate_i = tape.sigmoid(tape.slice(z, (slice(None), slice(0, h))))
                gate_f = tape.sigmoid(tape.slice(z, (slice(None), slice(h, 2 * h))))
                gate_g = tape.tanh(tape.slice(z, (slice(None), slice(2 * h, 3 * h))))
                gate_o = tape.sigmoid(tape.slice(z, (slice(None), slice(3 * h, 4 * h))))
                state_c = tape.mul(gate_i, gate_g) if state_c is None else \
                    tape.add(tape.mul(gate_f, state_c), tape.mul(gate_i, gate_g))
                state_h = tape.mul(gate_o, tape.tanh(state_c))
                outputs.append(tape.reshape(state_h, (-1, 1, h)))
            layer_input = outputs[0] if len(outputs) == 1 else tape.concat(outputs, axis=1)
        return layer_input


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    positions = np.arange(length)[:, None]
    rates = np.power(10000.0, -(2 * (np.arange(dim) // 2)) / dim)
    angles = positions * rates[None, :]
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table


def causal_mask(length: int) -> np.ndarray:
    """Additive mask: 0 on and below the diagonal, a large negative value above."""
    return np.triu(np.full((length, length), MASK_VALUE), k=1)


class AttentionLanguageModel(LanguageModel):
    """Pre-LN causal transformer decoder."""

    @property
    def hidden_size(self) -> int:
        return self.spec.embedding_dim

    @classmethod
    def initialize(cls, spec: AttentionSpec, vocab: Vocabulary, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        v, d, f = len(vocab), spec.embedding_dim, spec.ffn_dim
        params = {'embedding': rng.normal(0.0, 0.1, size=(v, d))}
        if spec.positions == 'learned':
            params['pos_embedding'] = rng.normal(0.0, 0.1, size=(spec.max_positions, d))
        for layer in range(spec.num_layers):
            p = f'block.{layer}'
            params[f'{p}.ln1.gain'] = np.ones(d)
            params[f'{p}.ln1.bias'] = np.zeros(d)
            for proj in ('q', 'k', 'v', 'o'):
                params[f'{p}.attn.w_{proj}'] = _uniform(rng, (d, d), d)
                params[f'{p}.attn.b_{proj}'] = np.zeros(d)
            params[f'{p}.ln2.gain'] = np.ones(d)
            params[f'{p}.ln2.bias'] = np.zeros(d)
            params[f'{p}.ffn.w_in'] = _uniform(rng, (d, f), d)
            params[f'{p}.ffn.b_in'] = np.zeros(f)
            params[f'{p}.ffn.w_out'] = _uniform(rng, (f, d), f)
            params[f'{p}.ffn.b_out'] = np.zeros(d)
        params['final_ln.gain'] = np.ones(d)
        params['final_ln.bias'] = np.zeros(d)
        params['vocab_head.weight'] = _uniform(rng, (v, d), d)
        params['vocab_head.bias'] = np.zeros(v)
        params['probe.weight'] = _uniform(rng, (2, d), d)
        params['probe.bias'] = np.zeros(2)
        return params

    def _layer_norm(self, tape, bound, x, prefix):
        mean = tape.mean(x, axis=-1, keepdims=True)
        centered = tape.sub(x, mean)
        variance = tape.mean(tape.pow(centered, 2.0), axis=-1, keepdims=True)
        inv_std = tape.pow(tape.add(variance, tape.constant(LAYER_NORM_EPS)), -0.5)
        normed = tape.mul(centered, inv_std)
        return tape.add(tape.mul(normed, bound[f'{prefix}.gain']), bound[f'{prefix}.bias'])

    def _linear(self, tape, bound, x, weight, bias):
        return tape.add(tape.matmul(x, bound[weight]), bound[bias])

    def _attention(self, tape, bound, x, prefix, batch, seq_len):
        d = self.embedding_dim
        heads = self.spec.num_heads
        head_dim = d // heads

        def split_heads(node):
            return tape.transpose(tape.reshape(node, (batch, seq_len, heads, head_dim)), (0, 2, 1, 3))

        q = split_heads(self._linear(tape, bound, x, f'{prefix}.w_q', f'{prefix}.b_q'))
        k = split_heads(self._linear(tape, bound, x, f'{prefix}.w_k', f'{prefix}.b_k'))
        v = split_heads(self._linear(tape, bound, x, f'{prefix}.w_v', f'{prefix}.b_v'))

        scores = tape.scale(tape.matmul(q, tape.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(head_dim))
        weights = tape.softmax(tape.add(scores, tape.constant(causal_mask(seq_len))), axis=-1)
        context = tape.matmul(weights, v)
        merged = tape.reshape(tape.transpose(context, (0, 2, 1, 3)), (batch, seq_len, d))
        return self._linear(tape, bound, merged, f'{prefix}.w_o', f'{prefix}.b_o')

    def encode(self, tape, bound, embedded):
        batch, seq_len, d = tape.value(embedded).shape
        if seq_len > self.spec.max_positions:
            raise ValueError(f"prefix length {seq_len} exceeds max_positions {self.spec.max_positions}")
        if self.spec.positions == 'learned':
            positions = tape.slice(bound['pos_embedding'], (slice(0, seq_len), slice(None)))
        else:
            positions = tape.constant(sinusoidal_positions(seq_len, d))
        x = tape.add(embedded, positions)

        for layer in range(self.num_layers):
            p = f'block.{layer}'
            attended = self._attention(tape, bound, self._layer_norm(tape, bound, x, f'{p}.ln1'),
                                       f'{p}.attn', batch, seq_len)
            x = tape.add(x, attended)
            inner = tape.gelu(self._linear(tape, bound, self._layer_norm(tape, bound, x, f'{p}.ln2'),
                                           f'{p}.ffn.w_in', f'{p}.ffn.b_in'))
            x = tape.add(x, self._linear(tape, bound, inner, f'{p}.ffn.w_out', f'{p}.ffn.b_out'))
        return self._layer_norm(tape, bound, x, 'final_ln')


MODEL_CLASSES = {
    'lstm': RecurrentLanguageModel,
    'transformer': AttentionLanguageModel,
}


def build_model(spec, vocab: Vocabulary, params: Dict[str, np.ndarray],
                probe_tags=('SINGULAR', 'PLURAL'), model_id: str = 'model') -> LanguageModel:
    return MODEL_CLASSES[spec.kind](spec, vocab, params, probe_tags=probe_tags, model_id=model_id)


def init_model(spec, vocab: Vocabulary, seed, probe_tags=('SINGULAR', 'PLURAL'), model_id: str = 'model') -> LanguageModel:
    """Freshly initialized model; seed may be an int or an int sequence."""
    rng = np.random.default_rng(seed)
    params = MODEL_CLASSES[spec.kind].initialize(spec, vocab, rng)
    return build_model(spec, vocab, params, probe_tags=probe_tags, model_id=model_id)


def shrink_model(teacher: LanguageModel, num_layers: int, seed, copy_weights: bool = True,
                 model_id: Optional[str] = None) -> LanguageModel:
    """
    A shallower model of the same family.

    With copy_weights, the embedding, both heads and the first num_layers
    body layers are copied from the teacher; everything else is fresh.
    """
    if num_layers < 1:
        raise ValueError(f"student depth must be at least 1, got {num_layers}")
    spec = teacher.spec.model_copy(update={'num_layers': num_layers})
    student = init_model(spec, teacher.vocab, seed, probe_tags=teacher.probe_tags,
                         model_id=model_id or f'{teacher.model_id}-student')
    if copy_weights:
        for name, value in student.params.items():
            source = teacher.params.get(name)
            if source is not None and source.shape == value.shape:
                student.params[name] = source.copy()
    return student


# ----- prediction and gradients -----

def validate_prefix(model: LanguageModel, prefix: Sequence[int]) -> np.ndarray:
    ids = np.asarray(prefix, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("prefix must be a non-empty sequence of token ids")
    if ids.min() < 0 or ids.max() >= len(model.vocab):
        raise ValueError(f"prefix ids must lie in [0, {len(model.vocab)}), got {ids.tolist()}")
    return ids


def _check_head(head):
    if head not in ('vocab', 'probe'):
        raise ValueError(f"head must be 'vocab' or 'probe', got {head!r}")


def _check_target(model, target, head):
    if not 0 <= int(target) < model.num_classes(head):
        raise ValueError(f"target class {target} out of range for the {head} head")


def _score_node(tape: Tape, logits: int, targets: np.ndarray, score: ScoreKind) -> int:
    """Per-row score of the target class: raw logit or log-probability."""
    if score == 'log_prob':
        logits = tape.log_softmax(logits, axis=-1)
    elif score != 'logit':
        raise ValueError(f"score must be 'logit' or 'log_prob', got {score!r}")
    rows = np.arange(tape.value(logits).shape[0])
    return tape.index(logits, (rows, np.asarray(targets, dtype=np.int64)))


def forward(model: LanguageModel, prefix: Sequence[int], head: Head = 'vocab') -> ModelOutput:
    ids = validate_prefix(model, prefix)
    _check_head(head)
    tape = Tape()
    bound = model.bind(tape)
    hidden = model.encode(tape, bound, model.embed(tape, bound, ids[None, :]))
    logits = model.final_logits(tape, bound, hidden, head)
    return ModelOutput(logits=tape.value(logits)[0].copy(), hidden_states=tape.value(hidden)[0].copy())


def lookup_embeddings(model: LanguageModel, prefix: Sequence[int]) -> np.ndarray:
    """Embedding vectors at the injection point, shape (T, d)."""
    return model.params['embedding'][validate_prefix(model, prefix)].copy()


def input_gradient(model: LanguageModel, prefix: Sequence[int], target_class: int,
                   head: Head = 'probe', score: ScoreKind = 'logit') -> np.ndarray:
    """d(score of target_class) / d(embedding injected at each position), shape (T, d)."""
    ids = validate_prefix(model, prefix)
    _check_head(head)
    _check_target(model, target_class, head)
    tape = Tape()
    bound = model.bind(tape)
    embedded = model.embed(tape, bound, ids[None, :], per_occurrence=True)
    hidden = model.encode(tape, bound, embedded)
    logits = model.final_logits(tape, bound, hidden, head)
    out = tape.sum(_score_node(tape, logits, np.array([target_class]), score))
    return backward(tape, out)[embedded][0]


def score_gradients(model: LanguageModel, embeddings: np.ndarray, target_class: int,
                    head: Head = 'probe', score: ScoreKind = 'logit') -> Tuple[np.ndarray, np.ndarray]:
    """
    Scores and input gradients for a batch of injected embedding sequences.

    Args:
        embeddings: (B, T, d) or (T, d) arrays placed at the injection point

    Returns:
        (scores of shape (B,), gradients of shape (B, T, d))
    """
    _check_head(head)
    _check_target(model, target_class, head)
    batch = np.asarray(embeddings, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[None]
    if batch.ndim != 3 or batch.shape[2] != model.embedding_dim or batch.shape[1] == 0:
        raise ValueError(f"embeddings must be (B, T, {model.embedding_dim}), got {batch.shape}")

    tape = Tape()
    bound = model.bind(tape)
    injected = tape.leaf(batch, target=True)
    hidden = model.encode(tape, bound, injected)
    logits = model.final_logits(tape, bound, hidden, head)
    per_row = _score_node(tape, logits, np.full(batch.shape[0], target_class), score)
    # rows are independent, so the gradient of the sum is the per-row gradient
    grads = backward(tape, tape.sum(per_row))[injected]
    return tape.value(per_row).copy(), grads


def predict_tag(model: LanguageModel, prefix: Sequence[int]) -> Tuple[int, np.ndarray]:
    """Argmax probe class (ties go to class 0) and the two probe logits."""
    logits = forward(model, prefix, head='probe').logits
    return int(np.argmax(logits)), logits


def final_hidden_states(model: LanguageModel, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
    """Hidden state at the last position of every prefix, shape (N, h); batched by length."""
    out = np.zeros((len(prefixes), model.hidden_size))
    by_length: Dict[int, List[int]] = {}
    for i, prefix in enumerate(prefixes):
        by_length.setdefault(len(validate_prefix(model, prefix)), []).append(i)
    for length in sorted(by_length):
        rows = by_length[length]
        ids = np.array([prefixes[i] for i in rows], dtype=np.int64)
        tape = Tape()
        bound = model.bind(tape)
        hidden = model.encode(tape, bound, model.embed(tape, bound, ids))
        out[rows] = tape.value(hidden)[:, -1, :]
    return out
