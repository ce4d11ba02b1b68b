"""
Model checkpoints: one .npz container per model.

The container holds a JSON 'meta' entry (format version, architecture
spec, vocabulary, probe tags, model id) and every parameter array under
'param.<name>'. Arrays are stored as float64, so a save/load round trip is
bit-exact.
"""

import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from pydantic import TypeAdapter

from BaseMachine.logger import get_logger
from SaliencyWorkflow.util.language_models import ArchitectureSpec, LanguageModel, Vocabulary, build_model

logger = get_logger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
_PARAM_PREFIX = 'param.'
_SPEC_ADAPTER = TypeAdapter(ArchitectureSpec)


class CheckpointError(ValueError):
    """A checkpoint file is unreadable or was written by an unknown format version."""


def save_checkpoint(model: LanguageModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'spec': model.spec.model_dump(),
        'vocab': model.vocab.tokens,
        'probe_tags': list(model.probe_tags),
        'model_id': model.model_id,
    }
    arrays = {f'{_PARAM_PREFIX}{name}': value for name, value in sorted(model.params.items())}
    # np.savez appends .npz when missing; write through a handle to keep the exact name
    with open(path, 'wb') as f:
        np.savez(f, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    logger.debug(f"Saved {model.model_id} ({model.parameter_count()} parameters) to {path}")
    return path


def load_checkpoint(path) -> LanguageModel:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data['meta']))
            params = {key[len(_PARAM_PREFIX):]: data[key].astype(np.float64)
                      for key in data.files if key.startswith(_PARAM_PREFIX)}
    except (OSError, KeyError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    version = meta.get('format_version')
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format version {version}")

    spec = _SPEC_ADAPTER.validate_python(meta['spec'])
    vocab = Vocabulary(tokens=meta['vocab'])
    return build_model(spec, vocab, params, probe_tags=tuple(meta['probe_tags']), model_id=meta['model_id'])


def parameter_fingerprint(model: LanguageModel, names: Optional[Iterable[str]] = None) -> str:
    """SHA-256 over the raw bytes of the selected parameters (all by default)."""
    digest = hashlib.sha256()
    for name in sorted(model.params if names is None else names):
        value = np.ascontiguousarray(model.params[name])
        digest.update(name.encode('utf-8'))
        digest.update(str(value.shape).encode('utf-8'))
        digest.update(value.tobytes())
    return digest.hexdigest()
