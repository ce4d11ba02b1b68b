"""
Artifact helpers shared by the workflow stages: JSON / JSON Lines I/O,
config fingerprints and the per-stage manifest used for stage gating.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Type, TypeVar

from pydantic import BaseModel

from BaseMachine.logger import get_logger

logger = get_logger(__name__)

MANIFEST_NAME = 'stage_manifest.json'

RecordT = TypeVar('RecordT', bound=BaseModel)


class MissingArtifactError(RuntimeError):
    """A stage needs files that an earlier stage has not produced."""

    def __init__(self, stage: str, missing: Sequence, producer: Optional[str] = None):
        self.stage = stage
        self.missing = [str(p) for p in missing]
        self.producer = producer
        hint = f" (run the '{producer}' stage first)" if producer else ''
        listing = ', '.join(self.missing)
        super().__init__(f"{stage}: missing required artifact(s){hint}: {listing}")


def write_json(path, payload: Any) -> Path:
    """Write JSON with sorted keys so equal payloads give byte-identical files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def read_json(path) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_jsonl(path, records: Iterable[BaseModel]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(record.model_dump_json())
            f.write('\n')
    return path


def read_jsonl(path, model_cls: Type[RecordT]) -> List[RecordT]:
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(model_cls.model_validate_json(line))
            except ValueError as e:
                raise ValueError(f"{path}:{line_no}: invalid {model_cls.__name__} record: {e}") from e
    return records


def config_fingerprint(*sections: Any) -> str:
    """SHA-256 of the canonical JSON of the given config sections."""
    payload = [s.model_dump(mode='json') if isinstance(s, BaseModel) else s for s in sections]
    canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def require_artifacts(paths: Iterable, stage: str, producer: Optional[str] = None) -> None:
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        raise MissingArtifactError(stage, missing, producer)


def write_manifest(stage_dir, stage: str, fingerprint: str, outputs: Sequence) -> Path:
    manifest = {
        'stage': stage,
        'fingerprint': fingerprint,
        'outputs': sorted(os.path.relpath(str(p), str(stage_dir)) for p in outputs),
    }
    return write_json(Path(stage_dir) / MANIFEST_NAME, manifest)


def read_manifest(stage_dir) -> Optional[Dict[str, Any]]:
    path = Path(stage_dir) / MANIFEST_NAME
    if not path.exists():
        return None
    try:
        return read_json(path)
    except (OSError, ValueError):
        logger.warning(f"Ignoring unreadable manifest {path}")
        return None


def stage_is_current(stage_dir, fingerprint: str) -> bool:
    """True when the manifest fingerprint matches and every recorded output still exists."""
    manifest = read_manifest(stage_dir)
    if manifest is None or manifest.get('fingerprint') != fingerprint:
        return False
    return all((Path(stage_dir) / rel).exists() for rel in manifest.get('outputs', []))


class ArtifactLayout:
    """Where every stage reads and writes, relative to the three configured roots."""

    def __init__(self, data_dir, checkpoint_dir, results_dir):
        self.data_dir = Path(data_dir)
        self.checkpoint_dir = Path(checkpoint_dir)
        self.results_dir = Path(results_dir)

    # data stage
    def dataset(self, name: str) -> Path:
        return self.data_dir / 'datasets' / f'{name}.jsonl'

    def templates(self, kind: str) -> Path:
        return self.data_dir / 'templates' / f'{kind}.json'

    def pairs(self, name: str) -> Path:
        return self.data_dir / 'pairs' / f'{name}.jsonl'

    def probe_data(self, kind: str) -> Path:
        return self.data_dir / 'probe' / f'{kind}.jsonl'

    def corpus(self, split: str) -> Path:
        return self.data_dir / 'corpus' / f'{split}.jsonl'

    @property
    def vocab(self) -> Path:
        return self.data_dir / 'vocab.json'

    # model stages
    @property
    def lm_dir(self) -> Path:
        return self.checkpoint_dir / 'lm'

    @property
    def probe_dir(self) -> Path:
        return self.checkpoint_dir / 'probe'

    @property
    def student_dir(self) -> Path:
        return self.checkpoint_dir / 'student'

    def lm_checkpoint(self, arch: str) -> Path:
        return self.lm_dir / f'{arch}.npz'

    def probe_checkpoint(self, arch: str, kind: str) -> Path:
        return self.probe_dir / f'{arch}.{kind}.npz'

    def student_lm_checkpoint(self, arch: str) -> Path:
        return self.student_dir / f'{arch}.npz'

    def student_checkpoint(self, arch: str, kind: str) -> Path:
        return self.student_dir / f'{arch}.{kind}.npz'

    @staticmethod
    def loss_trace(checkpoint: Path) -> Path:
        return checkpoint.with_suffix('.loss.csv')

    # results
    def report(self, test: str) -> Path:
        return self.results_dir / f'{test}.json'

    def records(self, test: str, model: str, dataset: str, label: str) -> Path:
        return self.results_dir / 'records' / test / model / dataset / f'{label}.jsonl'

    def table(self, test: str) -> Path:
        return self.results_dir / 'tables' / f'{test}.csv'

    @property
    def html_dir(self) -> Path:
        return self.results_dir / 'html'

    def page(self, model: str, dataset: str, label: str) -> Path:
        return self.html_dir / model / dataset / f'{label}.html'

    @property
    def log_dir(self) -> Path:
        return self.results_dir / 'logs'
