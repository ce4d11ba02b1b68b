"""
JSON Lines record of stage boundaries, appended to <results>/logs/events.jsonl.
"""

import json
import os
from datetime import datetime, timezone

EVENT_TYPES = ('stage_start', 'stage_skip', 'stage_end', 'stage_error')


class StageEventLog:
    def __init__(self, log_dir):
        self.path = os.path.join(log_dir, 'events.jsonl')

    def emit(self, event: str, stage: str, **details):
        if event not in EVENT_TYPES:
            raise ValueError(f"unknown event type {event!r}")
        record = {
            'time': datetime.now(timezone.utc).isoformat(timespec='milliseconds'),
            'event': event,
            'stage': stage,
        }
        record.update(details)
        os.makedirs(os.path.dirname(self.path), exist_ok=True)
        with open(self.path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(record, sort_keys=True, default=str) + '\n')
        return record

    def read(self):
        if not os.path.exists(self.path):
            return []
        with open(self.path, encoding='utf-8') as f:
            return [json.loads(line) for line in f if line.strip()]
