"""Append-only metrics stream: one self-describing JSON record per line."""

from __future__ import annotations

import json


class MetricsWriter:
    """Writes records to a JSONL file (and optionally echoes them elsewhere).

    Records must be JSON-serializable dicts with a "kind" field. Keys are
    sorted so identical runs produce byte-identical streams.
    """

    def __init__(self, path, echo=None):
        self.path = path
        self.echo = echo
        self._fh = open(path, "a")

    def write(self, record: dict):
        if "kind" not in record:
            raise ValueError("metrics records need a 'kind' field")
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()
        if self.echo is not None:
            self.echo(record)

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def summarize(records: list[dict]) -> dict:
    """Per-kind counts plus last train/eval records, for the report command."""
    kinds = {}
    last_train, last_eval = None, None
    for rec in records:
        kinds[rec["kind"]] = kinds.get(rec["kind"], 0) + 1
        if rec["kind"] == "train_step":
            last_train = rec
        elif rec["kind"] == "eval":
            last_eval = rec
    return {"kinds": kinds, "last_train_step": last_train, "last_eval": last_eval}
